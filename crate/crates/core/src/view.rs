//! View hierarchies of the focused window, their text dump format, and the
//! geometric queries the recorder needs.
//!
//! Dump format:
//!
//! ```text
//! ACTIVITY com.example.Main 1a2b3c4d 320x480
//! FrameLayout@10 bounds=0,0,320,480 policy=pass
//!  Button@11 bounds=20,40,140,90 policy=listener
//!  TextView@12 bounds=20,100,300,140 policy=self
//! ```
//!
//! Node depth is the number of leading spaces; the root has none.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Axis-aligned rectangle in absolute screen pixels. Containment is
/// inclusive on all four edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

impl Rect {
    pub const fn new(left: i32, top: i32, right: i32, bottom: i32) -> Self {
        Rect { left, top, right, bottom }
    }

    pub fn width(&self) -> i64 {
        self.right as i64 - self.left as i64
    }

    pub fn height(&self) -> i64 {
        self.bottom as i64 - self.top as i64
    }

    pub fn is_well_formed(&self) -> bool {
        self.left <= self.right && self.top <= self.bottom
    }

    pub fn is_degenerate(&self) -> bool {
        self.width() <= 0 || self.height() <= 0
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        (self.left as i64) <= x && x <= self.right as i64 && (self.top as i64) <= y && y <= self.bottom as i64
    }

    pub fn center(&self) -> (i64, i64) {
        (
            (self.left as i64 + self.right as i64) / 2,
            (self.top as i64 + self.bottom as i64) / 2,
        )
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.left, self.top, self.right, self.bottom)
    }
}

/// How a view reacts when a touch reaches it and no child consumed it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// An attached touch listener consumes the event.
    #[serde(rename = "listener")]
    ConsumeByListener,
    /// The view's own touch handler consumes the event.
    #[serde(rename = "self")]
    ConsumeBySelf,
    /// Not consumed; the event flows back to the parent.
    Pass,
}

impl Policy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::ConsumeByListener => "listener",
            Policy::ConsumeBySelf => "self",
            Policy::Pass => "pass",
        }
    }

    pub fn consumes(&self) -> bool {
        *self != Policy::Pass
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "listener" => Some(Policy::ConsumeByListener),
            "self" => Some(Policy::ConsumeBySelf),
            "pass" => Some(Policy::Pass),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewNode {
    pub class_name: String,
    pub hash_code: u32,
    pub bounds: Rect,
    pub policy: Policy,
    /// Drawing order: later children are on top.
    pub children: Vec<ViewNode>,
}

impl ViewNode {
    pub fn new(class_name: impl Into<String>, hash_code: u32, bounds: Rect, policy: Policy) -> Self {
        ViewNode {
            class_name: class_name.into(),
            hash_code,
            bounds,
            policy,
            children: Vec::new(),
        }
    }

    pub fn with_children(mut self, children: Vec<ViewNode>) -> Self {
        self.children = children;
        self
    }

    /// Number of earlier siblings under the same parent sharing the class of
    /// `children[index]`.
    pub fn class_ordinal(&self, index: usize) -> usize {
        let class = &self.children[index].class_name;
        self.children[..index].iter().filter(|c| &c.class_name == class).count()
    }

    /// Pre-order walk; the callback receives each node and its depth.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a ViewNode, usize)) {
        fn go<'a>(node: &'a ViewNode, depth: usize, f: &mut impl FnMut(&'a ViewNode, usize)) {
            f(node, depth);
            for child in &node.children {
                go(child, depth + 1, f);
            }
        }
        go(self, 0, f)
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_, _| n += 1);
        n
    }

    /// Follows child indices from this node.
    pub fn descend(&self, indices: &[usize]) -> Option<&ViewNode> {
        indices.iter().try_fold(self, |node, &i| node.children.get(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Screen {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewHierarchy {
    pub activity_name: String,
    pub activity_hash: u32,
    pub screen: Screen,
    pub root: ViewNode,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PathSegment {
    #[serde(rename = "class")]
    pub class_name: String,
    pub ordinal: usize,
}

/// Route from the root to one view, by class name and position among
/// same-class siblings. Hash codes are not part of a path, so a path recorded
/// on one app resolves on a repackaged variant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ViewPath(pub Vec<PathSegment>);

impl ViewPath {
    pub fn segments(&self) -> &[PathSegment] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Builds the path for a node addressed by child indices from `root`.
    pub fn from_indices(root: &ViewNode, indices: &[usize]) -> Self {
        let mut segments = vec![PathSegment {
            class_name: root.class_name.clone(),
            ordinal: 0,
        }];
        let mut node = root;
        for &i in indices {
            segments.push(PathSegment {
                class_name: node.children[i].class_name.clone(),
                ordinal: node.class_ordinal(i),
            });
            node = &node.children[i];
        }
        ViewPath(segments)
    }
}

impl fmt::Display for ViewPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, seg) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            write!(f, "{}:{}", seg.class_name, seg.ordinal)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DumpError {
    #[error("empty hierarchy dump")]
    EmptyDump,
    #[error("line {line}: {reason}")]
    MalformedDump { line: usize, reason: String },
    #[error("line {0}: indentation skips a level")]
    DanglingIndent(usize),
}

fn malformed(line: usize, reason: impl Into<String>) -> DumpError {
    DumpError::MalformedDump { line, reason: reason.into() }
}

fn parse_hex_u32(s: &str) -> Option<u32> {
    let s = s.strip_prefix("0x").unwrap_or(s);
    u32::from_str_radix(s, 16).ok()
}

fn parse_header(line: &str) -> Result<(String, u32, Screen), DumpError> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    let [tag, name, hash, size] = parts[..] else {
        return Err(malformed(1, "expected `ACTIVITY <name> <hash> <w>x<h>`"));
    };
    if tag != "ACTIVITY" {
        return Err(malformed(1, "missing ACTIVITY header"));
    }
    let hash = parse_hex_u32(hash).ok_or_else(|| malformed(1, "bad activity hash"))?;
    let (w, h) = size.split_once('x').ok_or_else(|| malformed(1, "bad screen size"))?;
    let screen = Screen {
        width: w.parse().map_err(|_| malformed(1, "bad screen width"))?,
        height: h.parse().map_err(|_| malformed(1, "bad screen height"))?,
    };
    Ok((name.to_string(), hash, screen))
}

fn parse_node_line(body: &str, line: usize) -> Result<ViewNode, DumpError> {
    let mut fields = body.split_whitespace();
    let ident = fields.next().ok_or_else(|| malformed(line, "missing node identity"))?;
    let (class_name, hash) = ident
        .rsplit_once('@')
        .ok_or_else(|| malformed(line, "expected <class>@<hash>"))?;
    if class_name.is_empty() {
        return Err(malformed(line, "empty class name"));
    }
    let hash_code = parse_hex_u32(hash).ok_or_else(|| malformed(line, "bad hash code"))?;
    let mut bounds = None;
    let mut policy = None;
    for field in fields {
        match field.split_once('=') {
            Some(("bounds", v)) => {
                let nums: Vec<i32> = v
                    .split(',')
                    .map(|n| n.parse())
                    .collect::<Result<_, _>>()
                    .map_err(|_| malformed(line, "bad bounds"))?;
                let [l, t, r, b] = nums[..] else {
                    return Err(malformed(line, "bounds need 4 values"));
                };
                bounds = Some(Rect::new(l, t, r, b));
            }
            Some(("policy", v)) => {
                policy = Some(Policy::parse(v).ok_or_else(|| malformed(line, "unknown policy"))?);
            }
            _ => return Err(malformed(line, format!("unexpected field `{field}`"))),
        }
    }
    let bounds = bounds.ok_or_else(|| malformed(line, "missing bounds"))?;
    if !bounds.is_well_formed() {
        return Err(malformed(line, "inverted bounds"));
    }
    let policy = policy.ok_or_else(|| malformed(line, "missing policy"))?;
    Ok(ViewNode::new(class_name, hash_code, bounds, policy))
}

pub fn parse_hierarchy_dump(text: &str) -> Result<ViewHierarchy, DumpError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(DumpError::EmptyDump)?;
    let (activity_name, activity_hash, screen) = parse_header(header)?;

    // Open nodes along the current branch; stack[d] is the node at depth d.
    let mut stack: Vec<ViewNode> = Vec::new();
    let mut seen = HashSet::new();
    let mut root_line = 0;
    for (line_no, line) in lines {
        let body = line.trim_start_matches(' ');
        let depth = line.len() - body.len();
        if body.starts_with('\t') {
            return Err(malformed(line_no, "tabs are not valid indentation"));
        }
        if depth == 0 && !stack.is_empty() {
            return Err(malformed(line_no, "more than one root node"));
        }
        if depth > stack.len() {
            return Err(DumpError::DanglingIndent(line_no));
        }
        let node = parse_node_line(body, line_no)?;
        if !seen.insert((node.class_name.clone(), node.hash_code)) {
            return Err(malformed(line_no, "duplicate class/hash pair"));
        }
        while stack.len() > depth {
            let done = stack.pop().expect("non-empty");
            stack.last_mut().expect("parent exists").children.push(done);
        }
        if depth == 0 {
            root_line = line_no;
        }
        stack.push(node);
    }
    while stack.len() > 1 {
        let done = stack.pop().expect("non-empty");
        stack.last_mut().expect("parent exists").children.push(done);
    }
    let root = stack.pop().ok_or(DumpError::EmptyDump)?;
    let b = root.bounds;
    if b.left < 0 || b.top < 0 || b.right as i64 > screen.width as i64 || b.bottom as i64 > screen.height as i64 {
        return Err(malformed(root_line, "root bounds exceed the screen"));
    }
    Ok(ViewHierarchy {
        activity_name,
        activity_hash,
        screen,
        root,
    })
}

pub fn serialize_hierarchy_dump(h: &ViewHierarchy) -> String {
    let mut out = format!(
        "ACTIVITY {} {:x} {}x{}\n",
        h.activity_name, h.activity_hash, h.screen.width, h.screen.height
    );
    h.root.walk(&mut |node, depth| {
        out.push_str(&" ".repeat(depth));
        out.push_str(&format!(
            "{}@{:x} bounds={} policy={}\n",
            node.class_name,
            node.hash_code,
            node.bounds,
            node.policy.as_str()
        ));
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("no view contains the point")]
    NoContainingView,
    #[error("view bounds have zero width or height")]
    DegenerateBounds,
    #[error("point lies outside the view bounds")]
    PointOutside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("view path does not resolve at segment {0}")]
pub struct PathNotFound(pub usize);

/// Child-index address of the deepest-rightmost view containing `(x, y)`.
///
/// Hit testing descends only into views that contain the point. Among the
/// reachable views of maximal depth, the one last in pre-order wins, which is
/// the one reached through higher child indices (topmost in draw order).
pub fn locate_target(root: &ViewNode, x: i64, y: i64) -> Option<Vec<usize>> {
    fn go(node: &ViewNode, x: i64, y: i64, trail: &mut Vec<usize>, best: &mut Option<Vec<usize>>) {
        if best.as_ref().is_none_or(|b| trail.len() >= b.len()) {
            *best = Some(trail.clone());
        }
        for (i, child) in node.children.iter().enumerate() {
            if child.bounds.contains(x, y) {
                trail.push(i);
                go(child, x, y, trail, best);
                trail.pop();
            }
        }
    }
    if !root.bounds.contains(x, y) {
        return None;
    }
    let mut best = None;
    go(root, x, y, &mut Vec::new(), &mut best);
    best
}

pub fn find_target_view(h: &ViewHierarchy, x: i64, y: i64) -> Result<ViewPath, GeometryError> {
    let indices = locate_target(&h.root, x, y).ok_or(GeometryError::NoContainingView)?;
    Ok(ViewPath::from_indices(&h.root, &indices))
}

/// Position of `(x, y)` relative to `bounds`, each coordinate in `[0, 1]`.
pub fn compute_ratio(bounds: &Rect, x: i64, y: i64) -> Result<(f64, f64), GeometryError> {
    if bounds.is_degenerate() {
        return Err(GeometryError::DegenerateBounds);
    }
    if !bounds.contains(x, y) {
        return Err(GeometryError::PointOutside);
    }
    Ok((
        (x - bounds.left as i64) as f64 / bounds.width() as f64,
        (y - bounds.top as i64) as f64 / bounds.height() as f64,
    ))
}

/// Child-index address of the node a path names, if it resolves.
pub fn resolve_indices(root: &ViewNode, path: &ViewPath) -> Result<Vec<usize>, PathNotFound> {
    let segments = path.segments();
    match segments.first() {
        Some(seg) if seg.class_name == root.class_name && seg.ordinal == 0 => {}
        _ => return Err(PathNotFound(0)),
    }
    let mut node = root;
    let mut indices = Vec::with_capacity(segments.len() - 1);
    for (k, seg) in segments.iter().enumerate().skip(1) {
        let (i, child) = node
            .children
            .iter()
            .enumerate()
            .filter(|(_, c)| c.class_name == seg.class_name)
            .nth(seg.ordinal)
            .ok_or(PathNotFound(k))?;
        indices.push(i);
        node = child;
    }
    Ok(indices)
}

pub fn resolve_path<'h>(h: &'h ViewHierarchy, path: &ViewPath) -> Result<&'h ViewNode, PathNotFound> {
    let indices = resolve_indices(&h.root, path)?;
    Ok(h.root.descend(&indices).expect("indices come from the same tree"))
}
