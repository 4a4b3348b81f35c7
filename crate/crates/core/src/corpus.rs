//! Deterministic synthetic fixtures: app families with view hierarchies and
//! rendered screenshots, recording sessions, and labelled hash families.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`) keyed by the corpus
//! seed plus a tag tuple mixed through SplitMix64, and only the raw
//! `next_u64` stream is used, so output is reproducible across platforms.
//! Layout geometry is integer-only.
//!
//! Each family has a base app (variant 0) and `variants_per_family`
//! repackaged variants that keep the view structure but move and resize
//! widgets, change hash codes, and add pixel noise to the screenshot.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{serialize_event_log, EventAction, InputEvent};
use crate::similarity::{hamming, phash, GrayImage, PerceptualHash};
use crate::trace::DumpTimeline;
use crate::view::{find_target_view, serialize_hierarchy_dump, Policy, Rect, Screen, ViewHierarchy, ViewNode, ViewPath};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub max_shift_px: u32,
    /// Maximum relative change of widget width/height, in [0, 1).
    pub max_resize_frac: f64,
    /// Per-pixel uniform noise amplitude added to variant screenshots.
    pub noise_amplitude: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub n_families: usize,
    pub variants_per_family: usize,
    pub perturbation: Perturbation,
    /// Inclusive range of hierarchy depth (levels including the root).
    pub hierarchy_depth: (usize, usize),
    pub screen: Screen,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            seed: 1,
            n_families: 10,
            variants_per_family: 3,
            perturbation: Perturbation {
                max_shift_px: 3,
                max_resize_frac: 0.03,
                noise_amplitude: 8,
            },
            hierarchy_depth: (4, 6),
            screen: Screen { width: 320, height: 480 },
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(&'static str),
    #[error("unknown family {family} / variant {variant}")]
    UnknownFamily { family: usize, variant: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("could not place {0} hash families at the requested gap")]
    Unplaceable(usize),
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.n_families == 0 {
            return Err(CorpusError::InvalidSpec("n_families must be at least 1"));
        }
        if self.variants_per_family == 0 {
            return Err(CorpusError::InvalidSpec("variants_per_family must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.perturbation.max_resize_frac) {
            return Err(CorpusError::InvalidSpec("max_resize_frac must be in [0, 1)"));
        }
        if self.hierarchy_depth.0 > self.hierarchy_depth.1 || self.hierarchy_depth.1 < 1 {
            return Err(CorpusError::InvalidSpec("hierarchy_depth must be a non-empty range"));
        }
        if self.screen.width < 64 || self.screen.height < 96 {
            return Err(CorpusError::InvalidSpec("screen must be at least 64x96"));
        }
        Ok(())
    }

    fn check_app(&self, family: usize, variant: usize) -> Result<(), CorpusError> {
        if family >= self.n_families || variant > self.variants_per_family {
            return Err(CorpusError::UnknownFamily { family, variant });
        }
        Ok(())
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn rng_for(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let key = tags.iter().fold(splitmix(seed), |acc, &t| splitmix(acc ^ splitmix(t)));
    ChaCha8Rng::seed_from_u64(key)
}

// purpose tags
const LAYOUT: u64 = 1;
const PERTURB: u64 = 2;
const NOISE: u64 = 3;
const IDS: u64 = 4;
const SESSION: u64 = 5;

fn below(rng: &mut impl RngCore, n: u64) -> u64 {
    rng.next_u64() % n.max(1)
}

fn between(rng: &mut impl RngCore, lo: i64, hi: i64) -> i64 {
    lo + below(rng, (hi - lo + 1) as u64) as i64
}

/// Splits `total` into `n` integer parts with random weights in 2..=5.
fn split(rng: &mut impl RngCore, total: i32, n: usize) -> Vec<i32> {
    let weights: Vec<i32> = (0..n).map(|_| between(rng, 2, 5) as i32).collect();
    let sum: i32 = weights.iter().sum();
    let mut parts: Vec<i32> = weights.iter().map(|w| total * w / sum).collect();
    let used: i32 = parts.iter().sum();
    *parts.last_mut().expect("n >= 1") += total - used;
    parts
}

const WIDGETS: [(&str, Policy); 6] = [
    ("Button", Policy::ConsumeByListener),
    ("ImageButton", Policy::ConsumeByListener),
    ("EditText", Policy::ConsumeBySelf),
    ("CheckBox", Policy::ConsumeBySelf),
    ("TextView", Policy::Pass),
    ("ImageView", Policy::Pass),
];

const WRAP_INSET: i32 = 3;
const ROW_MARGIN: i32 = 6;

/// One widget slot in a row: its outer rectangle, class, and how many
/// wrapper layouts surround it.
#[derive(Debug, Clone)]
struct Slot {
    outer: Rect,
    widget: usize,
    wraps: usize,
}

#[derive(Debug, Clone)]
struct Row {
    bounds: Rect,
    slots: Vec<Slot>,
}

/// Rendering attributes of one node, addressed by pre-order index.
#[derive(Debug, Clone, Copy)]
struct Style {
    shade: u8,
    texture: u8,
    period: u32,
}

#[derive(Debug, Clone)]
struct FamilyLayout {
    title: Rect,
    content: Rect,
    rows: Vec<Row>,
    background: u8,
    styles: Vec<Style>,
}

fn family_layout(spec: &CorpusSpec, family: usize, attempt: u32) -> FamilyLayout {
    let mut rng = rng_for(spec.seed, &[LAYOUT, family as u64, attempt as u64]);
    let (w, h) = (spec.screen.width as i32, spec.screen.height as i32);
    let title = Rect::new(0, 0, w, h / 10);
    let content = Rect::new(0, h / 10, w, h);
    let n_rows = between(&mut rng, 2, 5) as usize;
    let (dmin, dmax) = spec.hierarchy_depth;
    // root, content, row, widget occupy four levels; the rest are wrappers
    let wrap_lo = dmin.saturating_sub(4) as i64;
    let wrap_hi = (dmax.saturating_sub(4) as i64).max(wrap_lo);

    let mut rows = Vec::with_capacity(n_rows);
    let mut top = content.top;
    for (r, height) in split(&mut rng, content.height() as i32, n_rows).into_iter().enumerate() {
        let bounds = Rect::new(0, top, w, top + height);
        top += height;
        let n_slots = between(&mut rng, 1, 3) as usize;
        let inner_w = w - ROW_MARGIN * (n_slots as i32 + 1);
        let mut left = ROW_MARGIN;
        let mut slots = Vec::with_capacity(n_slots);
        for (s, sw) in split(&mut rng, inner_w, n_slots).into_iter().enumerate() {
            let widget = if r == 0 && s == 0 { 0 } else { below(&mut rng, WIDGETS.len() as u64) as usize };
            slots.push(Slot {
                outer: Rect::new(left, bounds.top + ROW_MARGIN, left + sw, bounds.bottom - ROW_MARGIN),
                widget,
                wraps: between(&mut rng, wrap_lo, wrap_hi) as usize,
            });
            left += sw + ROW_MARGIN;
        }
        rows.push(Row { bounds, slots });
    }
    let background = between(&mut rng, 0, 255) as u8;
    let node_count = 3 + rows.iter().map(|r| 1 + r.slots.iter().map(|s| 1 + s.wraps).sum::<usize>()).sum::<usize>();
    let styles = (0..node_count)
        .map(|_| Style {
            shade: between(&mut rng, 0, 255) as u8,
            texture: below(&mut rng, 4) as u8,
            period: between(&mut rng, 3, 12) as u32,
        })
        .collect();
    FamilyLayout { title, content, rows, background, styles }
}

/// Moves and resizes every widget slot of a variant, staying inside its row.
fn perturb(spec: &CorpusSpec, family: usize, variant: usize, layout: &mut FamilyLayout) {
    if variant == 0 {
        return;
    }
    let mut rng = rng_for(spec.seed, &[PERTURB, family as u64, variant as u64]);
    let shift = spec.perturbation.max_shift_px as i64;
    let resize = (spec.perturbation.max_resize_frac * 1000.0).floor() as i64;
    for row in &mut layout.rows {
        let area = Rect::new(
            row.bounds.left + 1,
            row.bounds.top + 1,
            row.bounds.right - 1,
            row.bounds.bottom - 1,
        );
        for slot in &mut row.slots {
            let o = slot.outer;
            let (cx, cy) = o.center();
            let sw = between(&mut rng, -resize, resize);
            let sh = between(&mut rng, -resize, resize);
            let nw = (o.width() * (1000 + sw) / 1000).min(area.width());
            let nh = (o.height() * (1000 + sh) / 1000).min(area.height());
            let dx = between(&mut rng, -shift, shift);
            let dy = between(&mut rng, -shift, shift);
            let left = (cx + dx - nw / 2).clamp(area.left as i64, area.right as i64 - nw);
            let top = (cy + dy - nh / 2).clamp(area.top as i64, area.bottom as i64 - nh);
            slot.outer = Rect::new(left as i32, top as i32, (left + nw) as i32, (top + nh) as i32);
        }
    }
}

fn ids_for(spec: &CorpusSpec, family: usize, variant: usize) -> (String, u32, impl FnMut(u32) -> u32) {
    let mut rng = rng_for(spec.seed, &[IDS, family as u64, variant as u64]);
    let activity_hash = rng.next_u64() as u32;
    let salt = rng.next_u64() as u32 & 0xffff_0000;
    let name = format!("com.family{family:03}.v{variant:02}.MainActivity");
    (name, activity_hash, move |i: u32| salt | (i & 0xffff))
}

fn build_hierarchy(spec: &CorpusSpec, family: usize, variant: usize, layout: &FamilyLayout) -> ViewHierarchy {
    let (activity_name, activity_hash, mut hash) = ids_for(spec, family, variant);
    let mut next = 0u32;
    let mut node = |class: &str, bounds: Rect, policy: Policy| {
        let n = ViewNode::new(class, hash(next), bounds, policy);
        next += 1;
        n
    };
    let (w, h) = (spec.screen.width as i32, spec.screen.height as i32);
    let mut root = node("FrameLayout", Rect::new(0, 0, w, h), Policy::Pass);
    root.children.push(node("TextView", layout.title, Policy::Pass));
    let mut content = node("LinearLayout", layout.content, Policy::Pass);
    for row in &layout.rows {
        let mut row_node = node("LinearLayout", row.bounds, Policy::Pass);
        for slot in &row.slots {
            let mut chain = Vec::with_capacity(slot.wraps + 1);
            let mut r = slot.outer;
            for _ in 0..slot.wraps {
                chain.push(node("RelativeLayout", r, Policy::Pass));
                r = Rect::new(r.left + WRAP_INSET, r.top + WRAP_INSET, r.right - WRAP_INSET, r.bottom - WRAP_INSET);
                if r.is_degenerate() {
                    r = Rect::new(r.left, r.top, r.left + 2, r.top + 2);
                }
            }
            let (class, policy) = WIDGETS[slot.widget];
            let mut inner = node(class, r, policy);
            while let Some(mut wrapper) = chain.pop() {
                wrapper.children.push(inner);
                inner = wrapper;
            }
            row_node.children.push(inner);
        }
        content.children.push(row_node);
    }
    root.children.push(content);
    ViewHierarchy {
        activity_name,
        activity_hash,
        screen: spec.screen,
        root,
    }
}

pub fn app_id(family: usize, variant: usize) -> String {
    format!("fam{family:03}-v{variant:02}")
}

pub fn app_hierarchy(spec: &CorpusSpec, family: usize, variant: usize) -> Result<ViewHierarchy, CorpusError> {
    spec.check_app(family, variant)?;
    Ok(generate_family(spec, family).swap_remove(variant).hierarchy)
}

fn texture(style: Style, x: i64, y: i64) -> i32 {
    let p = style.period as i64;
    match style.texture {
        1 if (y / p) % 2 == 0 => 28,
        2 if (x / p) % 2 == 0 => 28,
        3 if ((x / p) + (y / p)) % 2 == 0 => 28,
        _ => 0,
    }
}

fn render(spec: &CorpusSpec, h: &ViewHierarchy, layout: &FamilyLayout) -> GrayImage {
    let mut img = GrayImage::filled(spec.screen.width, spec.screen.height, layout.background);
    let (w, hgt) = (spec.screen.width as i32, spec.screen.height as i32);
    let mut index = 0usize;
    h.root.walk(&mut |node, _| {
        let style = layout.styles[index % layout.styles.len()];
        index += 1;
        let b = node.bounds;
        for y in b.top.max(0)..b.bottom.min(hgt) {
            for x in b.left.max(0)..b.right.min(w) {
                let t = texture(style, (x - b.left) as i64, (y - b.top) as i64);
                let v = (style.shade as i32 + if style.shade > 127 { -t } else { t }).clamp(0, 255);
                img.put(x as u32, y as u32, v as u8);
            }
        }
    });
    img
}

fn add_noise(spec: &CorpusSpec, family: usize, variant: usize, img: &mut GrayImage) {
    let a = spec.perturbation.noise_amplitude as i64;
    if variant == 0 || a == 0 {
        return;
    }
    let mut rng = rng_for(spec.seed, &[NOISE, family as u64, variant as u64]);
    for px in img.pixels_mut() {
        *px = (*px as i64 + between(&mut rng, -a, a)).clamp(0, 255) as u8;
    }
}

pub fn app_screenshot(spec: &CorpusSpec, family: usize, variant: usize) -> Result<GrayImage, CorpusError> {
    spec.check_app(family, variant)?;
    Ok(generate_family(spec, family).swap_remove(variant).screenshot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppRecord {
    pub app_id: String,
    pub family: usize,
    pub variant: usize,
    /// Which layout draw of the family was kept.
    pub layout_attempt: u32,
    pub hash: PerceptualHash,
}

/// Measured hash separation of a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationStats {
    pub max_intra_distance: u32,
    pub min_inter_distance: u32,
    pub intra_pairs: usize,
    pub intra_within_10: f64,
    pub inter_pairs: usize,
    pub inter_at_least_24: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: CorpusSpec,
    pub apps: Vec<AppRecord>,
    pub separation: SeparationStats,
}

pub fn separation_stats(apps: &[AppRecord]) -> SeparationStats {
    let mut s = SeparationStats {
        max_intra_distance: 0,
        min_inter_distance: 64,
        intra_pairs: 0,
        intra_within_10: 1.0,
        inter_pairs: 0,
        inter_at_least_24: 1.0,
    };
    let (mut intra_ok, mut inter_ok) = (0usize, 0usize);
    for (i, a) in apps.iter().enumerate() {
        for b in &apps[i + 1..] {
            let d = hamming(a.hash, b.hash);
            if a.family == b.family {
                s.intra_pairs += 1;
                s.max_intra_distance = s.max_intra_distance.max(d);
                intra_ok += (d <= INTRA_BOUND) as usize;
            } else {
                s.inter_pairs += 1;
                s.min_inter_distance = s.min_inter_distance.min(d);
                inter_ok += (d >= 24) as usize;
            }
        }
    }
    if s.intra_pairs > 0 {
        s.intra_within_10 = intra_ok as f64 / s.intra_pairs as f64;
    }
    if s.inter_pairs > 0 {
        s.inter_at_least_24 = inter_ok as f64 / s.inter_pairs as f64;
    }
    s
}

struct GeneratedApp {
    record: AppRecord,
    screenshot: GrayImage,
    hierarchy: ViewHierarchy,
}

/// Intra-family hash distance a family layout must stay within.
pub const INTRA_BOUND: u32 = 10;
const LAYOUT_ATTEMPTS: u32 = 32;

fn render_family(spec: &CorpusSpec, family: usize, attempt: u32) -> Vec<GeneratedApp> {
    let base = family_layout(spec, family, attempt);
    (0..=spec.variants_per_family)
        .map(|variant| {
            let mut layout = base.clone();
            perturb(spec, family, variant, &mut layout);
            let hierarchy = build_hierarchy(spec, family, variant, &layout);
            let mut screenshot = render(spec, &hierarchy, &layout);
            add_noise(spec, family, variant, &mut screenshot);
            let hash = phash(&screenshot).expect("screens are at least 64x96");
            GeneratedApp {
                record: AppRecord {
                    app_id: app_id(family, variant),
                    family,
                    variant,
                    layout_attempt: attempt,
                    hash,
                },
                screenshot,
                hierarchy,
            }
        })
        .collect()
}

/// Renders the family, redrawing its base layout while any two of its apps
/// hash further apart than [`INTRA_BOUND`]. After the last attempt the
/// final draw is kept as is.
fn generate_family(spec: &CorpusSpec, family: usize) -> Vec<GeneratedApp> {
    let mut attempt = 0;
    loop {
        let apps = render_family(spec, family, attempt);
        let tight = apps.iter().enumerate().all(|(i, a)| {
            apps[i + 1..]
                .iter()
                .all(|b| hamming(a.record.hash, b.record.hash) <= INTRA_BOUND)
        });
        attempt += 1;
        if tight || attempt == LAYOUT_ATTEMPTS {
            return apps;
        }
    }
}

/// Generates the corpus in memory: per app its record, screenshot and
/// hierarchy, in family/variant order.
pub fn generate_apps(spec: &CorpusSpec) -> Result<Vec<(AppRecord, GrayImage, ViewHierarchy)>, CorpusError> {
    spec.validate()?;
    let families: Vec<Vec<GeneratedApp>> = (0..spec.n_families).into_par_iter().map(|f| generate_family(spec, f)).collect();
    Ok(families
        .into_iter()
        .flatten()
        .map(|g| (g.record, g.screenshot, g.hierarchy))
        .collect())
}

/// Writes the corpus under `out_dir`:
///
/// ```text
/// spec.json  manifest.json  labels.csv
/// <app_id>/main.pgm  <app_id>/main.hier
/// ```
pub fn generate_corpus(spec: &CorpusSpec, out_dir: impl AsRef<Path>) -> Result<Manifest, CorpusError> {
    let out = out_dir.as_ref();
    let apps = generate_apps(spec)?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Io { path, source }
    };
    fs::create_dir_all(out).map_err(io(out))?;
    let mut labels = String::from("app_id,family\n");
    for (record, img, h) in &apps {
        let dir = out.join(&record.app_id);
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        let pgm = dir.join("main.pgm");
        fs::write(&pgm, img.to_pgm_bytes()).map_err(io(&pgm))?;
        let hier = dir.join("main.hier");
        fs::write(&hier, serialize_hierarchy_dump(h)).map_err(io(&hier))?;
        labels.push_str(&format!("{},fam{:03}\n", record.app_id, record.family));
    }
    let records: Vec<AppRecord> = apps.into_iter().map(|(r, _, _)| r).collect();
    let manifest = Manifest {
        spec: spec.clone(),
        separation: separation_stats(&records),
        apps: records,
    };
    let write = |name: &str, text: String| {
        let p = out.join(name);
        fs::write(&p, text).map_err(io(&p))
    };
    write("labels.csv", labels)?;
    write("spec.json", serde_json::to_string_pretty(spec).expect("spec serializes"))?;
    write("manifest.json", serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    Ok(manifest)
}

pub fn load_spec(corpus_dir: impl AsRef<Path>) -> Result<CorpusSpec, CorpusError> {
    let path = corpus_dir.as_ref().join("spec.json");
    let text = fs::read_to_string(&path).map_err(|source| CorpusError::Io { path: path.clone(), source })?;
    serde_json::from_str(&text).map_err(|e| CorpusError::Io {
        path,
        source: io::Error::new(io::ErrorKind::InvalidData, e),
    })
}

/// Parses `labels.csv` (`app_id,family` with a header line).
pub fn parse_labels(text: &str) -> Vec<(String, String)> {
    text.lines()
        .skip(1)
        .filter_map(|l| l.split_once(','))
        .map(|(a, f)| (a.trim().to_string(), f.trim().to_string()))
        .collect()
}

/// A recording session: a tap sequence plus the dumps it was taken against.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub app_id: String,
    pub events: Vec<InputEvent>,
    pub dumps: DumpTimeline,
    /// Path of the view each tap was aimed at.
    pub aimed: Vec<ViewPath>,
}

impl Session {
    /// Writes `events.csv` and `dumps/<timestamp>.hier`.
    pub fn write(&self, out_dir: impl AsRef<Path>) -> Result<(), CorpusError> {
        let out = out_dir.as_ref();
        let err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CorpusError::Io { path, source }
        };
        fs::create_dir_all(out).map_err(err(out))?;
        let events = out.join("events.csv");
        let body = format!("# timestamp,event_type,action,x,y,key_code\n{}", serialize_event_log(&self.events));
        fs::write(&events, body).map_err(err(&events))?;
        let dumps = out.join("dumps");
        self.dumps.write_dir(&dumps).map_err(err(&dumps))
    }
}

fn consuming_leaves(node: &ViewNode, trail: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if node.children.is_empty() && node.policy.consumes() && !node.bounds.is_degenerate() {
        out.push(trail.clone());
    }
    for (i, c) in node.children.iter().enumerate() {
        trail.push(i);
        consuming_leaves(c, trail, out);
        trail.pop();
    }
}

/// Generates `taps` Down/Up pairs on consuming views of the given app, with
/// a single dump taken at t=0.
pub fn generate_session(spec: &CorpusSpec, family: usize, variant: usize, taps: usize) -> Result<Session, CorpusError> {
    let h = app_hierarchy(spec, family, variant)?;
    let mut rng = rng_for(spec.seed, &[SESSION, family as u64, variant as u64]);
    let mut leaves = Vec::new();
    consuming_leaves(&h.root, &mut Vec::new(), &mut leaves);
    let mut events = Vec::with_capacity(taps * 2);
    let mut aimed = Vec::with_capacity(taps);
    let mut t = 500u64;
    'taps: for _ in 0..taps {
        if leaves.is_empty() {
            break;
        }
        for _ in 0..64 {
            let addr = &leaves[below(&mut rng, leaves.len() as u64) as usize];
            let node = h.root.descend(addr).expect("address from this tree");
            let b = node.bounds;
            let x = between(&mut rng, b.left as i64 + 1, (b.right as i64 - 1).max(b.left as i64 + 1));
            let y = between(&mut rng, b.top as i64 + 1, (b.bottom as i64 - 1).max(b.top as i64 + 1));
            let path = ViewPath::from_indices(&h.root, addr);
            if find_target_view(&h, x, y).ok().as_ref() != Some(&path) {
                continue;
            }
            events.push(InputEvent::touch(t, EventAction::Down, x as u32, y as u32));
            t += between(&mut rng, 60, 140) as u64;
            events.push(InputEvent::touch(t, EventAction::Up, x as u32, y as u32));
            t += between(&mut rng, 400, 1200) as u64;
            aimed.push(path);
            continue 'taps;
        }
    }
    let mut dumps = DumpTimeline::new();
    dumps.insert(0, h);
    Ok(Session {
        app_id: app_id(family, variant),
        events,
        dumps,
        aimed,
    })
}

/// Parameters for [`random_hierarchy`]: unstructured, possibly overlapping
/// trees used to exercise hit testing and dispatch.
#[derive(Debug, Clone)]
pub struct RandomTreeParams {
    pub screen: Screen,
    pub max_depth: usize,
    pub max_children: usize,
}

impl Default for RandomTreeParams {
    fn default() -> Self {
        RandomTreeParams {
            screen: Screen { width: 240, height: 320 },
            max_depth: 4,
            max_children: 4,
        }
    }
}

/// Random hierarchy with children inside their parents, random overlap and
/// random policies.
pub fn random_hierarchy(seed: u64, params: &RandomTreeParams) -> ViewHierarchy {
    const CLASSES: [&str; 5] = ["ViewGroup", "View", "Button", "TextView", "ImageView"];
    const POLICIES: [Policy; 3] = [Policy::Pass, Policy::ConsumeBySelf, Policy::ConsumeByListener];
    fn grow(rng: &mut ChaCha8Rng, node: &mut ViewNode, depth: usize, params: &RandomTreeParams, next: &mut u32) {
        if depth >= params.max_depth {
            return;
        }
        let b = node.bounds;
        let n = below(rng, params.max_children as u64 + 1) as usize;
        for _ in 0..n {
            if b.width() < 2 || b.height() < 2 {
                break;
            }
            let l = between(rng, b.left as i64, b.right as i64 - 1);
            let t = between(rng, b.top as i64, b.bottom as i64 - 1);
            let r = between(rng, l + 1, b.right as i64);
            let bt = between(rng, t + 1, b.bottom as i64);
            let mut child = ViewNode::new(
                CLASSES[below(rng, 5) as usize],
                *next,
                Rect::new(l as i32, t as i32, r as i32, bt as i32),
                POLICIES[below(rng, 3) as usize],
            );
            *next += 1;
            grow(rng, &mut child, depth + 1, params, next);
            node.children.push(child);
        }
    }
    let mut rng = rng_for(seed, &[0x7265_6520]);
    let (w, h) = (params.screen.width as i32, params.screen.height as i32);
    let policy = POLICIES[below(&mut rng, 3) as usize];
    let mut root = ViewNode::new("DecorView", 0, Rect::new(0, 0, w, h), policy);
    let mut next = 1;
    grow(&mut rng, &mut root, 1, params, &mut next);
    ViewHierarchy {
        activity_name: format!("Random{seed}"),
        activity_hash: seed as u32,
        screen: params.screen,
        root,
    }
}

/// Labelled 64-bit hashes in families with controlled separation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashFamilySpec {
    pub seed: u64,
    pub n_families: usize,
    pub members_per_family: usize,
    /// Members differ from their family centre in at most this many of the
    /// low 8 bits, so intra-family distance is at most twice this.
    pub max_member_flips: u32,
    /// Consecutive family centres are exactly this far apart and no two
    /// centres are closer.
    pub family_gap: u32,
}

impl Default for HashFamilySpec {
    fn default() -> Self {
        HashFamilySpec {
            seed: 7,
            n_families: 20,
            members_per_family: 5,
            max_member_flips: 4,
            family_gap: 24,
        }
    }
}

/// Generates hash families. Returns the hashes and each hash's family.
///
/// Centres live in the high 56 bits and members perturb only the low 8, so
/// every inter-family distance is at least `family_gap` and every intra
/// distance is at most `2 * max_member_flips`. Member 0 of each family is
/// its centre, and centres form a chain at distance exactly `family_gap`,
/// which makes the whole corpus one component once eps reaches the gap.
pub fn generate_hash_families(spec: &HashFamilySpec) -> Result<(Vec<PerceptualHash>, Vec<usize>), CorpusError> {
    const PUBLIC_BITS: u32 = 56;
    if spec.max_member_flips > 4 || spec.family_gap > PUBLIC_BITS || spec.members_per_family == 0 {
        return Err(CorpusError::InvalidSpec("member flips must be <= 4 and gap <= 56"));
    }
    let mut rng = rng_for(spec.seed, &[0x6861_7368]);
    let public_mask = !0xffu64;
    let mut centres: Vec<u64> = Vec::with_capacity(spec.n_families);
    for f in 0..spec.n_families {
        let placed = (0..100_000).find_map(|_| {
            let c = match centres.last() {
                None => rng.next_u64() & public_mask,
                Some(&prev) => {
                    // flip exactly `family_gap` distinct public bits
                    let mut bits: Vec<u32> = (8..64).collect();
                    for i in 0..spec.family_gap as usize {
                        let j = i + below(&mut rng, (bits.len() - i) as u64) as usize;
                        bits.swap(i, j);
                    }
                    bits[..spec.family_gap as usize].iter().fold(prev, |acc, &b| acc ^ (1 << b))
                }
            };
            centres
                .iter()
                .all(|&o| (o ^ c).count_ones() >= spec.family_gap)
                .then_some(c)
        });
        centres.push(placed.ok_or(CorpusError::Unplaceable(f))?);
    }
    let mut hashes = Vec::with_capacity(spec.n_families * spec.members_per_family);
    let mut labels = Vec::with_capacity(hashes.capacity());
    for (f, &c) in centres.iter().enumerate() {
        for m in 0..spec.members_per_family {
            let mut h = c;
            if m > 0 {
                let flips = between(&mut rng, 1, spec.max_member_flips.max(1) as i64);
                for _ in 0..flips {
                    h ^= 1 << below(&mut rng, 8);
                }
            }
            hashes.push(PerceptualHash(h));
            labels.push(f);
        }
    }
    Ok((hashes, labels))
}
