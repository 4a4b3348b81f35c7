//! Multi-vantage-point tree over 64-bit hashes under hamming distance.
//!
//! Each internal node holds two vantage points: the first point of its set
//! and the point farthest from it. The remaining points are split at the
//! median distance to the first vantage point, and each half again at the
//! median distance to the second, giving up to four children. Every child
//! keeps the distance ranges of its points to both vantage points, which
//! yields the triangle-inequality lower bound used for pruning. Sets of at
//! most 16 points become leaves.
//!
//! Queries are exact: results equal an exhaustive scan ordered by
//! `(distance, insertion index)`.

use std::collections::BinaryHeap;

use super::{hamming, PerceptualHash};

const LEAF_CAPACITY: usize = 16;

#[derive(Debug, Clone, Copy)]
struct Range {
    lo: u32,
    hi: u32,
}

impl Range {
    fn of(values: impl Iterator<Item = u32>) -> Self {
        values.fold(Range { lo: u32::MAX, hi: 0 }, |r, v| Range { lo: r.lo.min(v), hi: r.hi.max(v) })
    }

    /// Smallest possible |d - v| for v in the range.
    fn gap(&self, d: u32) -> u32 {
        if d < self.lo {
            self.lo - d
        } else {
            d.saturating_sub(self.hi)
        }
    }
}

#[derive(Debug, Clone)]
struct Child {
    to_first: Range,
    to_second: Range,
    node: Node,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Vec<u32>),
    Inner { vantage: [u32; 2], children: Vec<Child> },
}

#[derive(Debug, Clone, Default)]
pub struct MvpTree {
    points: Vec<PerceptualHash>,
    root: Option<Node>,
}

/// Sorts by (key, id) and cuts in half.
fn split_by(mut items: Vec<(u32, u32)>) -> [Vec<(u32, u32)>; 2] {
    items.sort_unstable();
    let upper = items.split_off(items.len() / 2);
    [items, upper]
}

impl MvpTree {
    pub fn new(points: Vec<PerceptualHash>) -> Self {
        let ids: Vec<u32> = (0..points.len() as u32).collect();
        let root = (!ids.is_empty()).then(|| Self::build(&points, ids));
        MvpTree { points, root }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[PerceptualHash] {
        &self.points
    }

    fn build(points: &[PerceptualHash], ids: Vec<u32>) -> Node {
        if ids.len() <= LEAF_CAPACITY {
            return Node::Leaf(ids);
        }
        let d = |a: u32, b: u32| hamming(points[a as usize], points[b as usize]);
        let first = ids[0];
        let mut second = ids[1];
        for &id in &ids[1..] {
            if d(first, id) > d(first, second) {
                second = id;
            }
        }
        let rest: Vec<(u32, u32)> = ids
            .iter()
            .filter(|&&id| id != first && id != second)
            .map(|&id| (d(first, id), id))
            .collect();
        let mut children = Vec::with_capacity(4);
        for half in split_by(rest) {
            let by_second: Vec<(u32, u32)> = half.iter().map(|&(_, id)| (d(second, id), id)).collect();
            for quarter in split_by(by_second) {
                if quarter.is_empty() {
                    continue;
                }
                let members: Vec<u32> = quarter.iter().map(|&(_, id)| id).collect();
                children.push(Child {
                    to_first: Range::of(members.iter().map(|&id| d(first, id))),
                    to_second: Range::of(quarter.iter().map(|&(dist, _)| dist)),
                    node: Self::build(points, members),
                });
            }
        }
        Node::Inner { vantage: [first, second], children }
    }

    /// The `k` nearest points accepted by `keep`, as `(distance, index)`
    /// pairs in ascending order.
    pub fn knn_filtered(&self, query: PerceptualHash, k: usize, keep: impl Fn(usize) -> bool) -> Vec<(u32, usize)> {
        let mut search = Knn {
            tree: self,
            query,
            k,
            keep: &keep,
            heap: BinaryHeap::with_capacity(k + 1),
        };
        if let (Some(root), true) = (&self.root, k > 0) {
            search.visit(root);
        }
        let mut out: Vec<(u32, usize)> = search.heap.into_iter().map(|(d, i)| (d, i as usize)).collect();
        out.sort_unstable();
        out
    }

    pub fn knn(&self, query: PerceptualHash, k: usize) -> Vec<(u32, usize)> {
        self.knn_filtered(query, k, |_| true)
    }

    /// All points within `radius` of `query`, ascending by index.
    pub fn range(&self, query: PerceptualHash, radius: u32) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack: Vec<&Node> = self.root.iter().collect();
        let within = |id: u32| hamming(query, self.points[id as usize]) <= radius;
        while let Some(node) = stack.pop() {
            match node {
                Node::Leaf(ids) => out.extend(ids.iter().filter(|&&id| within(id)).map(|&id| id as usize)),
                Node::Inner { vantage, children } => {
                    let dq = vantage.map(|v| hamming(query, self.points[v as usize]));
                    out.extend(
                        vantage
                            .iter()
                            .zip(dq)
                            .filter(|&(_, d)| d <= radius)
                            .map(|(&v, _)| v as usize),
                    );
                    for child in children {
                        let bound = child.to_first.gap(dq[0]).max(child.to_second.gap(dq[1]));
                        if bound <= radius {
                            stack.push(&child.node);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

struct Knn<'a, F> {
    tree: &'a MvpTree,
    query: PerceptualHash,
    k: usize,
    keep: &'a F,
    heap: BinaryHeap<(u32, u32)>,
}

impl<F: Fn(usize) -> bool> Knn<'_, F> {
    fn worst(&self) -> u32 {
        if self.heap.len() < self.k {
            u32::MAX
        } else {
            self.heap.peek().map_or(u32::MAX, |&(d, _)| d)
        }
    }

    fn offer(&mut self, id: u32, d: u32) {
        if !(self.keep)(id as usize) {
            return;
        }
        if self.heap.len() < self.k {
            self.heap.push((d, id));
        } else if self.heap.peek().is_some_and(|&top| (d, id) < top) {
            self.heap.pop();
            self.heap.push((d, id));
        }
    }

    fn visit(&mut self, node: &Node) {
        match node {
            Node::Leaf(ids) => {
                for &id in ids {
                    let d = hamming(self.query, self.tree.points[id as usize]);
                    self.offer(id, d);
                }
            }
            Node::Inner { vantage, children } => {
                let dq = vantage.map(|v| hamming(self.query, self.tree.points[v as usize]));
                self.offer(vantage[0], dq[0]);
                if vantage[1] != vantage[0] {
                    self.offer(vantage[1], dq[1]);
                }
                let mut order: Vec<(u32, usize)> = children
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (c.to_first.gap(dq[0]).max(c.to_second.gap(dq[1])), i))
                    .collect();
                order.sort_unstable();
                for (bound, i) in order {
                    // equal bounds may still hide a lower-index tie
                    if bound > self.worst() {
                        break;
                    }
                    self.visit(&children[i].node);
                }
            }
        }
    }
}

#[cfg(test)]
impl MvpTree {
    /// Every point id reachable from the root, sorted.
    fn covered(&self) -> Vec<u32> {
        fn go(node: &Node, out: &mut Vec<u32>) {
            match node {
                Node::Leaf(ids) => out.extend(ids),
                Node::Inner { vantage, children } => {
                    out.extend(vantage);
                    for c in children {
                        go(&c.node, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        if let Some(r) = &self.root {
            go(r, &mut out);
        }
        out.sort_unstable();
        out
    }
}
