//! App/screenshot hash index.
//!
//! Text persistence, one entry per line after a `PHIDX 1` header:
//!
//! ```text
//! PHIDX 1
//! com.example.app<TAB>main<TAB>8f3a0c1e22d4b7a9
//! ```
//!
//! Only hashes are stored; the tree is rebuilt on load.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::image::{read_pgm, GrayImage, ImageError};
use super::mvp::MvpTree;
use super::phash::{phash, PhashError};
use super::PerceptualHash;

pub const INDEX_HEADER: &str = "PHIDX 1";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexEntry {
    pub app_id: String,
    pub screenshot_id: String,
    pub hash: PerceptualHash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighbor {
    /// Position of the entry in insertion order.
    pub index: usize,
    pub distance: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimilarApp {
    pub app_id: String,
    pub screenshot_id: String,
    pub distance: u32,
    /// Which of the query screenshots achieved the minimum.
    pub query: usize,
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("index is empty")]
    EmptyIndex,
    #[error("no screenshots given")]
    NoScreenshots,
    #[error(transparent)]
    Hash(#[from] PhashError),
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: ImageError },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: &'static str },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Default)]
pub struct SimilarityIndex {
    entries: Vec<IndexEntry>,
    tree: MvpTree,
}

impl SimilarityIndex {
    pub fn build(entries: Vec<IndexEntry>) -> Self {
        let tree = MvpTree::new(entries.iter().map(|e| e.hash).collect());
        SimilarityIndex { entries, tree }
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hashes(&self) -> &[PerceptualHash] {
        self.tree.points()
    }

    pub fn knn(&self, query: PerceptualHash, k: usize) -> Result<Vec<Neighbor>, IndexError> {
        self.knn_filtered(query, k, |_| true)
    }

    pub fn knn_filtered(
        &self,
        query: PerceptualHash,
        k: usize,
        keep: impl Fn(&IndexEntry) -> bool,
    ) -> Result<Vec<Neighbor>, IndexError> {
        if self.entries.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        Ok(self
            .tree
            .knn_filtered(query, k.max(1), |i| keep(&self.entries[i]))
            .into_iter()
            .map(|(distance, index)| Neighbor { index, distance })
            .collect())
    }

    pub fn within(&self, query: PerceptualHash, radius: u32) -> Vec<Neighbor> {
        self.tree
            .range(query, radius)
            .into_iter()
            .map(|index| Neighbor {
                index,
                distance: query.distance(self.entries[index].hash),
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(INDEX_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\n", e.app_id, e.screenshot_id, e.hash));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, IndexError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end() == INDEX_HEADER => {}
            _ => return Err(IndexError::Malformed { line: 1, reason: "missing PHIDX 1 header" }),
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let malformed = |reason| IndexError::Malformed { line: i + 1, reason };
            let mut cols = line.split('\t');
            let (Some(app), Some(shot), Some(hash), None) = (cols.next(), cols.next(), cols.next(), cols.next()) else {
                return Err(malformed("expected app_id, screenshot_id, hash"));
            };
            if app.is_empty() || shot.is_empty() {
                return Err(malformed("empty identifier"));
            }
            if hash.len() != 16 {
                return Err(malformed("hash must be 16 hex digits"));
            }
            let hash = hash.parse().map_err(|_| malformed("bad hash"))?;
            entries.push(IndexEntry {
                app_id: app.to_string(),
                screenshot_id: shot.to_string(),
                hash,
            });
        }
        Ok(Self::build(entries))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| IndexError::Io { path: path.into(), source })?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|source| IndexError::Io { path: path.into(), source })
    }

    /// Hashes every `<root>/<app_id>/<screenshot_id>.pgm`, in sorted
    /// app/screenshot order.
    pub fn from_corpus_dir(root: impl AsRef<Path>) -> Result<Self, IndexError> {
        let files = corpus_files(root.as_ref())?;
        let hashed: Vec<Result<IndexEntry, IndexError>> = files
            .par_iter()
            .map(|(app, shot, path)| {
                let img = read_pgm(path).map_err(|source| IndexError::Image { path: path.clone(), source })?;
                Ok(IndexEntry {
                    app_id: app.clone(),
                    screenshot_id: shot.clone(),
                    hash: phash(&img)?,
                })
            })
            .collect();
        Ok(Self::build(hashed.into_iter().collect::<Result<_, _>>()?))
    }
}

/// `(app_id, screenshot_id, path)` for every PGM under the corpus layout.
pub fn corpus_files(root: &Path) -> Result<Vec<(String, String, PathBuf)>, IndexError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| IndexError::Io { path, source }
    };
    let mut out = Vec::new();
    for app in fs::read_dir(root).map_err(io(root))? {
        let app = app.map_err(io(root))?.path();
        if !app.is_dir() {
            continue;
        }
        let Some(app_id) = app.file_name().and_then(|n| n.to_str()).map(String::from) else {
            continue;
        };
        for shot in fs::read_dir(&app).map_err(io(&app))? {
            let shot = shot.map_err(io(&app))?.path();
            if shot.extension().and_then(|e| e.to_str()) != Some("pgm") {
                continue;
            }
            if let Some(stem) = shot.file_stem().and_then(|s| s.to_str()) {
                out.push((app_id.clone(), stem.to_string(), shot.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Finds the indexed app whose screenshots come closest to any of the given
/// screenshots. Entries of `exclude_app` (the query app itself) are skipped.
pub fn find_similar_app(
    index: &SimilarityIndex,
    screenshots: &[GrayImage],
    exclude_app: Option<&str>,
) -> Result<SimilarApp, IndexError> {
    if screenshots.is_empty() {
        return Err(IndexError::NoScreenshots);
    }
    let hashes = screenshots.iter().map(phash).collect::<Result<Vec<_>, _>>()?;
    find_similar_app_by_hash(index, &hashes, exclude_app)
}

pub fn find_similar_app_by_hash(
    index: &SimilarityIndex,
    hashes: &[PerceptualHash],
    exclude_app: Option<&str>,
) -> Result<SimilarApp, IndexError> {
    if hashes.is_empty() {
        return Err(IndexError::NoScreenshots);
    }
    let keep = |e: &IndexEntry| exclude_app != Some(e.app_id.as_str());
    let mut best: Option<(u32, usize, usize)> = None;
    for (q, &h) in hashes.iter().enumerate() {
        if let Some(n) = index.knn_filtered(h, 1, keep)?.first() {
            if best.is_none_or(|(d, i, _)| (n.distance, n.index) < (d, i)) {
                best = Some((n.distance, n.index, q));
            }
        }
    }
    let (distance, i, query) = best.ok_or(IndexError::EmptyIndex)?;
    let e = &index.entries()[i];
    Ok(SimilarApp {
        app_id: e.app_id.clone(),
        screenshot_id: e.screenshot_id.clone(),
        distance,
        query,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(app: &str, shot: &str, hash: u64) -> IndexEntry {
        IndexEntry {
            app_id: app.into(),
            screenshot_id: shot.into(),
            hash: PerceptualHash(hash),
        }
    }

    #[test]
    fn single_entry_lookup() {
        let idx = SimilarityIndex::build(vec![entry("a", "s", 0xdead)]);
        assert_eq!(idx.knn(PerceptualHash(0xdead), 1).unwrap(), vec![Neighbor { index: 0, distance: 0 }]);
        assert!(matches!(SimilarityIndex::default().knn(PerceptualHash(0), 1), Err(IndexError::EmptyIndex)));
    }

    #[test]
    fn duplicates_precede_farther_entries() {
        let idx = SimilarityIndex::build(vec![
            entry("far", "s", 0xffff_0000),
            entry("b", "s", 0xf0),
            entry("c", "s", 0xf0),
        ]);
        let got = idx.knn(PerceptualHash(0xf0), 3).unwrap();
        assert_eq!(got.iter().map(|n| n.index).collect::<Vec<_>>(), vec![1, 2, 0]);
        assert_eq!(got[0].distance, 0);
        assert_eq!(got[1].distance, 0);
    }

    #[test]
    fn similar_app_is_global_minimum() {
        // two query screenshots: q0 is 12 bits from C, q1 is 3 bits from B
        let q0 = 0u64;
        let q1 = u64::MAX;
        let idx = SimilarityIndex::build(vec![
            entry("C", "main", 0xfff),
            entry("B", "main", u64::MAX >> 3),
            entry("A", "main", 0),
        ]);
        let got = find_similar_app_by_hash(&idx, &[PerceptualHash(q0), PerceptualHash(q1)], Some("A")).unwrap();
        assert_eq!((got.app_id.as_str(), got.distance, got.query), ("B", 3, 1));
        // without excluding A, A's identical hash wins
        let got = find_similar_app_by_hash(&idx, &[PerceptualHash(q0)], None).unwrap();
        assert_eq!((got.app_id.as_str(), got.distance), ("A", 0));
        assert!(matches!(find_similar_app_by_hash(&idx, &[], None), Err(IndexError::NoScreenshots)));
        let only_a = SimilarityIndex::build(vec![entry("A", "main", 0)]);
        assert!(matches!(
            find_similar_app_by_hash(&only_a, &[PerceptualHash(0)], Some("A")),
            Err(IndexError::EmptyIndex)
        ));
    }

    #[test]
    fn identical_screenshot_found_at_zero() {
        let img = GrayImage::from_fn(64, 96, |x, y| ((x * 7) ^ (y * 3)) as u8);
        let idx = SimilarityIndex::build(vec![
            entry("other", "x", 0x1234_5678_9abc_def0),
            entry("B", "main", phash(&img).unwrap().0),
        ]);
        let got = find_similar_app(&idx, &[img], Some("A")).unwrap();
        assert_eq!((got.app_id.as_str(), got.distance), ("B", 0));
    }

    #[test]
    fn text_round_trip_and_errors() {
        let idx = SimilarityIndex::build(vec![entry("a", "s1", 1), entry("b", "s 2", u64::MAX)]);
        let text = idx.to_text();
        assert_eq!(text, "PHIDX 1\na\ts1\t0000000000000001\nb\ts 2\tffffffffffffffff\n");
        let back = SimilarityIndex::from_text(&text).unwrap();
        assert_eq!(back.entries(), idx.entries());
        assert_eq!(back.to_text(), text);
        assert!(SimilarityIndex::from_text("PHIDX 2\n").is_err());
        assert!(matches!(
            SimilarityIndex::from_text("PHIDX 1\na\tb\n"),
            Err(IndexError::Malformed { line: 2, .. })
        ));
        assert!(matches!(
            SimilarityIndex::from_text("PHIDX 1\na\tb\tzz\n"),
            Err(IndexError::Malformed { line: 2, .. })
        ));
    }

    #[test]
    fn corpus_directory_scan() {
        let dir = tempfile::tempdir().unwrap();
        for (app, shot, v) in [("b", "main", 10u8), ("a", "main", 200), ("a", "second", 50)] {
            fs::create_dir_all(dir.path().join(app)).unwrap();
            let img = GrayImage::from_fn(16, 16, |x, _| if x < 8 { v } else { 255 - v });
            super::super::write_pgm(dir.path().join(app).join(format!("{shot}.pgm")), &img).unwrap();
        }
        fs::write(dir.path().join("labels.csv"), "a,1\n").unwrap();
        fs::write(dir.path().join("a").join("main.hier"), "").unwrap();
        let idx = SimilarityIndex::from_corpus_dir(dir.path()).unwrap();
        let ids: Vec<_> = idx.entries().iter().map(|e| (e.app_id.as_str(), e.screenshot_id.as_str())).collect();
        assert_eq!(ids, [("a", "main"), ("a", "second"), ("b", "main")]);
    }
}
