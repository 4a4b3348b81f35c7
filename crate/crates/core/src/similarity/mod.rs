//! Screenshot similarity: perceptual hashing, an exact metric index, and
//! density-based clustering under hamming distance.

mod cluster;
mod image;
mod index;
mod mvp;
mod phash;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cluster::{
    cluster_homogeneity, dbscan, dbscan_with_neighbors, homogeneity, neighbor_lists, parse_clusters, sweep,
    ClusterSet, EmptyCluster, HomogeneityReport, SweepRow,
};
pub use image::{read_pgm, write_pgm, GrayImage, ImageError};
pub use index::{corpus_files, find_similar_app, find_similar_app_by_hash, IndexEntry, IndexError, Neighbor, SimilarApp, SimilarityIndex};
pub use mvp::MvpTree;
pub use phash::{phash, phash_batch, PhashError};

/// 64-bit DCT perceptual hash. Rendered as 16 lowercase hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PerceptualHash(pub u64);

impl PerceptualHash {
    pub fn distance(self, other: PerceptualHash) -> u32 {
        hamming(self, other)
    }
}

/// Number of differing bits.
pub fn hamming(a: PerceptualHash, b: PerceptualHash) -> u32 {
    (a.0 ^ b.0).count_ones()
}

impl fmt::Display for PerceptualHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for PerceptualHash {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s.trim_start_matches("0x"), 16).map(PerceptualHash)
    }
}
