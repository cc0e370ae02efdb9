//! Cluster partitions of segment indices.

use crate::error::{Error, Result};

/// A partition of `N_r` segment indices into contiguously numbered clusters.
///
/// Labels are 0-based and renumbered in order of first appearance, so every
/// index in `[0, num_clusters)` occurs at least once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    num_clusters: usize,
}

impl Partition {
    /// Build a partition from raw labels, renumbering them contiguously in
    /// order of first appearance.
    pub fn from_labels(raw: &[usize]) -> Partition {
        let mut remap: Vec<Option<usize>> = Vec::new();
        let mut labels = Vec::with_capacity(raw.len());
        let mut next = 0;
        for &r in raw {
            if r >= remap.len() {
                remap.resize(r + 1, None);
            }
            let l = *remap[r].get_or_insert_with(|| {
                let l = next;
                next += 1;
                l
            });
            labels.push(l);
        }
        Partition {
            labels,
            num_clusters: next,
        }
    }

    /// Wrap labels that are already contiguous; errors if any cluster index
    /// in `[0, num_clusters)` is missing.
    pub fn new_checked(labels: Vec<usize>, num_clusters: usize) -> Result<Partition> {
        let mut seen = vec![false; num_clusters];
        for &l in &labels {
            if l >= num_clusters {
                return Err(Error::Input(format!(
                    "label {l} out of range for {num_clusters} clusters"
                )));
            }
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Input(format!("cluster {missing} is empty")));
        }
        Ok(Partition {
            labels,
            num_clusters,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    /// Member indices per cluster, ascending within each cluster.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// The partition as a label-free set of sets, for permutation-invariant
    /// comparisons.
    pub fn as_sets(&self) -> Vec<Vec<usize>> {
        let mut sets = self.clusters();
        sets.sort();
        sets
    }
}
