//! Agglomerative hierarchical clustering over a similarity matrix with
//! selectable linkage and threshold / target-count stopping.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::similarity::SimilarityMatrix;

/// Rule converting pairwise similarities into a cluster-pair affinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    /// Nearest neighbor: the highest pairwise score.
    Single,
    /// Farthest neighbor: the lowest pairwise score.
    Complete,
    /// Mean of all cross-cluster pairwise scores.
    Average,
}

impl std::str::FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Linkage> {
        match s {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            other => Err(Error::Config(format!("unknown linkage {other:?}"))),
        }
    }
}

/// Stopping rule for the merge loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AhcStop {
    /// Merge while the best affinity is at least the threshold.
    Threshold(f64),
    /// Merge until exactly this many clusters remain.
    Target(usize),
    /// Threshold stopping with a floor on the cluster count.
    ThresholdWithFloor { threshold: f64, min_clusters: usize },
}

/// Affinity between two disjoint index sets under the given linkage.
pub fn linkage_affinity(
    s: &SimilarityMatrix,
    a: &[usize],
    b: &[usize],
    linkage: Linkage,
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Input("linkage over an empty cluster".into()));
    }
    if a.iter().any(|i| b.contains(i)) {
        return Err(Error::Input("linkage over overlapping clusters".into()));
    }
    let mut best = f64::NEG_INFINITY;
    let mut worst = f64::INFINITY;
    let mut sum = 0.0;
    for &i in a {
        for &j in b {
            let v = s.get(i, j);
            best = best.max(v);
            worst = worst.min(v);
            sum += v;
        }
    }
    Ok(match linkage {
        Linkage::Single => best,
        Linkage::Complete => worst,
        Linkage::Average => sum / (a.len() * b.len()) as f64,
    })
}

struct Cluster {
    members: Vec<usize>,
}

/// Agglomerative clustering: starting from singletons, repeatedly merge the
/// argmax-affinity pair until the stop rule fires. Equal affinities break
/// ties toward the lexicographically smallest (min-index, max-index) pair.
pub fn ahc_cluster(s: &SimilarityMatrix, linkage: Linkage, stop: AhcStop) -> Result<Partition> {
    let n = s.n();
    if n == 0 {
        return Err(Error::Input("empty similarity matrix".into()));
    }
    if s.scores.ncols() != n {
        return Err(Error::Input("similarity matrix is not square".into()));
    }
    let (threshold, min_clusters) = match stop {
        AhcStop::Threshold(t) => (Some(t), 1),
        AhcStop::Target(k) => {
            if k < 1 || k > n {
                return Err(Error::Config(format!("target {k} outside [1, {n}]")));
            }
            (None, k)
        }
        AhcStop::ThresholdWithFloor {
            threshold,
            min_clusters,
        } => {
            if min_clusters < 1 || min_clusters > n {
                return Err(Error::Config(format!(
                    "cluster floor {min_clusters} outside [1, {n}]"
                )));
            }
            (Some(threshold), min_clusters)
        }
    };

    // clusters keyed by representative = smallest member index
    let mut clusters: BTreeMap<usize, Cluster> = (0..n)
        .map(|i| (i, Cluster { members: vec![i] }))
        .collect();
    // pairwise affinities keyed by (rep_a, rep_b), rep_a < rep_b
    let mut affinities: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            affinities.insert((i, j), s.get(i, j));
        }
    }

    while clusters.len() > min_clusters {
        let mut best: Option<((usize, usize), f64)> = None;
        for (&pair, &aff) in &affinities {
            let better = match best {
                None => true,
                Some((bp, ba)) => aff > ba || (aff == ba && pair < bp),
            };
            if better {
                best = Some((pair, aff));
            }
        }
        let Some(((ra, rb), aff)) = best else { break };
        if let Some(t) = threshold {
            if aff < t {
                break;
            }
        }

        let b = clusters.remove(&rb).expect("live cluster");
        let size_b = b.members.len();
        let a = clusters.get_mut(&ra).expect("live cluster");
        let size_a = a.members.len();
        a.members.extend(b.members);
        a.members.sort_unstable();

        // update affinities of the merged cluster against every survivor
        let reps: Vec<usize> = clusters.keys().copied().filter(|&r| r != ra).collect();
        for r in reps {
            let key_a = (ra.min(r), ra.max(r));
            let key_b = (rb.min(r), rb.max(r));
            let aff_a = affinities[&key_a];
            let aff_b = affinities.remove(&key_b).expect("pair entry");
            let merged = match linkage {
                Linkage::Single => aff_a.max(aff_b),
                Linkage::Complete => aff_a.min(aff_b),
                Linkage::Average => {
                    (size_a as f64 * aff_a + size_b as f64 * aff_b) / (size_a + size_b) as f64
                }
            };
            affinities.insert(key_a, merged);
        }
        affinities.remove(&(ra, rb));
    }

    let mut labels = vec![0usize; n];
    for (cluster_idx, cluster) in clusters.values().enumerate() {
        for &m in &cluster.members {
            labels[m] = cluster_idx;
        }
    }
    Ok(Partition::from_labels(&labels))
}
