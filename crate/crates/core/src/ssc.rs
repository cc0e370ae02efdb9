//! The self-supervised clustering engine: iterative representation learning
//! plus path integral clustering, with explained-variance estimation of the
//! cluster count for both known and unknown target speaker counts.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::ahc::{ahc_cluster, AhcStop, Linkage};
use crate::data::Recording;
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::pic::{pic_cluster, PicState};
use crate::repnet::{sample_triplets, train, RepNet, TrainConfig};
use crate::similarity::{
    cosine_matrix, fit_pca, fit_whitening_shrunk, sym_eigen_desc, temporal_weight, unit_normalize,
    PcaTarget, SimilarityMatrix, DEFAULT_EIG_FLOOR,
};

/// How the initial cluster labels are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitMethod {
    /// Path integral clustering: to the known target count, or to the
    /// explained-variance estimate when the count is unknown.
    Pic,
    /// Agglomerative clustering stopped at a similarity threshold.
    AhcThreshold(f64),
}

/// Which clustering algorithm the refinement loop and the termination round
/// use. The cluster-count estimate always evaluates path-integral affinities
/// over the current clusters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterMethod {
    Pic,
    Ahc(Linkage),
}

/// Configuration for a full SSC run.
#[derive(Debug, Clone, PartialEq)]
pub struct SscConfig {
    /// Nearest-neighbor count of the digraph.
    pub knn: usize,
    /// Path-length scaling factor of the path integral.
    pub sigma: f64,
    pub train: TrainConfig,
    /// Temporal-continuity decay factor.
    pub beta: f64,
    /// Temporal-continuity floor in segments.
    pub n_b: usize,
    /// Apply temporal weighting to every similarity matrix handed to the
    /// clusterer.
    pub temporal: bool,
    /// Explained-variance stopping threshold.
    pub phi: f64,
    /// Target speaker count; `None` runs in unknown-count mode.
    pub num_speakers: Option<usize>,
    /// Maximum number of refinement iterations.
    pub q_max: usize,
    pub pca: PcaTarget,
    /// Floor on the representation output dimension (cosine similarity is
    /// degenerate below 2).
    pub min_output_dim: usize,
    /// Eigenvalue shrinkage of the layer-1 whitening initializer; 0 is
    /// exact whitening.
    pub whitening_shrinkage: f64,
    pub eig_floor: f64,
    pub init: InitMethod,
    pub clusterer: ClusterMethod,
    pub seed: u64,
}

impl Default for SscConfig {
    fn default() -> Self {
        SscConfig {
            knn: 30,
            sigma: 0.1,
            train: TrainConfig::default(),
            beta: 0.95,
            n_b: 2,
            temporal: false,
            phi: 0.7,
            num_speakers: None,
            q_max: 10,
            pca: PcaTarget::EnergyFraction(0.10),
            min_output_dim: 10,
            whitening_shrinkage: 0.75,
            eig_floor: DEFAULT_EIG_FLOOR,
            init: InitMethod::Pic,
            clusterer: ClusterMethod::Pic,
            seed: 0,
        }
    }
}

impl SscConfig {
    fn validate(&self, n_r: usize) -> Result<()> {
        if !(0.0 < self.phi && self.phi <= 1.0) {
            return Err(Error::Config(format!("phi must lie in (0,1], got {}", self.phi)));
        }
        if self.q_max < 1 {
            return Err(Error::Config("q-max must be at least 1".into()));
        }
        if let Some(n) = self.num_speakers {
            if n < 1 || n > n_r {
                return Err(Error::Config(format!(
                    "num-speakers {n} outside [1, {n_r}]"
                )));
            }
        }
        self.train.validate()
    }
}

/// One iteration record of the trace.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IterationRecord {
    /// Iteration index; 0 is initialization, the last record is the
    /// termination round.
    pub q: usize,
    pub num_clusters: usize,
    /// Per-epoch training objective values for this iteration.
    pub objective_curve: Vec<f64>,
    /// Merges performed by the clustering step of this iteration.
    pub merges: usize,
    pub labels: Vec<usize>,
}

/// Full run trace: one record per iteration plus the final state.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct SscTrace {
    pub iterations: Vec<IterationRecord>,
    pub final_num_clusters: usize,
}

impl SscTrace {
    /// Line-delimited export: one JSON object per iteration.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for it in &self.iterations {
            out.push_str(&serde_json::to_string(it).expect("serializable record"));
            out.push('\n');
        }
        out
    }
}

/// Pairwise incremental-path-integral affinity matrix of the live clusters,
/// with diagonal entries set to the maximum off-diagonal value.
pub fn cluster_affinity_matrix(state: &PicState) -> Array2<f64> {
    state.affinity_matrix()
}

/// Estimate the cluster count from an affinity matrix: eigenvalues are
/// sorted descending and accumulated until the cumulative explained-variance
/// ratio reaches `phi`; the count of accumulated eigenvalues is the
/// estimate, clamped to `[1, n_prev]`.
///
/// An affinity matrix with (numerically) zero total spectrum carries no
/// connectivity evidence; the estimate is `n_prev` in that case.
pub fn estimate_num_clusters(a: &Array2<f64>, phi: f64, n_prev: usize) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::Input("affinity matrix is not square".into()));
    }
    if a.nrows() != n_prev {
        return Err(Error::Input(format!(
            "affinity matrix of size {} for {n_prev} clusters",
            a.nrows()
        )));
    }
    if !(0.0 < phi && phi <= 1.0) {
        return Err(Error::Config(format!("phi must lie in (0,1], got {phi}")));
    }
    if n_prev == 1 {
        return Ok(1);
    }
    // numerical asymmetry would make eigenvalues complex; symmetrize
    let sym = (a + &a.t().to_owned()) / 2.0;
    let (values, _) = sym_eigen_desc(&sym);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite affinity eigenvalues".into()));
    }
    let total: f64 = values.iter().sum();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if total.abs() <= 1e-12 * scale.max(1e-300) || scale == 0.0 {
        return Ok(n_prev);
    }
    let mut cum = 0.0;
    for (k, &v) in values.iter().enumerate() {
        cum += v;
        if cum / total >= phi - 1e-12 {
            return Ok((k + 1).clamp(1, n_prev));
        }
    }
    Ok(n_prev)
}

/// Build the initial representation network (layer 1 from shrunk whitening,
/// layer 2 from PCA with the output-dimension floor applied).
pub fn init_network(x: &Array2<f64>, cfg: &SscConfig) -> Result<RepNet> {
    let whitening = fit_whitening_shrunk(x, cfg.eig_floor, cfg.whitening_shrinkage)?;
    let normalized = unit_normalize(&whitening.apply(x))?;
    let mut pca = fit_pca(&normalized, cfg.pca)?;
    let floor = cfg.min_output_dim.min(x.ncols()).max(1);
    if pca.dim() < floor {
        pca = fit_pca(&normalized, PcaTarget::Dim(floor))?;
    }
    RepNet::init(&whitening, &pca)
}

/// State of one SSC run shared by the loop and the termination round.
struct Engine<'a> {
    x: &'a Array2<f64>,
    cfg: &'a SscConfig,
    net: RepNet,
    /// Raw cosine similarity of the current representations.
    sim_raw: SimilarityMatrix,
    /// Similarity handed to the clusterer (temporally weighted if enabled).
    sim_clusterer: SimilarityMatrix,
}

impl<'a> Engine<'a> {
    fn refresh_similarity(&mut self) -> Result<()> {
        let y = self.net.forward(self.x)?;
        self.sim_raw = cosine_matrix(&y)?;
        self.sim_clusterer = if self.cfg.temporal {
            temporal_weight(&self.sim_raw, self.cfg.beta, self.cfg.n_b)?
        } else {
            self.sim_raw.clone()
        };
        Ok(())
    }

    fn train_round(&mut self, labels: &Partition, round: u64) -> Result<Vec<f64>> {
        let seed = self
            .cfg
            .seed
            .wrapping_add(round.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let triplets = sample_triplets(labels, self.cfg.train.sampling, &self.sim_raw, seed)?;
        let train_cfg = TrainConfig {
            seed,
            ..self.cfg.train.clone()
        };
        let result = train(&self.net, self.x, &triplets, &train_cfg)?;
        self.net = result.net;
        self.refresh_similarity()?;
        Ok(result.objective_curve)
    }
}

/// Run the full SSC loop on a recording.
///
/// Initialization builds the representation network from (shrunk) whitening
/// and PCA and clusters the initial embeddings. Each iteration samples
/// triplets from the previous labels, trains the network, re-embeds,
/// estimates the next cluster count from the cluster affinity spectrum
/// (floored at the known target), and re-clusters. The loop breaks when the
/// count reaches the target or `q_max` is hit (the unknown-count mode then
/// adopts the last estimate as the target), after which one more training
/// and clustering round produces the final partition.
pub fn run_ssc(recording: &Recording, cfg: &SscConfig) -> Result<(Partition, SscTrace)> {
    let n_r = recording.num_windows();
    cfg.validate(n_r)?;
    let x = &recording.embeddings;

    let net = init_network(x, cfg)?;

    let mut engine = Engine {
        x,
        cfg,
        net,
        sim_raw: SimilarityMatrix {
            scores: Array2::zeros((0, 0)),
            temporal_weighted: false,
        },
        sim_clusterer: SimilarityMatrix {
            scores: Array2::zeros((0, 0)),
            temporal_weighted: false,
        },
    };
    engine.refresh_similarity()?;

    let unknown = cfg.num_speakers.is_none();
    let mut n_star = cfg.num_speakers.unwrap_or(1);

    // initial clustering -> z^0
    let mut labels = match cfg.init {
        InitMethod::Pic => {
            if let Some(target) = cfg.num_speakers {
                pic_cluster(&engine.sim_clusterer, cfg.knn, cfg.sigma, target)?
            } else {
                let mut state = PicState::new(&engine.sim_clusterer, cfg.knn, cfg.sigma)?;
                let m = state.num_clusters();
                let affinity = state.affinity_matrix();
                let n0 = estimate_num_clusters(&affinity, cfg.phi, m)?;
                state.merge_to(n0)?;
                state.partition()
            }
        }
        InitMethod::AhcThreshold(threshold) => ahc_cluster(
            &engine.sim_clusterer,
            Linkage::Average,
            AhcStop::ThresholdWithFloor {
                threshold,
                min_clusters: n_star,
            },
        )?,
    };
    let mut n_prev = labels.num_clusters();

    let mut trace = SscTrace::default();
    trace.iterations.push(IterationRecord {
        q: 0,
        num_clusters: n_prev,
        objective_curve: Vec::new(),
        merges: 0,
        labels: labels.labels().to_vec(),
    });

    let mut q = 0;
    while labels.num_clusters() >= 2 {
        q += 1;
        let curve = engine.train_round(&labels, q as u64)?;

        // re-cluster the refined embeddings at the previous count and read
        // the next count off the cluster-affinity spectrum
        let (state, at_prev) = match cfg.clusterer {
            ClusterMethod::Pic => {
                let mut state = PicState::new(&engine.sim_clusterer, cfg.knn, cfg.sigma)?;
                if state.num_clusters() < n_prev {
                    state = PicState::new_singletons(&engine.sim_clusterer, cfg.knn, cfg.sigma)?;
                }
                state.merge_to(n_prev)?;
                (state, None)
            }
            ClusterMethod::Ahc(linkage) => {
                let z = ahc_cluster(&engine.sim_clusterer, linkage, AhcStop::Target(n_prev))?;
                let state =
                    PicState::with_partition(&engine.sim_clusterer, cfg.knn, cfg.sigma, &z)?;
                (state, Some(z))
            }
        };
        let affinity = state.affinity_matrix();
        let mut estimate = estimate_num_clusters(&affinity, cfg.phi, n_prev)?;
        if unknown && estimate == n_prev && estimate > 1 && state.has_positive_affinity() {
            // no merges indicated but connectivity evidence exists: force
            // progress by one merge
            estimate = n_prev - 1;
        }
        let n_q = estimate.max(n_star);

        if n_q == n_star || q >= cfg.q_max {
            if unknown {
                n_star = n_q;
            }
            trace.iterations.push(IterationRecord {
                q,
                num_clusters: n_q,
                objective_curve: curve,
                merges: 0,
                labels: labels.labels().to_vec(),
            });
            break;
        }

        let merges;
        (labels, merges) = match (cfg.clusterer, state, at_prev) {
            (ClusterMethod::Pic, mut state, _) => {
                let merges = state.merge_to(n_q)?;
                (state.partition(), merges)
            }
            (ClusterMethod::Ahc(linkage), _, at_prev) => {
                let merges = at_prev.map_or(0, |z| z.num_clusters() - n_q);
                (
                    ahc_cluster(&engine.sim_clusterer, linkage, AhcStop::Target(n_q))?,
                    merges,
                )
            }
        };
        n_prev = n_q;
        trace.iterations.push(IterationRecord {
            q,
            num_clusters: n_q,
            objective_curve: curve,
            merges,
            labels: labels.labels().to_vec(),
        });
    }

    // termination: one more training round, then cluster to the target
    let final_curve = if labels.num_clusters() >= 2 {
        engine.train_round(&labels, (q + 1) as u64)?
    } else {
        Vec::new()
    };
    let final_partition = match cfg.clusterer {
        ClusterMethod::Pic => pic_cluster(&engine.sim_clusterer, cfg.knn, cfg.sigma, n_star)?,
        ClusterMethod::Ahc(linkage) => {
            ahc_cluster(&engine.sim_clusterer, linkage, AhcStop::Target(n_star))?
        }
    };
    trace.iterations.push(IterationRecord {
        q: q + 1,
        num_clusters: final_partition.num_clusters(),
        objective_curve: final_curve,
        merges: 0,
        labels: final_partition.labels().to_vec(),
    });
    trace.final_num_clusters = final_partition.num_clusters();
    Ok((final_partition, trace))
}
