//! Two-layer representation network with whitening/PCA initialization,
//! dynamic triplet sampling, the triplet-similarity objective, and
//! gradient-ascent training with adaptive moments and early stopping.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::similarity::{PcaTransform, SimilarityMatrix, WhiteningTransform};

/// Two-layer embedding refinement model. Layer 1 is a full affine map whose
/// non-linearity is unit-length normalization; layer 2 is a linear
/// projection to the output dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct RepNet {
    pub layer1_weights: Array2<f64>,
    pub layer1_bias: Array1<f64>,
    pub layer2_weights: Array2<f64>,
}

impl RepNet {
    /// Initialize layer 1 from a whitening transform (bias folds the mean)
    /// and layer 2 from a PCA basis, so the initial forward pass equals the
    /// whiten -> unit-normalize -> PCA pipeline.
    pub fn init(whitening: &WhiteningTransform, pca: &PcaTransform) -> Result<RepNet> {
        let d = whitening.dim();
        if pca.input_dim() != d {
            return Err(Error::Input(format!(
                "PCA input dimension {} does not match whitening dimension {d}",
                pca.input_dim()
            )));
        }
        let layer1_weights = whitening.projection.clone();
        let layer1_bias = -whitening.projection.dot(&whitening.mean);
        Ok(RepNet {
            layer1_weights,
            layer1_bias,
            layer2_weights: pca.basis.clone(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer1_weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layer2_weights.nrows()
    }

    /// Layer-1 activations: unit-normalized affine outputs.
    pub fn layer1_activations(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let mut u = x.dot(&self.layer1_weights.t());
        for mut row in u.rows_mut() {
            row += &self.layer1_bias;
        }
        for (i, mut row) in u.rows_mut().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if norm == 0.0 {
                return Err(Error::Input(format!(
                    "row {i} has zero pre-activation norm"
                )));
            }
            row /= norm;
        }
        Ok(u)
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.layer1_activations(x)?.dot(&self.layer2_weights.t()))
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"SSCR";
const CHECKPOINT_VERSION: u32 = 1;

impl RepNet {
    /// Diagnostic checkpoint dump: versioned header (`SSCR`, version,
    /// input dim, output dim, all little-endian u32) followed by the three
    /// parameter tensors as little-endian f64 in row-major order.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write as _;
        let mut f = std::fs::File::create(path)?;
        f.write_all(CHECKPOINT_MAGIC)?;
        f.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        f.write_all(&(self.input_dim() as u32).to_le_bytes())?;
        f.write_all(&(self.output_dim() as u32).to_le_bytes())?;
        for v in self
            .layer1_weights
            .iter()
            .chain(self.layer1_bias.iter())
            .chain(self.layer2_weights.iter())
        {
            f.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<RepNet> {
        let bytes = std::fs::read(path)?;
        let bad = |msg: &str| Error::Parse {
            path: path.display().to_string(),
            location: 0,
            message: msg.to_string(),
        };
        if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("missing SSCR checkpoint header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported checkpoint version {version}")));
        }
        let d_in = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let d_out = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let count = d_in * d_in + d_in + d_out * d_in;
        if bytes.len() != 16 + 8 * count {
            return Err(bad("checkpoint payload size mismatch"));
        }
        let mut values = bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
        Ok(RepNet {
            layer1_weights: Array2::from_shape_vec((d_in, d_in), take(d_in * d_in))
                .expect("sized above"),
            layer1_bias: Array1::from_vec(take(d_in)),
            layer2_weights: Array2::from_shape_vec((d_out, d_in), take(d_out * d_in))
                .expect("sized above"),
        })
    }
}

/// An (anchor, positive, negative) index triple with `z_a = z_p != z_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Negative-pair selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingStrategy {
    /// Nearest other-cluster point to the anchor.
    Hard,
    /// Uniform over other clusters, then uniform over members.
    Random,
    /// Farthest other-cluster point from the anchor.
    Easy,
}

impl std::str::FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<SamplingStrategy> {
        match s {
            "hard" => Ok(SamplingStrategy::Hard),
            "random" => Ok(SamplingStrategy::Random),
            "easy" => Ok(SamplingStrategy::Easy),
            other => Err(Error::Config(format!("unknown sampling strategy {other:?}"))),
        }
    }
}

/// Sample triplets from the current partition. Positive pairs cycle through
/// each eligible cluster without replacement; anchor counts are balanced to
/// the maximum cluster size by re-pairing with fresh negatives. Deterministic
/// given the seed.
pub fn sample_triplets(
    partition: &Partition,
    strategy: SamplingStrategy,
    s: &SimilarityMatrix,
    seed: u64,
) -> Result<Vec<Triplet>> {
    let clusters = partition.clusters();
    if clusters.len() < 2 {
        return Err(Error::Input("triplet sampling needs at least 2 clusters".into()));
    }
    let eligible: Vec<usize> = (0..clusters.len())
        .filter(|&c| clusters[c].len() >= 2)
        .collect();
    if eligible.is_empty() {
        return Err(Error::Input("no positive pairs available".into()));
    }
    let labels = partition.labels();
    let per_cluster = clusters.iter().map(|c| c.len()).max().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triplets = Vec::with_capacity(eligible.len() * per_cluster);
    for &c in &eligible {
        let members = &clusters[c];
        let mut queue: Vec<(usize, usize)> = Vec::new();
        for _ in 0..per_cluster {
            if queue.is_empty() {
                let mut shuffled = members.clone();
                shuffled.shuffle(&mut rng);
                queue = shuffled.chunks_exact(2).map(|p| (p[0], p[1])).collect();
                queue.reverse();
            }
            let (anchor, positive) = queue.pop().expect("non-empty pair queue");
            let negative = match strategy {
                SamplingStrategy::Random => {
                    let mut other = rng.gen_range(0..clusters.len() - 1);
                    if other >= c {
                        other += 1;
                    }
                    clusters[other][rng.gen_range(0..clusters[other].len())]
                }
                SamplingStrategy::Hard => extreme_negative(s, anchor, labels, c, true),
                SamplingStrategy::Easy => extreme_negative(s, anchor, labels, c, false),
            };
            triplets.push(Triplet {
                anchor,
                positive,
                negative,
            });
        }
    }
    Ok(triplets)
}

fn extreme_negative(
    s: &SimilarityMatrix,
    anchor: usize,
    labels: &[usize],
    cluster: usize,
    nearest: bool,
) -> usize {
    let mut best = usize::MAX;
    let mut best_score = if nearest { f64::NEG_INFINITY } else { f64::INFINITY };
    for (l, &label) in labels.iter().enumerate() {
        if label == cluster {
            continue;
        }
        let v = s.get(anchor, l);
        let better = if nearest { v > best_score } else { v < best_score };
        if better {
            best_score = v;
            best = l;
        }
    }
    best
}

/// Triplet-similarity objective over rows of `y`:
/// `sum over (i,j,l) of [s(i,j) - alpha * (s(i,l) + s(j,l))]` with cosine
/// similarity. Maximized during training.
pub fn triplet_objective(y: &Array2<f64>, triplets: &[Triplet], alpha: f64) -> f64 {
    let mut total = 0.0;
    for t in triplets {
        total += cosine_rows(y, t.anchor, t.positive)
            - alpha * (cosine_rows(y, t.anchor, t.negative) + cosine_rows(y, t.positive, t.negative));
    }
    total
}

fn cosine_rows(y: &Array2<f64>, a: usize, b: usize) -> f64 {
    let ra = y.row(a);
    let rb = y.row(b);
    let na = ra.dot(&ra).sqrt();
    let nb = rb.dot(&rb).sqrt();
    ra.dot(&rb) / (na * nb)
}

/// Parameter gradients of the triplet objective.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layer1_weights: Array2<f64>,
    pub layer1_bias: Array1<f64>,
    pub layer2_weights: Array2<f64>,
}

/// Objective value and analytic gradients through both layers and the
/// unit-length normalization.
pub fn objective_with_gradients(
    net: &RepNet,
    x: &Array2<f64>,
    triplets: &[Triplet],
    alpha: f64,
) -> Result<(f64, Gradients)> {
    let n = x.nrows();
    let d_out = net.output_dim();
    // forward with intermediates
    let mut u = x.dot(&net.layer1_weights.t());
    for mut row in u.rows_mut() {
        row += &net.layer1_bias;
    }
    let mut norms = Array1::zeros(n);
    let mut a = u.clone();
    for (i, mut row) in a.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::Input(format!("row {i} has zero pre-activation norm")));
        }
        norms[i] = norm;
        row /= norm;
    }
    let y = a.dot(&net.layer2_weights.t());

    let mut objective = 0.0;
    let mut grad_y = Array2::zeros((n, d_out));
    let add_pair = |grad_y: &mut Array2<f64>, p: usize, q: usize, coeff: f64| {
        let yp = y.row(p).to_owned();
        let yq = y.row(q).to_owned();
        let np = yp.dot(&yp).sqrt();
        let nq = yq.dot(&yq).sqrt();
        let cos = yp.dot(&yq) / (np * nq);
        for k in 0..d_out {
            grad_y[[p, k]] += coeff * (yq[k] / (np * nq) - cos * yp[k] / (np * np));
            grad_y[[q, k]] += coeff * (yp[k] / (np * nq) - cos * yq[k] / (nq * nq));
        }
        cos
    };
    for t in triplets {
        let c_ij = add_pair(&mut grad_y, t.anchor, t.positive, 1.0);
        let c_il = add_pair(&mut grad_y, t.anchor, t.negative, -alpha);
        let c_jl = add_pair(&mut grad_y, t.positive, t.negative, -alpha);
        objective += c_ij - alpha * (c_il + c_jl);
    }

    // backward: y = a W2', a = u / |u|, u = x W1' + b1
    let grad_w2 = grad_y.t().dot(&a);
    let grad_a = grad_y.dot(&net.layer2_weights);
    let mut grad_u = Array2::zeros(grad_a.raw_dim());
    for i in 0..n {
        let ga = grad_a.row(i);
        let ai = a.row(i);
        let proj = ga.dot(&ai);
        for k in 0..ga.len() {
            grad_u[[i, k]] = (ga[k] - proj * ai[k]) / norms[i];
        }
    }
    let grad_w1 = grad_u.t().dot(x);
    let grad_b1 = grad_u.sum_axis(ndarray::Axis(0));

    Ok((
        objective,
        Gradients {
            layer1_weights: grad_w1,
            layer1_bias: grad_b1,
            layer2_weights: grad_w2,
        },
    ))
}

/// Batch regime for training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatchMode {
    Full,
    Minibatch {
        size: usize,
        validation_fraction: f64,
    },
    /// Full batch for short recordings, minibatches (256, 10% validation)
    /// above 800 input rows.
    Auto,
}

/// Training configuration for the representation network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Negative-pair weight in the objective, in (0, 1].
    pub alpha: f64,
    pub learning_rate: f64,
    /// Early-stop fraction of the epoch-0 training measure, in (0, 1).
    pub eta: f64,
    pub max_epochs: usize,
    pub batch_mode: BatchMode,
    pub sampling: SamplingStrategy,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.6,
            learning_rate: 0.001,
            eta: 0.5,
            max_epochs: 15,
            batch_mode: BatchMode::Auto,
            sampling: SamplingStrategy::Random,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.alpha && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0,1], got {}", self.alpha)));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0 < self.eta && self.eta < 1.0) {
            return Err(Error::Config(format!("eta must lie in (0,1), got {}", self.eta)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Trained network plus the per-epoch objective curve.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub net: RepNet,
    pub objective_curve: Vec<f64>,
}

struct Adam {
    m_w1: Array2<f64>,
    v_w1: Array2<f64>,
    m_b1: Array1<f64>,
    v_b1: Array1<f64>,
    m_w2: Array2<f64>,
    v_w2: Array2<f64>,
    t: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(net: &RepNet) -> Adam {
        Adam {
            m_w1: Array2::zeros(net.layer1_weights.raw_dim()),
            v_w1: Array2::zeros(net.layer1_weights.raw_dim()),
            m_b1: Array1::zeros(net.layer1_bias.raw_dim()),
            v_b1: Array1::zeros(net.layer1_bias.raw_dim()),
            m_w2: Array2::zeros(net.layer2_weights.raw_dim()),
            v_w2: Array2::zeros(net.layer2_weights.raw_dim()),
            t: 0,
        }
    }

    /// One ascent step.
    fn step(&mut self, net: &mut RepNet, grads: &Gradients, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t);
        fn update_2d(
            param: &mut Array2<f64>,
            m: &mut Array2<f64>,
            v: &mut Array2<f64>,
            g: &Array2<f64>,
            lr: f64,
            bc1: f64,
            bc2: f64,
        ) {
            azip_2d(param, m, v, g, lr, bc1, bc2);
        }
        fn azip_2d(
            param: &mut Array2<f64>,
            m: &mut Array2<f64>,
            v: &mut Array2<f64>,
            g: &Array2<f64>,
            lr: f64,
            bc1: f64,
            bc2: f64,
        ) {
            ndarray::Zip::from(param)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *p += lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
                });
        }
        update_2d(
            &mut net.layer1_weights,
            &mut self.m_w1,
            &mut self.v_w1,
            &grads.layer1_weights,
            lr,
            bc1,
            bc2,
        );
        update_2d(
            &mut net.layer2_weights,
            &mut self.m_w2,
            &mut self.v_w2,
            &grads.layer2_weights,
            lr,
            bc1,
            bc2,
        );
        ndarray::Zip::from(&mut net.layer1_bias)
            .and(&mut self.m_b1)
            .and(&mut self.v_b1)
            .and(&grads.layer1_bias)
            .for_each(|p, m, v, &g| {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *p += lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
            });
    }
}

/// Early-stop rule on the negated objective ("triplet loss"): stop once the
/// training measure has improved by the factor `1/eta` relative to epoch 0.
fn eta_stop(objective: f64, epoch0: f64, eta: f64) -> bool {
    let loss = -objective;
    let loss0 = -epoch0;
    if loss0 > 0.0 {
        loss <= eta * loss0
    } else if epoch0 > 0.0 {
        objective >= epoch0 / eta
    } else {
        false
    }
}

/// Gradient-ascent training of the triplet objective with adaptive moments.
pub fn train(net: &RepNet, x: &Array2<f64>, triplets: &[Triplet], cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    if triplets.is_empty() {
        return Err(Error::Input("training needs at least one triplet".into()));
    }
    let mode = match cfg.batch_mode {
        BatchMode::Auto => {
            if x.nrows() > 800 {
                BatchMode::Minibatch {
                    size: 256,
                    validation_fraction: 0.1,
                }
            } else {
                BatchMode::Full
            }
        }
        other => other,
    };
    match mode {
        BatchMode::Full => train_full(net, x, triplets, cfg),
        BatchMode::Minibatch {
            size,
            validation_fraction,
        } => train_minibatch(net, x, triplets, cfg, size, validation_fraction),
        BatchMode::Auto => unreachable!(),
    }
}

fn check_finite(objective: f64) -> Result<f64> {
    if objective.is_finite() {
        Ok(objective)
    } else {
        Err(Error::Numerical(format!(
            "non-finite triplet objective ({objective})"
        )))
    }
}

fn train_full(
    net: &RepNet,
    x: &Array2<f64>,
    triplets: &[Triplet],
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    let mut net = net.clone();
    let mut adam = Adam::new(&net);
    let mut curve = Vec::with_capacity(cfg.max_epochs + 1);
    let mut epoch0 = 0.0;
    for epoch in 0..cfg.max_epochs {
        let (objective, grads) = objective_with_gradients(&net, x, triplets, cfg.alpha)?;
        check_finite(objective)?;
        curve.push(objective);
        if epoch == 0 {
            epoch0 = objective;
        } else if eta_stop(objective, epoch0, cfg.eta) {
            return Ok(TrainResult {
                net,
                objective_curve: curve,
            });
        }
        adam.step(&mut net, &grads, cfg.learning_rate);
    }
    let y = net.forward(x)?;
    curve.push(check_finite(triplet_objective(&y, triplets, cfg.alpha))?);
    Ok(TrainResult {
        net,
        objective_curve: curve,
    })
}

fn train_minibatch(
    net: &RepNet,
    x: &Array2<f64>,
    triplets: &[Triplet],
    cfg: &TrainConfig,
    size: usize,
    validation_fraction: f64,
) -> Result<TrainResult> {
    if size == 0 {
        return Err(Error::Config("minibatch size must be positive".into()));
    }
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(Error::Config("validation fraction must lie in [0,1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut indices: Vec<usize> = (0..triplets.len()).collect();
    indices.shuffle(&mut rng);
    let n_val = ((triplets.len() as f64) * validation_fraction).round() as usize;
    let n_val = n_val.min(triplets.len().saturating_sub(1));
    let val: Vec<Triplet> = indices[..n_val].iter().map(|&i| triplets[i]).collect();
    let mut train_set: Vec<Triplet> = indices[n_val..].iter().map(|&i| triplets[i]).collect();

    let mut net = net.clone();
    let mut adam = Adam::new(&net);
    let mut lr = cfg.learning_rate;
    let mut curve = Vec::with_capacity(cfg.max_epochs + 1);
    let mut epoch0 = 0.0;
    let mut best_val = f64::NEG_INFINITY;
    let mut stalls = 0;
    let mut annealed = false;
    for epoch in 0..cfg.max_epochs {
        let y = net.forward(x)?;
        let objective = check_finite(triplet_objective(&y, &train_set, cfg.alpha))?;
        curve.push(objective);
        if epoch == 0 {
            epoch0 = objective;
        } else if eta_stop(objective, epoch0, cfg.eta) {
            return Ok(TrainResult {
                net,
                objective_curve: curve,
            });
        }
        train_set.shuffle(&mut rng);
        for chunk in train_set.chunks(size) {
            let (objective, grads) = objective_with_gradients(&net, x, chunk, cfg.alpha)?;
            check_finite(objective)?;
            adam.step(&mut net, &grads, lr);
        }
        if !val.is_empty() {
            let y = net.forward(x)?;
            let val_objective = check_finite(triplet_objective(&y, &val, cfg.alpha))?;
            if val_objective > best_val + 1e-12 {
                best_val = val_objective;
                stalls = 0;
            } else {
                stalls += 1;
                if !annealed {
                    lr *= 0.5;
                    annealed = true;
                }
                if stalls >= 2 {
                    break;
                }
            }
        }
    }
    let y = net.forward(x)?;
    curve.push(check_finite(triplet_objective(&y, &train_set, cfg.alpha))?);
    Ok(TrainResult {
        net,
        objective_curve: curve,
    })
}
