//! Pairwise scoring and embedding pre-transforms: cosine similarity
//! matrices, whitening, PCA, unit-length normalization, and
//! temporal-continuity reweighting.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Default eigenvalue floor, relative to the largest eigenvalue.
pub const DEFAULT_EIG_FLOOR: f64 = 1e-8;

/// A square matrix of pairwise similarity scores.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    pub scores: Array2<f64>,
    pub temporal_weighted: bool,
}

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.scores.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[[i, j]]
    }
}

/// Cosine similarity matrix over the rows of `y`.
///
/// Exactly symmetric by construction with unit diagonal; errors on a
/// zero-norm row.
pub fn cosine_matrix(y: &Array2<f64>) -> Result<SimilarityMatrix> {
    let normalized = unit_normalize(y)?;
    let n = normalized.nrows();
    let mut scores = Array2::zeros((n, n));
    for i in 0..n {
        scores[[i, i]] = 1.0;
        let ri = normalized.row(i);
        for j in (i + 1)..n {
            let s = ri.dot(&normalized.row(j));
            scores[[i, j]] = s;
            scores[[j, i]] = s;
        }
    }
    Ok(SimilarityMatrix {
        scores,
        temporal_weighted: false,
    })
}

/// Temporal-continuity reweighting: `s'(i,j) = s(i,j) * beta^min(n_b, |i-j|)`.
pub fn temporal_weight(s: &SimilarityMatrix, beta: f64, n_b: usize) -> Result<SimilarityMatrix> {
    if !(0.0 < beta && beta < 1.0) {
        return Err(Error::Config(format!("beta must lie in (0,1), got {beta}")));
    }
    let n = s.n();
    let mut scores = s.scores.clone();
    for i in 0..n {
        for j in 0..n {
            let dist = i.abs_diff(j).min(n_b);
            scores[[i, j]] *= beta.powi(dist as i32);
        }
    }
    Ok(SimilarityMatrix {
        scores,
        temporal_weighted: true,
    })
}

/// Scale every row to unit Euclidean norm; errors naming any zero row.
pub fn unit_normalize(y: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = y.clone();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::Input(format!("row {i} has zero norm")));
        }
        row /= norm;
    }
    Ok(out)
}

/// Symmetric eigendecomposition with eigenpairs sorted by descending
/// eigenvalue and a deterministic sign convention (largest-magnitude
/// component of each eigenvector is positive).
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns.
pub(crate) fn sym_eigen_desc(m: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = m.nrows();
    let dm = DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    let eig = dm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut values = Vec::with_capacity(n);
    let mut vectors = Array2::zeros((n, n));
    for (out_col, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        let mut max_abs = 0.0;
        let mut sign = 1.0;
        for &v in col.iter() {
            if v.abs() > max_abs {
                max_abs = v.abs();
                sign = if v >= 0.0 { 1.0 } else { -1.0 };
            }
        }
        for i in 0..n {
            vectors[[i, out_col]] = sign * col[i];
        }
    }
    (values, vectors)
}

pub(crate) fn covariance(x: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = x.nrows();
    let d = x.ncols();
    let mean = x.mean_axis(ndarray::Axis(0)).expect("non-empty");
    let mut centered = x.clone();
    for mut row in centered.rows_mut() {
        row -= &mean;
    }
    let mut cov = Array2::zeros((d, d));
    for r in centered.rows() {
        for i in 0..d {
            for j in i..d {
                cov[[i, j]] += r[i] * r[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[[i, j]] / denom;
            cov[[i, j]] = v;
            cov[[j, i]] = v;
        }
    }
    (mean, cov)
}

/// A fitted whitening transform: `apply(x) = (x - mean) * projection^T` with
/// `projection = Lambda^{-1/2} U^T` from the sample-covariance
/// eigendecomposition.
#[derive(Debug, Clone)]
pub struct WhiteningTransform {
    pub mean: Array1<f64>,
    pub projection: Array2<f64>,
}

impl WhiteningTransform {
    pub fn dim(&self) -> usize {
        self.projection.ncols()
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut centered = x.clone();
        for mut row in centered.rows_mut() {
            row -= &self.mean;
        }
        centered.dot(&self.projection.t())
    }
}

/// Fit a whitening transform on `x`. Eigenvalues are clamped below at
/// `eig_floor` times the largest eigenvalue.
pub fn fit_whitening(x: &Array2<f64>, eig_floor: f64) -> Result<WhiteningTransform> {
    fit_whitening_shrunk(x, eig_floor, 0.0)
}

/// Whitening with eigenvalue shrinkage toward the spectrum mean:
/// `lambda' = (1 - shrinkage) * lambda + shrinkage * mean(lambda)`.
///
/// `shrinkage = 0` is exact whitening (unit variance on the training set);
/// `shrinkage = 1` degenerates to an isotropic rescaling that preserves the
/// data geometry. Intermediate values bound the dynamic-range compression
/// when the transform is fitted on the very data it will be applied to.
pub fn fit_whitening_shrunk(
    x: &Array2<f64>,
    eig_floor: f64,
    shrinkage: f64,
) -> Result<WhiteningTransform> {
    if x.nrows() < 2 {
        return Err(Error::Input("whitening needs at least 2 rows".into()));
    }
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::Config(format!(
            "whitening shrinkage must lie in [0,1], got {shrinkage}"
        )));
    }
    let (mean, cov) = covariance(x);
    let d = cov.nrows();
    let (values, vectors) = sym_eigen_desc(&cov);
    let avg = values.iter().sum::<f64>() / d as f64;
    let shrunk: Vec<f64> = values
        .iter()
        .map(|&l| (1.0 - shrinkage) * l + shrinkage * avg)
        .collect();
    let top = shrunk.iter().cloned().fold(f64::MIN, f64::max).max(0.0);
    let floor = if top > 0.0 { eig_floor * top } else { eig_floor.max(f64::MIN_POSITIVE) };
    let mut projection = Array2::zeros((d, d));
    for k in 0..d {
        let scale = 1.0 / shrunk[k].max(floor).sqrt();
        for i in 0..d {
            projection[[k, i]] = scale * vectors[[i, k]];
        }
    }
    Ok(WhiteningTransform { mean, projection })
}

/// Output-dimension selector for [`fit_pca`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PcaTarget {
    Dim(usize),
    /// Smallest dimension whose cumulative eigenvalue share reaches the
    /// fraction.
    EnergyFraction(f64),
}

/// A fitted PCA projection: `apply(y) = y * basis^T` with orthonormal rows.
#[derive(Debug, Clone)]
pub struct PcaTransform {
    pub basis: Array2<f64>,
}

impl PcaTransform {
    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn apply(&self, y: &Array2<f64>) -> Array2<f64> {
        y.dot(&self.basis.t())
    }
}

/// Fit PCA on `x`: rows of the basis are the top eigenvectors of the sample
/// covariance.
pub fn fit_pca(x: &Array2<f64>, target: PcaTarget) -> Result<PcaTransform> {
    if x.nrows() < 2 {
        return Err(Error::Input("PCA needs at least 2 rows".into()));
    }
    let full = x.ncols();
    let (_, cov) = covariance(x);
    let (values, vectors) = sym_eigen_desc(&cov);
    let clamped: Vec<f64> = values.iter().map(|&l| l.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    let d = match target {
        PcaTarget::Dim(d) => {
            if d == 0 || d > full {
                return Err(Error::Config(format!(
                    "PCA dimension {d} outside [1, {full}]"
                )));
            }
            d
        }
        PcaTarget::EnergyFraction(f) => {
            if !(0.0 < f && f <= 1.0) {
                return Err(Error::Config(format!(
                    "PCA energy fraction must lie in (0,1], got {f}"
                )));
            }
            if total <= 0.0 {
                1
            } else {
                let mut cum = 0.0;
                let mut d = full;
                for (k, &l) in clamped.iter().enumerate() {
                    cum += l;
                    if cum / total >= f - 1e-12 {
                        d = k + 1;
                        break;
                    }
                }
                d
            }
        }
    };
    let mut basis = Array2::zeros((d, full));
    for k in 0..d {
        for i in 0..full {
            basis[[k, i]] = vectors[[i, k]];
        }
    }
    Ok(PcaTransform { basis })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal))
    }

    #[test]
    fn cosine_identical_orthogonal_and_known_pair() {
        let y = array![[1.0, 0.0], [1.0, 0.0], [0.0, 2.0], [1.0, 1.0]];
        let s = cosine_matrix(&y).unwrap();
        assert_abs_diff_eq!(s.get(0, 1), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.get(0, 2), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.get(0, 3), 1.0 / 2.0_f64.sqrt(), epsilon = 1e-12);
        for i in 0..4 {
            assert_abs_diff_eq!(s.get(i, i), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cosine_rejects_zero_row() {
        let y = array![[1.0, 0.0], [0.0, 0.0]];
        let err = cosine_matrix(&y).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn cosine_invariant_to_positive_row_scaling() {
        let y = random_matrix(12, 5, 3);
        let mut scaled = y.clone();
        for (i, mut row) in scaled.rows_mut().into_iter().enumerate() {
            row *= 0.5 + i as f64;
        }
        let a = cosine_matrix(&y).unwrap();
        let b = cosine_matrix(&scaled).unwrap();
        for (x, y) in a.scores.iter().zip(b.scores.iter()) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-9);
        }
    }

    #[test]
    fn temporal_weight_matches_closed_form() {
        let n = 10;
        let s = SimilarityMatrix {
            scores: Array2::from_elem((n, n), 1.0),
            temporal_weighted: false,
        };
        let w = temporal_weight(&s, 0.95, 2).unwrap();
        assert_abs_diff_eq!(w.get(4, 4), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.get(4, 5), 0.95, epsilon = 1e-12);
        assert_abs_diff_eq!(w.get(0, 7), 0.9025, epsilon = 1e-12);
        assert_abs_diff_eq!(w.get(0, 2), 0.9025, epsilon = 1e-12);
        assert!(temporal_weight(&s, 1.0, 2).is_err());
        assert!(temporal_weight(&s, 0.0, 2).is_err());
    }

    #[test]
    fn temporal_weight_monotone_then_flat() {
        let n = 12;
        let base = SimilarityMatrix {
            scores: Array2::from_elem((n, n), 0.8),
            temporal_weighted: false,
        };
        let w = temporal_weight(&base, 0.9, 4).unwrap();
        for d in 1..n {
            let prev = w.get(0, d - 1);
            let cur = w.get(0, d);
            assert!(cur <= prev + 1e-12);
            if d >= 4 {
                assert_abs_diff_eq!(cur, 0.8 * 0.9_f64.powi(4), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn unit_normalize_examples() {
        let y = array![[3.0, 4.0], [1.0, 0.0], [-2.0, 0.0]];
        let u = unit_normalize(&y).unwrap();
        assert_abs_diff_eq!(u[[0, 0]], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(u[[0, 1]], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(u[[1, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u[[2, 0]], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn whitening_yields_identity_covariance_on_training_data() {
        let x = random_matrix(200, 6, 11);
        // stretch the dimensions so there is something to undo
        let mut stretched = x.clone();
        for (j, mut col) in stretched.columns_mut().into_iter().enumerate() {
            col *= 1.0 + j as f64;
        }
        let w = fit_whitening(&stretched, DEFAULT_EIG_FLOOR).unwrap();
        let y = w.apply(&stretched);
        let (_, cov) = covariance(&y);
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(cov[[i, j]], expect, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn whitening_scales_by_inverse_std() {
        // sample variance computed by the oracle formula below
        let n = 1000;
        let mut x = Array2::zeros((n, 2));
        for i in 0..n {
            x[[i, 0]] = if i % 2 == 0 { 2.0 } else { -2.0 };
            x[[i, 1]] = if i % 4 < 2 { 1.0 } else { -1.0 };
        }
        let var0: f64 = x.column(0).mapv(|v| v * v).sum() / (n - 1) as f64;
        let w = fit_whitening(&x, DEFAULT_EIG_FLOOR).unwrap();
        let y = w.apply(&x);
        let got: f64 = y.column(0).mapv(|v| v * v).sum() / (n - 1) as f64;
        assert_abs_diff_eq!(got, 1.0, epsilon = 1e-9);
        // the dominant projection row rescales by 1/sqrt(var)
        let row_norm: f64 = w.projection.row(0).dot(&w.projection.row(0)).sqrt();
        assert_abs_diff_eq!(row_norm, 1.0 / var0.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn whitening_constant_column_stays_finite() {
        let mut x = random_matrix(50, 4, 5);
        x.column_mut(2).fill(3.0);
        let w = fit_whitening(&x, DEFAULT_EIG_FLOOR).unwrap();
        let y = w.apply(&x);
        assert!(y.iter().all(|v| v.is_finite()));
        assert!(w.projection.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn whitening_rejects_single_row() {
        let x = Array2::from_elem((1, 3), 1.0);
        assert!(fit_whitening(&x, DEFAULT_EIG_FLOOR).is_err());
    }

    #[test]
    fn shrunk_whitening_preserves_eigenvalue_ratio_partially() {
        let x = random_matrix(400, 3, 9);
        let mut stretched = x.clone();
        stretched.column_mut(0).map_inplace(|v| *v *= 10.0);
        let full = fit_whitening_shrunk(&stretched, DEFAULT_EIG_FLOOR, 0.0).unwrap();
        let iso = fit_whitening_shrunk(&stretched, DEFAULT_EIG_FLOOR, 1.0).unwrap();
        let (_, cov_full) = covariance(&full.apply(&stretched));
        let (_, cov_iso) = covariance(&iso.apply(&stretched));
        // rho = 0 equalizes the variances; rho = 1 keeps their ratio
        assert_abs_diff_eq!(cov_full[[0, 0]] / cov_full[[1, 1]], 1.0, epsilon = 1e-6);
        assert!(cov_iso[[0, 0]] / cov_iso[[1, 1]] > 10.0);
    }

    #[test]
    fn pca_isotropic_full_energy_keeps_all_dims() {
        let x = random_matrix(300, 5, 21);
        let p = fit_pca(&x, PcaTarget::EnergyFraction(1.0)).unwrap();
        assert_eq!(p.dim(), 5);
    }

    #[test]
    fn pca_planar_data_needs_two_dims() {
        // data spanned by 2 basis vectors inside 5-D, zero noise
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let b1 = array![1.0, 0.0, 2.0, 0.0, -1.0];
        let b2 = array![0.0, 3.0, 0.0, 1.0, 1.0];
        let mut x = Array2::zeros((100, 5));
        for i in 0..100 {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            let row = &b1 * a + &b2 * b;
            x.row_mut(i).assign(&row);
        }
        let p = fit_pca(&x, PcaTarget::EnergyFraction(0.99)).unwrap();
        assert_eq!(p.dim(), 2);
    }

    #[test]
    fn pca_full_rank_reconstructs_exactly() {
        let x = random_matrix(40, 4, 31);
        let p = fit_pca(&x, PcaTarget::Dim(4)).unwrap();
        let projected = p.apply(&x);
        let reconstructed = projected.dot(&p.basis);
        for (a, b) in x.iter().zip(reconstructed.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
        assert!(fit_pca(&x, PcaTarget::Dim(5)).is_err());
    }

    #[test]
    fn pca_rows_are_orthonormal() {
        let x = random_matrix(60, 6, 17);
        let p = fit_pca(&x, PcaTarget::Dim(4)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot = p.basis.row(i).dot(&p.basis.row(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot, expect, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn pca_energy_rule_is_tight() {
        // eigenvalue shares must satisfy: share(d) >= f and share(d-1) < f
        let x = {
            let mut rng = ChaCha8Rng::seed_from_u64(29);
            let mut x = Array2::zeros((500, 5));
            for i in 0..500 {
                for j in 0..5 {
                    let scale = [4.0, 2.0, 1.0, 0.5, 0.25][j];
                    x[[i, j]] = scale * rng.sample::<f64, _>(StandardNormal);
                }
            }
            x
        };
        for f in [0.3, 0.5, 0.8, 0.95] {
            let p = fit_pca(&x, PcaTarget::EnergyFraction(f)).unwrap();
            let (_, cov) = covariance(&x);
            let (values, _) = sym_eigen_desc(&cov);
            let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
            let cum: Vec<f64> = values
                .iter()
                .scan(0.0, |acc, &v| {
                    *acc += v.max(0.0);
                    Some(*acc / total)
                })
                .collect();
            let d = p.dim();
            assert!(cum[d - 1] >= f - 1e-12);
            if d > 1 {
                assert!(cum[d - 2] < f);
            }
        }
    }
}
