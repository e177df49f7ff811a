//! Randomized range finding (QB) and randomized SVD.
//!
//! Gaussian test matrices come from `ChaCha8Rng::seed_from_u64(seed)` with
//! `rand_distr::StandardNormal`, filled in column-major order. ChaCha is a
//! portable counter-based stream, so a seed produces the same sketch on every
//! platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure, Error, Result};
use crate::linalg::{qr_thin, svd_thin, DenseMatrix, SvdResult};

/// Oversampling used when none is given.
pub const DEFAULT_OVERSAMPLING: usize = 10;
/// Power iterations used when none are given; `0` reproduces the plain sketch.
pub const DEFAULT_POWER_ITERATIONS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SketchConfig {
    pub target_rank: usize,
    pub oversampling: usize,
    pub power_iterations: usize,
    pub seed: u64,
}

impl SketchConfig {
    pub fn new(target_rank: usize) -> Self {
        Self {
            target_rank,
            oversampling: DEFAULT_OVERSAMPLING,
            power_iterations: DEFAULT_POWER_ITERATIONS,
            seed: 0,
        }
    }

    pub fn with_oversampling(mut self, p: usize) -> Self {
        self.oversampling = p;
        self
    }

    pub fn with_power_iterations(mut self, q: usize) -> Self {
        self.power_iterations = q;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Number of sketch columns, `target_rank + oversampling`.
    pub fn samples(&self) -> usize {
        self.target_rank + self.oversampling
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        ensure!(
            self.target_rank >= 1,
            Error::Shape("sketch target rank must be at least 1".into())
        );
        ensure!(
            self.samples() <= rows.min(cols),
            Error::Shape(format!(
                "sketch of {} columns (rank {} + oversampling {}) exceeds min dimension of a {rows}x{cols} matrix",
                self.samples(),
                self.target_rank,
                self.oversampling
            ))
        );
        Ok(())
    }
}

/// `Y ≈ Q B` with orthonormal `Q`.
#[derive(Debug, Clone)]
pub struct QbFactorization {
    pub q: DenseMatrix,
    pub b: DenseMatrix,
}

impl QbFactorization {
    pub fn reconstruct(&self) -> DenseMatrix {
        self.q.matmul(&self.b)
    }
}

/// Matrix of i.i.d. standard normal entries drawn from the seeded stream.
pub fn gaussian_test_matrix(rows: usize, cols: usize, seed: u64) -> Result<DenseMatrix> {
    ensure!(
        rows >= 1 && cols >= 1,
        Error::Shape(format!("gaussian test matrix must be non-empty, got {rows}x{cols}"))
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng)))
}

fn orthonormal_basis(a: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(qr_thin(a)?.0)
}

/// Randomized range finder: samples the column space of `y` with `y Ω`,
/// optionally refined by power iterations, and projects `y` onto it.
pub fn qb_decompose(y: &DenseMatrix, cfg: &SketchConfig) -> Result<QbFactorization> {
    cfg.validate(y.rows(), y.cols())?;
    let omega = gaussian_test_matrix(y.cols(), cfg.samples(), cfg.seed)?;
    let mut q = orthonormal_basis(&y.matmul(&omega))?;
    for _ in 0..cfg.power_iterations {
        let z = orthonormal_basis(&y.tr_matmul(&q))?;
        q = orthonormal_basis(&y.matmul(&z))?;
    }
    let b = q.tr_matmul(y);
    Ok(QbFactorization { q, b })
}

/// Randomized SVD truncated to `cfg.target_rank` triplets.
pub fn rsvd(y: &DenseMatrix, cfg: &SketchConfig) -> Result<SvdResult> {
    let qb = qb_decompose(y, cfg)?;
    let small = svd_thin(&qb.b)?;
    let mut out = SvdResult {
        u: qb.q.matmul(&small.u),
        sigma: small.sigma,
        v: small.v,
    };
    out.truncate(cfg.target_rank);
    Ok(out)
}

/// Expected squared projection error of a randomized basis with `rank`
/// target columns and `oversampling` extra samples:
///
/// `(1 + sqrt(rank/(p-1))) σ²_{rank+1} + (sqrt(rank+p)/p) Σ_{j>rank} σ_j²`.
///
/// `sigma` is the full non-increasing spectrum (1-based `σ_j` is `sigma[j-1]`).
pub fn expected_error_bound(sigma: &[f64], rank: usize, oversampling: usize) -> Result<f64> {
    ensure!(
        oversampling >= 2,
        Error::Domain(format!("oversampling must be at least 2, got {oversampling}"))
    );
    ensure!(
        rank + oversampling <= sigma.len(),
        Error::Domain(format!(
            "rank {rank} + oversampling {oversampling} exceeds spectrum length {}",
            sigma.len()
        ))
    );
    ensure!(
        sigma.windows(2).all(|w| w[0] >= w[1]) && sigma.iter().all(|&s| s >= 0.0),
        Error::Domain("spectrum must be non-negative and non-increasing".into())
    );
    let l = rank as f64;
    let p = oversampling as f64;
    let next = sigma[rank];
    let tail: f64 = sigma[rank..].iter().map(|s| s * s).sum();
    Ok((1.0 + (l / (p - 1.0)).sqrt()) * next * next + ((l + p).sqrt() / p) * tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn gaussian_is_seeded() {
        let a = gaussian_test_matrix(3, 2, 7).unwrap();
        let b = gaussian_test_matrix(3, 2, 7).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        let c = gaussian_test_matrix(2, 2, 1).unwrap();
        let d = gaussian_test_matrix(2, 2, 2).unwrap();
        assert_ne!(c, d);
    }

    #[test]
    fn gaussian_moments() {
        let g = gaussian_test_matrix(1000, 1, 42).unwrap();
        let mean = g.as_slice().iter().sum::<f64>() / 1000.0;
        let var = g.as_slice().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0;
        assert!(mean.abs() < 0.15, "mean {mean}");
        assert!((var - 1.0).abs() < 0.15, "var {var}");
    }

    #[test]
    fn gaussian_rejects_empty() {
        assert!(matches!(gaussian_test_matrix(0, 2, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn qb_captures_exact_rank() {
        let y = random(60, 5, 1).matmul(&random(5, 40, 2));
        let cfg = SketchConfig::new(5).with_oversampling(0).with_power_iterations(0);
        let qb = qb_decompose(&y, &cfg).unwrap();
        assert!(qb.q.orthonormality_defect() < 1e-12);
        let full = svd_thin(&y).unwrap();
        assert!(qb.reconstruct().sub(&y).spectral_norm().unwrap() <= 1e-8 * full.sigma[0]);
    }

    #[test]
    fn qb_of_identity_is_exact() {
        let y = DenseMatrix::identity(8);
        let cfg = SketchConfig::new(5).with_oversampling(3).with_power_iterations(0);
        let qb = qb_decompose(&y, &cfg).unwrap();
        assert!(qb.reconstruct().sub(&y).max_abs() <= 1e-10);
    }

    #[test]
    fn config_too_large_is_shape_error() {
        let y = DenseMatrix::identity(8);
        let cfg = SketchConfig::new(5).with_oversampling(4);
        assert!(matches!(qb_decompose(&y, &cfg), Err(Error::Shape(_))));
        assert!(matches!(rsvd(&y, &SketchConfig::new(0)), Err(Error::Shape(_))));
    }

    #[test]
    fn rsvd_of_scaled_identity() {
        let y = DenseMatrix::identity(6).scaled(2.5);
        let cfg = SketchConfig::new(4).with_oversampling(2);
        let s = rsvd(&y, &cfg).unwrap();
        assert_eq!(s.sigma.len(), 4);
        for sig in &s.sigma {
            assert!((sig - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn rsvd_matches_full_on_exact_rank_and_is_deterministic() {
        let y = random(80, 6, 3).matmul(&random(6, 50, 4));
        let cfg = SketchConfig::new(6).with_oversampling(4).with_seed(11);
        let r = rsvd(&y, &cfg).unwrap();
        let full = svd_thin(&y).unwrap();
        for (a, b) in r.sigma.iter().zip(&full.sigma) {
            assert!((a - b).abs() <= 1e-8 * b);
        }
        assert!(r.u.orthonormality_defect() < 1e-12);
        let again = rsvd(&y, &cfg).unwrap();
        assert_eq!(r.u, again.u);
        assert_eq!(r.sigma, again.sigma);
    }

    #[test]
    fn bound_formula() {
        let b = expected_error_bound(&[2.0, 1.0, 0.5], 1, 2).unwrap();
        let expected = 2.0 + 1.25 * 3f64.sqrt() / 2.0;
        assert!((b - expected).abs() < 1e-15);
        assert_eq!(expected_error_bound(&[3.0, 0.0, 0.0, 0.0], 1, 3).unwrap(), 0.0);
        assert!(matches!(expected_error_bound(&[1.0, 0.5, 0.2], 1, 1), Err(Error::Domain(_))));
        assert!(matches!(expected_error_bound(&[1.0, 0.5], 1, 2), Err(Error::Domain(_))));
        assert!(matches!(expected_error_bound(&[0.5, 1.0, 0.2], 1, 2), Err(Error::Domain(_))));
    }

    proptest::proptest! {
        #[test]
        fn bound_dominates_next_singular_value(
            mut s in proptest::collection::vec(0.0f64..10.0, 4..30),
            rank in 1usize..4,
            p in 2usize..6,
        ) {
            s.sort_by(|a, b| b.partial_cmp(a).unwrap());
            proptest::prop_assume!(rank + p <= s.len());
            let b = expected_error_bound(&s, rank, p).unwrap();
            proptest::prop_assert!(b >= s[rank] * s[rank]);
        }
    }
}
