//! Exact and compressive dynamic mode decomposition.
//!
//! Both variants fit `Y' ≈ A Y` through the rank-`r` SVD of the (possibly
//! compressed) snapshot matrix, eigendecompose the projected operator
//! `Ã = Uᵀ X' V Σ⁻¹` and build modes `Y' V Σ⁻¹ W`. The compressive variant
//! takes its SVD and `Ã` from `X = C Y`, `X' = C Y'`; modes are rebuilt from
//! the full `Y'` by default so they can serve as a Galerkin basis in `ℝⁿ`.
//!
//! Models are ordered by eigenvalue magnitude, largest first, with the member
//! of a conjugate pair that has positive imaginary part first.

use faer::linalg::solvers::SolveLstsq;
use num_complex::Complex64;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure, Error, Result};
use crate::linalg::{dot, eig_dense, numerical_rank, real_times_complex, svd_thin, ComplexMatrix, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmdSource {
    Exact,
    Compressive,
}

/// Space in which compressive DMD modes are reconstructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeSpace {
    /// `Y' V Σ⁻¹ W`, modes in the full state space.
    #[default]
    Full,
    /// `X' V Σ⁻¹ W`, modes in measurement space (diagnostics only).
    Compressed,
}

#[derive(Debug, Clone)]
pub struct DmdModel {
    pub eigenvalues: Vec<Complex64>,
    pub modes: ComplexMatrix,
    /// Least-squares fit of the modes to the first snapshot.
    pub amplitudes: Vec<Complex64>,
    pub source: DmdSource,
}

impl DmdModel {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ensemble {
    Gaussian,
    /// Entries `√(3/p) · {+1, 0, −1}` with probabilities `{1/6, 2/3, 1/6}`.
    SparseBernoulli,
    /// `p` distinct rows of the identity, drawn uniformly.
    RowSubsample,
}

/// `p × n` compression operator.
#[derive(Debug, Clone)]
pub struct MeasurementMatrix {
    pub c: DenseMatrix,
    pub ensemble: Ensemble,
    pub seed: u64,
}

impl MeasurementMatrix {
    pub fn measurements(&self) -> usize {
        self.c.rows()
    }

    /// `C Y`.
    pub fn compress(&self, y: &DenseMatrix) -> DenseMatrix {
        self.c.matmul(y)
    }
}

/// Seeded draw of a measurement matrix. Dense ensembles are scaled so that
/// `E[CᵀC] = I`.
pub fn measurement_matrix(p: usize, n: usize, ensemble: Ensemble, seed: u64) -> Result<MeasurementMatrix> {
    ensure!(
        p >= 1 && p <= n,
        Error::Shape(format!("need 1 <= p <= n for a measurement matrix, got p = {p}, n = {n}"))
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = match ensemble {
        Ensemble::Gaussian => {
            let scale = 1.0 / (p as f64).sqrt();
            // Row-major draw so that the i-th measurement does not depend on p.
            let mut rows = vec![0.0; p * n];
            for v in rows.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *v = scale * g;
            }
            DenseMatrix::from_fn(p, n, |i, j| rows[i * n + j])
        }
        Ensemble::SparseBernoulli => {
            let scale = (3.0 / p as f64).sqrt();
            let mut rows = vec![0.0; p * n];
            for v in rows.iter_mut() {
                *v = match rng.random_range(0..6) {
                    0 => scale,
                    1 => -scale,
                    _ => 0.0,
                };
            }
            DenseMatrix::from_fn(p, n, |i, j| rows[i * n + j])
        }
        Ensemble::RowSubsample => {
            let picks = index::sample(&mut rng, n, p).into_vec();
            let mut c = DenseMatrix::zeros(p, n);
            for (i, &r) in picks.iter().enumerate() {
                c[(i, r)] = 1.0;
            }
            c
        }
    };
    Ok(MeasurementMatrix { c, ensemble, seed })
}

/// Eigen-index order: `|λ|` descending, positive imaginary part first within a pair.
fn spectral_order(values: &[Complex64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let (za, zb) = (values[a], values[b]);
        zb.norm()
            .partial_cmp(&za.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(zb.im.partial_cmp(&za.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    order
}

fn least_squares_amplitudes(modes: &ComplexMatrix, y0: &[f64]) -> Vec<Complex64> {
    let a = modes.to_faer();
    let rhs = faer::Mat::from_fn(y0.len(), 1, |i, _| Complex64::new(y0[i], 0.0));
    let x = a.qr().solve_lstsq(rhs);
    (0..modes.cols()).map(|i| x[(i, 0)]).collect()
}

/// Shared fit: SVD of `x`, projected operator from `xp`, modes from `recon`.
fn fit(x: &DenseMatrix, xp: &DenseMatrix, recon: &DenseMatrix, y0: &[f64], r: usize, source: DmdSource) -> Result<DmdModel> {
    ensure!(r >= 1, Error::Shape("DMD rank must be at least 1".into()));
    let svd = svd_thin(x)?;
    let available = numerical_rank(&svd.sigma);
    ensure!(r <= available, Error::Rank { requested: r, available });
    let inv_sigma: Vec<f64> = svd.sigma[..r].iter().map(|s| 1.0 / s).collect();
    let v_scaled = svd.v.columns_range(0, r).scale_columns(&inv_sigma);
    let u_r = svd.u.columns_range(0, r);
    let a_tilde = u_r.tr_matmul(&xp.matmul(&v_scaled));
    let eig = eig_dense(&a_tilde)?;
    let order = spectral_order(&eig.values);
    let eigenvalues: Vec<Complex64> = order.iter().map(|&i| eig.values[i]).collect();
    let w = eig.vectors.select_columns(&order);
    let modes = real_times_complex(&recon.matmul(&v_scaled), &w);
    for j in 0..modes.cols() {
        ensure!(
            modes.column_norm(j) > 0.0,
            Error::Decomposition(format!("DMD mode {j} vanished"))
        );
    }
    let amplitudes = least_squares_amplitudes(&modes, y0);
    Ok(DmdModel {
        eigenvalues,
        modes,
        amplitudes,
        source,
    })
}

fn check_pair(y: &DenseMatrix, yp: &DenseMatrix) -> Result<()> {
    ensure!(
        y.shape() == yp.shape(),
        Error::Shape(format!(
            "snapshot pair shapes differ: {:?} vs {:?}",
            y.shape(),
            yp.shape()
        ))
    );
    ensure!(y.cols() >= 1, Error::Shape("DMD needs at least one snapshot pair".into()));
    Ok(())
}

/// Exact DMD of the pair `(Y, Y')` at rank `r`.
pub fn exact_dmd(y: &DenseMatrix, yp: &DenseMatrix, r: usize) -> Result<DmdModel> {
    check_pair(y, yp)?;
    fit(y, yp, yp, y.column(0), r, DmdSource::Exact)
}

/// Compressive DMD with full-space mode reconstruction.
pub fn cdmd(y: &DenseMatrix, yp: &DenseMatrix, c: &MeasurementMatrix, r: usize) -> Result<DmdModel> {
    cdmd_with(y, yp, c, r, ModeSpace::Full)
}

pub fn cdmd_with(y: &DenseMatrix, yp: &DenseMatrix, c: &MeasurementMatrix, r: usize, space: ModeSpace) -> Result<DmdModel> {
    check_pair(y, yp)?;
    ensure!(
        c.c.cols() == y.rows(),
        Error::Shape(format!(
            "measurement matrix has {} columns, snapshots have {} rows",
            c.c.cols(),
            y.rows()
        ))
    );
    let x = c.compress(y);
    let xp = c.compress(yp);
    match space {
        ModeSpace::Full => fit(&x, &xp, yp, y.column(0), r, DmdSource::Compressive),
        ModeSpace::Compressed => {
            let x0 = x.column(0).to_vec();
            fit(&x, &xp, &xp, &x0, r, DmdSource::Compressive)
        }
    }
}

/// Real orthonormal basis obtained from DMD modes.
#[derive(Debug, Clone)]
pub struct RealBasis {
    pub modes: DenseMatrix,
    pub requested_rank: usize,
}

impl RealBasis {
    pub fn rank(&self) -> usize {
        self.modes.cols()
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.rank() < self.requested_rank
    }

    pub fn warning(&self) -> Option<String> {
        self.is_rank_deficient().then(|| {
            format!(
                "only {} independent real directions for requested rank {}",
                self.rank(),
                self.requested_rank
            )
        })
    }
}

const REAL_EIGENVALUE_TOL: f64 = 1e-10;
const DEPENDENT_COLUMN_TOL: f64 = 1e-10;

/// Turns complex DMD modes into a real orthonormal basis of up to `rank` columns.
///
/// Modes are visited by `|b_i λ_i|` descending; one member of each conjugate
/// pair contributes its real and imaginary parts, real modes contribute their
/// real part. Columns are orthonormalized in that order (Gram–Schmidt with
/// re-orthogonalization), dependent or negligible columns are dropped, and the
/// result is cut at `rank` columns.
pub fn realify_modes(model: &DmdModel, rank: usize) -> Result<RealBasis> {
    ensure!(rank >= 1, Error::Shape("realified rank must be at least 1".into()));
    let weights: Vec<f64> = model
        .eigenvalues
        .iter()
        .zip(&model.amplitudes)
        .map(|(l, b)| (l * b).norm())
        .collect();
    let mut order: Vec<usize> = (0..model.rank()).collect();
    order.sort_by(|&a, &b| weights[b].partial_cmp(&weights[a]).unwrap_or(std::cmp::Ordering::Equal));

    let mut candidates: Vec<Vec<f64>> = Vec::new();
    let mut used_pairs: Vec<Complex64> = Vec::new();
    for &i in &order {
        let lam = model.eigenvalues[i];
        let is_real = lam.im.abs() <= REAL_EIGENVALUE_TOL * lam.norm().max(1.0);
        if is_real {
            let re = model.modes.column_re(i);
            let im = model.modes.column_im(i);
            // An eigenvector of a real eigenvalue may carry a complex phase;
            // keep whichever part is larger.
            candidates.push(if dot(&re, &re) >= dot(&im, &im) { re } else { im });
        } else {
            let tol = REAL_EIGENVALUE_TOL * lam.norm().max(1.0);
            if used_pairs.iter().any(|z| (z.conj() - lam).norm() <= tol) {
                continue;
            }
            used_pairs.push(lam);
            candidates.push(model.modes.column_re(i));
            candidates.push(model.modes.column_im(i));
        }
    }

    let max_norm = candidates.iter().map(|c| dot(c, c).sqrt()).fold(0.0f64, f64::max);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut c in candidates {
        if basis.len() == rank {
            break;
        }
        let original = dot(&c, &c).sqrt();
        if original <= DEPENDENT_COLUMN_TOL * max_norm {
            continue;
        }
        for _ in 0..2 {
            for q in &basis {
                let proj = dot(q, &c);
                c.iter_mut().zip(q).for_each(|(x, qi)| *x -= proj * qi);
            }
        }
        let norm = dot(&c, &c).sqrt();
        if norm <= DEPENDENT_COLUMN_TOL * original {
            continue;
        }
        c.iter_mut().for_each(|x| *x /= norm);
        basis.push(c);
    }
    ensure!(
        !basis.is_empty(),
        Error::Rank {
            requested: rank,
            available: 0
        }
    );
    Ok(RealBasis {
        modes: DenseMatrix::from_columns(&basis)?,
        requested_rank: rank,
    })
}
