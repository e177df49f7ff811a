//! Discrete empirical interpolation of nonlinear terms.
//!
//! Given an orthonormal basis `U` (n×k) of nonlinear-term snapshots and `k`
//! interpolation rows `S`, a full vector is approximated from its values at
//! those rows by `U (SᵀU)⁻¹ Sᵀ f`, with error at most
//! `‖(SᵀU)⁻¹‖₂ ‖(I − UUᵀ) f‖₂`.

use crate::error::{ensure, Error, Result};
use crate::linalg::{solve_linear, svd_thin, DenseMatrix, LuFactor};

/// Interpolation-point selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PointSelection {
    /// Classic greedy residual argmax.
    #[default]
    Greedy,
    /// First `k` column pivots of a pivoted QR of `Uᵀ`.
    PivotedQr,
}

/// Residual magnitudes at or below this fraction of the column norm mean the
/// basis is rank deficient.
const DEGENERATE_RESIDUAL: f64 = 1e-12;

/// Index of the largest `|x_i|`, smallest index on ties.
fn argmax_abs(x: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, v) in x.iter().enumerate() {
        if v.abs() > x[best].abs() {
            best = i;
        }
    }
    best
}

fn check_basis(u: &DenseMatrix) -> Result<()> {
    ensure!(
        u.cols() >= 1 && u.cols() <= u.rows(),
        Error::Shape(format!(
            "DEIM basis must have 1 <= k <= n columns, got {}x{}",
            u.rows(),
            u.cols()
        ))
    );
    ensure!(u.is_finite(), Error::InvalidInput("DEIM basis has non-finite entries".into()));
    Ok(())
}

fn degenerate(step: usize, what: &str) -> Error {
    Error::Singular {
        context: format!("DEIM point selection step {step}: {what}"),
        condition: f64::INFINITY,
    }
}

/// Greedy DEIM point selection.
pub fn deim_points_greedy(u: &DenseMatrix) -> Result<Vec<usize>> {
    check_basis(u)?;
    let first = u.column(0);
    let scale0 = first.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale0 == 0.0 {
        return Err(degenerate(0, "first basis column is zero"));
    }
    let mut indices = vec![argmax_abs(first)];
    for j in 1..u.cols() {
        let col = u.column(j);
        // Interpolate column j from the previous columns at the chosen rows.
        let prev = u.columns_range(0, j);
        let p = prev.select_rows(&indices);
        let rhs = DenseMatrix::new(j, 1, indices.iter().map(|&i| col[i]).collect())?;
        let c = solve_linear(&p, &rhs).map_err(|_| degenerate(j, "interpolation matrix is singular"))?;
        let fit = prev.matvec(c.column(0));
        let residual: Vec<f64> = col.iter().zip(&fit).map(|(a, b)| a - b).collect();
        let pick = argmax_abs(&residual);
        let scale = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !(residual[pick].abs() > DEGENERATE_RESIDUAL * scale) {
            return Err(degenerate(j, "residual vanishes; basis is rank deficient"));
        }
        indices.push(pick);
    }
    Ok(indices)
}

/// Pivoted-QR point selection on `Uᵀ` (Businger–Golub column pivoting).
pub fn deim_points_qr(u: &DenseMatrix) -> Result<Vec<usize>> {
    check_basis(u)?;
    let (n, k) = u.shape();
    // Work on Uᵀ stored as n columns of length k: column c is row c of U.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|i| u.row(i)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|x| x * x).sum()).collect();
    let initial_max = norms.iter().cloned().fold(0.0f64, f64::max);
    for step in 0..k {
        let mut best = step;
        for c in step + 1..n {
            if norms[c] > norms[best] {
                best = c;
            }
        }
        if !(norms[best] > DEGENERATE_RESIDUAL * DEGENERATE_RESIDUAL * initial_max) {
            return Err(degenerate(step, "remaining columns vanish; basis is rank deficient"));
        }
        cols.swap(step, best);
        order.swap(step, best);
        norms.swap(step, best);
        // Householder reflector zeroing entries step+1.. of the pivot column.
        let pivot = &cols[step];
        let alpha = pivot[step..].iter().map(|x| x * x).sum::<f64>().sqrt();
        let sign = if pivot[step] >= 0.0 { 1.0 } else { -1.0 };
        let mut v: Vec<f64> = pivot[step..].to_vec();
        v[0] += sign * alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for c in cols.iter_mut().skip(step) {
                let proj: f64 = v.iter().zip(&c[step..]).map(|(a, b)| a * b).sum::<f64>() * 2.0 / vnorm2;
                for (ci, vi) in c[step..].iter_mut().zip(&v) {
                    *ci -= proj * vi;
                }
            }
        }
        // Recompute trailing norms exactly; k is small so this is cheap and
        // avoids the cancellation of downdating.
        for c in step + 1..n {
            norms[c] = cols[c][step + 1..].iter().map(|x| x * x).sum();
        }
    }
    Ok(order[..k].to_vec())
}

pub fn select_points(u: &DenseMatrix, method: PointSelection) -> Result<Vec<usize>> {
    match method {
        PointSelection::Greedy => deim_points_greedy(u),
        PointSelection::PivotedQr => deim_points_qr(u),
    }
}

/// Assembled interpolation operator.
#[derive(Debug, Clone)]
pub struct DeimOperator {
    basis: DenseMatrix,
    indices: Vec<usize>,
    interp_map: DenseMatrix,
    error_constant: f64,
}

impl DeimOperator {
    /// Nonlinear-term basis `U`.
    pub fn basis(&self) -> &DenseMatrix {
        &self.basis
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// `U (SᵀU)⁻¹`.
    pub fn interp_map(&self) -> &DenseMatrix {
        &self.interp_map
    }

    /// `‖(SᵀU)⁻¹‖₂`.
    pub fn error_constant(&self) -> f64 {
        self.error_constant
    }

    pub fn rank(&self) -> usize {
        self.indices.len()
    }

    pub fn dim(&self) -> usize {
        self.basis.rows()
    }

    /// `Sᵀ f`.
    pub fn sample(&self, f: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&i| f[i]).collect()
    }

    /// Full-length approximation from values at the interpolation rows.
    pub fn apply(&self, f_at_points: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            f_at_points.len() == self.rank(),
            Error::Shape(format!(
                "expected {} sampled values, got {}",
                self.rank(),
                f_at_points.len()
            ))
        );
        Ok(self.interp_map.matvec(f_at_points))
    }

    /// `c ‖(I − UUᵀ) f‖₂`, the a priori bound on `‖f − f_DEIM‖₂`.
    pub fn error_bound(&self, f: &[f64]) -> f64 {
        let coeff = self.basis.tr_matvec(f);
        let proj = self.basis.matvec(&coeff);
        let r: f64 = f.iter().zip(&proj).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        self.error_constant * r
    }
}

/// Builds `U (SᵀU)⁻¹` and the error constant for the given rows.
pub fn build_deim(u: &DenseMatrix, indices: &[usize]) -> Result<DeimOperator> {
    check_basis(u)?;
    let (n, k) = u.shape();
    ensure!(
        indices.len() == k,
        Error::Shape(format!("{} indices for a rank-{k} basis", indices.len()))
    );
    let mut seen = vec![false; n];
    for &i in indices {
        ensure!(i < n, Error::InvalidInput(format!("index {i} out of range 0..{n}")));
        ensure!(!seen[i], Error::InvalidInput(format!("duplicate interpolation index {i}")));
        seen[i] = true;
    }
    let sampled = u.select_rows(indices);
    let lu = LuFactor::new(&sampled).map_err(|e| match e {
        Error::Singular { condition, .. } => Error::Singular {
            context: "DEIM matrix SᵀU".into(),
            condition,
        },
        other => other,
    })?;
    let inverse = lu.solve(&DenseMatrix::identity(k));
    let error_constant = svd_thin(&inverse)?.sigma[0];
    ensure!(
        error_constant.is_finite(),
        Error::Singular {
            context: "DEIM matrix SᵀU".into(),
            condition: f64::INFINITY
        }
    );
    Ok(DeimOperator {
        basis: u.clone(),
        indices: indices.to_vec(),
        interp_map: u.matmul(&inverse),
        error_constant,
    })
}

/// `apply_deim` as a free function.
pub fn apply_deim(op: &DeimOperator, f_at_points: &[f64]) -> Result<Vec<f64>> {
    op.apply(f_at_points)
}
