//! Finite-difference full-order models on the unit square with homogeneous
//! Dirichlet data.
//!
//! * Parabolic: `ẏ = θ Δy − μ (y − y³)`, `y(0) = 0.1` on a region of the
//!   square and `0` elsewhere.
//! * Elliptic: `−Δu + s(u; μ) = f`, `s(u; μ) = (μ₁/μ₂)(e^{μ₂ u} − 1)`,
//!   `f = 100 sin(2πx) sin(2πy)`.
//!
//! Unknowns are the `N²` interior nodes `(x, y) = ((i+1)h, (j+1)h)`,
//! `h = 1/(N+1)`, numbered `i + N j`.

use std::sync::Arc;

use crate::error::{ensure, Error, Result};
use crate::exec::Exec;
use crate::linalg::{DenseMatrix, SymBanded};
use crate::pod::SnapshotMatrix;
use crate::rom::{integrate_steps, solve_steady_newton, FullOrderModel, LinearOperator, NewtonOptions, NewtonSolution, Nonlinearity, PointwiseFn};

/// Interior nodes of a uniform `N × N` grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2d {
    points_per_side: usize,
}

impl Grid2d {
    pub fn new(points_per_side: usize) -> Result<Self> {
        ensure!(
            points_per_side >= 2,
            Error::InvalidInput(format!("grid needs at least 2 points per side, got {points_per_side}"))
        );
        Ok(Self { points_per_side })
    }

    pub fn points_per_side(&self) -> usize {
        self.points_per_side
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.points_per_side as f64 + 1.0)
    }

    /// Number of unknowns, `N²`.
    pub fn size(&self) -> usize {
        self.points_per_side * self.points_per_side
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix + self.points_per_side * iy
    }

    /// Physical coordinates of unknown `k`.
    pub fn coords(&self, k: usize) -> (f64, f64) {
        let h = self.spacing();
        let n = self.points_per_side;
        (((k % n) + 1) as f64 * h, ((k / n) + 1) as f64 * h)
    }
}

/// 5-point Dirichlet Laplacian (`−4/h²` on the diagonal, `1/h²` to each neighbour).
pub fn laplacian(grid: &Grid2d) -> SymBanded {
    let n = grid.points_per_side();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let mut l = SymBanded::zeros(grid.size(), n);
    for iy in 0..n {
        for ix in 0..n {
            let k = grid.index(ix, iy);
            l.set(k, k, -4.0 * inv_h2);
            if ix > 0 {
                l.set(k, k - 1, inv_h2);
            }
            if iy > 0 {
                l.set(k, k - n, inv_h2);
            }
        }
    }
    l
}

/// Eigenvalues of [`laplacian`], `−(4/h²)(sin²(iπh/2) + sin²(jπh/2))`, unsorted.
pub fn laplacian_eigenvalues(grid: &Grid2d) -> Vec<f64> {
    let h = grid.spacing();
    let n = grid.points_per_side();
    let s = |i: usize| ((i as f64) * std::f64::consts::PI * h / 2.0).sin().powi(2);
    let mut out = Vec::with_capacity(grid.size());
    for j in 1..=n {
        for i in 1..=n {
            out.push(-(4.0 / (h * h)) * (s(i) + s(j)));
        }
    }
    out
}

/// Region on which the parabolic initial state is nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialRule {
    /// `0.1 ≤ x·y ≤ 0.6`.
    #[default]
    Product,
    /// `0.1 ≤ x ≤ 0.6` and `0.1 ≤ y ≤ 0.6`.
    Box,
}

impl InitialRule {
    fn contains(self, x: f64, y: f64) -> bool {
        match self {
            Self::Product => (0.1..=0.6).contains(&(x * y)),
            Self::Box => (0.1..=0.6).contains(&x) && (0.1..=0.6).contains(&y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParabolicSpec {
    pub theta: f64,
    pub mu: f64,
    pub t_final: f64,
    pub initial: InitialRule,
    /// Value of the initial state inside the region.
    pub amplitude: f64,
}

impl Default for ParabolicSpec {
    fn default() -> Self {
        Self {
            theta: 0.1,
            mu: 1.0,
            t_final: 5.0,
            initial: InitialRule::Product,
            amplitude: 0.1,
        }
    }
}

impl ParabolicSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.theta > 0.0 && self.theta.is_finite(),
            Error::InvalidInput(format!("diffusion must be positive, got {}", self.theta))
        );
        ensure!(
            self.t_final > 0.0 && self.t_final.is_finite(),
            Error::InvalidInput(format!("final time must be positive, got {}", self.t_final))
        );
        ensure!(
            self.mu.is_finite() && self.amplitude.is_finite(),
            Error::InvalidInput("reaction and amplitude must be finite".into())
        );
        Ok(())
    }
}

/// `−μ (u − u³)` entrywise.
pub fn cubic_reaction(mu: f64) -> Nonlinearity {
    Nonlinearity::pointwise(move |_, u| -mu * (u - u * u * u), move |_, u| -mu * (1.0 - 3.0 * u * u))
}

pub fn parabolic_initial_state(grid: &Grid2d, spec: &ParabolicSpec) -> Vec<f64> {
    (0..grid.size())
        .map(|k| {
            let (x, y) = grid.coords(k);
            if spec.initial.contains(x, y) {
                spec.amplitude
            } else {
                0.0
            }
        })
        .collect()
}

/// `ẏ = θ L y − μ (y − y³)`.
pub fn build_parabolic_fom(grid: &Grid2d, spec: &ParabolicSpec) -> Result<FullOrderModel> {
    spec.validate()?;
    FullOrderModel::new(
        LinearOperator::Identity(grid.size()),
        LinearOperator::Banded(laplacian(grid).scaled(spec.theta)),
        cubic_reaction(spec.mu),
        parabolic_initial_state(grid, spec),
    )
}

/// Admissible range of each elliptic parameter.
pub const PARAMETER_RANGE: (f64, f64) = (0.01, 10.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticSpec {
    pub mu1: f64,
    pub mu2: f64,
    pub source_amplitude: f64,
}

impl EllipticSpec {
    pub fn new(mu1: f64, mu2: f64) -> Self {
        Self {
            mu1,
            mu2,
            source_amplitude: 100.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.mu2 != 0.0,
            Error::Domain("μ₂ = 0 makes s(u; μ) = (μ₁/μ₂)(e^{μ₂u} − 1) undefined".into())
        );
        ensure!(
            self.mu1.is_finite() && self.mu2.is_finite() && self.source_amplitude.is_finite(),
            Error::InvalidInput("elliptic parameters must be finite".into())
        );
        Ok(())
    }

    pub fn in_parameter_box(&self) -> bool {
        let (lo, hi) = PARAMETER_RANGE;
        (lo..=hi).contains(&self.mu1) && (lo..=hi).contains(&self.mu2)
    }
}

/// `s(u; μ) = (μ₁/μ₂)(e^{μ₂ u} − 1)`.
#[derive(Debug, Clone, Copy)]
pub struct ExponentialReaction {
    pub mu1: f64,
    pub mu2: f64,
}

impl PointwiseFn for ExponentialReaction {
    fn value(&self, _t: f64, u: f64) -> f64 {
        (self.mu1 / self.mu2) * (self.mu2 * u).exp_m1()
    }

    fn derivative(&self, _t: f64, u: f64) -> f64 {
        self.mu1 * (self.mu2 * u).exp()
    }
}

/// `−s`, the form in which a reaction enters `A u + f(u) + b`.
struct Negated(Arc<dyn PointwiseFn>);

impl PointwiseFn for Negated {
    fn value(&self, t: f64, u: f64) -> f64 {
        -self.0.value(t, u)
    }

    fn derivative(&self, t: f64, u: f64) -> f64 {
        -self.0.derivative(t, u)
    }
}

/// `amplitude · sin(2πx) sin(2πy)` at the interior nodes.
pub fn elliptic_source(grid: &Grid2d, amplitude: f64) -> Vec<f64> {
    let tau = 2.0 * std::f64::consts::PI;
    (0..grid.size())
        .map(|k| {
            let (x, y) = grid.coords(k);
            amplitude * (tau * x).sin() * (tau * y).sin()
        })
        .collect()
}

/// Steady model whose residual is `R(u) = −L u + s(u; μ) − f`.
pub fn build_elliptic_fom(grid: &Grid2d, spec: &EllipticSpec) -> Result<FullOrderModel> {
    spec.validate()?;
    build_elliptic_fom_with(
        grid,
        Arc::new(ExponentialReaction {
            mu1: spec.mu1,
            mu2: spec.mu2,
        }),
        elliptic_source(grid, spec.source_amplitude),
    )
}

/// Same residual structure with a caller-supplied reaction `s` and source.
pub fn build_elliptic_fom_with(grid: &Grid2d, s: Arc<dyn PointwiseFn>, source: Vec<f64>) -> Result<FullOrderModel> {
    let n = grid.size();
    FullOrderModel::with_forcing(
        LinearOperator::Identity(n),
        LinearOperator::Banded(laplacian(grid)),
        Nonlinearity::Pointwise(Arc::new(Negated(s))),
        source,
        vec![0.0; n],
    )
}

pub fn solve_elliptic(grid: &Grid2d, spec: &EllipticSpec, opts: NewtonOptions) -> Result<NewtonSolution> {
    solve_steady_newton(&build_elliptic_fom(grid, spec)?, opts)
}

/// State snapshots with the matching nonlinear-term snapshots.
#[derive(Debug, Clone)]
pub struct SnapshotPair {
    pub states: SnapshotMatrix,
    pub nonlinear: SnapshotMatrix,
}

/// States `y(t_j)` and `f(t_j, y(t_j))` at `t_j = j Δt`, `j = 0..m`, from
/// one semi-implicit run with step `Δt`.
pub fn generate_snapshots_parabolic(grid: &Grid2d, spec: &ParabolicSpec, dt: f64, m: usize) -> Result<SnapshotPair> {
    ensure!(m >= 1, Error::InvalidInput("need at least one snapshot".into()));
    ensure!(
        dt > 0.0 && m as f64 * dt <= spec.t_final * (1.0 + 1e-12),
        Error::InvalidInput(format!(
            "{m} snapshots at spacing {dt} exceed the final time {}",
            spec.t_final
        ))
    );
    let fom = build_parabolic_fom(grid, spec)?;
    let traj = integrate_steps(&fom, dt, m - 1)?;
    let mut nonlinear = DenseMatrix::zeros(grid.size(), m);
    for j in 0..m {
        fom.nonlinearity
            .eval_into(traj.times[j], traj.states.column(j), nonlinear.column_mut(j));
    }
    Ok(SnapshotPair {
        states: SnapshotMatrix::from_times(traj.states, traj.times.clone())?,
        nonlinear: SnapshotMatrix::from_times(nonlinear, traj.times)?,
    })
}

/// `count` points from `lo` to `hi` equally spaced in `log10`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    ensure!(
        lo > 0.0 && hi >= lo && count >= 1,
        Error::InvalidInput(format!("log spacing needs 0 < lo <= hi and count >= 1, got {lo}, {hi}, {count}"))
    );
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..count)
        .map(|i| {
            if i == count - 1 {
                hi
            } else {
                10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)
            }
        })
        .collect())
}

/// Tensor grid of `per_axis²` samples over the parameter box, `μ₁` varying slowest.
pub fn parameter_grid(per_axis: usize) -> Result<Vec<(f64, f64)>> {
    let axis = log_spaced(PARAMETER_RANGE.0, PARAMETER_RANGE.1, per_axis)?;
    Ok(axis.iter().flat_map(|&a| axis.iter().map(move |&b| (a, b))).collect())
}

/// Result of a parameter sweep; failed samples are listed, not fatal.
#[derive(Debug)]
pub struct EllipticSweep {
    /// Solutions `u(μ)` of the samples that converged, in sample order.
    pub snapshots: SnapshotPair,
    /// Indices into the sample list of the converged columns.
    pub solved: Vec<usize>,
    pub iterations: Vec<usize>,
    pub failures: Vec<(usize, Error)>,
}

/// One Newton solve per sample; columns are `u(μ)` and `s(u(μ); μ)`.
pub fn generate_snapshots_elliptic(grid: &Grid2d, samples: &[(f64, f64)], exec: Exec) -> Result<EllipticSweep> {
    ensure!(!samples.is_empty(), Error::InvalidInput("empty parameter sample list".into()));
    for &(a, b) in samples {
        let spec = EllipticSpec::new(a, b);
        spec.validate()?;
        ensure!(
            spec.in_parameter_box(),
            Error::InvalidInput(format!(
                "parameter ({a}, {b}) outside [{}, {}]²",
                PARAMETER_RANGE.0, PARAMETER_RANGE.1
            ))
        );
    }
    let results = exec.map(samples.len(), |i| {
        let (a, b) = samples[i];
        solve_elliptic(grid, &EllipticSpec::new(a, b), NewtonOptions::default())
    });
    let mut states = Vec::new();
    let mut reactions = Vec::new();
    let mut solved = Vec::new();
    let mut iterations = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(sol) => {
                let (a, b) = samples[i];
                let s = ExponentialReaction { mu1: a, mu2: b };
                reactions.push(sol.u.iter().map(|&u| s.value(0.0, u)).collect::<Vec<_>>());
                states.push(sol.u);
                solved.push(i);
                iterations.push(sol.iterations);
            }
            Err(e) => failures.push((i, e)),
        }
    }
    if states.is_empty() {
        return Err(failures.swap_remove(0).1);
    }
    let params: Vec<Vec<f64>> = solved.iter().map(|&i| vec![samples[i].0, samples[i].1]).collect();
    Ok(EllipticSweep {
        snapshots: SnapshotPair {
            states: SnapshotMatrix::from_parameters(DenseMatrix::from_columns(&states)?, &params)?,
            nonlinear: SnapshotMatrix::from_parameters(DenseMatrix::from_columns(&reactions)?, &params)?,
        },
        solved,
        iterations,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eig_dense, norm2};
    use crate::rom::SteadySystem;

    #[test]
    fn grid_sizes() {
        assert_eq!(Grid2d::new(100).unwrap().size(), 10_000);
        assert_eq!(Grid2d::new(50).unwrap().size(), 2500);
        assert!(Grid2d::new(1).is_err());
        let g = Grid2d::new(3).unwrap();
        assert_eq!(g.coords(g.index(2, 1)), (0.75, 0.5));
    }

    #[test]
    fn stencil_row_sums() {
        let g = Grid2d::new(5).unwrap();
        let l = laplacian(&g);
        let row: f64 = (0..g.size()).map(|j| l.get(g.index(2, 2), j)).sum();
        assert_eq!(row, 0.0);
        let h2 = g.spacing().powi(2);
        assert!((l.get(0, 0) * h2 + 4.0).abs() < 1e-12);
        assert!((l.get(0, 1) * h2 - 1.0).abs() < 1e-12);
        assert_eq!(l.get(g.index(4, 0), g.index(0, 1)), 0.0);
    }

    #[test]
    fn laplacian_spectrum_matches_closed_form() {
        let g = Grid2d::new(4).unwrap();
        let dense = laplacian(&g).to_dense();
        assert_eq!(dense, dense.transpose());
        let mut computed: Vec<f64> = eig_dense(&dense).unwrap().values.iter().map(|z| z.re).collect();
        let mut expected = laplacian_eigenvalues(&g);
        computed.sort_by(|a, b| a.partial_cmp(b).unwrap());
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (c, e) in computed.iter().zip(&expected) {
            assert!((c - e).abs() <= 1e-9 * e.abs(), "{c} vs {e}");
            assert!(*c < 0.0);
        }
    }

    #[test]
    fn reaction_vanishes_at_one() {
        let f = cubic_reaction(1.0);
        assert_eq!(f.eval(0.0, &[1.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn initial_rules() {
        let g = Grid2d::new(9).unwrap();
        let prod = parabolic_initial_state(&g, &ParabolicSpec::default());
        let (x, y) = g.coords(g.index(4, 4));
        assert_eq!((x, y), (0.5, 0.5));
        assert_eq!(prod[g.index(4, 4)], 0.1);
        assert_eq!(prod[g.index(0, 0)], 0.0);
        assert_eq!(prod[g.index(8, 8)], 0.0);
        let boxed = parabolic_initial_state(
            &g,
            &ParabolicSpec {
                initial: InitialRule::Box,
                ..Default::default()
            },
        );
        assert_eq!(boxed[g.index(0, 0)], 0.1);
        assert_eq!(boxed[g.index(8, 0)], 0.0);
    }

    #[test]
    fn parabolic_spec_validation() {
        let g = Grid2d::new(3).unwrap();
        let bad = ParabolicSpec {
            theta: 0.0,
            ..Default::default()
        };
        assert!(build_parabolic_fom(&g, &bad).is_err());
    }

    #[test]
    fn single_snapshot_is_initial_state() {
        let g = Grid2d::new(6).unwrap();
        let spec = ParabolicSpec::default();
        let pair = generate_snapshots_parabolic(&g, &spec, 0.01, 1).unwrap();
        assert_eq!(pair.states.len(), 1);
        assert_eq!(pair.states.data().column(0), &parabolic_initial_state(&g, &spec)[..]);
        assert!(generate_snapshots_parabolic(&g, &spec, 0.1, 51).is_err());
    }

    #[test]
    fn parabolic_states_respect_maximum_principle() {
        let g = Grid2d::new(12).unwrap();
        let spec = ParabolicSpec::default();
        let pair = generate_snapshots_parabolic(&g, &spec, spec.t_final / 200.0, 200).unwrap();
        let y = pair.states.data();
        assert!(y.as_slice().iter().all(|&v| (0.0..=1.0 + 1e-6).contains(&v)));
        // The run settles: the last increment is tiny compared with the first.
        let first: Vec<f64> = y.column(1).iter().zip(y.column(0)).map(|(a, b)| a - b).collect();
        let last: Vec<f64> = y.column(199).iter().zip(y.column(198)).map(|(a, b)| a - b).collect();
        assert!(norm2(&last) <= 1e-3 * norm2(&first));
        // Nonlinear snapshots are f evaluated on the states.
        let f = cubic_reaction(1.0).eval(0.0, y.column(37));
        assert_eq!(pair.nonlinear.data().column(37), &f[..]);
    }

    #[test]
    fn zero_state_residual_is_minus_source() {
        let g = Grid2d::new(5).unwrap();
        let fom = build_elliptic_fom(&g, &EllipticSpec::new(1.0, 2.0)).unwrap();
        let mut r = vec![0.0; g.size()];
        fom.residual_into(&vec![0.0; g.size()], &mut r);
        let src = elliptic_source(&g, 100.0);
        for (a, b) in r.iter().zip(&src) {
            assert!((a + b).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_mu2_is_domain_error() {
        let g = Grid2d::new(3).unwrap();
        assert!(matches!(build_elliptic_fom(&g, &EllipticSpec::new(1.0, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = Grid2d::new(6).unwrap();
        let fom = build_elliptic_fom(&g, &EllipticSpec::new(2.0, 1.5)).unwrap();
        let n = g.size();
        let u: Vec<f64> = (0..n).map(|i| 0.3 * (i as f64 * 0.7).sin()).collect();
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).cos()).collect();
        let eps = 1e-6;
        let plus: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
        let minus: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - eps * b).collect();
        let (mut rp, mut rm) = (vec![0.0; n], vec![0.0; n]);
        fom.residual_into(&plus, &mut rp);
        fom.residual_into(&minus, &mut rm);
        // J⁻¹ (R(u + εv) − R(u − εv)) / 2ε should give back v.
        let mut w: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        fom.jacobian_solver(&u).unwrap().solve_in_place(&mut w);
        let err: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a - b).collect();
        assert!(norm2(&err) <= 1e-6 * norm2(&v), "{}", norm2(&err) / norm2(&v));
    }

    #[test]
    fn small_parameters_approach_poisson() {
        let g = Grid2d::new(20).unwrap();
        let sol = solve_elliptic(&g, &EllipticSpec::new(0.01, 0.01), NewtonOptions::default()).unwrap();
        let mut poisson = elliptic_source(&g, 100.0);
        laplacian(&g).scaled(-1.0).cholesky().unwrap().solve_in_place(&mut poisson);
        let diff: Vec<f64> = sol.u.iter().zip(&poisson).map(|(a, b)| a - b).collect();
        assert!(norm2(&diff) <= 0.05 * norm2(&poisson));
        assert!(sol.residual <= 1e-10);
    }

    #[test]
    fn log_spacing() {
        let v = log_spaced(0.01, 10.0, 4).unwrap();
        for (a, b) in v.iter().zip([0.01, 0.1, 1.0, 10.0]) {
            assert!((a - b).abs() <= 1e-12 * b);
        }
        assert!(log_spaced(0.0, 1.0, 3).is_err());
        assert_eq!(parameter_grid(10).unwrap().len(), 100);
    }

    #[test]
    fn sweep_bookkeeping() {
        let g = Grid2d::new(6).unwrap();
        let samples = parameter_grid(10).unwrap();
        let sweep = generate_snapshots_elliptic(&g, &samples, Exec::default()).unwrap();
        assert_eq!(sweep.snapshots.states.len(), 100);
        assert!(sweep.failures.is_empty());
        assert!(sweep.iterations.iter().all(|&k| k <= 50));
        let dup = generate_snapshots_elliptic(&g, &[(0.5, 2.0), (0.5, 2.0)], Exec::Sequential).unwrap();
        let d = dup.snapshots.states.data();
        assert_eq!(d.column(0), d.column(1));
        assert!(generate_snapshots_elliptic(&g, &[(20.0, 1.0)], Exec::Sequential).is_err());
    }

    #[test]
    fn sweep_is_policy_independent() {
        let g = Grid2d::new(5).unwrap();
        let samples = parameter_grid(3).unwrap();
        let a = generate_snapshots_elliptic(&g, &samples, Exec::Sequential).unwrap();
        let b = generate_snapshots_elliptic(&g, &samples, Exec::Parallel).unwrap();
        assert_eq!(a.snapshots.states.data(), b.snapshots.states.data());
    }
}
