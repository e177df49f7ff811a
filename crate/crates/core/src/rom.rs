//! Galerkin reduced models, semi-implicit time stepping and steady Newton solves.
//!
//! A full-order model is `M ẏ = A y + f(t, y) + b` with a constant forcing
//! `b`. Projection onto an orthonormal basis `Ψ` gives
//! `Mℓ ẏℓ = Aℓ yℓ + Ψᵀ f(t, Ψ yℓ) + Ψᵀ b`, where the nonlinear term is either
//! lifted to full space or approximated by DEIM from `k` sampled entries.
//!
//! Time stepping is linearly-implicit Euler,
//! `(M − Δt A) y_{j+1} = M y_j + Δt (f(t_j, y_j) + b)`,
//! so the stepping matrix is factored once per run. Steady problems solve
//! `R(u) = −(A u + f(u) + b) = 0` by Newton's method from a zero guess.

use std::fmt;
use std::sync::Arc;

use crate::deim::DeimOperator;
use crate::error::{ensure, Error, Result};
use crate::linalg::{BandedCholesky, DenseMatrix, LuFactor, SymBanded};

/// Orthonormality tolerance on `‖ΨᵀΨ − I‖` for projection bases.
pub const BASIS_TOLERANCE: f64 = 1e-8;

/// Linear operator of a full-order model.
#[derive(Debug, Clone)]
pub enum LinearOperator {
    Identity(usize),
    Dense(DenseMatrix),
    Banded(SymBanded),
}

impl LinearOperator {
    pub fn dim(&self) -> usize {
        match self {
            Self::Identity(n) => *n,
            Self::Dense(m) => m.rows(),
            Self::Banded(b) => b.dim(),
        }
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        match self {
            Self::Identity(_) => y.copy_from_slice(x),
            Self::Dense(m) => m.matvec_into(x, y),
            Self::Banded(b) => b.matvec_into(x, y),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Self::Identity(n) => DenseMatrix::identity(*n),
            Self::Dense(m) => m.clone(),
            Self::Banded(b) => b.to_dense(),
        }
    }

    /// `Op Ψ`, column by column.
    fn apply_columns(&self, psi: &DenseMatrix) -> DenseMatrix {
        match self {
            Self::Identity(_) => psi.clone(),
            Self::Dense(m) => m.matmul(psi),
            Self::Banded(b) => {
                let mut out = DenseMatrix::zeros(psi.rows(), psi.cols());
                for j in 0..psi.cols() {
                    b.matvec_into(psi.column(j), out.column_mut(j));
                }
                out
            }
        }
    }

    /// `Ψᵀ Op Ψ`.
    pub fn project(&self, psi: &DenseMatrix) -> DenseMatrix {
        psi.tr_matmul(&self.apply_columns(psi))
    }
}

/// Scalar nonlinearity applied entrywise, `f(t, y)_i = g(t, y_i)`.
pub trait PointwiseFn: Send + Sync {
    fn value(&self, t: f64, u: f64) -> f64;
    /// `∂g/∂u`.
    fn derivative(&self, t: f64, u: f64) -> f64;
}

/// [`PointwiseFn`] from a pair of closures.
pub struct FnPointwise<F, D> {
    pub value: F,
    pub derivative: D,
}

impl<F, D> PointwiseFn for FnPointwise<F, D>
where
    F: Fn(f64, f64) -> f64 + Send + Sync,
    D: Fn(f64, f64) -> f64 + Send + Sync,
{
    fn value(&self, t: f64, u: f64) -> f64 {
        (self.value)(t, u)
    }

    fn derivative(&self, t: f64, u: f64) -> f64 {
        (self.derivative)(t, u)
    }
}

/// General nonlinearity `f(t, y)` writing into `out`.
pub trait VectorFn: Send + Sync {
    fn eval_into(&self, t: f64, y: &[f64], out: &mut [f64]);
}

impl<F> VectorFn for F
where
    F: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
{
    fn eval_into(&self, t: f64, y: &[f64], out: &mut [f64]) {
        self(t, y, out)
    }
}

#[derive(Clone, Default)]
pub enum Nonlinearity {
    #[default]
    None,
    Pointwise(Arc<dyn PointwiseFn>),
    /// Arbitrary coupling; full-lift projection only, no Newton Jacobian.
    Vector(Arc<dyn VectorFn>),
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "Nonlinearity::None",
            Self::Pointwise(_) => "Nonlinearity::Pointwise",
            Self::Vector(_) => "Nonlinearity::Vector",
        })
    }
}

impl Nonlinearity {
    pub fn pointwise<F, D>(value: F, derivative: D) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::Pointwise(Arc::new(FnPointwise { value, derivative }))
    }

    pub fn vector<F>(f: F) -> Self
    where
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self::Vector(Arc::new(f))
    }

    /// `out = f(t, y)`.
    pub fn eval_into(&self, t: f64, y: &[f64], out: &mut [f64]) {
        match self {
            Self::None => out.fill(0.0),
            Self::Pointwise(g) => {
                for (o, &u) in out.iter_mut().zip(y) {
                    *o = g.value(t, u);
                }
            }
            Self::Vector(g) => g.eval_into(t, y, out),
        }
    }

    pub fn eval(&self, t: f64, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        self.eval_into(t, y, &mut out);
        out
    }

    /// Diagonal of `∂f/∂y`, if the nonlinearity is entrywise.
    fn derivative_into(&self, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Self::None => out.fill(0.0),
            Self::Pointwise(g) => {
                for (o, &u) in out.iter_mut().zip(y) {
                    *o = g.derivative(t, u);
                }
            }
            Self::Vector(_) => {
                return Err(Error::InvalidInput(
                    "Newton needs an entrywise nonlinearity with a known derivative".into(),
                ))
            }
        }
        Ok(())
    }
}

/// `M ẏ = A y + f(t, y) + b`, `y(0) = y0`.
#[derive(Debug, Clone)]
pub struct FullOrderModel {
    pub mass: LinearOperator,
    pub stiffness: LinearOperator,
    pub nonlinearity: Nonlinearity,
    pub forcing: Vec<f64>,
    pub y0: Vec<f64>,
}

impl FullOrderModel {
    pub fn new(mass: LinearOperator, stiffness: LinearOperator, nonlinearity: Nonlinearity, y0: Vec<f64>) -> Result<Self> {
        let n = y0.len();
        Self::with_forcing(mass, stiffness, nonlinearity, vec![0.0; n], y0)
    }

    pub fn with_forcing(
        mass: LinearOperator,
        stiffness: LinearOperator,
        nonlinearity: Nonlinearity,
        forcing: Vec<f64>,
        y0: Vec<f64>,
    ) -> Result<Self> {
        let n = y0.len();
        ensure!(n >= 1, Error::Shape("full-order model needs at least one unknown".into()));
        for (name, d) in [("mass", mass.dim()), ("stiffness", stiffness.dim()), ("forcing", forcing.len())] {
            ensure!(d == n, Error::Shape(format!("{name} has dimension {d}, state has {n}")));
        }
        if let LinearOperator::Dense(m) = &mass {
            ensure!(m.rows() == m.cols(), Error::Shape("mass matrix is not square".into()));
        }
        if let LinearOperator::Dense(a) = &stiffness {
            ensure!(a.rows() == a.cols(), Error::Shape("stiffness matrix is not square".into()));
        }
        Ok(Self {
            mass,
            stiffness,
            nonlinearity,
            forcing,
            y0,
        })
    }

    pub fn dim(&self) -> usize {
        self.y0.len()
    }

    /// Same model with dense operators, stepping through dense LU.
    pub fn densified(&self) -> Self {
        Self {
            mass: LinearOperator::Dense(self.mass.to_dense()),
            stiffness: LinearOperator::Dense(self.stiffness.to_dense()),
            ..self.clone()
        }
    }

    /// `A y + f(t, y) + b`.
    pub fn rhs(&self, t: f64, y: &[f64]) -> Vec<f64> {
        let mut out = self.stiffness.apply(y);
        let nl = self.nonlinearity.eval(t, y);
        for ((o, a), b) in out.iter_mut().zip(&nl).zip(&self.forcing) {
            *o += a + b;
        }
        out
    }
}

/// How the reduced model evaluates its nonlinear term.
#[derive(Debug, Clone)]
pub enum NonlinearMode {
    /// `Ψᵀ f(t, Ψ yℓ)`, cost proportional to `n`.
    FullLift,
    /// `ΨᵀU(SᵀU)⁻¹ f_S(t, SᵀΨ yℓ)`, cost independent of `n`.
    Deim(DeimOperator),
}

#[derive(Debug, Clone)]
enum ReducedNonlinear {
    None,
    FullLift(Nonlinearity),
    Deim {
        g: Arc<dyn PointwiseFn>,
        /// `ΨᵀU(SᵀU)⁻¹`, `ℓ × k`.
        projected_interp: DenseMatrix,
        /// `SᵀΨ`, `k × ℓ`.
        sampled_basis: DenseMatrix,
        indices: Vec<usize>,
    },
}

impl fmt::Debug for dyn PointwiseFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PointwiseFn")
    }
}

/// Projected model `Mℓ ẏℓ = Aℓ yℓ + N(t, yℓ) + bℓ`.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    mass: DenseMatrix,
    stiffness: DenseMatrix,
    forcing: Vec<f64>,
    basis: DenseMatrix,
    y0: Vec<f64>,
    nonlinear: ReducedNonlinear,
    full_dim: usize,
}

impl ReducedModel {
    pub fn mass(&self) -> &DenseMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &DenseMatrix {
        &self.stiffness
    }

    pub fn forcing(&self) -> &[f64] {
        &self.forcing
    }

    pub fn basis(&self) -> &DenseMatrix {
        &self.basis
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    pub fn full_dim(&self) -> usize {
        self.full_dim
    }

    pub fn uses_deim(&self) -> bool {
        matches!(self.nonlinear, ReducedNonlinear::Deim { .. })
    }

    /// Interpolation rows when the model uses DEIM.
    pub fn deim_indices(&self) -> Option<&[usize]> {
        match &self.nonlinear {
            ReducedNonlinear::Deim { indices, .. } => Some(indices),
            _ => None,
        }
    }
}

/// Galerkin projection of `fom` onto the columns of `psi`.
pub fn project_model(fom: &FullOrderModel, psi: &DenseMatrix, mode: NonlinearMode) -> Result<ReducedModel> {
    let n = fom.dim();
    ensure!(
        psi.rows() == n && psi.cols() >= 1,
        Error::Shape(format!("basis is {}x{}, model has {n} unknowns", psi.rows(), psi.cols()))
    );
    let defect = psi.orthonormality_defect();
    ensure!(
        defect <= BASIS_TOLERANCE,
        Error::Basis(format!("basis is not orthonormal: ‖ΨᵀΨ − I‖ = {defect:.3e}"))
    );
    let nonlinear = match (&fom.nonlinearity, mode) {
        (Nonlinearity::None, _) => ReducedNonlinear::None,
        (nl, NonlinearMode::FullLift) => ReducedNonlinear::FullLift(nl.clone()),
        (Nonlinearity::Pointwise(g), NonlinearMode::Deim(op)) => {
            ensure!(
                op.dim() == n,
                Error::Shape(format!("DEIM operator has dimension {}, model has {n}", op.dim()))
            );
            ReducedNonlinear::Deim {
                g: g.clone(),
                projected_interp: psi.tr_matmul(op.interp_map()),
                sampled_basis: psi.select_rows(op.indices()),
                indices: op.indices().to_vec(),
            }
        }
        (Nonlinearity::Vector(_), NonlinearMode::Deim(_)) => {
            return Err(Error::InvalidInput(
                "DEIM needs an entrywise nonlinearity; use full lift for coupled terms".into(),
            ))
        }
    };
    Ok(ReducedModel {
        mass: fom.mass.project(psi),
        stiffness: fom.stiffness.project(psi),
        forcing: psi.tr_matvec(&fom.forcing),
        basis: psi.clone(),
        y0: psi.tr_matvec(&fom.y0),
        nonlinear,
        full_dim: n,
    })
}

/// Preallocated buffers for nonlinear evaluations.
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    full_in: Vec<f64>,
    full_out: Vec<f64>,
    points_in: Vec<f64>,
    points_out: Vec<f64>,
}

/// Solver for the constant stepping matrix `M − Δt A` or a Newton Jacobian.
#[derive(Debug)]
pub enum LinearSolver {
    Lu(LuFactor),
    Cholesky(BandedCholesky),
}

impl LinearSolver {
    pub fn solve_in_place(&self, x: &mut [f64]) {
        match self {
            Self::Lu(lu) => lu.solve_vec_in_place(x),
            Self::Cholesky(c) => c.solve_in_place(x),
        }
    }

    fn dense(a: &DenseMatrix) -> Result<Self> {
        Ok(Self::Lu(LuFactor::new(a)?))
    }

    /// Banded Cholesky when the matrix is positive definite, dense LU otherwise.
    fn banded(a: &SymBanded) -> Result<Self> {
        match a.cholesky() {
            Ok(c) => Ok(Self::Cholesky(c)),
            Err(_) => Self::dense(&a.to_dense()),
        }
    }
}

/// System advanced by [`integrate_semi_implicit`].
pub trait SemiImplicitSystem {
    fn dim(&self) -> usize;
    fn initial_state(&self) -> &[f64];
    /// Factorization of `M − Δt A`.
    fn stepping_solver(&self, dt: f64) -> Result<LinearSolver>;
    fn apply_mass(&self, y: &[f64], out: &mut [f64]);
    /// Buffers sized for [`SemiImplicitSystem::explicit_term`].
    fn scratch(&self) -> Scratch;
    /// `out = N(t, y) + b`, the explicitly treated part of the right side.
    fn explicit_term(&self, t: f64, y: &[f64], out: &mut [f64], scratch: &mut Scratch);
}

fn explicit_full(fom: &FullOrderModel, t: f64, y: &[f64], out: &mut [f64]) {
    fom.nonlinearity.eval_into(t, y, out);
    for (o, b) in out.iter_mut().zip(&fom.forcing) {
        *o += b;
    }
}

impl SemiImplicitSystem for FullOrderModel {
    fn dim(&self) -> usize {
        FullOrderModel::dim(self)
    }

    fn initial_state(&self) -> &[f64] {
        &self.y0
    }

    fn stepping_solver(&self, dt: f64) -> Result<LinearSolver> {
        use LinearOperator::*;
        match (&self.mass, &self.stiffness) {
            (Identity(_), Banded(a)) => LinearSolver::banded(&a.scaled(-dt).shifted(1.0)),
            (Banded(m), Banded(a)) if m.bandwidth() == a.bandwidth() => {
                let mut s = a.scaled(-dt);
                let n = m.dim();
                for i in 0..n {
                    for j in i.saturating_sub(m.bandwidth())..=i {
                        s.set(i, j, s.get(i, j) + m.get(i, j));
                    }
                }
                LinearSolver::banded(&s)
            }
            (m, a) => LinearSolver::dense(&m.to_dense().sub(&a.to_dense().scaled(dt))),
        }
    }

    fn apply_mass(&self, y: &[f64], out: &mut [f64]) {
        self.mass.apply_into(y, out);
    }

    fn scratch(&self) -> Scratch {
        Scratch::default()
    }

    fn explicit_term(&self, t: f64, y: &[f64], out: &mut [f64], _scratch: &mut Scratch) {
        explicit_full(self, t, y, out);
    }
}

impl ReducedModel {
    /// `out = N(t, yℓ)` without the forcing.
    fn nonlinear_term(&self, t: f64, y: &[f64], out: &mut [f64], s: &mut Scratch) {
        match &self.nonlinear {
            ReducedNonlinear::None => out.fill(0.0),
            ReducedNonlinear::FullLift(nl) => {
                self.basis.matvec_into(y, &mut s.full_in);
                nl.eval_into(t, &s.full_in, &mut s.full_out);
                self.basis.tr_matvec_into(&s.full_out, out);
            }
            ReducedNonlinear::Deim {
                g,
                projected_interp,
                sampled_basis,
                ..
            } => {
                sampled_basis.matvec_into(y, &mut s.points_in);
                for (o, &u) in s.points_out.iter_mut().zip(&s.points_in) {
                    *o = g.value(t, u);
                }
                projected_interp.matvec_into(&s.points_out, out);
            }
        }
    }
}

impl SemiImplicitSystem for ReducedModel {
    fn dim(&self) -> usize {
        self.rank()
    }

    fn initial_state(&self) -> &[f64] {
        &self.y0
    }

    fn stepping_solver(&self, dt: f64) -> Result<LinearSolver> {
        LinearSolver::dense(&self.mass.sub(&self.stiffness.scaled(dt)))
    }

    fn apply_mass(&self, y: &[f64], out: &mut [f64]) {
        self.mass.matvec_into(y, out);
    }

    fn scratch(&self) -> Scratch {
        match &self.nonlinear {
            ReducedNonlinear::None => Scratch::default(),
            ReducedNonlinear::FullLift(_) => Scratch {
                full_in: vec![0.0; self.full_dim],
                full_out: vec![0.0; self.full_dim],
                ..Scratch::default()
            },
            ReducedNonlinear::Deim { indices, .. } => Scratch {
                points_in: vec![0.0; indices.len()],
                points_out: vec![0.0; indices.len()],
                ..Scratch::default()
            },
        }
    }

    fn explicit_term(&self, t: f64, y: &[f64], out: &mut [f64], scratch: &mut Scratch) {
        self.nonlinear_term(t, y, out, scratch);
        for (o, b) in out.iter_mut().zip(&self.forcing) {
            *o += b;
        }
    }
}

/// `Aℓ yℓ + N(t, yℓ) + bℓ`.
pub fn reduced_rhs(model: &ReducedModel, t: f64, y: &[f64]) -> Result<Vec<f64>> {
    ensure!(
        y.len() == model.rank(),
        Error::Shape(format!("reduced state has length {}, model rank is {}", y.len(), model.rank()))
    );
    let mut scratch = model.scratch();
    let mut out = vec![0.0; y.len()];
    model.explicit_term(t, y, &mut out, &mut scratch);
    let ay = model.stiffness.matvec(y);
    for (o, a) in out.iter_mut().zip(&ay) {
        *o += a;
    }
    Ok(out)
}

/// States at `times[j]`, one column each.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: DenseMatrix,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.column(self.states.cols() - 1)
    }
}

/// One-step map of the linearly-implicit Euler scheme with all buffers
/// allocated up front; [`Stepper::step`] performs no allocation of its own.
pub struct Stepper<'a, S: SemiImplicitSystem + ?Sized> {
    system: &'a S,
    solver: LinearSolver,
    dt: f64,
    explicit: Vec<f64>,
    scratch: Scratch,
}

impl<'a, S: SemiImplicitSystem + ?Sized> Stepper<'a, S> {
    pub fn new(system: &'a S, dt: f64) -> Result<Self> {
        ensure!(
            dt > 0.0 && dt.is_finite(),
            Error::InvalidInput(format!("time step must be positive, got {dt}"))
        );
        Ok(Self {
            solver: system.stepping_solver(dt)?,
            explicit: vec![0.0; system.dim()],
            scratch: system.scratch(),
            system,
            dt,
        })
    }

    /// Writes `y(t + Δt)` into `next`.
    pub fn step(&mut self, t: f64, y: &[f64], next: &mut [f64]) {
        self.system.apply_mass(y, next);
        self.system.explicit_term(t, y, &mut self.explicit, &mut self.scratch);
        for (r, e) in next.iter_mut().zip(&self.explicit) {
            *r += self.dt * e;
        }
        self.solver.solve_in_place(next);
    }
}

/// Number of steps of size `dt` that cover `[0, t_final]`.
pub fn step_count(dt: f64, t_final: f64) -> Result<usize> {
    ensure!(
        dt > 0.0 && dt.is_finite(),
        Error::InvalidInput(format!("time step must be positive, got {dt}"))
    );
    ensure!(
        t_final >= 0.0 && t_final.is_finite(),
        Error::InvalidInput(format!("final time must be non-negative, got {t_final}"))
    );
    Ok((t_final / dt - 1e-9).ceil().max(0.0) as usize)
}

/// Integrates from `t = 0` with step `dt` until `t_final` (the last step may
/// overshoot by less than one step). The returned trajectory includes `t = 0`.
pub fn integrate_semi_implicit<S: SemiImplicitSystem + ?Sized>(system: &S, dt: f64, t_final: f64) -> Result<Trajectory> {
    let steps = step_count(dt, t_final)?;
    integrate_steps(system, dt, steps)
}

/// Integrates exactly `steps` steps of size `dt`.
pub fn integrate_steps<S: SemiImplicitSystem + ?Sized>(system: &S, dt: f64, steps: usize) -> Result<Trajectory> {
    let n = system.dim();
    let mut stepper = Stepper::new(system, dt)?;
    let mut states = DenseMatrix::zeros(n, steps + 1);
    states.column_mut(0).copy_from_slice(system.initial_state());
    let data = states.as_mut_slice();
    for j in 0..steps {
        let (done, rest) = data.split_at_mut((j + 1) * n);
        let y = &done[j * n..];
        let next = &mut rest[..n];
        stepper.step(j as f64 * dt, y, next);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { step: j + 1 });
        }
    }
    Ok(Trajectory {
        times: (0..=steps).map(|j| j as f64 * dt).collect(),
        states,
    })
}

/// Newton stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Tolerance on `‖R(u)‖∞`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonSolution {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Residual and Jacobian access for [`solve_steady_newton`].
pub trait SteadySystem {
    fn dim(&self) -> usize;
    fn residual_into(&self, u: &[f64], out: &mut [f64]);
    /// Factorization of `∂R/∂u` at `u`.
    fn jacobian_solver(&self, u: &[f64]) -> Result<LinearSolver>;
}

impl SteadySystem for FullOrderModel {
    fn dim(&self) -> usize {
        FullOrderModel::dim(self)
    }

    fn residual_into(&self, u: &[f64], out: &mut [f64]) {
        let mut f = vec![0.0; u.len()];
        explicit_full(self, 0.0, u, &mut f);
        self.stiffness.apply_into(u, out);
        for (o, fi) in out.iter_mut().zip(&f) {
            *o = -(*o + fi);
        }
    }

    fn jacobian_solver(&self, u: &[f64]) -> Result<LinearSolver> {
        let mut d = vec![0.0; u.len()];
        self.nonlinearity.derivative_into(0.0, u, &mut d)?;
        d.iter_mut().for_each(|x| *x = -*x);
        match &self.stiffness {
            LinearOperator::Banded(a) => LinearSolver::banded(&a.scaled(-1.0).plus_diagonal(&d)),
            other => {
                let mut j = other.to_dense().scaled(-1.0);
                for (i, di) in d.iter().enumerate() {
                    j[(i, i)] += di;
                }
                LinearSolver::dense(&j)
            }
        }
    }
}

impl SteadySystem for ReducedModel {
    fn dim(&self) -> usize {
        self.rank()
    }

    fn residual_into(&self, u: &[f64], out: &mut [f64]) {
        let mut scratch = self.scratch();
        self.explicit_term(0.0, u, out, &mut scratch);
        let au = self.stiffness.matvec(u);
        for (o, a) in out.iter_mut().zip(&au) {
            *o = -(*o + a);
        }
    }

    fn jacobian_solver(&self, u: &[f64]) -> Result<LinearSolver> {
        let mut j = self.stiffness.scaled(-1.0);
        match &self.nonlinear {
            ReducedNonlinear::None => {}
            ReducedNonlinear::FullLift(nl) => {
                // −Ψᵀ diag(f'(Ψu)) Ψ
                let lifted = self.basis.matvec(u);
                let mut d = vec![0.0; lifted.len()];
                nl.derivative_into(0.0, &lifted, &mut d)?;
                d.iter_mut().for_each(|x| *x = -*x);
                let scaled = DenseMatrix::from_fn(self.basis.rows(), self.basis.cols(), |i, c| d[i] * self.basis[(i, c)]);
                j = j.add(&self.basis.tr_matmul(&scaled));
            }
            ReducedNonlinear::Deim {
                g,
                projected_interp,
                sampled_basis,
                ..
            } => {
                // −ΨᵀU(SᵀU)⁻¹ diag(g'(SᵀΨu)) SᵀΨ
                let pts = sampled_basis.matvec(u);
                let scaled = DenseMatrix::from_fn(sampled_basis.rows(), sampled_basis.cols(), |i, c| {
                    -g.derivative(0.0, pts[i]) * sampled_basis[(i, c)]
                });
                j = j.add(&projected_interp.matmul(&scaled));
            }
        }
        LinearSolver::dense(&j)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Newton's method for `R(u) = 0` from `u = 0`.
pub fn solve_steady_newton<S: SteadySystem + ?Sized>(system: &S, opts: NewtonOptions) -> Result<NewtonSolution> {
    let n = system.dim();
    let mut u = vec![0.0; n];
    let mut r = vec![0.0; n];
    for iterations in 0..=opts.max_iter {
        system.residual_into(&u, &mut r);
        let residual = inf_norm(&r);
        if !residual.is_finite() {
            return Err(Error::NonConvergence { iterations, residual });
        }
        if residual <= opts.tol {
            return Ok(NewtonSolution { u, iterations, residual });
        }
        if iterations == opts.max_iter {
            return Err(Error::NonConvergence { iterations, residual });
        }
        system.jacobian_solver(&u)?.solve_in_place(&mut r);
        for (ui, d) in u.iter_mut().zip(&r) {
            *ui -= d;
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// `Ψ Yℓ`, lifting every reduced state to full space.
pub fn lift(psi: &DenseMatrix, reduced: &DenseMatrix) -> Result<DenseMatrix> {
    ensure!(
        psi.cols() == reduced.rows(),
        Error::Shape(format!(
            "basis has {} columns, reduced states have {} rows",
            psi.cols(),
            reduced.rows()
        ))
    );
    Ok(psi.matmul(reduced))
}
