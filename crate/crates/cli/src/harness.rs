//! Snapshot generation, the six-method comparison and the commands built on it.
//!
//! Every method of one run reduces the same snapshot data and is scored
//! against the same full-order reference: the stored state trajectory for
//! the parabolic test, Newton solutions at held-out parameters for the
//! elliptic one. Offline time covers basis construction and operator
//! assembly; online time covers the reduced solves only.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use rmor::deim::{build_deim, select_points, DeimOperator, PointSelection};
use rmor::dmd::{cdmd, exact_dmd, measurement_matrix, realify_modes, DmdModel, Ensemble};
use rmor::error::Error;
use rmor::exec::Exec;
use rmor::linalg::DenseMatrix;
use rmor::models::{
    build_elliptic_fom, build_parabolic_fom, generate_snapshots_elliptic, generate_snapshots_parabolic, parameter_grid,
    solve_elliptic, EllipticSpec, Grid2d, ParabolicSpec, SnapshotPair, PARAMETER_RANGE,
};
use rmor::pod::{cpod_basis, pod_basis, PodBasis, SnapshotMatrix, Stamps};
use rmor::rom::{integrate_steps, lift, project_model, solve_steady_newton, NewtonOptions, NonlinearMode};

use crate::config::{Method, RunConfig, TestId};
use crate::error::{CliError, Result};
use crate::io::{load_snapshots, save_json, save_matrix_csv, save_rows_csv, save_snapshots};
use crate::metrics::rel_frobenius_error;

pub const STATES_FILE: &str = "states.rmor";
pub const NONLINEAR_FILE: &str = "nonlinear.rmor";

/// One CSV row of a bench run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub rank: usize,
    /// Sketch columns or measurements; 0 for deterministic methods.
    pub samples: usize,
    pub seed: u64,
    pub offline_s: f64,
    pub online_s: f64,
    pub rel_frob_err: Option<f64>,
    pub status: String,
}

impl BenchRow {
    pub fn failed(&self) -> bool {
        self.status.starts_with("error")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub test: TestId,
    pub grid: usize,
    pub dim: usize,
    pub snapshots: usize,
    pub rows: Vec<BenchRow>,
    /// Sweep failures and other run-level remarks.
    pub notes: Vec<String>,
}

impl BenchReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failed()).count()
    }

    pub fn row(&self, method: Method) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method.name())
    }
}

#[derive(Serialize)]
struct JsonRow<'a> {
    #[serde(flatten)]
    row: &'a BenchRow,
    /// Offline plus online time.
    total_s: f64,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    config: &'a RunConfig,
    test: TestId,
    grid: usize,
    dim: usize,
    snapshots: usize,
    rows: Vec<JsonRow<'a>>,
    notes: &'a [String],
}

enum Kind {
    Parabolic {
        spec: ParabolicSpec,
        dt: f64,
    },
    Elliptic {
        held_out: Vec<(f64, f64)>,
    },
}

/// Snapshot data and full-order reference shared by all methods of a run.
pub struct Problem {
    pub grid: Grid2d,
    pub snapshots: SnapshotPair,
    pub reference: DenseMatrix,
    pub notes: Vec<String>,
    kind: Kind,
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.grid.size()
    }

    /// Held-out parameters of the elliptic test.
    pub fn held_out(&self) -> Option<&[(f64, f64)]> {
        match &self.kind {
            Kind::Elliptic { held_out } => Some(held_out),
            Kind::Parabolic { .. } => None,
        }
    }
}

fn load_pair(dir: &Path, grid: &Grid2d) -> Result<SnapshotPair> {
    let states = load_snapshots(&dir.join(STATES_FILE))?;
    let nonlinear = load_snapshots(&dir.join(NONLINEAR_FILE))?;
    if states.dim() != grid.size() || nonlinear.dim() != grid.size() || states.len() != nonlinear.len() {
        return Err(CliError::Config(format!(
            "snapshots in {} are {}x{} / {}x{}, grid {} needs {} rows",
            dir.display(),
            states.dim(),
            states.len(),
            nonlinear.dim(),
            nonlinear.len(),
            grid.points_per_side(),
            grid.size()
        )));
    }
    Ok(SnapshotPair { states, nonlinear })
}

/// Seeded log-uniform draws from the parameter box.
pub fn held_out_parameters(count: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_4e1d);
    let (lo, hi) = (PARAMETER_RANGE.0.log10(), PARAMETER_RANGE.1.log10());
    (0..count)
        .map(|_| (10f64.powf(rng.random_range(lo..hi)), 10f64.powf(rng.random_range(lo..hi))))
        .collect()
}

/// Generates (or loads) snapshots and computes the full-order reference.
pub fn prepare(config: &RunConfig) -> Result<Problem> {
    config.validate()?;
    let grid = Grid2d::new(config.grid)?;
    match config.test {
        TestId::Parabolic => {
            let spec = ParabolicSpec::default();
            let (snapshots, dt) = match &config.input {
                Some(dir) => {
                    let pair = load_pair(dir, &grid)?;
                    let dt = match pair.states.stamps() {
                        Stamps::Times(t) if t.len() >= 2 => t[1] - t[0],
                        _ => return Err(CliError::Config("parabolic input needs at least two time stamps".into())),
                    };
                    (pair, dt)
                }
                None => {
                    let dt = spec.t_final / config.snapshots as f64;
                    (generate_snapshots_parabolic(&grid, &spec, dt, config.snapshots)?, dt)
                }
            };
            Ok(Problem {
                grid,
                reference: snapshots.states.data().clone(),
                snapshots,
                notes: Vec::new(),
                kind: Kind::Parabolic { spec, dt },
            })
        }
        TestId::Elliptic => {
            let mut notes = Vec::new();
            let snapshots = match &config.input {
                Some(dir) => load_pair(dir, &grid)?,
                None => {
                    let samples = parameter_grid(config.training_axis()?)?;
                    let sweep = generate_snapshots_elliptic(&grid, &samples, Exec::default())?;
                    for (i, e) in &sweep.failures {
                        notes.push(format!("training sample {i} {:?} failed: {e}", samples[*i]));
                    }
                    sweep.snapshots
                }
            };
            let held_out = held_out_parameters(config.held_out, config.seed);
            let solutions = Exec::default().map(held_out.len(), |i| {
                let (a, b) = held_out[i];
                solve_elliptic(&grid, &EllipticSpec::new(a, b), NewtonOptions::default()).map(|s| s.u)
            });
            let solutions = solutions.into_iter().collect::<std::result::Result<Vec<_>, Error>>()?;
            Ok(Problem {
                grid,
                reference: DenseMatrix::from_columns(&solutions)?,
                snapshots,
                notes,
                kind: Kind::Elliptic { held_out },
            })
        }
    }
}

/// Reduced basis (and DEIM operator) produced by one method.
pub struct Reduction {
    pub basis: DenseMatrix,
    pub deim: Option<DeimOperator>,
    pub samples: usize,
    pub warning: Option<String>,
    /// Retained singular values for POD-type bases.
    pub sigma: Option<Vec<f64>>,
    pub dmd: Option<DmdModel>,
}

fn shifted_pair(states: &SnapshotMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let y = states.data();
    if y.cols() < 2 {
        return Err(Error::Shape("DMD needs at least two snapshots".into()).into());
    }
    Ok((y.columns_range(0, y.cols() - 1), y.columns_range(1, y.cols())))
}

fn deim_from(basis: &PodBasis) -> Result<DeimOperator> {
    let u = &basis.modes;
    Ok(build_deim(u, &select_points(u, PointSelection::Greedy)?)?)
}

fn pod_reduction(b: PodBasis, samples: usize, deim: Option<(DeimOperator, Option<String>)>) -> Reduction {
    let mut warning = b.warning();
    let deim = deim.map(|(op, w)| {
        if let Some(w) = w {
            warning = Some(match warning.take() {
                Some(x) => format!("{x}; nonlinear basis: {w}"),
                None => format!("nonlinear basis: {w}"),
            });
        }
        op
    });
    Reduction {
        sigma: Some(b.sigma.clone()),
        basis: b.modes,
        deim,
        samples,
        warning,
        dmd: None,
    }
}

fn dmd_reduction(model: DmdModel, rank: usize, samples: usize) -> Result<Reduction> {
    let real = realify_modes(&model, rank)?;
    Ok(Reduction {
        warning: real.warning(),
        basis: real.modes,
        deim: None,
        samples,
        sigma: None,
        dmd: Some(model),
    })
}

/// Builds the reduced basis of `method` from the run's snapshots.
pub fn build_reduction(method: Method, pair: &SnapshotPair, config: &RunConfig) -> Result<Reduction> {
    let (l, k, seed) = (config.rank, config.nl_rank, config.seed);
    let states = &pair.states;
    match method {
        Method::Pod => Ok(pod_reduction(pod_basis(states, l)?, 0, None)),
        Method::Cpod => {
            let cfg = config.sketch_for(l, seed);
            Ok(pod_reduction(cpod_basis(states, l, &cfg)?, cfg.samples(), None))
        }
        Method::PodDeim => {
            let nl = pod_basis(&pair.nonlinear, k)?;
            let op = deim_from(&nl)?;
            Ok(pod_reduction(pod_basis(states, l)?, 0, Some((op, nl.warning()))))
        }
        Method::CpodCdeim => {
            let cfg = config.sketch_for(l, seed);
            let nl = cpod_basis(&pair.nonlinear, k, &config.sketch_for(k, seed.wrapping_add(1)))?;
            let op = deim_from(&nl)?;
            Ok(pod_reduction(cpod_basis(states, l, &cfg)?, cfg.samples(), Some((op, nl.warning()))))
        }
        Method::Dmd => {
            let (y, yp) = shifted_pair(states)?;
            dmd_reduction(exact_dmd(&y, &yp, l)?, l, 0)
        }
        Method::Cdmd => {
            let (y, yp) = shifted_pair(states)?;
            let p = config.samples_for(l).min(y.rows());
            let c = measurement_matrix(p, y.rows(), Ensemble::Gaussian, seed)?;
            dmd_reduction(cdmd(&y, &yp, &c, l)?, l, p)
        }
    }
}

fn nonlinear_mode(r: &Reduction) -> NonlinearMode {
    match &r.deim {
        Some(op) => NonlinearMode::Deim(op.clone()),
        None => NonlinearMode::FullLift,
    }
}

/// Outcome of one method: the CSV row and, on success, the lifted approximation.
pub struct MethodRun {
    pub row: BenchRow,
    pub approx: Option<DenseMatrix>,
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let v = f()?;
    Ok((v, start.elapsed().as_secs_f64()))
}

fn reduce_and_solve(problem: &Problem, method: Method, config: &RunConfig) -> Result<(Reduction, DenseMatrix, f64, f64)> {
    match &problem.kind {
        Kind::Parabolic { spec, dt } => {
            let fom = build_parabolic_fom(&problem.grid, spec)?;
            let ((red, rom), offline) = timed(|| {
                let red = build_reduction(method, &problem.snapshots, config)?;
                let rom = project_model(&fom, &red.basis, nonlinear_mode(&red))?;
                Ok((red, rom))
            })?;
            let steps = problem.reference.cols() - 1;
            let (traj, online) = timed(|| Ok(integrate_steps(&rom, *dt, steps)?))?;
            let approx = lift(&red.basis, &traj.states)?;
            Ok((red, approx, offline, online))
        }
        Kind::Elliptic { held_out } => {
            let ((red, roms), offline) = timed(|| {
                let red = build_reduction(method, &problem.snapshots, config)?;
                let roms = held_out
                    .iter()
                    .map(|&(a, b)| {
                        let fom = build_elliptic_fom(&problem.grid, &EllipticSpec::new(a, b))?;
                        Ok(project_model(&fom, &red.basis, nonlinear_mode(&red))?)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((red, roms))
            })?;
            let (coords, online) = timed(|| {
                roms.iter()
                    .map(|rom| Ok(solve_steady_newton(rom, NewtonOptions::default())?.u))
                    .collect::<Result<Vec<_>>>()
            })?;
            let approx = lift(&red.basis, &DenseMatrix::from_columns(&coords)?)?;
            Ok((red, approx, offline, online))
        }
    }
}

/// Runs one method end to end. Failures become an error row, never an `Err`.
pub fn run_method(problem: &Problem, method: Method, config: &RunConfig) -> MethodRun {
    let seed = if method.is_randomized() { config.seed } else { 0 };
    match reduce_and_solve(problem, method, config).and_then(|(red, approx, offline, online)| {
        let err = rel_frobenius_error(&problem.reference, &approx)?;
        Ok((red, approx, offline, online, err))
    }) {
        Ok((red, approx, offline, online, err)) => MethodRun {
            row: BenchRow {
                method: method.name().into(),
                rank: red.basis.cols(),
                samples: red.samples,
                seed,
                offline_s: offline,
                online_s: online,
                rel_frob_err: Some(err),
                status: red.warning.map_or_else(|| "ok".into(), |w| format!("ok: {w}")),
            },
            approx: Some(approx),
        },
        Err(e) => MethodRun {
            row: BenchRow {
                method: method.name().into(),
                rank: config.rank,
                samples: 0,
                seed,
                offline_s: 0.0,
                online_s: 0.0,
                rel_frob_err: None,
                status: format!("error: {e}"),
            },
            approx: None,
        },
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_report(config: &RunConfig, report: &BenchReport) -> Result<()> {
    ensure_dir(&config.out)?;
    save_rows_csv(&config.out.join("bench.csv"), &report.rows)?;
    let json = JsonReport {
        config,
        test: report.test,
        grid: report.grid,
        dim: report.dim,
        snapshots: report.snapshots,
        rows: report
            .rows
            .iter()
            .map(|row| JsonRow {
                row,
                total_s: row.offline_s + row.online_s,
            })
            .collect(),
        notes: &report.notes,
    };
    save_json(&config.out.join("bench.json"), &json)
}

fn run_all(config: &RunConfig, keep_solutions: bool) -> Result<(BenchReport, Vec<(Method, DenseMatrix)>)> {
    let problem = prepare(config)?;
    let mut rows = Vec::new();
    let mut solutions = Vec::new();
    for &method in &config.methods {
        let run = run_method(&problem, method, config);
        if let (true, Some(a)) = (keep_solutions, run.approx) {
            solutions.push((method, a));
        }
        rows.push(run.row);
    }
    let report = BenchReport {
        test: config.test,
        grid: config.grid,
        dim: problem.dim(),
        snapshots: problem.snapshots.states.len(),
        rows,
        notes: problem.notes,
    };
    Ok((report, solutions))
}

/// Six-method comparison; writes `bench.csv` and `bench.json` to the output directory.
pub fn cmd_bench(config: &RunConfig) -> Result<BenchReport> {
    let (report, _) = run_all(config, false)?;
    write_report(config, &report)?;
    Ok(report)
}

/// Like [`cmd_bench`], and also writes each lifted reduced solution as `rom_<method>.csv`.
pub fn cmd_rom(config: &RunConfig) -> Result<BenchReport> {
    let (report, solutions) = run_all(config, true)?;
    write_report(config, &report)?;
    for (method, a) in solutions {
        save_matrix_csv(&config.out.join(format!("rom_{}.csv", method.name())), &a)?;
    }
    Ok(report)
}

/// Writes `states.rmor` and `nonlinear.rmor`; returns their paths.
pub fn cmd_simulate(config: &RunConfig) -> Result<(PathBuf, PathBuf, Vec<String>)> {
    let fresh = RunConfig {
        input: None,
        ..config.clone()
    };
    let problem = prepare(&fresh)?;
    ensure_dir(&config.out)?;
    let s = config.out.join(STATES_FILE);
    let f = config.out.join(NONLINEAR_FILE);
    save_snapshots(&s, &problem.snapshots.states)?;
    save_snapshots(&f, &problem.snapshots.nonlinear)?;
    Ok((s, f, problem.notes))
}

/// Writes `basis_<method>.csv` (and `sigma_<method>.csv` for POD-type methods).
pub fn cmd_basis(config: &RunConfig) -> Result<Vec<(Method, std::result::Result<usize, String>)>> {
    let problem = prepare(config)?;
    ensure_dir(&config.out)?;
    let mut out = Vec::new();
    for &method in &config.methods {
        match build_reduction(method, &problem.snapshots, config) {
            Ok(red) => {
                save_matrix_csv(&config.out.join(format!("basis_{}.csv", method.name())), &red.basis)?;
                if let Some(sigma) = &red.sigma {
                    let col = DenseMatrix::new(sigma.len(), 1, sigma.clone())?;
                    save_matrix_csv(&config.out.join(format!("sigma_{}.csv", method.name())), &col)?;
                }
                out.push((method, Ok(red.basis.cols())));
            }
            Err(e) => out.push((method, Err(e.to_string()))),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EigenRow {
    pub method: String,
    pub index: usize,
    pub re: f64,
    pub im: f64,
    pub abs: f64,
}

/// DMD / cDMD spectra of the run's snapshots, written to `dmd_eigenvalues.csv`.
pub fn cmd_dmd(config: &RunConfig) -> Result<Vec<EigenRow>> {
    let problem = prepare(config)?;
    ensure_dir(&config.out)?;
    let mut rows = Vec::new();
    let methods: Vec<Method> = config
        .methods
        .iter()
        .copied()
        .filter(|m| matches!(m, Method::Dmd | Method::Cdmd))
        .collect();
    let methods = if methods.is_empty() { vec![Method::Dmd, Method::Cdmd] } else { methods };
    for method in methods {
        let red = build_reduction(method, &problem.snapshots, config)?;
        let model = red.dmd.expect("DMD methods carry their model");
        for (i, z) in model.eigenvalues.iter().enumerate() {
            rows.push(EigenRow {
                method: method.name().into(),
                index: i,
                re: z.re,
                im: z.im,
                abs: z.norm(),
            });
        }
    }
    save_rows_csv(&config.out.join("dmd_eigenvalues.csv"), &rows)?;
    Ok(rows)
}
