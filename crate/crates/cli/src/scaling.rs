//! Full SVD against randomized SVD on square snapshot matrices of growing size.
//!
//! Snapshots come from the separable 1-D heat solution
//! `y(x, t) = Σ_k k⁻¹ e^{−κ k² π² t} sin(kπx)` sampled on `n` interior points
//! and `n` times in `[0, 1]`, so every size has the same smooth, fast-decaying
//! spectrum and nothing but the dimension changes between rows.

use std::f64::consts::PI;
use std::fs;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use rmor::linalg::{svd_thin, DenseMatrix};
use rmor::sketch::rsvd;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::save_rows_csv;

const HEAT_MODES: usize = 40;
const DIFFUSIVITY: f64 = 0.01;
/// Dense copies alive during a full SVD: the input, `U`, `V` and workspace.
const SVD_WORKING_COPIES: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub t_svd_s: Option<f64>,
    pub t_rsvd_s: Option<f64>,
    pub speedup: Option<f64>,
    pub err_svd: Option<f64>,
    pub err_rsvd: Option<f64>,
    pub status: String,
}

/// `n × n` heat-equation snapshot matrix.
pub fn heat_snapshots(n: usize) -> DenseMatrix {
    let h = 1.0 / (n as f64 + 1.0);
    let dt = if n > 1 { 1.0 / (n as f64 - 1.0) } else { 0.0 };
    let mut y = DenseMatrix::zeros(n, n);
    let mut space = vec![0.0; n];
    for k in 1..=HEAT_MODES {
        let kf = k as f64;
        for (i, s) in space.iter_mut().enumerate() {
            *s = (kf * PI * (i as f64 + 1.0) * h).sin() / kf;
        }
        let rate = DIFFUSIVITY * kf * kf * PI * PI;
        for j in 0..n {
            let decay = (-rate * j as f64 * dt).exp();
            for (v, s) in y.column_mut(j).iter_mut().zip(&space) {
                *v += decay * s;
            }
        }
    }
    y
}

/// `‖Y − U Uᵀ Y‖_F / ‖Y‖_F`.
pub fn projection_error(y: &DenseMatrix, u: &DenseMatrix) -> f64 {
    let proj = u.matmul(&u.tr_matmul(y));
    y.sub(&proj).frobenius_norm() / y.frobenius_norm()
}

pub fn working_set_bytes(n: usize) -> u64 {
    SVD_WORKING_COPIES * 8 * (n as u64) * (n as u64)
}

fn measure(n: usize, config: &RunConfig) -> Result<ScalingRow> {
    let rank = config.rank.min(n);
    let mut cfg = config.sketch_for(rank, config.seed);
    cfg.oversampling = cfg.oversampling.min(n - cfg.target_rank.min(n));
    cfg.target_rank = cfg.target_rank.min(n);
    let y = heat_snapshots(n);
    let start = Instant::now();
    let full = svd_thin(&y)?;
    let u_full = full.u.columns_range(0, rank);
    let t_svd = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let r = rsvd(&y, &cfg)?;
    let u_rsvd = r.u.columns_range(0, rank);
    let t_rsvd = start.elapsed().as_secs_f64();

    Ok(ScalingRow {
        n,
        t_svd_s: Some(t_svd),
        t_rsvd_s: Some(t_rsvd),
        speedup: Some(t_svd / t_rsvd),
        err_svd: Some(projection_error(&y, &u_full)),
        err_rsvd: Some(projection_error(&y, &u_rsvd)),
        status: "ok".into(),
    })
}

fn empty_row(n: usize, status: String) -> ScalingRow {
    ScalingRow {
        n,
        t_svd_s: None,
        t_rsvd_s: None,
        speedup: None,
        err_svd: None,
        err_rsvd: None,
        status,
    }
}

/// One row per dimension; writes `scaling.csv` to the output directory.
pub fn cmd_scaling(config: &RunConfig) -> Result<Vec<ScalingRow>> {
    if config.dims.is_empty() {
        return Err(CliError::Config("scaling needs at least one dimension".into()));
    }
    config.validate()?;
    let mut rows = Vec::new();
    for &n in &config.dims {
        let bytes = working_set_bytes(n);
        let row = if n < 2 {
            empty_row(n, "skipped: dimension below 2".into())
        } else if bytes > config.byte_budget {
            empty_row(n, format!("skipped: needs {bytes} bytes, budget {}", config.byte_budget))
        } else {
            measure(n, config).unwrap_or_else(|e| empty_row(n, format!("error: {e}")))
        };
        rows.push(row);
    }
    fs::create_dir_all(&config.out).map_err(|e| CliError::io(&config.out, e))?;
    save_rows_csv(&config.out.join("scaling.csv"), &rows)?;
    Ok(rows)
}
