//! Proper orthogonal decomposition of snapshot sets.
//!
//! The basis minimizes the weighted projection error
//! `Σ_j α_j ‖y_j − Ψ Ψᵀ y_j‖²` over rank-ℓ orthonormal sets, which is the
//! leading left singular subspace of `Y diag(√α)`. The residual equals the
//! sum of the neglected squared singular values. Every stored snapshot takes
//! part in the sum; there is no implicit skipping of the first column.
//!
//! Modes are sign-normalized so the largest-magnitude entry of each column is
//! positive, which keeps bases comparable across runs and methods.

use crate::error::{ensure, Error, Result};
use crate::linalg::{dot, numerical_rank, svd_thin, DenseMatrix};
use crate::sketch::{rsvd, SketchConfig};

/// Time stamps or parameter tuples attached to snapshot columns.
#[derive(Debug, Clone, PartialEq)]
pub enum Stamps {
    Times(Vec<f64>),
    /// `values` holds `width` numbers per snapshot, snapshot-major.
    Parameters { width: usize, values: Vec<f64> },
}

impl Stamps {
    pub fn len(&self) -> usize {
        match self {
            Stamps::Times(t) => t.len(),
            Stamps::Parameters { width, values } => {
                if *width == 0 {
                    0
                } else {
                    values.len() / width
                }
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stamp of snapshot `j` as a slice (length 1 for times).
    pub fn get(&self, j: usize) -> &[f64] {
        match self {
            Stamps::Times(t) => std::slice::from_ref(&t[j]),
            Stamps::Parameters { width, values } => &values[j * width..(j + 1) * width],
        }
    }
}

/// `n × m` snapshot collection with per-column stamps and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    data: DenseMatrix,
    stamps: Stamps,
    weights: Vec<f64>,
}

impl SnapshotMatrix {
    pub fn new(data: DenseMatrix, stamps: Stamps, weights: Vec<f64>) -> Result<Self> {
        let m = data.cols();
        ensure!(
            stamps.len() == m && weights.len() == m,
            Error::Shape(format!(
                "{m} snapshots but {} stamps and {} weights",
                stamps.len(),
                weights.len()
            ))
        );
        if let Stamps::Parameters { width, values } = &stamps {
            ensure!(
                *width >= 1 && values.len() == width * m,
                Error::Shape("parameter stamps must have a fixed non-zero width".into())
            );
        }
        ensure!(
            weights.iter().all(|&w| w >= 0.0 && w.is_finite()),
            Error::InvalidInput("snapshot weights must be finite and non-negative".into())
        );
        Ok(Self {
            data,
            stamps,
            weights,
        })
    }

    /// Time snapshots with unit weights.
    pub fn from_times(data: DenseMatrix, times: Vec<f64>) -> Result<Self> {
        let m = data.cols();
        Self::new(data, Stamps::Times(times), vec![1.0; m])
    }

    /// Parametric snapshots with unit weights.
    pub fn from_parameters(data: DenseMatrix, params: &[Vec<f64>]) -> Result<Self> {
        let width = params.first().map_or(1, Vec::len);
        ensure!(
            params.iter().all(|p| p.len() == width),
            Error::Shape("parameter tuples must share one width".into())
        );
        let m = data.cols();
        let values = params.concat();
        Self::new(data, Stamps::Parameters { width, values }, vec![1.0; m])
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        ensure!(
            weights.len() == self.data.cols(),
            Error::Shape("weight count must equal snapshot count".into())
        );
        ensure!(
            weights.iter().all(|&w| w >= 0.0 && w.is_finite()),
            Error::InvalidInput("snapshot weights must be finite and non-negative".into())
        );
        self.weights = weights;
        Ok(self)
    }

    pub fn data(&self) -> &DenseMatrix {
        &self.data
    }

    pub fn stamps(&self) -> &Stamps {
        &self.stamps
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// State dimension `n`.
    pub fn dim(&self) -> usize {
        self.data.rows()
    }

    /// Snapshot count `m`.
    pub fn len(&self) -> usize {
        self.data.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Y diag(√α)`.
    pub fn weighted_data(&self) -> DenseMatrix {
        if self.weights.iter().all(|&w| w == 1.0) {
            return self.data.clone();
        }
        let s: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        self.data.scale_columns(&s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisMethod {
    Full,
    Randomized,
}

/// Orthonormal reduced basis with its singular values.
#[derive(Debug, Clone)]
pub struct PodBasis {
    pub modes: DenseMatrix,
    /// Singular values of the retained modes.
    pub sigma: Vec<f64>,
    /// Every singular value the decomposition produced (full spectrum for
    /// the deterministic method, the sketched spectrum otherwise).
    pub spectrum: Vec<f64>,
    /// `Σ σ_i²` over the whole weighted snapshot matrix (`‖Y diag(√α)‖²_F`).
    pub total_sigma_sq: f64,
    pub method: BasisMethod,
    pub requested_rank: usize,
}

impl PodBasis {
    pub fn rank(&self) -> usize {
        self.modes.cols()
    }

    /// True when fewer modes than requested were kept because the snapshot
    /// matrix has lower numerical rank.
    pub fn is_rank_deficient(&self) -> bool {
        self.rank() < self.requested_rank
    }

    pub fn warning(&self) -> Option<String> {
        self.is_rank_deficient().then(|| {
            format!(
                "requested rank {} exceeds numerical rank; basis has {} modes",
                self.requested_rank,
                self.rank()
            )
        })
    }
}

/// Flips each column so its largest-magnitude entry (first one on ties) is positive.
pub fn normalize_signs(modes: &mut DenseMatrix) {
    for j in 0..modes.cols() {
        let col = modes.column_mut(j);
        let mut best = 0usize;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if col.get(best).is_some_and(|&x| x < 0.0) {
            col.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn check_rank(snap: &SnapshotMatrix, rank: usize) -> Result<()> {
    ensure!(rank >= 1, Error::Shape("basis rank must be at least 1".into()));
    let cap = snap.dim().min(snap.len());
    ensure!(
        rank <= cap,
        Error::Shape(format!(
            "rank {rank} exceeds min(n, m) = {cap} of the snapshot matrix"
        ))
    );
    Ok(())
}

fn assemble(
    mut modes: DenseMatrix,
    spectrum: Vec<f64>,
    total_sigma_sq: f64,
    method: BasisMethod,
    requested_rank: usize,
) -> Result<PodBasis> {
    let available = numerical_rank(&spectrum);
    ensure!(
        available >= 1,
        Error::Rank {
            requested: requested_rank,
            available
        }
    );
    let kept = requested_rank.min(available);
    modes = modes.columns_range(0, kept);
    normalize_signs(&mut modes);
    Ok(PodBasis {
        modes,
        sigma: spectrum[..kept].to_vec(),
        spectrum,
        total_sigma_sq,
        method,
        requested_rank,
    })
}

/// Rank-`rank` POD basis from a full thin SVD of the weighted snapshots.
///
/// If the snapshots have lower numerical rank the basis is truncated to it;
/// see [`PodBasis::is_rank_deficient`].
pub fn pod_basis(snap: &SnapshotMatrix, rank: usize) -> Result<PodBasis> {
    check_rank(snap, rank)?;
    let svd = svd_thin(&snap.weighted_data())?;
    let total = svd.sigma.iter().map(|s| s * s).sum();
    assemble(svd.u, svd.sigma, total, BasisMethod::Full, rank)
}

/// Compressed POD: the leading `rank` left vectors of a randomized SVD.
pub fn cpod_basis(snap: &SnapshotMatrix, rank: usize, cfg: &SketchConfig) -> Result<PodBasis> {
    check_rank(snap, rank)?;
    ensure!(
        cfg.target_rank >= rank,
        Error::Shape(format!(
            "sketch target rank {} is below the requested basis rank {rank}",
            cfg.target_rank
        ))
    );
    let w = snap.weighted_data();
    let total = w.frobenius_norm().powi(2);
    let svd = rsvd(&w, cfg)?;
    assemble(svd.u, svd.sigma, total, BasisMethod::Randomized, rank)
}

/// `Σ_j α_j ‖y_j − Ψ Ψᵀ y_j‖²` for an orthonormal `modes`.
pub fn weighted_projection_error(snap: &SnapshotMatrix, modes: &DenseMatrix) -> f64 {
    let coeffs = modes.tr_matmul(snap.data());
    let recon = modes.matmul(&coeffs);
    (0..snap.len())
        .map(|j| {
            let r: Vec<f64> = snap
                .data()
                .column(j)
                .iter()
                .zip(recon.column(j))
                .map(|(a, b)| a - b)
                .collect();
            snap.weights()[j] * dot(&r, &r)
        })
        .sum()
}

/// Captured energy `Σ_{i≤ℓ} σ_i² / Σ_i σ_i²`.
pub fn energy_ratio(sigma: &[f64], rank: usize) -> Result<f64> {
    ensure!(
        rank <= sigma.len(),
        Error::Domain(format!("rank {rank} exceeds {} singular values", sigma.len()))
    );
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    ensure!(
        total > 0.0,
        Error::Domain("energy ratio of an all-zero spectrum".into())
    );
    let head: f64 = sigma[..rank].iter().map(|s| s * s).sum();
    Ok(head / total)
}

/// Smallest rank whose energy ratio reaches `threshold` in `(0, 1]`.
pub fn rank_for_energy(sigma: &[f64], threshold: f64) -> Result<usize> {
    ensure!(
        threshold > 0.0 && threshold <= 1.0,
        Error::Domain(format!("energy threshold {threshold} outside (0, 1]"))
    );
    ensure!(
        sigma.first().is_some_and(|&s| s > 0.0),
        Error::Domain("spectrum must have a positive leading value".into())
    );
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let mut head = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        head += s * s;
        if head / total >= threshold {
            return Ok(i + 1);
        }
    }
    Ok(sigma.len())
}
