use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use rmor::sketch::SketchConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TestId {
    #[default]
    Parabolic,
    Elliptic,
}

impl FromStr for TestId {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "parabolic" | "test1" | "1" => Ok(Self::Parabolic),
            "elliptic" | "test2" | "2" => Ok(Self::Elliptic),
            _ => Err(CliError::Config(format!("unknown test {s:?} (parabolic | elliptic)"))),
        }
    }
}

/// The six reduction pipelines compared by `bench`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "POD")]
    Pod,
    #[serde(rename = "cPOD")]
    Cpod,
    #[serde(rename = "POD-DEIM")]
    PodDeim,
    #[serde(rename = "cPOD-cDEIM")]
    CpodCdeim,
    #[serde(rename = "DMD")]
    Dmd,
    #[serde(rename = "cDMD")]
    Cdmd,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Pod,
        Method::Cpod,
        Method::PodDeim,
        Method::CpodCdeim,
        Method::Dmd,
        Method::Cdmd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pod => "POD",
            Method::Cpod => "cPOD",
            Method::PodDeim => "POD-DEIM",
            Method::CpodCdeim => "cPOD-cDEIM",
            Method::Dmd => "DMD",
            Method::Cdmd => "cDMD",
        }
    }

    pub fn is_randomized(self) -> bool {
        matches!(self, Method::Cpod | Method::CpodCdeim | Method::Cdmd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.name().to_ascii_lowercase() == key)
            .ok_or_else(|| CliError::Config(format!("unknown method {s:?}")))
    }
}

pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let methods = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>>>()?;
    if methods.is_empty() {
        return Err(CliError::Config("empty method list".into()));
    }
    Ok(methods)
}

/// Settings of one harness run. Missing JSON fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub test: TestId,
    /// Interior points per side `N`.
    pub grid: usize,
    /// Time snapshots (parabolic) or training parameter samples (elliptic,
    /// a perfect square laid out as a log-spaced tensor grid).
    pub snapshots: usize,
    /// Reduced basis rank `ℓ`.
    pub rank: usize,
    /// Nonlinear-term basis rank `k`.
    pub nl_rank: usize,
    /// Randomized methods draw `ceil(sampling_multiple · rank)` samples.
    pub sampling_multiple: f64,
    /// Extra sketch columns on top of the sampling multiple.
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub out: PathBuf,
    /// Held-out parameters for the elliptic test.
    pub held_out: usize,
    /// Directory holding `states.rmor` and `nonlinear.rmor` from `simulate`;
    /// snapshots are regenerated when absent.
    pub input: Option<PathBuf>,
    /// Square sizes for `scaling`.
    pub dims: Vec<usize>,
    /// `scaling` skips sizes whose working set exceeds this many bytes.
    pub byte_budget: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            test: TestId::Parabolic,
            grid: 50,
            snapshots: 500,
            rank: 10,
            nl_rank: 10,
            sampling_multiple: 2.0,
            oversample: 0,
            power_iters: 1,
            seed: 0,
            methods: Method::ALL.to_vec(),
            out: PathBuf::from("rmor-out"),
            held_out: 10,
            input: None,
            dims: vec![500, 1000, 2000],
            byte_budget: 2 << 30,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CliError::Config(m));
        if self.grid < 2 {
            return fail(format!("grid must be at least 2, got {}", self.grid));
        }
        if self.rank < 1 || self.nl_rank < 1 {
            return fail("ranks must be at least 1".into());
        }
        if !(self.sampling_multiple >= 1.0) || !self.sampling_multiple.is_finite() {
            return fail(format!("sampling multiple must be >= 1, got {}", self.sampling_multiple));
        }
        if self.snapshots < 2 {
            return fail(format!("need at least 2 snapshots, got {}", self.snapshots));
        }
        if self.test == TestId::Elliptic {
            self.training_axis()?;
            if self.held_out < 1 {
                return fail("need at least one held-out parameter".into());
            }
        }
        if self.methods.is_empty() {
            return fail("empty method list".into());
        }
        if self.dims.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!("scaling dimensions must be strictly ascending, got {:?}", self.dims));
        }
        Ok(())
    }

    /// Samples per axis of the elliptic training grid.
    pub fn training_axis(&self) -> Result<usize> {
        let k = (self.snapshots as f64).sqrt().round() as usize;
        if k * k != self.snapshots {
            return Err(CliError::Config(format!(
                "elliptic snapshot count must be a perfect square, got {}",
                self.snapshots
            )));
        }
        Ok(k)
    }

    /// Sketch columns (or measurements) for a target rank.
    pub fn samples_for(&self, rank: usize) -> usize {
        (self.sampling_multiple * rank as f64).ceil() as usize
    }

    pub fn sketch_for(&self, rank: usize, seed: u64) -> SketchConfig {
        SketchConfig::new(self.samples_for(rank))
            .with_oversampling(self.oversample)
            .with_power_iterations(self.power_iters)
            .with_seed(seed)
    }
}
