//! Spectral partition functions, L^q-spectra, adaptive dyadic partitions,
//! coarse multifractal dimensions and spectral-dimension bounds for finite
//! measures on the unit cube `(0,1]^d`.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod catalog;
pub mod coarse;
pub mod config;
pub mod eigen;
pub mod cube;
pub mod enumerate;
pub mod error;
pub mod levels;
pub mod measure;
pub mod partition_fn;
pub mod quadrature;
pub mod report;
pub mod roots;
pub mod run;
pub mod setfn;
pub mod weights;

pub use cube::DyadicCube;
pub use error::{CriticalRegime, Error, Result};
pub use measure::{MeasureModel, MeasureSpec};
pub use setfn::{EvaluatedCube, SetFunction, SetFunctionKind};

use serde::{Deserialize, Serialize};

/// Boundary condition: Neumann uses the full grid `D_n^N`, Dirichlet only
/// cubes whose closure avoids the boundary of the unit cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Neumann,
    Dirichlet,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Neumann => "neumann",
            Mode::Dirichlet => "dirichlet",
        }
    }

    pub fn admits(&self, cube: &DyadicCube) -> bool {
        match self {
            Mode::Neumann => true,
            Mode::Dirichlet => cube.is_interior(),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inclusive range of levels `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelWindow {
    pub lo: u64,
    pub hi: u64,
}

impl LevelWindow {
    pub fn new(lo: u64, hi: u64) -> Result<Self> {
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("level window needs 1 <= lo <= hi, got {lo}..{hi}")));
        }
        Ok(LevelWindow { lo, hi })
    }

    pub fn levels(&self) -> impl Iterator<Item = u64> {
        self.lo..=self.hi
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Upper half `ceil((lo+hi)/2)..=hi`.
    pub fn tail_half(&self) -> LevelWindow {
        LevelWindow {
            lo: (self.lo + self.hi).div_ceil(2),
            hi: self.hi,
        }
    }
}

impl std::fmt::Display for LevelWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..{}", self.lo, self.hi)
    }
}
