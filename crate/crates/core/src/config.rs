//! Experiment configuration files.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::MeasureSpec;
use crate::setfn::SetFunctionKind;
use crate::{LevelWindow, Mode};

/// Environment variable overriding `out_dir`.
pub const OUT_DIR_ENV: &str = "MFSPEC_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Tau,
    Qzero,
    Dims,
    Partition,
    Coarse,
    Gamma,
    Bs,
    Eigen,
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub measure: MeasureSpec,
    /// Defaults to `𝔍_ν = 𝔍_{ν,2/d-1,1}`.
    #[serde(default)]
    pub set_function: Option<SetFunctionKind>,
    pub tasks: Vec<Task>,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub levels: LevelConfig,
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default)]
    pub eigen: EigenConfig,
    #[serde(default)]
    pub bs: BsConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::Neumann]
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("mfspec-out")
}

/// Level windows as inclusive `[lo, hi]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LevelConfig {
    pub tau: [u64; 2],
    pub dims: [u64; 2],
    pub coarse: [u64; 2],
    /// Levels `1..=kappa` feed the `κ_𝔍` estimate.
    pub kappa: u64,
}

impl Default for LevelConfig {
    fn default() -> Self {
        LevelConfig {
            tau: [1, 10],
            dims: [1, 20],
            coarse: [1, 10],
            kappa: 14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub q_max: f64,
    pub q_step: f64,
    /// `[lo, hi, step]`; defaults to `[D/2, 3D]` step 0.02 around the
    /// ∞-dimension `D`.
    pub alpha: Option<[f64; 3]>,
    /// `[lo, hi, step]` of `log2 x` for the partition entropy.
    pub partition_log2_x: [f64; 3],
    /// `[lo, hi, step]` of `log2 n` for `γ_n`.
    pub gamma_log2_n: [f64; 3],
    /// `[lo, hi, step]` of the `q` grid scanned for `κ_𝔍`.
    pub kappa_q: [f64; 3],
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            q_max: 4.0,
            q_step: 0.1,
            alpha: None,
            partition_log2_x: [10.0, 30.0, 2.0],
            gamma_log2_n: [4.0, 14.0, 1.0],
            kappa_q: [0.5, 4.0, 0.25],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenConfig {
    /// Grid level `L`; defaults to 10 for `d = 1` and 6 for `d = 2`.
    pub level: Option<u32>,
    /// Expected slope, compared in addition to the partition-function zeros.
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BsConfig {
    /// Refinement exponent `a` of `ν Λ^a`; defaults to 1.
    pub a: Option<f64>,
    pub steps: usize,
}

impl Default for BsConfig {
    fn default() -> Self {
        BsConfig { a: None, steps: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Slack in the dimension sandwich and the `q_D <= q_N` ordering.
    pub sandwich: f64,
    /// `|κ - q_N|`.
    pub kappa: f64,
    /// `|F̄ - q_N|` and `F̲ <= h̲`.
    pub coarse: f64,
    /// `|h̄ - q_N|` and `h̲ <= h̄`.
    pub entropy: f64,
    /// `|slope - q|` for the eigen harness.
    pub eigen: f64,
    /// Relative tolerance of `α_𝔍 = -1/q_N` for the `γ_n` fit.
    pub gamma: f64,
    /// Largest admissible convexity defect of a `τ_n` row.
    pub convexity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            sandwich: 1e-6,
            kappa: 0.1,
            coarse: 0.1,
            entropy: 0.1,
            eigen: 0.1,
            gamma: 0.02,
            convexity: 1e-9,
        }
    }
}

fn window(field: &str, w: [u64; 2]) -> Result<LevelWindow> {
    LevelWindow::new(w[0], w[1]).map_err(|_| {
        Error::Config(format!("{field}: need 1 <= lo <= hi, got [{}, {}]", w[0], w[1]))
    })
}

fn range(field: &str, r: [f64; 3]) -> Result<Vec<f64>> {
    let [lo, hi, step] = r;
    if !(lo.is_finite() && hi >= lo && step > 0.0) {
        return Err(Error::Config(format!("{field}: need lo <= hi and step > 0, got {r:?}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    if n > 100_000 {
        return Err(Error::Config(format!("{field}: {n} grid points is too many")));
    }
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

impl ExperimentConfig {
    /// Parse TOML, or JSON when the text starts with `{`, and validate.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn has(&self, task: Task) -> bool {
        self.tasks.contains(&task)
    }

    /// Output directory, honouring [`OUT_DIR_ENV`].
    pub fn resolved_out_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.out_dir.clone(),
        }
    }

    pub fn tau_window(&self) -> Result<LevelWindow> {
        window("levels.tau", self.levels.tau)
    }

    pub fn dims_window(&self) -> Result<LevelWindow> {
        window("levels.dims", self.levels.dims)
    }

    pub fn coarse_window(&self) -> Result<LevelWindow> {
        window("levels.coarse", self.levels.coarse)
    }

    pub fn q_grid(&self) -> Result<Vec<f64>> {
        range("grids.q_max", [0.0, self.grids.q_max, self.grids.q_step])
    }

    pub fn alpha_grid(&self) -> Result<Option<Vec<f64>>> {
        self.grids.alpha.map(|a| range("grids.alpha", a)).transpose()
    }

    pub fn partition_log2_xs(&self) -> Result<Vec<f64>> {
        range("grids.partition_log2_x", self.grids.partition_log2_x)
    }

    pub fn gamma_log2_ns(&self) -> Result<Vec<f64>> {
        range("grids.gamma_log2_n", self.grids.gamma_log2_n)
    }

    pub fn kappa_q_grid(&self) -> Result<Vec<f64>> {
        range("grids.kappa_q", self.grids.kappa_q)
    }

    /// Checks every field the requested tasks will read.
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::Config("tasks: at least one task is required".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::Config("modes: at least one mode is required".into()));
        }
        let measure = self
            .measure
            .build()
            .map_err(|e| Error::Config(format!("measure: {e}")))?;
        self.tau_window()?;
        self.q_grid()?;
        if self.has(Task::Dims) {
            self.dims_window()?;
            if self.levels.kappa < 10 {
                return Err(Error::Config(format!(
                    "levels.kappa: need at least 10 levels, got {}",
                    self.levels.kappa
                )));
            }
            self.kappa_q_grid()?;
        }
        if self.has(Task::Coarse) {
            let w = self.coarse_window()?;
            if w.len() < 4 {
                return Err(Error::Config(format!("levels.coarse: need at least 4 levels, got {w}")));
            }
            self.alpha_grid()?;
        }
        if self.has(Task::Partition) {
            self.partition_log2_xs()?;
        }
        if self.has(Task::Gamma) {
            self.gamma_log2_ns()?;
        }
        if self.has(Task::Bs) {
            if let Some(a) = self.bs.a {
                if !(a > 0.0) {
                    return Err(Error::Config(format!("bs.a: must be positive, got {a}")));
                }
            }
            if self.bs.steps == 0 {
                return Err(Error::Config("bs.steps: must be positive".into()));
            }
        }
        if self.has(Task::Eigen) && measure.dim() <= 2 {
            let level = self.eigen_level(measure.dim());
            if level == 0 || level * measure.dim() as u32 > crate::eigen::MAX_DIM_LEVEL {
                return Err(Error::Config(format!(
                    "eigen.level: need 1 <= L and d*L <= {}, got L = {level}",
                    crate::eigen::MAX_DIM_LEVEL
                )));
            }
        }
        for (field, v) in [
            ("tolerances.sandwich", self.tolerances.sandwich),
            ("tolerances.kappa", self.tolerances.kappa),
            ("tolerances.coarse", self.tolerances.coarse),
            ("tolerances.entropy", self.tolerances.entropy),
            ("tolerances.eigen", self.tolerances.eigen),
            ("tolerances.gamma", self.tolerances.gamma),
            ("tolerances.convexity", self.tolerances.convexity),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{field}: must be a finite non-negative number, got {v}")));
            }
        }
        Ok(())
    }

    pub fn eigen_level(&self, dim: usize) -> u32 {
        self.eigen.level.unwrap_or(if dim == 1 { 10 } else { 6 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
tasks = ["tau", "qzero"]
[measure]
kind = "builtin"
name = "lebesgue-3"
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.modes, vec![Mode::Neumann]);
        assert_eq!(cfg.levels.tau, [1, 10]);
        assert_eq!(cfg.q_grid().unwrap().len(), 41);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = format!("{MINIMAL}[levels]\ntau = [5, 2]\n");
        let err = ExperimentConfig::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("levels.tau"), "{err}");
        let bad = format!("{MINIMAL}[tolerances]\nkappa = -1.0\n");
        let err = ExperimentConfig::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("tolerances.kappa"), "{err}");
        let bad = MINIMAL.replace("lebesgue-3", "nope");
        let err = ExperimentConfig::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("measure:"), "{err}");
        let bad = format!("{MINIMAL}[grids]\nq_maxx = 3.0\n");
        let err = ExperimentConfig::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("q_maxx"), "{err}");
    }
}
