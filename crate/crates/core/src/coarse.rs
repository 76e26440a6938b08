//! Coarse multifractal counts `N_α(n) = #{Q ∈ D_n : 𝔍(Q) >= 2^{-αn}}` and
//! the optimized coarse dimensions `F̄ = sup_α F̄(α)/α`, `F̲ = sup_α F̲(α)/α`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::{class_histogram, LevelRow, DEFAULT_CLASS_BUDGET};
use crate::measure::{log2_sum_exp, Histogram};
use crate::partition_fn::format_num;
use crate::setfn::SetFunction;
use crate::Mode;

/// Tolerance on `α` when comparing `-log2 𝔍 / n` against a threshold.
const ALPHA_SLACK: f64 = 1e-12;

/// `log2 𝔍` histogram of one level.
#[derive(Debug, Clone)]
pub struct LevelValues {
    pub n: u64,
    pub hist: Histogram,
}

impl LevelValues {
    pub fn build(j: &SetFunction, n: u64, mode: Mode) -> Result<Self> {
        let row = LevelRow::build(j, n, mode)?;
        let hist = match row.value_histogram() {
            Some(h) => h,
            None => class_histogram(j, n, mode, DEFAULT_CLASS_BUDGET)?.0,
        };
        Ok(LevelValues { n, hist })
    }

    /// `log2 N_α(n)`, `-∞` for an empty count.
    pub fn log2_count(&self, alpha: f64) -> f64 {
        let cut = -alpha * self.n as f64;
        log2_sum_exp(
            self.hist
                .entries()
                .take_while(|(v, _)| *v >= cut - ALPHA_SLACK * self.n as f64)
                .map(|(_, m)| m),
        )
    }

    /// `α` values where `N_α(n)` jumps.
    pub fn jump_points(&self) -> impl Iterator<Item = f64> + '_ {
        self.hist.entries().map(move |(v, _)| -v / self.n as f64)
    }
}

#[derive(Debug, Clone)]
pub struct CoarseProfile {
    pub mode: Mode,
    pub alpha_grid: Vec<f64>,
    pub levels: Vec<LevelValues>,
}

/// `lo, lo + step, …, hi`.
pub fn alpha_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

/// Default grid `[0.5 D, 3 D]` in steps of 0.02 for a decay exponent `D`.
pub fn default_alpha_grid(dim_infty: f64) -> Vec<f64> {
    alpha_grid(0.5 * dim_infty, 3.0 * dim_infty, 0.02)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarseDimension {
    pub f_upper: f64,
    pub f_lower: f64,
    pub alpha_star: f64,
    /// The maximizing `α` for `F̄` lies within one grid step of the grid's
    /// ends.
    pub alpha_at_edge: bool,
    pub window_lo: u64,
    pub window_hi: u64,
}

impl CoarseProfile {
    pub fn build(j: &SetFunction, levels: &[u64], alpha_grid: &[f64], mode: Mode) -> Result<Self> {
        let levels = levels
            .iter()
            .map(|&n| LevelValues::build(j, n, mode))
            .collect::<Result<Vec<_>>>()?;
        Ok(CoarseProfile {
            mode,
            alpha_grid: alpha_grid.to_vec(),
            levels,
        })
    }

    /// `counts[i][k] = log2 N_{α_k}(n_i)`.
    pub fn log2_counts(&self) -> Vec<Vec<f64>> {
        self.levels
            .iter()
            .map(|l| self.alpha_grid.iter().map(|&a| l.log2_count(a)).collect())
            .collect()
    }

    /// `F̄(α)` and `F̲(α)` as max and min of `log2⁺ N_α(n) / n` over `window`.
    fn f_pair(window: &[LevelValues], alpha: f64) -> (f64, f64) {
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for l in window {
            let v = l.log2_count(alpha).max(0.0) / l.n as f64;
            hi = hi.max(v);
            lo = lo.min(v);
        }
        (hi, lo)
    }

    /// Optimized coarse dimensions over the upper half of the levels.
    pub fn dimension(&self) -> Result<CoarseDimension> {
        if self.levels.len() < 4 {
            return Err(Error::Precondition(format!(
                "coarse dimension needs at least 4 levels, got {}",
                self.levels.len()
            )));
        }
        self.dimension_over(&self.levels[self.levels.len() / 2..])
    }

    /// `(α, F̄(α), F̲(α))` on the grid, over the upper half of the levels.
    pub fn spectrum(&self) -> Vec<(f64, f64, f64)> {
        let window = &self.levels[self.levels.len() / 2..];
        self.alpha_grid
            .iter()
            .map(|&a| {
                let (hi, lo) = Self::f_pair(window, a);
                (a, hi, lo)
            })
            .collect()
    }

    /// Optimized coarse dimensions over every level of the profile.
    pub fn dimension_all_levels(&self) -> Result<CoarseDimension> {
        self.dimension_over(&self.levels)
    }

    /// `F(α)/α` is piecewise constant over `1/α` between jumps of the counts,
    /// so the supremum over the grid range is attained at the range's lower
    /// end or at a jump point inside it.
    fn dimension_over(&self, window: &[LevelValues]) -> Result<CoarseDimension> {
        let (a_lo, a_hi) = match (self.alpha_grid.first(), self.alpha_grid.last()) {
            (Some(&a), Some(&b)) if a > 0.0 && a <= b => (a, b),
            _ => return Err(Error::Config("alpha grid must be positive and increasing".into())),
        };
        let mut candidates: Vec<f64> = window
            .iter()
            .flat_map(|l| l.jump_points())
            .filter(|&a| a >= a_lo && a <= a_hi)
            .collect();
        candidates.push(a_lo);
        candidates.extend(self.alpha_grid.iter().copied());
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        candidates.dedup();
        let mut best = (f64::NEG_INFINITY, a_lo);
        let mut best_lower = f64::NEG_INFINITY;
        for &a in &candidates {
            let (hi, lo) = Self::f_pair(window, a);
            if hi / a > best.0 {
                best = (hi / a, a);
            }
            best_lower = best_lower.max(lo / a);
        }
        let step = if self.alpha_grid.len() > 1 {
            self.alpha_grid[1] - self.alpha_grid[0]
        } else {
            0.0
        };
        Ok(CoarseDimension {
            f_upper: best.0,
            f_lower: best_lower,
            alpha_star: best.1,
            alpha_at_edge: best.1 <= a_lo + step || best.1 >= a_hi - step,
            window_lo: window.first().map(|l| l.n).unwrap_or(0),
            window_hi: window.last().map(|l| l.n).unwrap_or(0),
        })
    }

    /// CSV with columns `mode,n,alpha,count`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["mode", "n", "alpha", "count"])?;
        for l in &self.levels {
            for &a in &self.alpha_grid {
                let c = l.log2_count(a).exp2();
                w.write_record([
                    self.mode.as_str().to_string(),
                    l.n.to_string(),
                    format_num(a),
                    format_num(c.round()),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl CoarseDimension {
    /// CSV with columns `F_upper,F_lower,alpha_star`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["F_upper", "F_lower", "alpha_star"])?;
        w.write_record([format_num(self.f_upper), format_num(self.f_lower), format_num(self.alpha_star)])?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedDiagnostic {
    pub n: u64,
    pub q: f64,
    /// Tilted mass of cubes with `-log2 𝔍 / n` outside `(s, t)`.
    pub escape: f64,
    /// Total tilted mass (1 up to rounding).
    pub total: f64,
}

/// Mass of `μ_n(Q) = 𝔍(Q)^q / Σ 𝔍^q` outside the exponent window `(s, t)`.
pub fn tilted_diagnostic(values: &LevelValues, q: f64, window: (f64, f64)) -> Result<TiltedDiagnostic> {
    let (s, t) = window;
    if !(s < t) {
        return Err(Error::Config(format!("tilted window needs s < t, got ({s}, {t})")));
    }
    let n = values.n as f64;
    let norm = values.hist.log2_moment(q);
    let mut outside = Vec::new();
    let mut all = Vec::new();
    for (v, m) in values.hist.entries() {
        let w = q * v + m - norm;
        all.push(w);
        let alpha = -v / n;
        if !(alpha > s && alpha < t) {
            outside.push(w);
        }
    }
    Ok(TiltedDiagnostic {
        n: values.n,
        q,
        escape: log2_sum_exp(outside).exp2(),
        total: log2_sum_exp(all).exp2(),
    })
}

/// `Σ_Q α(Q) μ_n(Q)`, the tilted mean exponent.
pub fn tilted_mean_exponent(values: &LevelValues, q: f64) -> f64 {
    let n = values.n as f64;
    let norm = values.hist.log2_moment(q);
    values
        .hist
        .entries()
        .map(|(v, m)| (-v / n) * (q * v + m - norm).exp2())
        .sum()
}
