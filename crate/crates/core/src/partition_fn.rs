//! Partition functions `τ_{𝔍,n}(q) = log2(Σ_{Q∈D_n} 𝔍(Q)^q) / n`, their
//! zeros, the critical exponent `κ_𝔍`, subdifferentials and the
//! fractal-dimension bounds on the spectral dimension.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::{mass_histogram, LevelRow, DEFAULT_CLASS_BUDGET};
use crate::measure::MeasureModel;
use crate::roots::{bisect, least_squares, ROOT_TOLERANCE};
use crate::setfn::{SetFunction, SetFunctionKind};
use crate::{LevelWindow, Mode};

/// Largest `q` tried when bracketing a zero.
const Q_CEILING: f64 = 1e4;

pub fn tau_n(j: &SetFunction, n: u64, q: f64, mode: Mode) -> Result<f64> {
    if n == 0 {
        return Err(Error::Precondition("tau_n needs n >= 1".into()));
    }
    Ok(LevelRow::build(j, n, mode)?.tau(q))
}

/// Rows of a window of levels; the envelope `max_n τ_n` stands in for the
/// `limsup`.
#[derive(Debug, Clone)]
pub struct TauRows {
    rows: Vec<LevelRow>,
    dim: usize,
}

impl TauRows {
    pub fn build(j: &SetFunction, levels: impl IntoIterator<Item = u64>, mode: Mode) -> Result<Self> {
        let rows = levels
            .into_iter()
            .map(|n| LevelRow::build(j, n, mode))
            .collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return Err(Error::Config("empty level window".into()));
        }
        Ok(TauRows { rows, dim: j.dim() })
    }

    pub fn from_rows(rows: Vec<LevelRow>, dim: usize) -> Self {
        TauRows { rows, dim }
    }

    pub fn rows(&self) -> &[LevelRow] {
        &self.rows
    }

    pub fn envelope(&self, q: f64) -> f64 {
        self.rows.iter().map(|r| r.tau(q)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `min_n (-log2 max 𝔍 / n)` over the window.
    pub fn decay_exponent(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| -r.log2_max() / r.n() as f64)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn zero(&self) -> Result<f64> {
        zero_of(|q| self.envelope(q), self.dim, self.decay_exponent())
    }
}

/// Zero of a convex decreasing function on `[0, ∞)`.
fn zero_of(f: impl Fn(f64) -> f64, dim: usize, decay: f64) -> Result<f64> {
    let f0 = f(0.0);
    if f0 == f64::NEG_INFINITY {
        return Err(Error::Precondition("empty level: no cube carries positive value".into()));
    }
    if f0 <= 0.0 {
        return Err(Error::Precondition(format!(
            "tau(0) = {f0} <= 0: at most one cube carries positive value"
        )));
    }
    if decay <= 0.0 {
        return Err(Error::Precondition(format!(
            "some J(Q) >= 1 (decay exponent {decay:.4} <= 0); tau has no zero"
        )));
    }
    let mut hi = dim as f64 / decay.max(1e-3) + 1.0;
    while f(hi) >= 0.0 {
        hi *= 2.0;
        if hi > Q_CEILING {
            return Err(Error::Precondition(format!("no sign change of tau on [0, {Q_CEILING}]")));
        }
    }
    bisect(f, 0.0, hi, ROOT_TOLERANCE)
}

pub fn q_zero_row(row: &LevelRow, dim: usize) -> Result<f64> {
    let decay = -row.log2_max() / row.n() as f64;
    zero_of(|q| row.tau(q), dim, decay)
}

pub fn q_zero(j: &SetFunction, n: u64, mode: Mode) -> Result<f64> {
    q_zero_row(&LevelRow::build(j, n, mode)?, j.dim())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFunctionCurve {
    pub set_function: String,
    pub mode: Mode,
    pub q_grid: Vec<f64>,
    pub levels: Vec<u64>,
    /// `values[i][k] = τ_{levels[i]}(q_grid[k])`.
    pub values: Vec<Vec<f64>>,
}

/// `0, step, 2 step, …, hi`.
pub fn q_grid(hi: f64, step: f64) -> Vec<f64> {
    let n = (hi / step).round() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

impl PartitionFunctionCurve {
    pub fn from_rows(j: &SetFunction, rows: &[LevelRow], q_grid: &[f64]) -> Result<Self> {
        let mode = rows
            .first()
            .map(|r| r.mode())
            .ok_or_else(|| Error::Config("curve needs at least one level".into()))?;
        Ok(PartitionFunctionCurve {
            set_function: j.kind().to_string(),
            mode,
            q_grid: q_grid.to_vec(),
            levels: rows.iter().map(|r| r.n()).collect(),
            values: rows
                .iter()
                .map(|r| q_grid.iter().map(|&q| r.tau(q)).collect())
                .collect(),
        })
    }

    pub fn compute(j: &SetFunction, levels: &[u64], q_grid: &[f64], mode: Mode) -> Result<Self> {
        let rows = TauRows::build(j, levels.iter().copied(), mode)?;
        Self::from_rows(j, rows.rows(), q_grid)
    }

    /// Largest violation of convexity (negative second difference) over all
    /// rows; rows with an empty level are skipped.
    pub fn max_convexity_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.values {
            if row.iter().any(|v| !v.is_finite()) {
                continue;
            }
            for w in 0..row.len().saturating_sub(2) {
                let (h1, h2) = (self.q_grid[w + 1] - self.q_grid[w], self.q_grid[w + 2] - self.q_grid[w + 1]);
                let s1 = (row[w + 1] - row[w]) / h1;
                let s2 = (row[w + 2] - row[w + 1]) / h2;
                worst = worst.max(s1 - s2);
            }
        }
        worst
    }

    /// Largest first difference `τ(q_{k+1}) - τ(q_k)` over all rows.
    pub fn max_increase(&self) -> f64 {
        self.values
            .iter()
            .filter(|r| r.iter().all(|v| v.is_finite()))
            .flat_map(|r| r.windows(2).map(|w| w[1] - w[0]))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV with columns `mode,n,q,tau`; `-inf` marks empty Dirichlet levels.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["mode", "n", "q", "tau"])?;
        for (i, n) in self.levels.iter().enumerate() {
            for (k, q) in self.q_grid.iter().enumerate() {
                w.write_record([
                    self.mode.as_str().to_string(),
                    n.to_string(),
                    format_num(*q),
                    format_num(self.values[i][k]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest decimal that round-trips, `inf`/`-inf` for infinities.
pub fn format_num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowedValue {
    pub value: f64,
    /// Level at which the extremum over the window was attained.
    pub level: u64,
    pub window: LevelWindow,
}

/// `log2 max_{Q∈D_n^N} ν(Q)`, closed form or by class enumeration.
pub fn max_log2_mass(measure: &MeasureModel, n: u64) -> Result<f64> {
    if let Some(m) = measure.max_log2_mass(n) {
        return Ok(m);
    }
    Ok(mass_histogram(measure, n, Mode::Neumann, DEFAULT_CLASS_BUDGET)?
        .max_value()
        .unwrap_or(f64::NEG_INFINITY))
}

/// `min_{n∈window} -log2 max_Q ν(Q) / n`, the finite-level surrogate for
/// `dim_∞(ν) = liminf_n`.
pub fn dim_infty(measure: &MeasureModel, window: LevelWindow) -> Result<WindowedValue> {
    let mut best = WindowedValue {
        value: f64::INFINITY,
        level: window.lo,
        window,
    };
    for n in window.levels() {
        let v = -max_log2_mass(measure, n)? / n as f64;
        if v < best.value {
            best.value = v;
            best.level = n;
        }
    }
    Ok(best)
}

/// `max_{n∈window} log2 #{Q ∈ D_n^N : ν(Q) > 0} / n`, the upper Minkowski
/// dimension of the support at finite scale.
pub fn minkowski(measure: &MeasureModel, window: LevelWindow) -> Result<WindowedValue> {
    let mut best = WindowedValue {
        value: f64::NEG_INFINITY,
        level: window.lo,
        window,
    };
    for n in window.levels() {
        let count = match measure.level_log2_moment(n, 0.0, Mode::Neumann) {
            Some(c) => c,
            None => mass_histogram(measure, n, Mode::Neumann, DEFAULT_CLASS_BUDGET)?.log2_count(),
        };
        let v = count / n as f64;
        if v > best.value {
            best.value = v;
            best.level = n;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionBounds {
    pub lower: f64,
    pub upper: f64,
    pub consistent: bool,
}

/// `max(d/2, M/(M-d+2)) <= q_N <= D/(D-d+2)` with `M` the upper Minkowski
/// and `D` the lower ∞-dimension.
pub fn dimension_bounds(dim: usize, dim_infty: f64, minkowski: f64, q_n: f64, tol: f64) -> Result<DimensionBounds> {
    let d = dim as f64;
    if dim < 2 {
        return Err(Error::Precondition("dimension bounds are stated for d >= 2".into()));
    }
    if dim_infty <= d - 2.0 {
        return Err(Error::Precondition(format!(
            "dim_inf(nu) = {dim_infty:.6} <= d-2 = {}: critical regime, Sobolev embedding into L2(nu) not compact",
            d - 2.0
        )));
    }
    let lower = (d / 2.0).max(minkowski / (minkowski - d + 2.0));
    let upper = dim_infty / (dim_infty - d + 2.0);
    Ok(DimensionBounds {
        lower,
        upper,
        consistent: lower - tol <= q_n && q_n <= upper + tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subdifferential {
    pub q: f64,
    pub tau: f64,
    /// `-∂τ(q) = [a, b]`: `a` minus the right derivative, `b` minus the left.
    pub a: f64,
    pub b: f64,
    /// `(a q + τ(q)) / b`.
    pub bound: f64,
    /// The two finest difference quotients agree within `1e-3` on both
    /// sides.
    pub converged: bool,
}

pub const SUBDIFF_STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];

pub fn subdifferential_bound(tau: impl Fn(f64) -> f64, q: f64) -> Result<Subdifferential> {
    let t0 = tau(q);
    let right: Vec<f64> = SUBDIFF_STEPS.iter().map(|h| (tau(q + h) - t0) / h).collect();
    let left: Vec<f64> = if q > 0.0 {
        SUBDIFF_STEPS
            .iter()
            .map(|&h| {
                let h = h.min(q);
                (t0 - tau(q - h)) / h
            })
            .collect()
    } else {
        right.clone()
    };
    let (r, l) = (right[2], left[2]);
    if l > r + 1e-6 {
        return Err(Error::Precondition(format!(
            "numerical row is not convex at q={q}: left slope {l} > right slope {r}"
        )));
    }
    let converged = (right[1] - right[2]).abs() <= 1e-3 && (left[1] - left[2]).abs() <= 1e-3;
    let (a, b) = (-r, -l);
    Ok(Subdifferential {
        q,
        tau: t0,
        a,
        b,
        bound: (a * q + t0) / b,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KappaEstimate {
    Point { value: f64 },
    /// Classification was inconclusive between the ends.
    Interval { lo: f64, hi: f64 },
}

impl KappaEstimate {
    pub fn value(&self) -> f64 {
        match *self {
            KappaEstimate::Point { value } => value,
            KappaEstimate::Interval { lo, hi } => 0.5 * (lo + hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesClass {
    Convergent,
    Divergent,
    Inconclusive,
}

/// Per-level terms `log2 Σ_{Q∈D_n} 𝔍(Q)^q` of the series defining `κ_𝔍`
/// are fitted by a line in `n` over the upper half of the levels; a
/// negative slope (geometric decay) means convergence.
pub fn classify_series(rows: &[LevelRow], q: f64) -> SeriesClass {
    let tail = &rows[rows.len() / 2..];
    let pts: Vec<(f64, f64)> = tail.iter().map(|r| (r.n() as f64, r.log2_moment(q))).collect();
    if pts.iter().any(|p| !p.1.is_finite()) {
        return SeriesClass::Inconclusive;
    }
    let fit = least_squares(&pts);
    let margin = 2.0 * fit.slope_stderr + 1e-3;
    if fit.slope < -margin {
        SeriesClass::Convergent
    } else if fit.slope > margin {
        SeriesClass::Divergent
    } else {
        SeriesClass::Inconclusive
    }
}

/// Threshold `κ_𝔍 = inf{q : Σ_n Σ_Q 𝔍(Q)^q < ∞}` from levels `1..=budget`.
pub fn kappa_estimate(j: &SetFunction, q_grid: &[f64], level_budget: u64) -> Result<KappaEstimate> {
    if level_budget < 10 {
        return Err(Error::Precondition(format!("kappa needs a level budget >= 10, got {level_budget}")));
    }
    let rows = TauRows::build(j, 1..=level_budget, Mode::Neumann)?;
    kappa_from_rows(rows.rows(), q_grid)
}

pub fn kappa_from_rows(rows: &[LevelRow], q_grid: &[f64]) -> Result<KappaEstimate> {
    let classes: Vec<SeriesClass> = q_grid.iter().map(|&q| classify_series(rows, q)).collect();
    let lo = q_grid
        .iter()
        .zip(&classes)
        .filter(|(_, c)| **c == SeriesClass::Divergent)
        .map(|(q, _)| *q)
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = q_grid
        .iter()
        .zip(&classes)
        .filter(|(_, c)| **c == SeriesClass::Convergent)
        .map(|(q, _)| *q)
        .fold(f64::INFINITY, f64::min);
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::Precondition(format!(
            "no divergent-to-convergent transition on the q grid (last divergent {lo}, first convergent {hi})"
        )));
    }
    // Bisect while the midpoint classifies.
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        match classify_series(rows, mid) {
            SeriesClass::Divergent => lo = mid,
            SeriesClass::Convergent => hi = mid,
            SeriesClass::Inconclusive => {
                // Shrink the inconclusive band from both sides.
                let (mut a, mut b) = (lo, mid);
                while b - a > 1e-6 {
                    let m = 0.5 * (a + b);
                    if classify_series(rows, m) == SeriesClass::Divergent {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let (mut c, mut e) = (mid, hi);
                while e - c > 1e-6 {
                    let m = 0.5 * (c + e);
                    if classify_series(rows, m) == SeriesClass::Convergent {
                        e = m;
                    } else {
                        c = m;
                    }
                }
                return Ok(KappaEstimate::Interval { lo: a, hi: e });
            }
        }
    }
    Ok(KappaEstimate::Point { value: 0.5 * (lo + hi) })
}

/// Zero of `τ_{𝔍_{ν,t(2/d-1)/2,1}}`, admissible for `2 < t < 2 D/(d-2)`.
pub fn q_zero_parametrized_t(
    measure: Arc<MeasureModel>,
    t: f64,
    dim_infty: f64,
    levels: LevelWindow,
    mode: Mode,
) -> Result<f64> {
    let d = measure.dim() as f64;
    if !(t > 2.0) {
        return Err(Error::Precondition(format!("t = {t} must exceed 2")));
    }
    if d > 2.0 && t >= 2.0 * dim_infty / (d - 2.0) {
        return Err(Error::Precondition(format!(
            "t = {t} outside the admissible range (2, {})",
            2.0 * dim_infty / (d - 2.0)
        )));
    }
    let j = SetFunction::new(SetFunctionKind::spectral_t(measure.dim(), t), measure)?;
    TauRows::build(&j, levels.levels(), mode)?.zero()
}

/// `D / (2D/t + 2 - d)`, the a-priori ceiling for the parametrized zero.
pub fn parametrized_upper_bound(dim: usize, dim_infty: f64, t: f64) -> f64 {
    dim_infty / (2.0 * dim_infty / t + 2.0 - dim as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelZero {
    pub n: u64,
    pub q: f64,
    /// `max 𝔍^{q_n} <= K 2^{-n τ_n(0)} Σ 𝔍^{q_n}` with `K = BALANCE_K`.
    pub balanced: bool,
}

pub const BALANCE_K: f64 = 10.0;

pub fn per_level_zeros(rows: &[LevelRow], dim: usize) -> Result<Vec<LevelZero>> {
    rows.iter()
        .map(|row| {
            let q = q_zero_row(row, dim)?;
            let lhs = q * row.log2_max();
            let rhs = BALANCE_K.log2() - row.log2_count() + row.log2_moment(q);
            Ok(LevelZero {
                n: row.n(),
                q,
                balanced: lhs <= rhs + 1e-12,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub quantity: String,
    pub value: f64,
    pub window: String,
    pub tolerance_flag: bool,
}

/// CSV with columns `quantity,value,window,tolerance_flag`.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quantity", "value", "window", "tolerance_flag"])?;
    for r in rows {
        w.write_record([
            r.quantity.clone(),
            format_num(r.value),
            r.window.clone(),
            r.tolerance_flag.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn model(name: &str) -> Arc<MeasureModel> {
        Arc::new(catalog::lookup(name).unwrap().spec.build().unwrap())
    }

    fn spectral(name: &str) -> SetFunction {
        let m = model(name);
        SetFunction::new(SetFunctionKind::spectral(m.dim()), m).unwrap()
    }

    #[test]
    fn lebesgue_tau_is_affine() {
        let j = spectral("lebesgue-3");
        for n in 1..=10 {
            for q in [0.0, 0.7, 1.5, 2.9] {
                assert!((tau_n(&j, n, q, Mode::Neumann).unwrap() - (3.0 - 2.0 * q)).abs() < 1e-9);
            }
        }
        assert!((q_zero(&j, 6, Mode::Neumann).unwrap() - 1.5).abs() < 1e-9);
    }

    #[test]
    fn ahlfors_zero_is_two() {
        let j = spectral("ahlfors-4of8");
        assert!((q_zero(&j, 8, Mode::Neumann).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn bounds_for_ahlfors_collapse() {
        let b = dimension_bounds(3, 2.0, 2.0, 2.0, 1e-9).unwrap();
        assert!((b.lower - 2.0).abs() < 1e-12 && (b.upper - 2.0).abs() < 1e-12 && b.consistent);
        assert!(dimension_bounds(3, 1.0, 2.0, 2.0, 1e-9).is_err());
    }

    #[test]
    fn subdifferential_of_affine_row() {
        let s = subdifferential_bound(|q| 3.0 - 2.0 * q, 1.5).unwrap();
        assert!((s.a - 2.0).abs() < 1e-9 && (s.b - 2.0).abs() < 1e-9);
        assert!((s.bound - 1.5).abs() < 1e-9 && s.converged);
    }

    #[test]
    fn lebesgue_kappa() {
        let j = spectral("lebesgue-3");
        let k = kappa_estimate(&j, &q_grid(3.0, 0.1), 12).unwrap();
        assert!((k.value() - 1.5).abs() < 1e-3, "{k:?}");
    }

    #[test]
    fn csv_layout() {
        let j = spectral("lebesgue-3");
        let c = PartitionFunctionCurve::compute(&j, &[1, 2], &[0.0, 1.0], Mode::Neumann).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "mode,n,q,tau");
        assert_eq!(text.lines().nth(2).unwrap(), "neumann,1,1,1");
    }

    #[test]
    fn parametrized_zeros_decrease_toward_q_n() {
        let m = model("sierpinski-tetraeder");
        let w = [0.36f64, 0.36, 0.2, 0.08];
        // 𝔍 = ν 2^{n t/2} on level n; root by plain bisection.
        let oracle = |t: f64| {
            let f = |q: f64| w.iter().map(|x| x.powf(q)).sum::<f64>().log2() + q * t / 2.0;
            let (mut lo, mut hi) = (1.0, 6.0);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        let di = -(0.36f64).log2();
        let win = LevelWindow::new(1, 12).unwrap();
        let zs: Vec<f64> = [2.2, 2.1, 2.05, 2.001]
            .iter()
            .map(|&t| {
                let z = q_zero_parametrized_t(m.clone(), t, di, win, Mode::Neumann).unwrap();
                assert!((z - oracle(t)).abs() < 1e-8, "t = {t}");
                assert!(z <= parametrized_upper_bound(3, di, t) + 1e-9);
                z
            })
            .collect();
        assert!(zs.windows(2).all(|p| p[1] < p[0]), "{zs:?}");
        assert!((zs[3] - oracle(2.0)).abs() < 0.02);
        assert!(q_zero_parametrized_t(m.clone(), 2.0, di, win, Mode::Neumann).is_err());
        let t_max = 2.0 * di;
        let near = q_zero_parametrized_t(m, t_max - 1e-3, di, win, Mode::Neumann).unwrap();
        assert!(near.is_finite() && near <= parametrized_upper_bound(3, di, t_max - 1e-3) + 1e-9);
    }
}
