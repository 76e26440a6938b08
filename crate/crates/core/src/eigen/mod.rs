//! Generalized eigenvalue counting for lumped Galerkin surrogates of the
//! Dirichlet and Neumann forms, `d = 1, 2`.

mod inertia;
mod pencil;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition_fn::format_num;
use crate::roots::least_squares;
use crate::Mode;

pub use inertia::{count_below, negative_pivots};
pub use pencil::{assemble, DiscretePencil, MAX_DIM_LEVEL};

/// Pencils with at most this many kept nodes also get a dense eigensolve.
pub const DENSE_LIMIT: usize = 2048;

/// Counting window of the slope fit, as fractions of the active nodes.
pub const FIT_WINDOW: (f64, f64) = (0.02, 0.1);

pub const FIT_SAMPLES: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub slope_stderr: f64,
    /// `slope ± 2 stderr`.
    pub confidence: (f64, f64),
    pub x_lo: f64,
    pub x_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    pub level: u32,
    pub mode: Mode,
    pub active: usize,
    /// Ascending eigenvalues, present when the pencil is small enough for
    /// the dense solver.
    pub eigenvalues: Option<Vec<f64>>,
    /// `(x, N(x))` on the geometric fit grid.
    pub samples: Vec<(f64, usize)>,
    pub fit: SlopeFit,
}

/// All eigenvalues of the condensed pencil, ascending.
pub fn dense_eigenvalues(pencil: &DiscretePencil) -> Result<Vec<f64>> {
    let (mut s, m) = pencil.condensed()?;
    let inv: Vec<f64> = m.iter().map(|x| 1.0 / x.sqrt()).collect();
    for r in 0..s.nrows() {
        for c in 0..s.ncols() {
            s[(r, c)] *= inv[r] * inv[c];
        }
    }
    let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// `N(x)` for each `x` of the grid.
pub fn eigencount(pencil: &DiscretePencil, x_grid: &[f64]) -> Vec<(f64, usize)> {
    x_grid.iter().map(|&x| (x, count_below(pencil, x))).collect()
}

/// Smallest `x` (to a relative 1%) with `N(x) >= target`.
fn quantile(pencil: &DiscretePencil, target: usize, guess: f64) -> f64 {
    let (mut lo, mut hi) = (guess, guess);
    while count_below(pencil, hi) < target {
        hi *= 4.0;
    }
    while lo > 0.0 && count_below(pencil, lo) >= target {
        lo /= 4.0;
    }
    while hi / lo > 1.01 {
        let mid = (lo * hi).sqrt();
        if count_below(pencil, mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Fit the counting exponent: least squares of `ln N` against `ln x` on a
/// geometric grid spanning the counts `FIT_WINDOW` of the active nodes.
pub fn run(pencil: &DiscretePencil) -> Result<EigenResult> {
    let active = pencil.active_count();
    let lo_count = ((FIT_WINDOW.0 * active as f64).ceil() as usize).max(1);
    let hi_count = (FIT_WINDOW.1 * active as f64).floor() as usize;
    if hi_count < lo_count + 4 {
        return Err(Error::Precondition(format!(
            "{active} active nodes leave too few eigenvalues in the fit window"
        )));
    }
    let trace_a: f64 = (0..pencil.len()).map(|i| pencil.form(i, i)).sum();
    let guess = trace_a / pencil.total_mass().max(f64::MIN_POSITIVE) / active as f64;
    let x_lo = quantile(pencil, lo_count, guess);
    let x_hi = quantile(pencil, hi_count, x_lo);
    let grid: Vec<f64> = (0..FIT_SAMPLES)
        .map(|k| x_lo * (x_hi / x_lo).powf(k as f64 / (FIT_SAMPLES - 1) as f64))
        .collect();
    let samples = eigencount(pencil, &grid);
    let points: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.1 > 0)
        .map(|&(x, n)| (x.ln(), (n as f64).ln()))
        .collect();
    let line = least_squares(&points);
    let eigenvalues = if pencil.len() <= DENSE_LIMIT {
        Some(dense_eigenvalues(pencil)?)
    } else {
        None
    };
    Ok(EigenResult {
        level: pencil.level,
        mode: pencil.mode,
        active,
        eigenvalues,
        samples,
        fit: SlopeFit {
            slope: line.slope,
            slope_stderr: line.slope_stderr,
            confidence: (line.slope - 2.0 * line.slope_stderr, line.slope + 2.0 * line.slope_stderr),
            x_lo,
            x_hi,
        },
    })
}

impl EigenResult {
    pub fn write_eigenvalues_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "eigenvalue"])?;
        for (k, e) in self.eigenvalues.iter().flatten().enumerate() {
            w.write_record([(k + 1).to_string(), format_num(*e)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_counts_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "N"])?;
        for (x, n) in &self.samples {
            w.write_record([format_num(*x), n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fitted slope set against the partition-function zeros.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralComparison {
    pub mode: Mode,
    pub slope: f64,
    pub q_n: Option<f64>,
    pub q_d: Option<f64>,
    pub gap_n: Option<f64>,
    pub gap_d: Option<f64>,
    pub tolerance: f64,
    /// The gap to the zero of the run's own mode (falling back to the
    /// other one) is within tolerance.
    pub pass: bool,
}

pub fn fit_spectral_dimension(
    result: &EigenResult,
    q_n: Option<f64>,
    q_d: Option<f64>,
    tolerance: f64,
) -> SpectralComparison {
    let slope = result.fit.slope;
    let gap_n = q_n.map(|q| (slope - q).abs());
    let gap_d = q_d.map(|q| (slope - q).abs());
    let own = match result.mode {
        Mode::Neumann => gap_n.or(gap_d),
        Mode::Dirichlet => gap_d.or(gap_n),
    };
    SpectralComparison {
        mode: result.mode,
        slope,
        q_n,
        q_d,
        gap_n,
        gap_d,
        tolerance,
        pass: own.is_some_and(|g| g <= tolerance),
    }
}

impl SpectralComparison {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(format_num).unwrap_or_default();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["mode", "slope", "q_N", "q_D", "gap_N", "gap_D", "tolerance", "pass"])?;
        w.write_record([
            self.mode.as_str().to_string(),
            format_num(self.slope),
            opt(self.q_n),
            opt(self.q_d),
            opt(self.gap_n),
            opt(self.gap_d),
            format_num(self.tolerance),
            self.pass.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::measure::MeasureModel;

    fn model(name: &str) -> MeasureModel {
        catalog::lookup(name).unwrap().spec.build().unwrap()
    }

    #[test]
    fn inertia_matches_dense_counts() {
        for (name, level) in [("lebesgue-1", 6), ("binomial-0.7", 6), ("lebesgue-2", 3), ("open-square-graded", 4)] {
            for mode in [Mode::Dirichlet, Mode::Neumann] {
                let p = assemble(&model(name), level, mode).unwrap();
                let ev = dense_eigenvalues(&p).unwrap();
                assert_eq!(ev.len(), p.active_count());
                assert!(ev[0] > -1e-9, "{name} {mode}: {}", ev[0]);
                if mode == Mode::Neumann {
                    assert!(ev[0] > 0.0);
                }
                for w in ev.windows(2) {
                    let x = 0.5 * (w[0] + w[1]);
                    if w[1] - w[0] > 1e-9 * w[1] {
                        let want = ev.iter().filter(|e| **e < x).count();
                        assert_eq!(count_below(&p, x), want, "{name} {mode} x = {x}");
                    }
                }
            }
        }
    }

    #[test]
    fn lebesgue_line_spectrum() {
        // Lumped P1 Dirichlet eigenvalues on n = 2^L cells:
        // (4 / h^2) sin^2(k pi h / 2).
        let p = assemble(&model("lebesgue-1"), 5, Mode::Dirichlet).unwrap();
        let ev = dense_eigenvalues(&p).unwrap();
        let h = 1.0 / 32.0;
        for (k, e) in ev.iter().enumerate() {
            let want = 4.0 / (h * h) * ((k + 1) as f64 * std::f64::consts::PI * h / 2.0).sin().powi(2);
            assert!((e - want).abs() < 1e-9 * want, "{k}: {e} vs {want}");
        }
    }

    #[test]
    fn lebesgue_line_slope() {
        let p = assemble(&model("lebesgue-1"), 9, Mode::Dirichlet).unwrap();
        let r = run(&p).unwrap();
        assert!((r.fit.slope - 0.5).abs() < 0.03, "{:?}", r.fit);
        let c = fit_spectral_dimension(&r, Some(0.5), None, 0.03);
        assert!(c.pass);
        let mut buf = Vec::new();
        r.write_counts_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x,N\n"));
    }
}
