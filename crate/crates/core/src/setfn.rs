//! Monotone set functions on dyadic cubes and their certified evaluation.
//!
//! For `a < 0` (and for the logarithmic variant) the value
//! `sup_{Q'⊆Q} ν(Q')^b w(Q')` needs a search over descendants. The search is
//! branch-and-bound: a subtree rooted at `D` is pruned once
//! `ν(D)^b · sup_j ratio_j^b · w(level_D + j)` falls below the incumbent,
//! where `ratio_j` is the model's bound on `j`-step mass decay.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cube::DyadicCube;
use crate::error::{CriticalRegime, Error, Result};
use crate::measure::MeasureModel;

pub const DEFAULT_DEPTH_CAP: u32 = 40;
const CHAIN_DEPTH: u32 = 40;
const LOCAL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SetFunctionKind {
    /// `𝔍 = ν`.
    Plain,
    /// `sup_{Q'⊆Q} ν(Q')^b Λ(Q')^a`, `a ≠ 0`.
    Spectral { a: f64, b: f64 },
    /// `sup_{Q'⊆Q} ν(Q')^b |log Λ(Q')|`.
    LogSpectral { b: f64 },
    /// `‖f|_Q‖_{L^r}` for a density `f`.
    DensityNorm { r: f64 },
}

impl SetFunctionKind {
    /// `𝔍_{ν,a,b}`, switching to the logarithmic variant at `a = 0`.
    pub fn with_exponents(a: f64, b: f64) -> Self {
        if a == 0.0 {
            SetFunctionKind::LogSpectral { b }
        } else {
            SetFunctionKind::Spectral { a, b }
        }
    }

    /// `𝔍_ν = 𝔍_{ν, 2/d - 1, 1}`.
    pub fn spectral(dim: usize) -> Self {
        Self::with_exponents(2.0 / dim as f64 - 1.0, 1.0)
    }

    /// `𝔍_{ν, t(2/d-1)/2, 1}`.
    pub fn spectral_t(dim: usize, t: f64) -> Self {
        Self::with_exponents(t * (2.0 / dim as f64 - 1.0) / 2.0, 1.0)
    }

    pub fn mass_exponent(&self) -> f64 {
        match *self {
            SetFunctionKind::Plain => 1.0,
            SetFunctionKind::Spectral { b, .. } | SetFunctionKind::LogSpectral { b } => b,
            SetFunctionKind::DensityNorm { .. } => 1.0,
        }
    }
}

impl std::fmt::Display for SetFunctionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SetFunctionKind::Plain => write!(f, "nu"),
            SetFunctionKind::Spectral { a, b } => write!(f, "J(a={a},b={b})"),
            SetFunctionKind::LogSpectral { b } => write!(f, "J(log,b={b})"),
            SetFunctionKind::DensityNorm { r } => write!(f, "L^{r} norm"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedCube {
    pub cube: DyadicCube,
    pub log2_value: f64,
    /// Certified bound on the unexplored descendants (`-∞` when none).
    pub log2_tail_bound: f64,
    pub exact: bool,
}

impl EvaluatedCube {
    pub fn value(&self) -> f64 {
        self.log2_value.exp2()
    }

    pub fn tail_bound(&self) -> f64 {
        self.log2_tail_bound.exp2()
    }

    /// Upper end of the certified enclosure.
    pub fn log2_upper(&self) -> f64 {
        self.log2_value.max(self.log2_tail_bound)
    }
}

#[derive(Debug, Clone)]
pub struct SetFunction {
    kind: SetFunctionKind,
    measure: Arc<MeasureModel>,
    depth_cap: u32,
    tail_cache: RefCell<HashMap<(u32, u64), Option<f64>>>,
}

impl SetFunction {
    pub fn new(kind: SetFunctionKind, measure: Arc<MeasureModel>) -> Result<Self> {
        match kind {
            SetFunctionKind::Spectral { a, b } => {
                if !(b > 0.0 && b.is_finite() && a.is_finite()) {
                    return Err(Error::Config(format!("need finite a and b > 0, got a={a}, b={b}")));
                }
            }
            SetFunctionKind::LogSpectral { b } => {
                if !(b > 0.0 && b.is_finite()) {
                    return Err(Error::Config(format!("need b > 0, got {b}")));
                }
            }
            SetFunctionKind::DensityNorm { r } => {
                if !(r > 1.0 && r.is_finite()) {
                    return Err(Error::Config(format!("density norm needs r > 1, got {r}")));
                }
                if !matches!(
                    measure.as_ref(),
                    MeasureModel::Density(_) | MeasureModel::Scaled { .. }
                ) {
                    return Err(Error::Config("density norm requires a density measure".into()));
                }
            }
            SetFunctionKind::Plain => {}
        }
        Ok(SetFunction {
            kind,
            measure,
            depth_cap: DEFAULT_DEPTH_CAP,
            tail_cache: RefCell::new(HashMap::new()),
        })
    }

    pub fn with_depth_cap(mut self, depth_cap: u32) -> Self {
        self.depth_cap = depth_cap;
        self
    }

    pub fn kind(&self) -> SetFunctionKind {
        self.kind
    }

    pub fn measure(&self) -> &Arc<MeasureModel> {
        &self.measure
    }

    pub fn dim(&self) -> usize {
        self.measure.dim()
    }

    pub fn depth_cap(&self) -> u32 {
        self.depth_cap
    }

    /// `log2 w(level)` where `w = Λ^a`, `|log Λ|` or 1.
    pub fn log2_weight(&self, level: u64) -> f64 {
        let d = self.dim() as f64;
        match self.kind {
            SetFunctionKind::Spectral { a, .. } => -a * d * level as f64,
            SetFunctionKind::LogSpectral { .. } => {
                if level == 0 {
                    f64::NEG_INFINITY
                } else {
                    (d * level as f64 * std::f64::consts::LN_2).log2()
                }
            }
            _ => 0.0,
        }
    }

    /// Value from the cube's own mass, `b log2 ν(Q) + log2 w(Q)`.
    pub fn log2_local_value(&self, level: u64, log2_mass: f64) -> f64 {
        if log2_mass == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        self.kind.mass_exponent() * log2_mass + self.log2_weight(level)
    }

    fn needs_search(&self) -> bool {
        match self.kind {
            SetFunctionKind::Spectral { a, .. } => a < 0.0,
            SetFunctionKind::LogSpectral { .. } => true,
            _ => false,
        }
    }

    /// `sup_{j≥0} [b R(j) + log2 w(level + j)]` where `R(j)` bounds the
    /// `j`-step mass decay from `structural` level; `None` when the bound
    /// does not decay.
    fn tail_sup(&self, structural: u32, level: u64) -> Option<f64> {
        if let Some(v) = self.tail_cache.borrow().get(&(structural, level)) {
            return *v;
        }
        let v = self.compute_tail_sup(structural, level);
        self.tail_cache.borrow_mut().insert((structural, level), v);
        v
    }

    fn compute_tail_sup(&self, structural: u32, level: u64) -> Option<f64> {
        let b = self.kind.mass_exponent();
        let rate = self.measure.tail_rate();
        let p = rate.period as u64;
        let per_period = b * rate.log2_per_period;
        let horizon = match self.kind {
            SetFunctionKind::Spectral { a, .. } => {
                let inc = per_period - a * self.dim() as f64 * p as f64;
                if inc >= 0.0 {
                    return None;
                }
                p
            }
            SetFunctionKind::LogSpectral { .. } => {
                if per_period >= 0.0 {
                    return None;
                }
                // log2((m+P)/m) < -b σ once m > P / (2^{-bσ} - 1)
                let m_star = p as f64 / ((-per_period).exp2() - 1.0);
                let j0 = (m_star - level as f64).max(0.0).floor() as u64 + 1;
                if j0 > 1 << 16 {
                    return None;
                }
                j0 + p
            }
            _ => return Some(self.log2_weight(level)),
        };
        let mut best = self.log2_weight(level);
        let mut decay = 0.0;
        for j in 1..=horizon {
            decay += self.measure.log2_step_bound(structural + j as u32 - 1);
            best = best.max(b * decay + self.log2_weight(level + j));
        }
        Some(best)
    }

    /// Whether `𝔍(Q) = ν(Q)^b w(Q)` holds for every cube at every level
    /// `>= n`.
    pub fn is_local_from(&self, n: u64) -> bool {
        if !self.needs_search() {
            return !matches!(self.kind, SetFunctionKind::DensityNorm { .. });
        }
        let p = self.measure.tail_rate().period as u64;
        // Step bounds repeat with the period, and for the logarithmic
        // weight the excess only shrinks with the level.
        (n..n + p.max(1)).all(|m| {
            let structural = u32::try_from(m).unwrap_or(u32::MAX / 2);
            match self.tail_sup(structural, m) {
                Some(t) => t <= self.log2_weight(m) + LOCAL_SLACK,
                None => false,
            }
        })
    }

    pub fn eval(&self, cube: &DyadicCube) -> Result<EvaluatedCube> {
        let m = self.measure.log2_mass(cube)?;
        self.eval_with_mass(cube, m, cube.level() as u64)
    }

    /// Evaluates with a known mass; `level` is the level used in the weight
    /// `w`, which may exceed `cube.level()` when `cube` stands in for a cube
    /// with the same descendant structure deeper in the tree.
    pub fn eval_with_mass(&self, cube: &DyadicCube, log2_mass: f64, level: u64) -> Result<EvaluatedCube> {
        let exact = |v: f64| EvaluatedCube {
            cube: cube.clone(),
            log2_value: v,
            log2_tail_bound: f64::NEG_INFINITY,
            exact: true,
        };
        if log2_mass == f64::NEG_INFINITY {
            return Ok(exact(f64::NEG_INFINITY));
        }
        match self.kind {
            SetFunctionKind::Plain => return Ok(exact(log2_mass)),
            SetFunctionKind::DensityNorm { r } => {
                let v = self.measure.power_integral(cube, r)?.ok_or_else(|| {
                    Error::Precondition("density norm needs a density measure".into())
                })?;
                if !v.is_finite() {
                    return Err(Error::Precondition(format!(
                        "density is not {r}-integrable on {cube}"
                    )));
                }
                return Ok(exact(v.log2() / r));
            }
            _ => {}
        }
        let base = self.log2_local_value(level, log2_mass);
        if !self.needs_search() {
            return Ok(exact(base));
        }
        let b = self.kind.mass_exponent();
        let structural = cube.level();
        let Some(t0) = self.tail_sup(structural, level) else {
            return Err(self.divergence());
        };
        if t0 <= self.log2_weight(level) + LOCAL_SLACK {
            return Ok(exact(base));
        }
        // Breadth-first so ties resolve to the shallowest witness.
        let mut incumbent = base;
        let mut frontier = self.expand(cube, log2_mass)?;
        let mut depth = 1u32;
        while !frontier.is_empty() && depth <= self.depth_cap {
            let lvl = level + depth as u64;
            for (_, m) in &frontier {
                let v = b * m + self.log2_weight(lvl);
                if v > incumbent {
                    incumbent = v;
                }
            }
            let mut next = Vec::new();
            for (c, m) in &frontier {
                let t = self
                    .tail_sup(structural + depth, lvl)
                    .ok_or_else(|| self.divergence())?;
                if b * m + t > incumbent + LOCAL_SLACK {
                    next.extend(self.expand(c, *m)?);
                }
            }
            frontier = next;
            depth += 1;
        }
        let mut tail = f64::NEG_INFINITY;
        for (c, m) in &frontier {
            let lvl = level + depth as u64 - 1;
            let t = self
                .tail_sup(c.level(), lvl)
                .ok_or_else(|| self.divergence())?;
            tail = tail.max(b * m + t);
        }
        Ok(EvaluatedCube {
            cube: cube.clone(),
            log2_value: incumbent,
            log2_tail_bound: tail,
            exact: frontier.is_empty(),
        })
    }

    fn expand(&self, cube: &DyadicCube, log2_mass: f64) -> Result<Vec<(DyadicCube, f64)>> {
        let kids = self.measure.child_log2_masses(cube, log2_mass)?;
        Ok(kids
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > f64::NEG_INFINITY)
            .map(|(i, m)| (cube.child(i), *m))
            .collect())
    }

    /// `log2 ν(Q_ℓ)^b w(Q_ℓ)` along the heaviest-child chain from the unit
    /// cube, for `ℓ = 1..=depth`.
    pub fn heaviest_chain(&self, depth: u32) -> Result<Vec<f64>> {
        let mut cube = DyadicCube::unit(self.dim());
        let mut m = self.measure.log2_mass(&cube)?;
        let mut out = Vec::with_capacity(depth as usize);
        for level in 1..=depth {
            let kids = self.measure.child_log2_masses(&cube, m)?;
            let (idx, best) = kids
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
            if best == f64::NEG_INFINITY {
                break;
            }
            cube = cube.child(idx);
            m = best;
            out.push(self.log2_local_value(level as u64, m));
        }
        Ok(out)
    }

    /// Reads the critical regime off the heaviest chain: growth means no
    /// continuous embedding, a flat chain a non-compact one.
    pub fn classify_regime(&self) -> CriticalRegime {
        let Ok(chain) = self.heaviest_chain(CHAIN_DEPTH) else {
            return CriticalRegime::Unknown;
        };
        if chain.len() < 16 {
            return CriticalRegime::Unknown;
        }
        let pts: Vec<(f64, f64)> = chain
            .iter()
            .enumerate()
            .skip(7)
            .map(|(i, v)| (((i + 1) as f64).log2(), *v))
            .collect();
        let slope = crate::roots::least_squares(&pts).slope;
        if slope > 0.1 {
            CriticalRegime::NotContinuous
        } else if slope >= -0.1 {
            CriticalRegime::NotCompact
        } else {
            CriticalRegime::Subgeometric
        }
    }

    fn divergence(&self) -> Error {
        let rate = self.measure.tail_rate();
        let b = self.kind.mass_exponent();
        let per_level = match self.kind {
            SetFunctionKind::Spectral { a, .. } => {
                (b * rate.log2_per_period / rate.period as f64 - a * self.dim() as f64).exp2()
            }
            _ => (b * rate.log2_per_period / rate.period as f64).exp2(),
        };
        Error::Divergent {
            factor: per_level,
            regime: self.classify_regime(),
        }
    }

    /// Checks that every cube of the model admits a geometric tail bound,
    /// returning the divergence diagnostic otherwise.
    pub fn check_admissible(&self) -> Result<()> {
        if self.needs_search() && self.tail_sup(0, 1).is_none() {
            return Err(self.divergence());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn model(name: &str) -> Arc<MeasureModel> {
        Arc::new(catalog::lookup(name).unwrap().spec.build().unwrap())
    }

    #[test]
    fn lebesgue_spectral_is_local() {
        let j = SetFunction::new(SetFunctionKind::spectral(3), model("lebesgue-3")).unwrap();
        let q = DyadicCube::new(3, &[1, 2, 3]).unwrap();
        let e = j.eval(&q).unwrap();
        assert!(e.exact);
        assert!((e.log2_value + 6.0).abs() < 1e-12);
        assert!(j.is_local_from(0));
    }

    #[test]
    fn log_spectral_lebesgue_d2() {
        let j = SetFunction::new(SetFunctionKind::spectral(2), model("lebesgue-2")).unwrap();
        for n in 1..6u32 {
            let q = DyadicCube::new(n, &[0, 1]).unwrap();
            let e = j.eval(&q).unwrap();
            let want = (-2.0 * n as f64).exp2() * 2.0 * n as f64 * std::f64::consts::LN_2;
            assert!((e.value() - want).abs() < 1e-12 * want, "n={n}");
        }
    }

    #[test]
    fn refined_cascade_searches_descendants() {
        let j = SetFunction::new(SetFunctionKind::spectral(2), model("open-square-graded")).unwrap();
        // After one partial step the surviving child carries the full mass,
        // so the supremum sits one level down.
        let q = DyadicCube::new(1, &[1, 1]).unwrap();
        let e = j.eval(&q).unwrap();
        assert!(e.exact);
        let child = j.measure().log2_mass(&q.child(0)).unwrap();
        let want = child + (2.0 * 2.0 * std::f64::consts::LN_2).log2();
        assert!((e.log2_value - want).abs() < 1e-12);
    }

    #[test]
    fn cusp_refusals_carry_regimes() {
        for (name, regime) in [
            ("cusp-1", CriticalRegime::NotCompact),
            ("cusp-2", CriticalRegime::Subgeometric),
            ("cusp-3", CriticalRegime::NotContinuous),
        ] {
            let j = SetFunction::new(SetFunctionKind::spectral(3), model(name)).unwrap();
            match j.eval(&DyadicCube::unit(3)) {
                Err(Error::Divergent { regime: r, .. }) => assert_eq!(r, regime, "{name}"),
                other => panic!("{name}: {other:?}"),
            }
        }
    }
}
