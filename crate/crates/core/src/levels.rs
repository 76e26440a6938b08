//! Level-`n` distributions of a set function, `{𝔍(Q) : Q ∈ D_n^{mode}}`.
//!
//! Three routes, tried in order:
//! 1. closed form, when `𝔍(Q) = ν(Q)^b w(n)` on the whole level and the
//!    model has closed-form level moments;
//! 2. keyed closed form for periodic cascades: `𝔍(Q)/ν(Q)^b` depends only
//!    on the class key, evaluated once on a shallow representative;
//! 3. a class-compressed breadth-first pass: cubes sharing class key,
//!    boundary contact and mass have equal `𝔍`, so each class is evaluated
//!    once and carried with its multiplicity.

use std::collections::HashMap;
use std::sync::Arc;

use crate::cube::DyadicCube;
use crate::error::{Error, Result};
use crate::measure::{log2_sum_exp, quantize, ClassKey, Histogram, MeasureModel};
use crate::setfn::{SetFunction, SetFunctionKind};
use crate::Mode;

pub const DEFAULT_CLASS_BUDGET: usize = 2_000_000;

#[derive(Debug, Clone)]
enum Route {
    Closed { b: f64, log2_weight: f64 },
    Keyed { b: f64, factors: Vec<(ClassKey, f64)> },
    Classes(Histogram),
}

/// `𝔍` values over one level, queried through `log2 Σ 𝔍(Q)^q`.
#[derive(Debug, Clone)]
pub struct LevelRow {
    n: u64,
    mode: Mode,
    measure: Arc<MeasureModel>,
    route: Route,
    /// Certified slack: some `𝔍` values are lower bounds within this
    /// `log2` distance of their upper enclosure.
    log2_slack: f64,
}

impl LevelRow {
    pub fn build(j: &SetFunction, n: u64, mode: Mode) -> Result<Self> {
        Self::build_with_budget(j, n, mode, DEFAULT_CLASS_BUDGET)
    }

    pub fn build_with_budget(j: &SetFunction, n: u64, mode: Mode, budget: usize) -> Result<Self> {
        let measure = j.measure().clone();
        let kind = j.kind();
        let b = kind.mass_exponent();
        let density_norm = matches!(kind, SetFunctionKind::DensityNorm { .. });
        if !density_norm {
            j.check_admissible()?;
        }
        let mk = |route| LevelRow {
            n,
            mode,
            measure: measure.clone(),
            route,
            log2_slack: 0.0,
        };
        if !density_norm && j.is_local_from(n) && measure.level_log2_moment(n, 1.0, mode).is_some() {
            return Ok(mk(Route::Closed {
                b,
                log2_weight: j.log2_weight(n),
            }));
        }
        let keyed_ok = mode == Mode::Neumann || measure.support_avoids_boundary_from(n);
        if !density_norm && keyed_ok {
            if let Some(reps) = measure.class_representatives(n) {
                let mut factors = Vec::with_capacity(reps.len());
                let mut slack: f64 = 0.0;
                for (key, rep) in reps {
                    let m = measure.log2_mass(&rep)?;
                    let e = j.eval_with_mass(&rep, m, n)?;
                    slack = slack.max(e.log2_upper() - e.log2_value);
                    factors.push((key, e.log2_value - b * m));
                }
                let mut row = mk(Route::Keyed { b, factors });
                row.log2_slack = slack;
                return Ok(row);
            }
        }
        let (hist, slack) = class_histogram(j, n, mode, budget)?;
        let mut row = mk(Route::Classes(hist));
        row.log2_slack = slack;
        Ok(row)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn log2_slack(&self) -> f64 {
        self.log2_slack
    }

    pub fn route_name(&self) -> &'static str {
        match self.route {
            Route::Closed { .. } => "closed-form",
            Route::Keyed { .. } => "keyed-closed-form",
            Route::Classes(_) => "class-enumeration",
        }
    }

    /// `log2 Σ_{Q ∈ D_n^{mode}} 𝔍(Q)^q` with `0^0 = 0`; `-∞` on an empty
    /// level.
    pub fn log2_moment(&self, q: f64) -> f64 {
        match &self.route {
            Route::Closed { b, log2_weight } => {
                let m = self
                    .measure
                    .level_log2_moment(self.n, b * q, self.mode)
                    .expect("closed form checked at construction");
                if m == f64::NEG_INFINITY {
                    m
                } else {
                    m + q * log2_weight
                }
            }
            Route::Keyed { b, factors } => {
                let parts = self
                    .measure
                    .keyed_level_log2_moments(self.n, b * q)
                    .expect("keyed form checked at construction");
                let lookup: HashMap<&ClassKey, f64> = factors.iter().map(|(k, f)| (k, *f)).collect();
                log2_sum_exp(parts.iter().map(|(k, m)| {
                    let f = lookup.get(k).copied().unwrap_or(f64::NEG_INFINITY);
                    m + q * f
                }))
            }
            Route::Classes(h) => h.log2_moment(q),
        }
    }

    /// `τ_n(q) = log2(Σ 𝔍(Q)^q) / n`.
    pub fn tau(&self, q: f64) -> f64 {
        self.log2_moment(q) / self.n as f64
    }

    pub fn log2_count(&self) -> f64 {
        self.log2_moment(0.0)
    }

    /// `log2 max 𝔍(Q)` over the level.
    pub fn log2_max(&self) -> f64 {
        match &self.route {
            Route::Closed { b, log2_weight } => match self.measure.max_log2_mass(self.n) {
                Some(m) if self.mode == Mode::Neumann || self.measure.support_avoids_boundary_from(self.n) => {
                    b * m + log2_weight
                }
                // Dirichlet with boundary mass: read it off large moments.
                _ => self.log2_moment(256.0) / 256.0,
            },
            Route::Keyed { b, factors } => {
                let maxima = self.measure.keyed_max_log2_masses(self.n).unwrap_or_default();
                let lookup: HashMap<&ClassKey, f64> = factors.iter().map(|(k, f)| (k, *f)).collect();
                maxima
                    .iter()
                    .map(|(k, m)| b * m + lookup.get(k).copied().unwrap_or(f64::NEG_INFINITY))
                    .fold(f64::NEG_INFINITY, f64::max)
            }
            Route::Classes(h) => h.max_value().unwrap_or(f64::NEG_INFINITY),
        }
    }

    /// The full histogram of `log2 𝔍` values when the row was enumerated.
    pub fn histogram(&self) -> Option<&Histogram> {
        match &self.route {
            Route::Classes(h) => Some(h),
            _ => None,
        }
    }

    /// Histogram of `log2 𝔍` values, from the closed-form mass histogram
    /// when available.
    pub fn value_histogram(&self) -> Option<Histogram> {
        match &self.route {
            Route::Classes(h) => Some(h.clone()),
            Route::Closed { b, log2_weight } => Some(
                self.measure
                    .level_log2_masses(self.n, self.mode)?
                    .map_values(*b, *log2_weight),
            ),
            Route::Keyed { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
struct ClassState {
    cube: DyadicCube,
    log2_mass: f64,
    log2_mult: f64,
}

/// Class-compressed level pass; returns the histogram of `log2 𝔍` values
/// and the largest certified slack.
pub fn class_histogram(j: &SetFunction, n: u64, mode: Mode, budget: usize) -> Result<(Histogram, f64)> {
    let states = class_states(j.measure(), n, mode, budget)?;
    let mut hist = Histogram::new();
    let mut slack: f64 = 0.0;
    for s in states {
        if !mode.admits(&s.cube) {
            continue;
        }
        let e = j.eval_with_mass(&s.cube, s.log2_mass, n)?;
        if e.log2_value == f64::NEG_INFINITY {
            continue;
        }
        slack = slack.max(e.log2_upper() - e.log2_value);
        hist.add(e.log2_value, s.log2_mult);
    }
    Ok((hist, slack))
}

/// Histogram of `log2 ν(Q)` over the positive-mass cubes of `D_n^{mode}`.
pub fn mass_histogram(measure: &MeasureModel, n: u64, mode: Mode, budget: usize) -> Result<Histogram> {
    if let Some(h) = measure.level_log2_masses(n, mode) {
        return Ok(h);
    }
    let mut h = Histogram::new();
    for s in class_states(measure, n, mode, budget)? {
        if mode.admits(&s.cube) {
            h.add(s.log2_mass, s.log2_mult);
        }
    }
    Ok(h)
}

fn class_states(measure: &MeasureModel, n: u64, mode: Mode, budget: usize) -> Result<Vec<ClassState>> {
    let n32 = u32::try_from(n)
        .ok()
        .filter(|&l| l <= crate::cube::MAX_LEVEL)
        .ok_or_else(|| Error::Precondition(format!("level {n} is beyond enumeration range")))?;
    let root = DyadicCube::unit(measure.dim());
    let m0 = measure.log2_mass(&root)?;
    if m0 == f64::NEG_INFINITY {
        return Ok(Vec::new());
    }
    let mut states = vec![ClassState {
        cube: root,
        log2_mass: m0,
        log2_mult: 0.0,
    }];
    for level in 0..n32 {
        let mut next: HashMap<(ClassKey, u64, i64), ClassState> = HashMap::new();
        let mut order = Vec::new();
        for s in &states {
            let kids = measure.child_log2_masses(&s.cube, s.log2_mass)?;
            for (i, km) in kids.iter().enumerate() {
                if *km == f64::NEG_INFINITY {
                    continue;
                }
                let child = s.cube.child(i);
                let key = match measure.class_key(&child) {
                    Some(k) => k,
                    // No symmetry information: every cube is its own class.
                    None => child.coords().iter().copied().collect(),
                };
                let flags = if mode == Mode::Dirichlet { child.boundary_flags() } else { 0 };
                let id = (key, flags, quantize(*km));
                match next.get_mut(&id) {
                    Some(st) => st.log2_mult = log2_sum_exp([st.log2_mult, s.log2_mult]),
                    None => {
                        order.push(id.clone());
                        next.insert(
                            id,
                            ClassState {
                                cube: child,
                                log2_mass: *km,
                                log2_mult: s.log2_mult,
                            },
                        );
                    }
                }
            }
            if next.len() > budget {
                return Err(Error::Budget {
                    budget,
                    level: level + 1,
                });
            }
        }
        states = order.into_iter().map(|id| next.remove(&id).unwrap()).collect();
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::enumerate::enumerate_support;

    fn setfn(name: &str, kind: SetFunctionKind) -> SetFunction {
        let m = catalog::lookup(name).unwrap().spec.build().unwrap();
        SetFunction::new(kind, Arc::new(m)).unwrap()
    }

    fn brute(j: &SetFunction, n: u32, mode: Mode, q: f64) -> f64 {
        let cubes = enumerate_support(j.measure(), n, mode, 1 << 22).unwrap();
        log2_sum_exp(cubes.iter().map(|(c, _)| q * j.eval(c).unwrap().log2_value))
    }

    #[test]
    fn routes_agree_with_enumeration() {
        let cases = [
            ("sierpinski-tetraeder", SetFunctionKind::spectral(3)),
            ("open-square-graded", SetFunctionKind::spectral(2)),
            ("block-cantor-product", SetFunctionKind::spectral(3)),
            ("binomial-0.7", SetFunctionKind::Plain),
        ];
        for (name, kind) in cases {
            let j = setfn(name, kind);
            for mode in [Mode::Neumann, Mode::Dirichlet] {
                for n in 2..=4u32 {
                    let row = LevelRow::build(&j, n as u64, mode).unwrap();
                    let (h, _) = class_histogram(&j, n as u64, mode, 1 << 20).unwrap();
                    for q in [0.0, 0.5, 1.0, 2.0, 3.0] {
                        let want = brute(&j, n, mode, q);
                        let got = row.log2_moment(q);
                        let cls = h.log2_moment(q);
                        let close = |a: f64| {
                            (a == f64::NEG_INFINITY && want == f64::NEG_INFINITY)
                                || (a - want).abs() < 1e-9
                        };
                        assert!(close(got), "{name} {mode} n={n} q={q}: {got} vs {want} via {}", row.route_name());
                        assert!(close(cls), "{name} {mode} n={n} q={q}: classes {cls} vs {want}");
                    }
                }
            }
        }
    }

    #[test]
    fn cusp_density_norm_classes() {
        let j = setfn("cusp-2", SetFunctionKind::DensityNorm { r: 1.5 });
        let row = LevelRow::build(&j, 3, Mode::Neumann).unwrap();
        let want = brute(&j, 3, Mode::Neumann, 1.5);
        assert!((row.log2_moment(1.5) - want).abs() < 1e-9);
    }
}
