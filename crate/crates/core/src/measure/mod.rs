//! Finite Borel measures on the unit cube that can be evaluated on dyadic
//! cubes.

pub mod cascade;
pub mod density;
pub mod product;
pub mod spec;

use std::collections::BTreeMap;

use smallvec::SmallVec;

use crate::cube::DyadicCube;
use crate::error::Result;
use crate::Mode;

pub use cascade::{BlockSchedule, CascadeMeasure, Generator, Schedule};
pub use density::{DensityKind, DensityMeasure};
pub use product::ProductMeasure;
pub use spec::MeasureSpec;

/// Identifies cubes of one level whose descendant trees carry proportional
/// masses (up to a symmetry of the model).
pub type ClassKey = SmallVec<[u128; 4]>;

/// Bound on mass decay along any descending chain: for every level `m`,
/// `Σ_{i<period} step(m + i) ≤ log2_per_period`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRate {
    pub period: u32,
    pub log2_per_period: f64,
}

/// `log2 Σ 2^{x_i}`, `-∞` for an empty sum.
pub fn log2_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: SmallVec<[f64; 16]> = values.into_iter().filter(|x| *x > f64::NEG_INFINITY).collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp2()).sum::<f64>().log2()
}

/// Multiset of `log2` values stored as `(log2 value, log2 multiplicity)`;
/// values equal to within `1e-9` in `log2` are merged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Histogram {
    bins: BTreeMap<i64, (f64, f64)>,
}

const QUANTUM: f64 = 1e9;

pub fn quantize(log2_value: f64) -> i64 {
    (log2_value * QUANTUM).round() as i64
}

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, log2_value: f64, log2_mult: f64) {
        let e = self
            .bins
            .entry(quantize(log2_value))
            .or_insert((log2_value, f64::NEG_INFINITY));
        e.1 = log2_sum_exp([e.1, log2_mult]);
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Entries sorted by decreasing value.
    pub fn entries(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.bins.values().rev().copied()
    }

    pub fn into_sorted(self) -> Vec<(f64, f64)> {
        self.bins.into_values().rev().collect()
    }

    pub fn convolve(&self, other: &[(f64, f64)]) -> Histogram {
        let mut out = Histogram::new();
        for (v, m) in self.entries() {
            for &(w, k) in other {
                out.add(v + w, m + k);
            }
        }
        out
    }

    /// Affine map `v ↦ a v + b` of the values.
    pub fn map_values(&self, a: f64, b: f64) -> Histogram {
        let mut out = Histogram::new();
        for (v, m) in self.entries() {
            out.add(a * v + b, m);
        }
        out
    }

    /// `log2 Σ mult · 2^{q v}` with the `0^0 = 0` convention already implied
    /// by storing only positive values.
    pub fn log2_moment(&self, q: f64) -> f64 {
        log2_sum_exp(self.entries().map(|(v, m)| q * v + m))
    }

    pub fn log2_count(&self) -> f64 {
        self.log2_moment(0.0)
    }

    pub fn max_value(&self) -> Option<f64> {
        self.entries().next().map(|e| e.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureModel {
    Cascade(CascadeMeasure),
    Density(DensityMeasure),
    Product(ProductMeasure),
    /// `c·ν` with `log2_factor = log2 c`.
    Scaled {
        inner: Box<MeasureModel>,
        log2_factor: f64,
    },
}

impl MeasureModel {
    pub fn scaled(self, factor: f64) -> MeasureModel {
        MeasureModel::Scaled {
            inner: Box::new(self),
            log2_factor: factor.log2(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MeasureModel::Cascade(c) => c.dim(),
            MeasureModel::Density(d) => d.dim(),
            MeasureModel::Product(p) => p.dim(),
            MeasureModel::Scaled { inner, .. } => inner.dim(),
        }
    }

    pub fn log2_mass(&self, cube: &DyadicCube) -> Result<f64> {
        match self {
            MeasureModel::Cascade(c) => Ok(c.log2_mass(cube)),
            MeasureModel::Density(d) => d.log2_mass(cube),
            MeasureModel::Product(p) => p.log2_mass(cube),
            MeasureModel::Scaled { inner, log2_factor } => Ok(inner.log2_mass(cube)? + log2_factor),
        }
    }

    pub fn mass(&self, cube: &DyadicCube) -> Result<f64> {
        Ok(self.log2_mass(cube)?.exp2())
    }

    /// Mass with an absolute error bound (zero for exact models).
    pub fn mass_with_error(&self, cube: &DyadicCube) -> Result<(f64, f64)> {
        match self {
            MeasureModel::Density(d) => d.mass(cube),
            MeasureModel::Scaled { inner, log2_factor } => {
                let (m, e) = inner.mass_with_error(cube)?;
                let c = log2_factor.exp2();
                Ok((m * c, e * c))
            }
            _ => Ok((self.mass(cube)?, 0.0)),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            MeasureModel::Cascade(_) => 1.0,
            MeasureModel::Density(d) => d.total_mass(),
            MeasureModel::Product(p) => p.factors().iter().map(|f| f.total_mass()).product(),
            MeasureModel::Scaled { inner, log2_factor } => inner.total_mass() * log2_factor.exp2(),
        }
    }

    /// `log2` masses of the `2^d` children (`-∞` for empty children).
    pub fn child_log2_masses(&self, cube: &DyadicCube, log2_mass: f64) -> Result<SmallVec<[f64; 8]>> {
        match self {
            MeasureModel::Cascade(c) => Ok(c.child_log2_masses(cube, log2_mass)),
            MeasureModel::Density(d) => cube.children().map(|c| d.log2_mass(&c)).collect(),
            MeasureModel::Product(p) => p.child_log2_masses(cube),
            MeasureModel::Scaled { inner, log2_factor } => {
                let kids = inner.child_log2_masses(cube, log2_mass - log2_factor)?;
                Ok(kids.into_iter().map(|k| k + log2_factor).collect())
            }
        }
    }

    /// Upper bound on `log2(ν(child)/ν(parent))` for parents at `level`.
    pub fn log2_step_bound(&self, level: u32) -> f64 {
        match self {
            MeasureModel::Cascade(c) => c.log2_step_bound(level),
            MeasureModel::Density(d) => d.log2_step_bound(),
            MeasureModel::Product(p) => p.log2_step_bound(level),
            MeasureModel::Scaled { inner, .. } => inner.log2_step_bound(level),
        }
    }

    pub fn tail_rate(&self) -> TailRate {
        match self {
            MeasureModel::Cascade(c) => c.tail_rate(),
            MeasureModel::Density(d) => d.tail_rate(),
            MeasureModel::Product(p) => p.tail_rate(),
            MeasureModel::Scaled { inner, .. } => inner.tail_rate(),
        }
    }

    pub fn class_key(&self, cube: &DyadicCube) -> Option<ClassKey> {
        match self {
            MeasureModel::Cascade(c) => Some(c.class_key(cube)),
            MeasureModel::Density(d) => Some(d.class_key(cube)),
            MeasureModel::Product(p) => p.class_key(cube),
            MeasureModel::Scaled { inner, .. } => inner.class_key(cube),
        }
    }

    /// `∫_Q f^r dΛ` for density models; `None` for singular models.
    pub fn power_integral(&self, cube: &DyadicCube, r: f64) -> Result<Option<f64>> {
        match self {
            MeasureModel::Density(d) => Ok(Some(d.power_integral(cube, r)?.0)),
            MeasureModel::Scaled { inner, log2_factor } => {
                Ok(inner.power_integral(cube, r)?.map(|v| v * (r * log2_factor).exp2()))
            }
            _ => Ok(None),
        }
    }

    /// Closed-form `log2 Σ_{Q∈D_n^{mode}} ν(Q)^q` (`0^0 = 0`), when the model
    /// factorizes; `-∞` for an empty level.
    pub fn level_log2_moment(&self, n: u64, q: f64, mode: Mode) -> Option<f64> {
        match (self, mode) {
            (MeasureModel::Scaled { inner, log2_factor }, _) => {
                inner.level_log2_moment(n, q, mode).map(|m| m + q * log2_factor)
            }
            (MeasureModel::Cascade(c), Mode::Neumann) => Some(c.level_log2_moment(n, q)),
            (MeasureModel::Cascade(c), Mode::Dirichlet) => {
                if c.support_avoids_boundary_from(n) {
                    return Some(c.level_log2_moment(n, q));
                }
                let factors = c.factorize()?;
                Some(factors.iter().map(|f| dirichlet_1d(f, n, q)).sum())
            }
            (MeasureModel::Product(p), _) => {
                let mut acc = 0.0;
                for f in p.factors() {
                    acc += match (f, mode) {
                        (_, Mode::Neumann) => f.level_log2_moment(n, q, Mode::Neumann)?,
                        (MeasureModel::Cascade(c), Mode::Dirichlet) => dirichlet_1d(c, n, q),
                        _ => return None,
                    };
                }
                Some(acc)
            }
            (MeasureModel::Density(d), Mode::Neumann) if d.kind() == DensityKind::Constant => {
                let dim = d.dim() as f64;
                Some(dim * n as f64 * (1.0 - q))
            }
            _ => None,
        }
    }

    /// Level moments split by class key (Neumann), for models whose class
    /// key and level determine the descendant tree up to scaling.
    pub fn keyed_level_log2_moments(&self, n: u64, q: f64) -> Option<Vec<(ClassKey, f64)>> {
        match self {
            MeasureModel::Cascade(c) => c.keyed_level_log2_moments(n, q),
            MeasureModel::Scaled { inner, log2_factor } => Some(
                inner
                    .keyed_level_log2_moments(n, q)?
                    .into_iter()
                    .map(|(k, m)| (k, m + q * log2_factor))
                    .collect(),
            ),
            _ => None,
        }
    }

    pub fn keyed_max_log2_masses(&self, n: u64) -> Option<Vec<(ClassKey, f64)>> {
        match self {
            MeasureModel::Cascade(c) => c.keyed_max_log2_masses(n),
            MeasureModel::Scaled { inner, log2_factor } => Some(
                inner
                    .keyed_max_log2_masses(n)?
                    .into_iter()
                    .map(|(k, m)| (k, m + log2_factor))
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Shallow representatives for [`keyed_level_log2_moments`](Self::keyed_level_log2_moments).
    pub fn class_representatives(&self, n: u64) -> Option<Vec<(ClassKey, DyadicCube)>> {
        match self {
            MeasureModel::Cascade(c) => c.class_representatives(n),
            MeasureModel::Scaled { inner, .. } => inner.class_representatives(n),
            _ => None,
        }
    }

    /// Closed-form histogram of `log2 ν(Q)` over the positive-mass cubes of
    /// `D_n^{mode}`.
    pub fn level_log2_masses(&self, n: u64, mode: Mode) -> Option<Histogram> {
        match self {
            MeasureModel::Scaled { inner, log2_factor } => {
                Some(inner.level_log2_masses(n, mode)?.map_values(1.0, *log2_factor))
            }
            MeasureModel::Cascade(c) => match mode {
                Mode::Neumann => Some(c.level_log2_masses(n)),
                Mode::Dirichlet if c.support_avoids_boundary_from(n) => Some(c.level_log2_masses(n)),
                Mode::Dirichlet => None,
            },
            MeasureModel::Product(p) if mode == Mode::Neumann => {
                let mut h = Histogram::new();
                h.add(0.0, 0.0);
                for f in p.factors() {
                    let fh = f.level_log2_masses(n, Mode::Neumann)?;
                    h = h.convolve(&fh.into_sorted());
                }
                Some(h)
            }
            MeasureModel::Density(d) if d.kind() == DensityKind::Constant && mode == Mode::Neumann => {
                let mut h = Histogram::new();
                let dn = d.dim() as f64 * n as f64;
                h.add(-dn, dn);
                Some(h)
            }
            _ => None,
        }
    }

    /// `log2 max_{Q∈D_n^N} ν(Q)` when available without enumeration.
    pub fn max_log2_mass(&self, n: u64) -> Option<f64> {
        match self {
            MeasureModel::Cascade(c) => Some(c.max_log2_mass(n)),
            MeasureModel::Density(d) => d.max_log2_mass(u32::try_from(n).ok()?).ok(),
            MeasureModel::Product(p) => p.factors().iter().map(|f| f.max_log2_mass(n)).sum(),
            MeasureModel::Scaled { inner, log2_factor } => Some(inner.max_log2_mass(n)? + log2_factor),
        }
    }

    /// Whether the support at every level `>= n` avoids the boundary cubes.
    pub fn support_avoids_boundary_from(&self, n: u64) -> bool {
        match self {
            MeasureModel::Cascade(c) => c.support_avoids_boundary_from(n),
            MeasureModel::Scaled { inner, .. } => inner.support_avoids_boundary_from(n),
            _ => false,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            MeasureModel::Cascade(_) => "cascade",
            MeasureModel::Density(_) => "density",
            MeasureModel::Product(_) => "product",
            MeasureModel::Scaled { inner, .. } => inner.kind_name(),
        }
    }
}

/// `log2 Σ_{Q∈D_n^D} μ(Q)^q` for a 1-D cascade: the full sum minus the two
/// boundary intervals.
fn dirichlet_1d(c: &CascadeMeasure, n: u64, q: f64) -> f64 {
    if n < 2 {
        return f64::NEG_INFINITY;
    }
    let full = c.level_log2_moment(n, q);
    let mut removed = 0.0;
    for last in [false, true] {
        let e = c.edge_log2_mass(n, last);
        if e > f64::NEG_INFINITY {
            removed += (q * e - full).exp2();
        }
    }
    let rest = 1.0 - removed;
    if rest <= 0.0 {
        f64::NEG_INFINITY
    } else {
        full + rest.log2()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::WeightVector;

    #[test]
    fn histogram_merges_and_moments() {
        let mut h = Histogram::new();
        h.add(-1.0, 0.0);
        h.add(-1.0 + 1e-12, 0.0);
        h.add(-2.0, 1.0);
        assert_eq!(h.len(), 2);
        // 2·2^{-q} + 2·2^{-2q} at q=1: 1 + 0.5
        assert!((h.log2_moment(1.0) - 1.5f64.log2()).abs() < 1e-12);
        assert!((h.log2_count() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_lebesgue_1d() {
        let c = CascadeMeasure::lebesgue(1).unwrap();
        let n = 5;
        let want = ((1u64 << n) - 2) as f64 * (-(n as f64) * 2.0).exp2();
        assert!((dirichlet_1d(&c, n, 2.0) - want.log2()).abs() < 1e-12);
    }

    #[test]
    fn scaled_moment_shifts() {
        let m = MeasureModel::Cascade(
            CascadeMeasure::self_similar(1, WeightVector::from_floats(&[0.7, 0.3]).unwrap()).unwrap(),
        );
        let s = m.clone().scaled(5.0);
        let a = m.level_log2_moment(6, 1.5, Mode::Neumann).unwrap();
        let b = s.level_log2_moment(6, 1.5, Mode::Neumann).unwrap();
        assert!((b - a - 1.5 * 5f64.log2()).abs() < 1e-12);
    }
}
