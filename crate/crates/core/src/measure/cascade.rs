//! Cascade measures: mass is multiplied down the dyadic tree by per-level
//! child weights.
//!
//! A generator with refinement `s` spreads mass over the `2^{sd}` sub-cubes
//! of side `2^-s` at once; the intermediate levels of a generation use
//! partial sums of the generator over aligned blocks. Generator entries are
//! indexed by `Σ_i j_i << (s·i)` where `j_i ∈ [0, 2^s)` is the sub-cube
//! coordinate along axis `i` (axis 0 least significant).

use num_rational::Ratio;
use smallvec::SmallVec;

use crate::cube::DyadicCube;
use crate::error::{Error, Result};
use crate::measure::{log2_sum_exp, ClassKey, Histogram, TailRate};
use crate::weights::WeightVector;

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    dim: usize,
    refinement: u32,
    weights: WeightVector,
    /// `partial[r][block]` is the generator mass of an aligned block after `r`
    /// of the `s` steps; `partial[s]` equals the weights.
    partial: Vec<Vec<f64>>,
}

impl Generator {
    pub fn new(dim: usize, refinement: u32, weights: WeightVector) -> Result<Self> {
        if dim == 0 || dim > 3 {
            return Err(Error::Config(format!("cascade dimension must be 1..=3, got {dim}")));
        }
        if refinement == 0 || refinement as usize * dim > 12 {
            return Err(Error::Config(format!(
                "refinement {refinement} unsupported in dimension {dim}"
            )));
        }
        let expected = 1usize << (refinement as usize * dim);
        if weights.len() != expected {
            return Err(Error::Config(format!(
                "generator with refinement {refinement} in dimension {dim} needs {expected} weights, got {}",
                weights.len()
            )));
        }
        let s = refinement as usize;
        let mut partial = vec![Vec::new(); s + 1];
        partial[s] = weights.values().to_vec();
        for r in (0..s).rev() {
            let mut blocks = vec![0.0; 1 << (r * dim)];
            for (idx, w) in weights.values().iter().enumerate() {
                blocks[block_index(idx, s, r, dim)] += w;
            }
            partial[r] = blocks;
        }
        Ok(Generator {
            dim,
            refinement,
            weights,
            partial,
        })
    }

    pub fn simple(dim: usize, weights: WeightVector) -> Result<Self> {
        Self::new(dim, 1, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn refinement(&self) -> u32 {
        self.refinement
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    fn partial(&self, r: u32) -> &[f64] {
        &self.partial[r as usize]
    }

    /// Largest single-step ratio `child / parent` at step `r -> r+1`.
    fn step_ratio_max(&self, r: u32) -> f64 {
        let parents = self.partial(r);
        let kids = self.partial(r + 1);
        let mut best: f64 = 0.0;
        for (c, &w) in kids.iter().enumerate() {
            let p = parents[parent_block(c, r + 1, self.dim)];
            if p > 0.0 && w > 0.0 {
                best = best.max(w / p);
            }
        }
        best
    }

    /// Whether every generator cell touching the boundary of the unit cube
    /// carries zero weight.
    fn avoids_boundary(&self) -> bool {
        let s = self.refinement as usize;
        let last = (1usize << s) - 1;
        self.weights.values().iter().enumerate().all(|(idx, &w)| {
            w == 0.0
                || (0..self.dim).all(|i| {
                    let j = (idx >> (s * i)) & last;
                    j != 0 && j != last
                })
        })
    }

    /// 1-D marginals when the generator is an outer product of them.
    fn factor(&self) -> Option<Vec<Vec<f64>>> {
        let s = self.refinement as usize;
        let side = 1usize << s;
        let w = self.weights.values();
        let marginals: Vec<Vec<f64>> = (0..self.dim)
            .map(|axis| {
                let mut m = vec![0.0; side];
                for (idx, &x) in w.iter().enumerate() {
                    m[(idx >> (s * axis)) & (side - 1)] += x;
                }
                m
            })
            .collect();
        for (idx, &x) in w.iter().enumerate() {
            let prod: f64 = (0..self.dim)
                .map(|axis| marginals[axis][(idx >> (s * axis)) & (side - 1)])
                .product();
            if (prod - x).abs() > 1e-14 * x.max(prod).max(1e-300) && (prod - x).abs() > 1e-300 {
                return None;
            }
        }
        Some(marginals)
    }

    fn distinct_log2(values: &[f64]) -> Vec<(f64, f64)> {
        let mut h = Histogram::new();
        for &w in values {
            if w > 0.0 {
                h.add(w.log2(), 0.0);
            }
        }
        h.into_sorted()
    }
}

/// Index of the block containing generator cell `idx` after `r` of `s` steps.
fn block_index(idx: usize, s: usize, r: usize, dim: usize) -> usize {
    let side_mask = (1usize << s) - 1;
    (0..dim).fold(0, |acc, i| {
        let j = (idx >> (s * i)) & side_mask;
        acc | ((j >> (s - r)) << (r * i))
    })
}

/// Index of the parent block (at step `r - 1`) of a block at step `r`.
fn parent_block(block: usize, r: u32, dim: usize) -> usize {
    let r = r as usize;
    let mask = (1usize << r) - 1;
    (0..dim).fold(0, |acc, i| {
        let j = (block >> (r * i)) & mask;
        acc | ((j >> 1) << ((r - 1) * i))
    })
}

/// Block index of `cube` within its current generation after `r` steps.
fn cube_block(cube: &DyadicCube, r: u32) -> usize {
    let mask = (1u128 << r) - 1;
    cube.coords()
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &k)| acc | (((k & mask) as usize) << (r as usize * i)))
}

/// Branching schedule of a one-dimensional homogeneous Cantor measure whose
/// level-`n` survivor count `2^{B(n)}` oscillates between `2^{c⁻ n}` and
/// `2^{c⁺ n}` at geometrically spaced checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSchedule {
    upper: Ratio<i64>,
    lower: Ratio<i64>,
    unit: u64,
    growth: u64,
}

impl BlockSchedule {
    pub fn new(upper: Ratio<i64>, lower: Ratio<i64>, unit: u64) -> Result<Self> {
        let zero = Ratio::from_integer(0);
        let one = Ratio::from_integer(1);
        if upper > one {
            return Err(Error::Config(format!("upper target {upper} exceeds 1")));
        }
        if lower <= zero || lower > upper {
            return Err(Error::Config(format!(
                "targets must satisfy 0 < lower <= upper, got lower {lower}, upper {upper}"
            )));
        }
        if upper == one && lower < one {
            return Err(Error::Config(
                "upper target 1 cannot be revisited after a lower checkpoint".into(),
            ));
        }
        if unit == 0 {
            return Err(Error::Config("block unit must be positive".into()));
        }
        for c in [upper, lower] {
            if (c * Ratio::from_integer(unit as i64)).denom() != &1 {
                return Err(Error::Config(format!(
                    "target {c} times block unit {unit} is not an integer"
                )));
            }
        }
        // Smallest power of two keeping the interpolation slopes in [0, 1].
        let mut growth = 2u64;
        loop {
            let g = Ratio::from_integer(growth as i64);
            let up_ok = upper == one || g * (one - upper) >= one - lower;
            let down_ok = g * lower >= upper;
            if up_ok && down_ok {
                break;
            }
            growth *= 2;
        }
        Ok(BlockSchedule {
            upper,
            lower,
            unit,
            growth,
        })
    }

    pub fn upper(&self) -> Ratio<i64> {
        self.upper
    }

    pub fn lower(&self) -> Ratio<i64> {
        self.lower
    }

    pub fn unit(&self) -> u64 {
        self.unit
    }

    pub fn growth(&self) -> u64 {
        self.growth
    }

    fn target(&self, k: u32) -> Ratio<i64> {
        if k.is_multiple_of(2) {
            self.lower
        } else {
            self.upper
        }
    }

    /// Checkpoint `k` as `(level, log2 survivor count)`.
    pub fn checkpoint(&self, k: u32) -> (u64, u64) {
        let n = self.unit * self.growth.pow(k);
        let b = self.target(k) * Ratio::from_integer(n as i64);
        (n, *b.numer() as u64)
    }

    /// Checkpoints up to (and including) `max_level`, as `(level, c_n)`.
    pub fn checkpoints(&self, max_level: u64) -> Vec<(u64, f64)> {
        let mut out = Vec::new();
        for k in 0.. {
            let (n, b) = self.checkpoint(k);
            if n > max_level {
                break;
            }
            out.push((n, b as f64 / n as f64));
        }
        out
    }

    /// `B(n) = log2` of the number of surviving level-`n` intervals.
    pub fn log2_survivors(&self, n: u64) -> u64 {
        let (mut n0, mut b0) = (0u64, 0u64);
        for k in 0.. {
            let (n1, b1) = self.checkpoint(k);
            if n <= n1 {
                return b0 + (n - n0) * (b1 - b0) / (n1 - n0);
            }
            n0 = n1;
            b0 = b1;
        }
        unreachable!()
    }

    pub fn branches_at(&self, level: u64) -> bool {
        level >= 1 && self.log2_survivors(level) > self.log2_survivors(level - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    SelfSimilar(Generator),
    Periodic(Vec<Generator>),
    Block(BlockSchedule),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeMeasure {
    dim: usize,
    refinement: u32,
    schedule: Schedule,
}

const HALF: [f64; 2] = [0.5, 0.5];
const LEFT: [f64; 2] = [1.0, 0.0];

impl CascadeMeasure {
    pub fn new(schedule: Schedule) -> Result<Self> {
        let (dim, refinement) = match &schedule {
            Schedule::SelfSimilar(g) => (g.dim, g.refinement),
            Schedule::Periodic(gs) => {
                let first = gs
                    .first()
                    .ok_or_else(|| Error::Config("periodic schedule is empty".into()))?;
                if gs
                    .iter()
                    .any(|g| g.dim != first.dim || g.refinement != first.refinement)
                {
                    return Err(Error::Config(
                        "periodic generators must share dimension and refinement".into(),
                    ));
                }
                (first.dim, first.refinement)
            }
            Schedule::Block(_) => (1, 1),
        };
        Ok(CascadeMeasure {
            dim,
            refinement,
            schedule,
        })
    }

    pub fn self_similar(dim: usize, weights: WeightVector) -> Result<Self> {
        Self::new(Schedule::SelfSimilar(Generator::simple(dim, weights)?))
    }

    pub fn lebesgue(dim: usize) -> Result<Self> {
        Self::self_similar(dim, WeightVector::uniform(1 << dim))
    }

    pub fn block(upper: Ratio<i64>, lower: Ratio<i64>, unit: u64) -> Result<Self> {
        Self::new(Schedule::Block(BlockSchedule::new(upper, lower, unit)?))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn refinement(&self) -> u32 {
        self.refinement
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// Levels after which the schedule repeats; `None` for block schedules.
    pub fn period(&self) -> Option<u32> {
        match &self.schedule {
            Schedule::SelfSimilar(_) => Some(self.refinement),
            Schedule::Periodic(gs) => Some(self.refinement * gs.len() as u32),
            Schedule::Block(_) => None,
        }
    }

    /// Generator used for generation `t` (block schedules use level `t + 1`).
    fn generator(&self, t: u64) -> Option<&Generator> {
        match &self.schedule {
            Schedule::SelfSimilar(g) => Some(g),
            Schedule::Periodic(gs) => Some(&gs[(t % gs.len() as u64) as usize]),
            Schedule::Block(_) => None,
        }
    }

    fn block_weights(b: &BlockSchedule, level: u64) -> &'static [f64; 2] {
        if b.branches_at(level) {
            &HALF
        } else {
            &LEFT
        }
    }

    pub fn log2_mass(&self, cube: &DyadicCube) -> f64 {
        let n = cube.level();
        let mut acc = 0.0;
        match &self.schedule {
            Schedule::Block(b) => {
                let k = cube.coords()[0];
                for step in 1..=n {
                    let bit = ((k >> (n - step)) & 1) as usize;
                    let w = Self::block_weights(b, step as u64)[bit];
                    if w == 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    acc += w.log2();
                }
            }
            _ => {
                let s = self.refinement;
                let gens = n / s;
                for t in 0..gens {
                    let g = self.generator(t as u64).unwrap();
                    let shift = n - (t + 1) * s;
                    let mask = (1u128 << s) - 1;
                    let idx = cube.coords().iter().enumerate().fold(0usize, |a, (i, &k)| {
                        a | ((((k >> shift) & mask) as usize) << (s as usize * i))
                    });
                    let w = g.weights.values()[idx];
                    if w == 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    acc += w.log2();
                }
                let r = n % s;
                if r > 0 {
                    let g = self.generator(gens as u64).unwrap();
                    let w = g.partial(r)[cube_block(cube, r)];
                    if w == 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    acc += w.log2();
                }
            }
        }
        acc
    }

    /// `log2` masses of the `2^d` children given the parent's `log2` mass.
    pub fn child_log2_masses(&self, cube: &DyadicCube, log2_mass: f64) -> SmallVec<[f64; 8]> {
        let n = cube.level();
        match &self.schedule {
            Schedule::Block(b) => Self::block_weights(b, n as u64 + 1)
                .iter()
                .map(|&w| if w > 0.0 { log2_mass + w.log2() } else { f64::NEG_INFINITY })
                .collect(),
            _ => {
                let s = self.refinement;
                let r = n % s;
                let g = self.generator((n / s) as u64).unwrap();
                let parent = g.partial(r)[cube_block(cube, r)];
                let kids = g.partial(r + 1);
                let pblock = cube_block(cube, r);
                (0..cube.child_count())
                    .map(|c| {
                        let block = (0..self.dim).fold(0usize, |a, i| {
                            let j = ((pblock >> (r as usize * i)) & ((1 << r) - 1)) << 1
                                | ((c >> i) & 1);
                            a | (j << ((r as usize + 1) * i))
                        });
                        let w = kids[block];
                        if w > 0.0 && parent > 0.0 {
                            log2_mass + (w / parent).log2()
                        } else {
                            f64::NEG_INFINITY
                        }
                    })
                    .collect()
            }
        }
    }

    /// Largest `log2(child/parent)` over parents of positive mass at `level`.
    pub fn log2_step_bound(&self, level: u32) -> f64 {
        match &self.schedule {
            Schedule::Block(b) => {
                if b.branches_at(level as u64 + 1) {
                    -1.0
                } else {
                    0.0
                }
            }
            _ => {
                let s = self.refinement;
                let g = self.generator((level / s) as u64).unwrap();
                g.step_ratio_max(level % s).log2()
            }
        }
    }

    pub fn tail_rate(&self) -> TailRate {
        match self.period() {
            Some(p) => {
                let sum = (0..p).map(|l| self.log2_step_bound(l)).sum();
                TailRate {
                    period: p,
                    log2_per_period: sum,
                }
            }
            // A block schedule may stall for arbitrarily long stretches.
            None => TailRate {
                period: 1,
                log2_per_period: 0.0,
            },
        }
    }

    pub fn class_key(&self, cube: &DyadicCube) -> ClassKey {
        match (&self.schedule, self.period()) {
            (Schedule::Block(_), _) => ClassKey::new(),
            (_, Some(p)) => {
                let n = cube.level();
                let r = n % self.refinement;
                let mask = (1u128 << r) - 1;
                let mut key = ClassKey::new();
                key.push((n % p) as u128);
                key.extend(cube.coords().iter().map(|k| k & mask));
                key
            }
            _ => unreachable!(),
        }
    }

    /// Number of generations completed at `level` and steps into the next.
    fn split_level(&self, level: u64) -> (u64, u32) {
        let s = self.refinement as u64;
        (level / s, (level % s) as u32)
    }

    /// `Σ_{t < gens} f(generator(t))`, grouped by distinct generator.
    fn per_generation(&self, gens: u64, f: impl Fn(&Generator) -> f64) -> f64 {
        let term = |g: &Generator, count: u64| if count == 0 { 0.0 } else { count as f64 * f(g) };
        match &self.schedule {
            Schedule::SelfSimilar(g) => term(g, gens),
            Schedule::Periodic(gs) => {
                let len = gs.len() as u64;
                gs.iter()
                    .enumerate()
                    .map(|(i, g)| term(g, gens / len + u64::from((i as u64) < gens % len)))
                    .sum()
            }
            Schedule::Block(_) => unreachable!(),
        }
    }

    /// `log2 Σ_{Q∈D_n^N} ν(Q)^q` with `0^0 = 0`.
    pub fn level_log2_moment(&self, n: u64, q: f64) -> f64 {
        match &self.schedule {
            Schedule::Block(b) => b.log2_survivors(n) as f64 * (1.0 - q),
            _ => {
                let (gens, r) = self.split_level(n);
                let mut acc = self.per_generation(gens, |g| log2_power_sum(g.weights.values(), q));
                if r > 0 {
                    acc += log2_power_sum(self.generator(gens).unwrap().partial(r), q);
                }
                acc
            }
        }
    }

    /// Level moments split by class key (for self-similar and periodic
    /// schedules). Keys match [`class_key`](Self::class_key).
    pub fn keyed_level_log2_moments(&self, n: u64, q: f64) -> Option<Vec<(ClassKey, f64)>> {
        let (gens, _) = self.split_level(n);
        let full = self.level_log2_moment(gens * self.refinement as u64, q);
        self.keyed(n, full, q)
    }

    /// Largest `log2` mass per class key at level `n`.
    pub fn keyed_max_log2_masses(&self, n: u64) -> Option<Vec<(ClassKey, f64)>> {
        let (gens, _) = self.split_level(n);
        let full = self.max_log2_mass(gens * self.refinement as u64);
        self.keyed(n, full, 1.0)
    }

    fn keyed(&self, n: u64, full: f64, q: f64) -> Option<Vec<(ClassKey, f64)>> {
        let p = self.period()?;
        let (gens, r) = self.split_level(n);
        let g = self.generator(gens).unwrap();
        let phase = (n % p as u64) as u128;
        let mut out = Vec::new();
        for (block, &w) in g.partial(r).iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            let mut key = ClassKey::new();
            key.push(phase);
            let mask = (1usize << r) - 1;
            key.extend((0..self.dim).map(|i| ((block >> (r as usize * i)) & mask) as u128));
            let term = if q == 0.0 { 0.0 } else { q * w.log2() };
            out.push((key, full + term));
        }
        Some(out)
    }

    /// A positive-mass cube at the shallowest level `>= 1` congruent to `n`
    /// modulo the period, for each class key at level `n`.
    pub fn class_representatives(&self, n: u64) -> Option<Vec<(ClassKey, DyadicCube)>> {
        let p = self.period()? as u64;
        let s = self.refinement;
        let mut level = n % p;
        if level == 0 && n > 0 {
            level = p;
        }
        let level = level as u32;
        let (gens, r) = (level / s, level % s);
        // Heaviest full-generation prefix, then every partial block.
        let mut prefix: SmallVec<[u128; 3]> = SmallVec::from_elem(0, self.dim);
        for t in 0..gens {
            let g = self.generator(t as u64).unwrap();
            let (idx, _) = g
                .weights
                .values()
                .iter()
                .enumerate()
                .fold((0, 0.0), |best, (i, &w)| if w > best.1 { (i, w) } else { best });
            for (axis, k) in prefix.iter_mut().enumerate() {
                let j = (idx >> (s as usize * axis)) & ((1 << s) - 1);
                *k = (*k << s) | j as u128;
            }
        }
        let g = self.generator(gens as u64).unwrap();
        let mut out = Vec::new();
        for (block, &w) in g.partial(r).iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            let coords: SmallVec<[u128; 3]> = prefix
                .iter()
                .enumerate()
                .map(|(i, &k)| (k << r) | ((block >> (r as usize * i)) & ((1 << r) - 1)) as u128)
                .collect();
            let cube = DyadicCube::new(level, &coords).expect("representative in range");
            out.push((self.class_key(&cube), cube));
        }
        Some(out)
    }

    pub fn max_log2_mass(&self, n: u64) -> f64 {
        match &self.schedule {
            Schedule::Block(b) => -(b.log2_survivors(n) as f64),
            _ => {
                let (gens, r) = self.split_level(n);
                let mut acc = self.per_generation(gens, |g| g.weights.max().log2());
                if r > 0 {
                    let part = self.generator(gens).unwrap().partial(r);
                    acc += part.iter().copied().fold(0.0, f64::max).log2();
                }
                acc
            }
        }
    }

    /// Sorted `(log2 mass, log2 multiplicity)` over the level-`n` support.
    pub fn level_log2_masses(&self, n: u64) -> Histogram {
        let mut hist = Histogram::new();
        hist.add(0.0, 0.0);
        match &self.schedule {
            Schedule::Block(b) => {
                let mut h = Histogram::new();
                let bn = b.log2_survivors(n) as f64;
                h.add(-bn, bn);
                return h;
            }
            _ => {
                let (gens, r) = self.split_level(n);
                for t in 0..gens {
                    let g = self.generator(t).unwrap();
                    hist = hist.convolve(&Generator::distinct_log2(g.weights.values()));
                }
                if r > 0 {
                    let g = self.generator(gens).unwrap();
                    hist = hist.convolve(&Generator::distinct_log2(g.partial(r)));
                }
            }
        }
        hist
    }

    /// Whether every level `>= n` has its support inside `D_n^D`.
    pub fn support_avoids_boundary_from(&self, n: u64) -> bool {
        match &self.schedule {
            Schedule::SelfSimilar(g) => n >= g.refinement as u64 && g.avoids_boundary(),
            Schedule::Periodic(gs) => {
                n >= self.refinement as u64 && gs.iter().all(Generator::avoids_boundary)
            }
            Schedule::Block(_) => false,
        }
    }

    /// Splits the measure into 1-D cascades when every generator factorizes.
    pub fn factorize(&self) -> Option<Vec<CascadeMeasure>> {
        if self.dim == 1 {
            return Some(vec![self.clone()]);
        }
        let to_gen = |m: Vec<f64>| {
            Generator::new(1, self.refinement, WeightVector::from_floats(&m).ok()?).ok()
        };
        match &self.schedule {
            Schedule::SelfSimilar(g) => {
                let marg = g.factor()?;
                marg.into_iter()
                    .map(|m| CascadeMeasure::new(Schedule::SelfSimilar(to_gen(m)?)).ok())
                    .collect()
            }
            Schedule::Periodic(gs) => {
                let margs: Option<Vec<_>> = gs.iter().map(Generator::factor).collect();
                let margs = margs?;
                (0..self.dim)
                    .map(|axis| {
                        let gens: Option<Vec<_>> =
                            margs.iter().map(|m| to_gen(m[axis].clone())).collect();
                        CascadeMeasure::new(Schedule::Periodic(gens?)).ok()
                    })
                    .collect()
            }
            Schedule::Block(_) => None,
        }
    }

    /// `log2` mass of the first (`last = false`) or last level-`n` interval
    /// of a 1-D cascade.
    pub fn edge_log2_mass(&self, n: u64, last: bool) -> f64 {
        debug_assert_eq!(self.dim, 1);
        match &self.schedule {
            Schedule::Block(b) => {
                let bn = b.log2_survivors(n);
                if !last {
                    -(bn as f64)
                } else if bn == n {
                    -(n as f64)
                } else {
                    f64::NEG_INFINITY
                }
            }
            _ => {
                let (gens, r) = self.split_level(n);
                let pick = |v: &[f64]| if last { *v.last().unwrap() } else { v[0] };
                let acc = self.per_generation(gens, |g| pick(g.weights.values()).log2());
                if acc == f64::NEG_INFINITY {
                    return acc;
                }
                let mut acc = acc;
                if r > 0 {
                    let w = pick(self.generator(gens).unwrap().partial(r));
                    if w == 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    acc += w.log2();
                }
                acc
            }
        }
    }
}

/// `log2 Σ w_i^q` over positive entries (`0^0 = 0`).
pub fn log2_power_sum(values: &[f64], q: f64) -> f64 {
    log2_sum_exp(values.iter().filter(|&&w| w > 0.0).map(|&w| q * w.log2()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sierpinski() -> CascadeMeasure {
        let mut w = vec![0.0; 8];
        w[0] = 0.36;
        w[1] = 0.36;
        w[2] = 0.2;
        w[4] = 0.08;
        CascadeMeasure::self_similar(3, WeightVector::from_floats(&w).unwrap()).unwrap()
    }

    #[test]
    fn child_masses_multiply_weights() {
        let m = sierpinski();
        let root = DyadicCube::unit(3);
        let kids = m.child_log2_masses(&root, 0.0);
        assert!((kids[0].exp2() - 0.36).abs() < 1e-15);
        assert_eq!(kids[7], f64::NEG_INFINITY);
        let c = root.child(2).child(1);
        assert!((m.log2_mass(&c).exp2() - 0.2 * 0.36).abs() < 1e-15);
    }

    #[test]
    fn refined_generator_partial_sums() {
        // 4x4 grid, mass only on the inner 2x2 block.
        let mut w = vec![0.0; 16];
        for (idx, v) in [(5, 0.1), (6, 0.2), (9, 0.3), (10, 0.4)] {
            w[idx] = v;
        }
        let g = Generator::new(2, 2, WeightVector::from_floats(&w).unwrap()).unwrap();
        assert_eq!(g.partial(1), &[0.1, 0.2, 0.3, 0.4]);
        let m = CascadeMeasure::new(Schedule::SelfSimilar(g)).unwrap();
        let root = DyadicCube::unit(2);
        let l1: Vec<f64> = m.child_log2_masses(&root, 0.0).iter().map(|x| x.exp2()).collect();
        assert!((l1[3] - 0.4).abs() < 1e-15);
        let q = root.child(3);
        let l2 = m.child_log2_masses(&q, 0.4f64.log2());
        // Only the child pointing towards the centre (offset 0,0) keeps mass.
        assert!((l2[0].exp2() - 0.4).abs() < 1e-15);
        assert!(l2[1..].iter().all(|x| *x == f64::NEG_INFINITY));
        assert!(m.support_avoids_boundary_from(2));
        assert!((m.log2_step_bound(0).exp2() - 0.4).abs() < 1e-15);
        assert_eq!(m.log2_step_bound(1), 0.0);
    }

    #[test]
    fn block_checkpoints_hit_targets() {
        let b = BlockSchedule::new(Ratio::new(3, 8), Ratio::new(3, 10), 40).unwrap();
        assert_eq!(b.growth(), 2);
        for (k, (n, c)) in b.checkpoints(10_000).into_iter().enumerate() {
            let want = if k % 2 == 0 { 0.3 } else { 0.375 };
            assert_eq!(c, want);
            assert_eq!(b.log2_survivors(n) as f64 / n as f64, want);
        }
        let mut prev = 0;
        for n in 1..3000 {
            let bn = b.log2_survivors(n);
            assert!(bn == prev || bn == prev + 1);
            prev = bn;
        }
    }

    #[test]
    fn block_rejects_infeasible() {
        assert!(BlockSchedule::new(Ratio::new(9, 8), Ratio::new(3, 10), 40).is_err());
        assert!(BlockSchedule::new(Ratio::new(3, 8), Ratio::new(3, 10), 7).is_err());
        let full = CascadeMeasure::block(Ratio::from_integer(1), Ratio::from_integer(1), 1).unwrap();
        assert_eq!(full.level_log2_moment(9, 2.0), -9.0);
    }

    #[test]
    fn factorization_detects_products() {
        let leb = CascadeMeasure::lebesgue(3).unwrap();
        assert_eq!(leb.factorize().unwrap().len(), 3);
        assert!(sierpinski().factorize().is_none());
    }
}
