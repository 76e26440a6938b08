//! Stopping-time partitions `P_t`, partition entropy `M_𝔍(x)`, the optimal
//! partition values `γ_{𝔍,n}` and the Birman–Solomyak refinement.
//!
//! Counting runs on classes: cubes with equal class key and mass have equal
//! `𝔍` and equal descendant trees, so one representative per class carries
//! a multiplicity. Explicit partitions are materialized only on request.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cube::{DyadicCube, MAX_LEVEL};
use crate::error::{Error, Result};
use crate::measure::{log2_sum_exp, quantize, ClassKey, MeasureModel};
use crate::partition_fn::format_num;
use crate::roots::{least_squares, LineFit};
use crate::setfn::SetFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PartitionOrigin {
    Stopping { log2_t: f64 },
    BirmanSolomyak { steps: usize },
    Manual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionCube {
    pub cube: DyadicCube,
    pub log2_value: f64,
}

/// Positive-value cubes of a dyadic partition; zero-value cubes are kept
/// as a count and a total volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub cubes: Vec<PartitionCube>,
    pub zero_count: u64,
    pub zero_volume: f64,
    pub origin: PartitionOrigin,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    /// Pairwise disjointness and exact cover of the unit cube, by address
    /// arithmetic on the stored cubes plus the zero-value volume.
    pub fn check_tiling(&self) -> Result<()> {
        let mut sorted: Vec<&DyadicCube> = self.cubes.iter().map(|c| &c.cube).collect();
        sorted.sort_by_key(|c| c.level());
        let mut seen: std::collections::HashSet<DyadicCube> = std::collections::HashSet::new();
        for c in &sorted {
            for l in 0..=c.level() {
                if seen.contains(&c.ancestor(l)) {
                    return Err(Error::Precondition(format!("{c} overlaps {}", c.ancestor(l))));
                }
            }
            seen.insert((*c).clone());
        }
        let vol: f64 = self.cubes.iter().map(|c| c.cube.volume()).sum::<f64>() + self.zero_volume;
        if (vol - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition(format!("partition covers volume {vol}, not 1")));
        }
        Ok(())
    }

    /// Every stored cube is good (`𝔍 < t`) and its parent bad (`𝔍 >= t`).
    pub fn check_stopping(&self, j: &SetFunction) -> Result<()> {
        let PartitionOrigin::Stopping { log2_t } = self.origin else {
            return Err(Error::Precondition("not a stopping partition".into()));
        };
        for pc in &self.cubes {
            if pc.log2_value >= log2_t {
                return Err(Error::Precondition(format!("{} is bad", pc.cube)));
            }
            if let Some(p) = pc.cube.parent() {
                if j.eval(&p)?.log2_value < log2_t {
                    return Err(Error::Precondition(format!("parent of {} is good", pc.cube)));
                }
            }
        }
        Ok(())
    }

    /// CSV with columns `level,k1,…,kd,J_value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.cubes.first().map(|c| c.cube.dim()).unwrap_or(1);
        let mut header = vec!["level".to_string()];
        header.extend((1..=d).map(|i| format!("k{i}")));
        header.push("J_value".into());
        w.write_record(&header)?;
        for pc in &self.cubes {
            let mut rec = vec![pc.cube.level().to_string()];
            rec.extend(pc.cube.coords().iter().map(|k| k.to_string()));
            rec.push(format_num(pc.log2_value.exp2()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sort_cubes(cubes: &mut [PartitionCube]) {
    cubes.sort_by(|a, b| {
        a.cube
            .level()
            .cmp(&b.cube.level())
            .then_with(|| a.cube.coords().cmp(b.cube.coords()))
    });
}

/// Explicit stopping partition `P_t` with `t = 2^{log2_t}`.
pub fn stopping_partition(j: &SetFunction, log2_t: f64, max_depth: u32, budget: usize) -> Result<Partition> {
    let measure = j.measure();
    let root = DyadicCube::unit(j.dim());
    let mut frontier = vec![(root.clone(), measure.log2_mass(&root)?)];
    let mut cubes = Vec::new();
    let (mut zero_count, mut zero_volume) = (0u64, 0.0);
    while let Some((cube, m)) = frontier.pop() {
        if m == f64::NEG_INFINITY {
            zero_count += 1;
            zero_volume += cube.volume();
            continue;
        }
        let v = j.eval_with_mass(&cube, m, cube.level() as u64)?.log2_value;
        if v < log2_t {
            cubes.push(PartitionCube { cube, log2_value: v });
            if cubes.len() > budget {
                return Err(Error::Budget {
                    budget,
                    level: cubes.last().unwrap().cube.level(),
                });
            }
            continue;
        }
        if cube.level() >= max_depth {
            return Err(Error::NoTermination {
                depth: max_depth,
                level: cube.level(),
                value: v.exp2(),
            });
        }
        let kids = measure.child_log2_masses(&cube, m)?;
        for (i, km) in kids.iter().enumerate() {
            frontier.push((cube.child(i), *km));
        }
    }
    sort_cubes(&mut cubes);
    Ok(Partition {
        cubes,
        zero_count,
        zero_volume,
        origin: PartitionOrigin::Stopping { log2_t },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingSummary {
    pub log2_t: f64,
    /// `log2 card` of the positive-value cubes of `P_t`.
    pub log2_card: f64,
    pub log2_zero: f64,
    /// `log2 card{Q : 𝔍(Q) >= t}` (the split cubes).
    pub log2_bad: f64,
    /// `log2 max_{Q∈P_t} 𝔍(Q)`.
    pub log2_max: f64,
    pub depth: u32,
}

impl StoppingSummary {
    pub fn card(&self) -> f64 {
        self.log2_card.exp2()
    }
}

#[derive(Debug, Clone)]
struct State {
    cube: DyadicCube,
    log2_mass: f64,
    log2_mult: f64,
}

fn class_id(measure: &MeasureModel, cube: &DyadicCube, log2_mass: f64) -> (ClassKey, i64) {
    let key = measure
        .class_key(cube)
        .unwrap_or_else(|| cube.coords().iter().copied().collect());
    (key, quantize(log2_mass))
}

/// Class-compressed counts of the stopping partition `P_t`.
pub fn stopping_summary(j: &SetFunction, log2_t: f64, max_depth: u32) -> Result<StoppingSummary> {
    let measure = j.measure();
    let root = DyadicCube::unit(j.dim());
    let m0 = measure.log2_mass(&root)?;
    let mut out = StoppingSummary {
        log2_t,
        log2_card: f64::NEG_INFINITY,
        log2_zero: f64::NEG_INFINITY,
        log2_bad: f64::NEG_INFINITY,
        log2_max: f64::NEG_INFINITY,
        depth: 0,
    };
    if m0 == f64::NEG_INFINITY {
        out.log2_zero = 0.0;
        return Ok(out);
    }
    let mut states = vec![State {
        cube: root,
        log2_mass: m0,
        log2_mult: 0.0,
    }];
    let max_depth = max_depth.min(MAX_LEVEL);
    while !states.is_empty() {
        let mut next: HashMap<(ClassKey, i64), usize> = HashMap::new();
        let mut next_states: Vec<State> = Vec::new();
        let mut card = vec![out.log2_card];
        let mut zero = vec![out.log2_zero];
        let mut bad = vec![out.log2_bad];
        for s in &states {
            let level = s.cube.level();
            let v = j.eval_with_mass(&s.cube, s.log2_mass, level as u64)?.log2_value;
            if v < log2_t {
                card.push(s.log2_mult);
                out.log2_max = out.log2_max.max(v);
                out.depth = out.depth.max(level);
                continue;
            }
            if level >= max_depth {
                return Err(Error::NoTermination {
                    depth: max_depth,
                    level,
                    value: v.exp2(),
                });
            }
            bad.push(s.log2_mult);
            let kids = measure.child_log2_masses(&s.cube, s.log2_mass)?;
            for (i, km) in kids.iter().enumerate() {
                if *km == f64::NEG_INFINITY {
                    zero.push(s.log2_mult);
                    continue;
                }
                let child = s.cube.child(i);
                let id = class_id(measure, &child, *km);
                match next.get(&id) {
                    Some(&idx) => {
                        let st = &mut next_states[idx];
                        st.log2_mult = log2_sum_exp([st.log2_mult, s.log2_mult]);
                    }
                    None => {
                        next.insert(id, next_states.len());
                        next_states.push(State {
                            cube: child,
                            log2_mass: *km,
                            log2_mult: s.log2_mult,
                        });
                    }
                }
            }
        }
        out.log2_card = log2_sum_exp(card);
        out.log2_zero = log2_sum_exp(zero);
        out.log2_bad = log2_sum_exp(bad);
        states = next_states;
    }
    Ok(out)
}

/// `M_𝔍(x)`: positive-value cubes of the stopping partition at `t = 1/x`.
pub fn partition_count(j: &SetFunction, log2_x: f64) -> Result<f64> {
    let root = j.eval(&DyadicCube::unit(j.dim()))?.log2_value;
    if -log2_x >= root + 1e-12 && log2_x.is_finite() {
        // t > 𝔍(unit cube): the trivial partition.
        return Ok(1.0);
    }
    Ok(stopping_summary(j, -log2_x, MAX_LEVEL)?.card())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyFit {
    /// `(log2 x, log2 M(x))`.
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope of `log M` against `log x` (estimates `h̄`).
    pub slope: f64,
    pub slope_stderr: f64,
    /// `max log M / log x` over the upper half of the `x` samples.
    pub h_upper: f64,
    /// `min log M / log x` over the upper half, from the canonical stopping
    /// partitions rather than all `𝔍`-partitions.
    pub h_lower_canonical: f64,
}

pub fn entropy_fit(j: &SetFunction, log2_xs: &[f64]) -> Result<EntropyFit> {
    let mut points = Vec::with_capacity(log2_xs.len());
    for &lx in log2_xs {
        points.push((lx, partition_count(j, lx)?.log2()));
    }
    let fit = least_squares(&points);
    let tail = &points[points.len() / 2..];
    let ratios = tail.iter().filter(|p| p.0 > 0.0).map(|p| p.1 / p.0);
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    for r in ratios {
        hi = hi.max(r);
        lo = lo.min(r);
    }
    Ok(EntropyFit {
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        h_upper: hi,
        h_lower_canonical: lo,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaValue {
    pub n: f64,
    pub log2_gamma: f64,
    pub log2_t: f64,
    pub card: f64,
}

pub const GAMMA_ITERATIONS: usize = 60;

/// `γ_{𝔍,n}` realized by stopping partitions: the smallest `t` (60 steps of
/// bisection in `log t`) whose partition has at most `n` positive cubes,
/// and that partition's largest value.
pub fn gamma_n(j: &SetFunction, n: f64) -> Result<GammaValue> {
    let root = j.eval(&DyadicCube::unit(j.dim()))?.log2_value;
    let trivial = GammaValue {
        n,
        log2_gamma: root,
        log2_t: root + 1.0,
        card: 1.0,
    };
    if n < 2.0 {
        return Ok(trivial);
    }
    let count = |lt: f64| -> Result<Option<StoppingSummary>> {
        match stopping_summary(j, lt, MAX_LEVEL) {
            Ok(s) => Ok(Some(s)),
            // Too deep to resolve: certainly more than n cubes.
            Err(Error::NoTermination { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let fits = |s: &Option<StoppingSummary>| s.as_ref().is_some_and(|s| s.card() <= n);
    let mut hi = root + 1e-9;
    let mut hi_summary = count(hi)?;
    if !fits(&hi_summary) {
        return Ok(trivial);
    }
    let mut step = 1.0;
    let mut lo = hi - step;
    while fits(&count(lo)?) {
        hi = lo;
        step *= 2.0;
        lo = hi - step;
        if step > 4096.0 {
            return Err(Error::Precondition("gamma bisection found no lower bracket".into()));
        }
    }
    hi_summary = count(hi)?;
    for _ in 0..GAMMA_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        let s = count(mid)?;
        if fits(&s) {
            hi = mid;
            hi_summary = s;
        } else {
            lo = mid;
        }
    }
    let s = hi_summary.expect("bracketed");
    Ok(GammaValue {
        n,
        log2_gamma: s.log2_max,
        log2_t: hi,
        card: s.card(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub values: Vec<GammaValue>,
    /// Slope of `log γ_n` against `log n`, estimating `α_𝔍`.
    pub slope: f64,
    pub slope_stderr: f64,
}

pub fn gamma_fit(j: &SetFunction, log2_ns: &[f64]) -> Result<GammaFit> {
    let values = log2_ns
        .iter()
        .map(|&ln| gamma_n(j, ln.exp2()))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = values.iter().map(|g| (g.n.log2(), g.log2_gamma)).collect();
    let fit = least_squares(&pts);
    Ok(GammaFit {
        values,
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub k: usize,
    /// `N_k = card P_k` (all cubes, including zero-value ones).
    pub n_k: f64,
    /// `log2 G_a(P_k)`.
    pub log2_g: f64,
    pub splits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub a: f64,
    pub dim: usize,
    pub epsilon: f64,
    pub log2_j_unit: f64,
    pub steps: Vec<TraceStep>,
}

impl RefinementTrace {
    /// `G_a(P_k) <= 2^{-ad} G_a(P_{k-1})` on every step.
    pub fn contraction_holds(&self) -> bool {
        let c = self.a * self.dim as f64;
        self.steps
            .windows(2)
            .all(|w| w[1].log2_g <= w[0].log2_g - c + 1e-12)
    }

    /// The constant in `G_a(P_k) <= C ε^{min(1,a)} (N_k - N_0)^{-(1+a)} J(Q)`,
    /// `C = (2 (2^d - 1) / (1 - 2^{-ad/(1+a)}))^{1+a}`.
    pub fn theoretical_constant(&self) -> f64 {
        let (a, d) = (self.a, self.dim as f64);
        let e = a * d / (1.0 + a);
        (2.0 * (d.exp2() - 1.0) / (1.0 - (-e).exp2())).powf(1.0 + a)
    }

    /// Whether every step with `N_k > N_0` satisfies the bound with the
    /// theoretical constant.
    pub fn bound_holds(&self) -> bool {
        let n0 = self.steps[0].n_k;
        let c = self.theoretical_constant().log2()
            + self.a.min(1.0) * self.epsilon.log2()
            + self.log2_j_unit;
        self.steps
            .iter()
            .filter(|s| s.n_k > n0)
            .all(|s| s.log2_g <= c - (1.0 + self.a) * (s.n_k - n0).log2() + 1e-9)
    }

    /// Slope of `log G_a(P_k)` against `log(N_k - N_0)` over the later half.
    pub fn decay_fit(&self) -> LineFit {
        let n0 = self.steps[0].n_k;
        let pts: Vec<(f64, f64)> = self
            .steps
            .iter()
            .filter(|s| s.n_k > n0)
            .map(|s| ((s.n_k - n0).log2(), s.log2_g))
            .collect();
        least_squares(&pts[pts.len() / 2..])
    }

    /// CSV with columns `k,N_k,G_a,splits`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "N_k", "G_a", "splits"])?;
        for s in &self.steps {
            w.write_record([
                s.k.to_string(),
                format_num(s.n_k),
                format_num(s.log2_g.exp2()),
                format_num(s.splits),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct BsState {
    cube: DyadicCube,
    log2_j: f64,
    mult: f64,
}

/// Birman–Solomyak refinement of `{unit cube}` for `𝔍_{J,a} = J Λ^a` with
/// `J = ν` (a measure, hence subadditive). `ε = max(1, J(Q))` realizes the
/// hypothesis with `Ξ_0' = ∅`.
pub fn bs_refine(measure: &MeasureModel, a: f64, steps: usize) -> Result<RefinementTrace> {
    if !(a > 0.0) {
        return Err(Error::Config(format!("refinement exponent a must be positive, got {a}")));
    }
    let d = measure.dim();
    let root = DyadicCube::unit(d);
    let j_unit = measure.log2_mass(&root)?;
    let value = |s: &BsState| s.log2_j - a * d as f64 * s.cube.level() as f64;
    let mut states = vec![BsState {
        cube: root,
        log2_j: j_unit,
        mult: 1.0,
    }];
    let mut trace = RefinementTrace {
        a,
        dim: d,
        epsilon: 1f64.max(j_unit.exp2()),
        log2_j_unit: j_unit,
        steps: Vec::with_capacity(steps + 1),
    };
    let g0 = states.iter().map(value).fold(f64::NEG_INFINITY, f64::max);
    trace.steps.push(TraceStep {
        k: 0,
        n_k: 1.0,
        log2_g: g0,
        splits: 0.0,
    });
    for k in 1..=steps {
        let g_prev = trace.steps[k - 1].log2_g;
        let cut = g_prev - a * d as f64;
        let mut merged: HashMap<(u32, ClassKey, i64), usize> = HashMap::new();
        let mut next: Vec<BsState> = Vec::new();
        let mut splits = 0.0;
        let push = |s: BsState, merged: &mut HashMap<(u32, ClassKey, i64), usize>, next: &mut Vec<BsState>| {
            let id = if s.log2_j == f64::NEG_INFINITY {
                (s.cube.level(), ClassKey::new(), i64::MIN)
            } else {
                let (key, q) = class_id(measure, &s.cube, s.log2_j);
                (s.cube.level(), key, q)
            };
            match merged.get(&id) {
                Some(&i) => next[i].mult += s.mult,
                None => {
                    merged.insert(id, next.len());
                    next.push(s);
                }
            }
        };
        for s in states {
            if s.log2_j == f64::NEG_INFINITY || value(&s) < cut {
                push(s, &mut merged, &mut next);
                continue;
            }
            splits += s.mult;
            let kids = measure.child_log2_masses(&s.cube, s.log2_j)?;
            let total = log2_sum_exp(kids.iter().copied());
            if total > s.log2_j + 1e-9 {
                return Err(Error::Precondition(format!(
                    "J is not subadditive on {}: children sum 2^{total} > 2^{}",
                    s.cube, s.log2_j
                )));
            }
            for (i, km) in kids.iter().enumerate() {
                push(
                    BsState {
                        cube: s.cube.child(i),
                        log2_j: *km,
                        mult: s.mult,
                    },
                    &mut merged,
                    &mut next,
                );
            }
        }
        states = next;
        if states.iter().any(|s| s.cube.level() > MAX_LEVEL - 1) {
            return Err(Error::Precondition(format!("refinement reached level {MAX_LEVEL}")));
        }
        let n_k: f64 = states.iter().map(|s| s.mult).sum();
        let g = states
            .iter()
            .filter(|s| s.log2_j > f64::NEG_INFINITY)
            .map(value)
            .fold(f64::NEG_INFINITY, f64::max);
        trace.steps.push(TraceStep {
            k,
            n_k,
            log2_g: g,
            splits,
        });
    }
    Ok(trace)
}
