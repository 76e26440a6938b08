//! Absolutely continuous measures given by an analytic density.
//!
//! The cusp densities live on `{(x,y,z) : 0 ≤ x,y ≤ z, 0 < z < 1/2}` and
//! depend on `z` only, so the mass of a dyadic cell reduces to a 1-D integral
//! of `g(z)·A(z)` where `A(z)` is the area of the cell's `(x,y)` cross-section
//! inside the cusp. The cell touching the origin has `A(z) = z²` and is
//! integrated in closed form; all other cells are bounded away from the
//! singularity and use adaptive Gauss quadrature.

use smallvec::SmallVec;
use statrs::function::gamma::{gamma, gamma_ur};

use crate::cube::DyadicCube;
use crate::error::{Error, Result};
use crate::measure::{ClassKey, TailRate};
use crate::quadrature::integrate;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityKind {
    /// `f ≡ 1`, i.e. Lebesgue measure.
    Constant,
    /// `g(z) = z^-2`.
    Cusp1,
    /// `g(z) = z^-2 (ln 1/z)^{-4/3}`.
    Cusp2,
    /// `g(z) = z^-2 ln(1/z)`.
    Cusp3,
    /// `f(x) = (1-β) x_1^{-β}`, `0 ≤ β < 1`.
    PowerLaw { beta: f64 },
}

impl DensityKind {
    fn is_cusp(self) -> bool {
        matches!(self, DensityKind::Cusp1 | DensityKind::Cusp2 | DensityKind::Cusp3)
    }

    /// Exponent `p` in `g(z)^r = z^{-2r} (ln 1/z)^p`.
    fn log_power(self, r: f64) -> f64 {
        match self {
            DensityKind::Cusp1 => 0.0,
            DensityKind::Cusp2 => -4.0 * r / 3.0,
            DensityKind::Cusp3 => r,
            _ => unreachable!(),
        }
    }

    fn profile_pow(self, z: f64, r: f64) -> f64 {
        let u = (1.0 / z).ln();
        z.powf(-2.0 * r) * u.powf(self.log_power(r))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMeasure {
    dim: usize,
    kind: DensityKind,
    tolerance: f64,
}

/// Shape of a cusp cell, determined by its `(x, y)` indices relative to
/// its `z` index `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CuspCell {
    Empty,
    /// `i, j < k`: the whole cell lies in the cusp.
    Interior,
    /// Exactly one of `i, j` equals `k`.
    Edge,
    /// `i = j = k`.
    Diagonal,
}

impl DensityMeasure {
    pub fn new(dim: usize, kind: DensityKind, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0 && tolerance < 1.0) {
            return Err(Error::Config(format!(
                "density quadrature tolerance must lie in (0, 1), got {tolerance}"
            )));
        }
        if kind.is_cusp() && dim != 3 {
            return Err(Error::Config(format!("cusp densities are 3-dimensional, got d={dim}")));
        }
        if dim == 0 || dim > 3 {
            return Err(Error::Config(format!("density dimension must be 1..=3, got {dim}")));
        }
        if let DensityKind::PowerLaw { beta } = kind {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!("power-law exponent must lie in [0, 1), got {beta}")));
            }
        }
        Ok(DensityMeasure {
            dim,
            kind,
            tolerance,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> DensityKind {
        self.kind
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Analytic total mass.
    pub fn total_mass(&self) -> f64 {
        match self.kind {
            DensityKind::Constant | DensityKind::PowerLaw { .. } => 1.0,
            _ => self.corner_power_integral(0.5, 1.0),
        }
    }

    pub fn mass(&self, cube: &DyadicCube) -> Result<(f64, f64)> {
        self.power_integral(cube, 1.0)
    }

    pub fn log2_mass(&self, cube: &DyadicCube) -> Result<f64> {
        Ok(self.mass(cube)?.0.log2())
    }

    /// `∫_Q f^r dΛ` with an error bound; `+∞` when `f^r` is not integrable
    /// on `Q`.
    pub fn power_integral(&self, cube: &DyadicCube, r: f64) -> Result<(f64, f64)> {
        let s = cube.side();
        match self.kind {
            DensityKind::Constant => Ok((cube.volume(), 0.0)),
            DensityKind::PowerLaw { beta } => {
                let e = 1.0 - beta * r;
                if e <= 0.0 && cube.coords()[0] == 0 {
                    return Ok((f64::INFINITY, 0.0));
                }
                let x0 = cube.coords()[0] as f64 * s;
                let slab = s.powi(self.dim as i32 - 1) * (1.0 - beta).powf(r);
                let x_part = if x0 == 0.0 {
                    s.powf(e) / e
                } else {
                    // x0^e ((1 + s/x0)^e - 1) / e without cancellation.
                    x0.powf(e) * (e * (s / x0).ln_1p()).exp_m1() / e
                };
                Ok((slab * x_part, 0.0))
            }
            _ => self.cusp_power_integral(cube, r),
        }
    }

    fn classify(cube: &DyadicCube) -> CuspCell {
        let c = cube.coords();
        let (i, j, k) = (c[0], c[1], c[2]);
        let n = cube.level();
        if n > 0 && k >= 1u128 << (n - 1) {
            return CuspCell::Empty;
        }
        if i > k || j > k {
            return CuspCell::Empty;
        }
        match (i == k, j == k) {
            (false, false) => CuspCell::Interior,
            (true, true) => CuspCell::Diagonal,
            _ => CuspCell::Edge,
        }
    }

    fn cusp_power_integral(&self, cube: &DyadicCube, r: f64) -> Result<(f64, f64)> {
        let cell = Self::classify(cube);
        if cell == CuspCell::Empty {
            return Ok((0.0, 0.0));
        }
        let s = cube.side();
        let c = cube.coords();
        let (x0, y0, z0) = (c[0] as f64 * s, c[1] as f64 * s, c[2] as f64 * s);
        let z1 = (z0 + s).min(0.5);
        if z0 == 0.0 {
            // Only the cell at the origin survives with k = 0, and there
            // A(z) = z² on the whole range.
            return Ok((self.corner_power_integral(z1, r), 0.0));
        }
        let area = |z: f64| {
            let a = (z - x0).clamp(0.0, s);
            let b = (z - y0).clamp(0.0, s);
            a * b
        };
        let kind = self.kind;
        let mut cuts: SmallVec<[f64; 6]> = SmallVec::new();
        cuts.push(z0);
        for p in [x0, y0, x0 + s, y0 + s] {
            if p > z0 && p < z1 {
                cuts.push(p);
            }
        }
        cuts.push(z1);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let (mut total, mut err) = (0.0, 0.0);
        for w in cuts.windows(2) {
            let (v, e) = integrate(|z| kind.profile_pow(z, r) * area(z), w[0], w[1], self.tolerance * 0.1)?;
            total += v;
            err += e;
        }
        Ok((total, err))
    }

    /// `∫_0^v g(z)^r z² dz`, i.e. the substitution `u = ln(1/z)` turns it into
    /// `∫_U^∞ e^{-cu} u^p du` with `c = 3 - 2r`, `U = ln(1/v)`.
    fn corner_power_integral(&self, v: f64, r: f64) -> f64 {
        let c = 3.0 - 2.0 * r;
        let p = self.kind.log_power(r);
        let u = (1.0 / v).ln();
        if c < 0.0 {
            return f64::INFINITY;
        }
        if c == 0.0 {
            return if p < -1.0 {
                u.powf(p + 1.0) / (-p - 1.0)
            } else {
                f64::INFINITY
            };
        }
        c.powf(-p - 1.0) * upper_gamma(p + 1.0, c * u)
    }

    /// Step bound on `log2(ν(child)/ν(parent))`.
    pub fn log2_step_bound(&self) -> f64 {
        match self.kind {
            DensityKind::Constant => -(self.dim as f64),
            DensityKind::PowerLaw { beta } => -(1.0 - beta) - (self.dim as f64 - 1.0),
            // No certified modulus: the conservative bound θ = 1.
            _ => 0.0,
        }
    }

    pub fn tail_rate(&self) -> TailRate {
        TailRate {
            period: 1,
            log2_per_period: self.log2_step_bound(),
        }
    }

    pub fn class_key(&self, cube: &DyadicCube) -> ClassKey {
        let mut key = ClassKey::new();
        match self.kind {
            DensityKind::Constant => {}
            DensityKind::PowerLaw { .. } => key.push(cube.coords()[0]),
            _ => {
                key.push(cube.coords()[2]);
                key.push(Self::classify(cube) as u128);
            }
        }
        key
    }

    /// Heaviest level-`n` cell. The cusp profile decreases on `(0, 1/2)`, so
    /// any cell in layer `k ≥ 2` is dominated by the interior cell of layer
    /// `k - 1`; scanning layers `0..=2` suffices.
    pub fn max_log2_mass(&self, n: u32) -> Result<f64> {
        let s = (-(n as f64)).exp2();
        match self.kind {
            DensityKind::Constant => Ok(-(self.dim as f64) * n as f64),
            DensityKind::PowerLaw { beta } => {
                Ok((1.0 - beta) * s.log2() + (self.dim as f64 - 1.0) * s.log2())
            }
            _ => {
                let mut best = f64::NEG_INFINITY;
                for k in 0..=2u128 {
                    for (i, j) in [(0, 0), (k, 0), (k, k)] {
                        if let Ok(cube) = DyadicCube::new(n, &[i, j, k]) {
                            best = best.max(self.log2_mass(&cube)?);
                        }
                    }
                }
                Ok(best)
            }
        }
    }
}

/// `Γ(a, x) = ∫_x^∞ t^{a-1} e^{-t} dt` for `x > 0` and any real `a`.
pub fn upper_gamma(a: f64, x: f64) -> f64 {
    if a > 0.0 {
        return gamma_ur(a, x) * gamma(a);
    }
    if a.fract() != 0.0 {
        // Γ(a, x) = (Γ(a+1, x) - x^a e^{-x}) / a
        return (upper_gamma(a + 1.0, x) - x.powf(a) * (-x).exp()) / a;
    }
    // Non-positive integer order: integrate directly on a finite window.
    let f = |t: f64| t.powf(a - 1.0) * (-t).exp();
    let hi = x + 60.0;
    integrate(f, x, hi, 1e-13).map(|(v, _)| v).unwrap_or(f64::NAN)
}
