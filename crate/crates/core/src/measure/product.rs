//! Products of one-dimensional measures, `ν = μ_1 ⊗ … ⊗ μ_d`.

use smallvec::SmallVec;

use crate::cube::DyadicCube;
use crate::error::{Error, Result};
use crate::measure::{ClassKey, MeasureModel, TailRate};

#[derive(Debug, Clone, PartialEq)]
pub struct ProductMeasure {
    factors: Vec<MeasureModel>,
}

impl ProductMeasure {
    pub fn new(factors: Vec<MeasureModel>) -> Result<Self> {
        if factors.is_empty() || factors.len() > 3 {
            return Err(Error::Config(format!(
                "product needs 1..=3 factors, got {}",
                factors.len()
            )));
        }
        if let Some(f) = factors.iter().find(|f| f.dim() != 1) {
            return Err(Error::Config(format!(
                "product factors must be 1-dimensional, got d={}",
                f.dim()
            )));
        }
        Ok(ProductMeasure { factors })
    }

    pub fn factors(&self) -> &[MeasureModel] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn log2_mass(&self, cube: &DyadicCube) -> Result<f64> {
        let mut acc = 0.0;
        for (axis, f) in self.factors.iter().enumerate() {
            acc += f.log2_mass(&cube.project(axis))?;
        }
        Ok(acc)
    }

    pub fn child_log2_masses(&self, cube: &DyadicCube) -> Result<SmallVec<[f64; 8]>> {
        let mut per_axis: SmallVec<[[f64; 2]; 3]> = SmallVec::new();
        for (axis, f) in self.factors.iter().enumerate() {
            let p = cube.project(axis);
            let lm = f.log2_mass(&p)?;
            let kids = f.child_log2_masses(&p, lm)?;
            per_axis.push([kids[0], kids[1]]);
        }
        Ok((0..cube.child_count())
            .map(|c| {
                per_axis
                    .iter()
                    .enumerate()
                    .map(|(axis, k)| k[(c >> axis) & 1])
                    .sum()
            })
            .collect())
    }

    pub fn log2_step_bound(&self, level: u32) -> f64 {
        self.factors.iter().map(|f| f.log2_step_bound(level)).sum()
    }

    pub fn tail_rate(&self) -> TailRate {
        let rates: Vec<TailRate> = self.factors.iter().map(|f| f.tail_rate()).collect();
        let period = rates.iter().fold(1u32, |acc, r| lcm(acc, r.period));
        let sum = rates
            .iter()
            .map(|r| r.log2_per_period * (period / r.period) as f64)
            .sum();
        TailRate {
            period,
            log2_per_period: sum,
        }
    }

    pub fn class_key(&self, cube: &DyadicCube) -> Option<ClassKey> {
        let mut key = ClassKey::new();
        for (axis, f) in self.factors.iter().enumerate() {
            let k = f.class_key(&cube.project(axis))?;
            key.push(k.len() as u128);
            key.extend(k);
        }
        Some(key)
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u32, b: u32) -> u32 {
    a / gcd(a, b) * b
}
