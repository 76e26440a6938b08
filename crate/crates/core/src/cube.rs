//! Half-open dyadic sub-cubes of `(0,1]^d`.
//!
//! A cube at level `n` with integer coordinates `k` is the product of the
//! intervals `(k_i 2^-n, (k_i + 1) 2^-n]`. Children are indexed by a
//! `d`-bit number whose bit `i` is the offset along axis `i`.

use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Deepest level representable with 128-bit coordinates (kept below 128 so
/// `2^level` never overflows).
pub const MAX_LEVEL: u32 = 120;

pub type Coords = SmallVec<[u128; 3]>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    level: u32,
    coords: Coords,
}

impl DyadicCube {
    pub fn unit(dim: usize) -> Self {
        DyadicCube {
            level: 0,
            coords: SmallVec::from_elem(0, dim),
        }
    }

    pub fn new(level: u32, coords: &[u128]) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Config("cube needs at least one coordinate".into()));
        }
        if level > MAX_LEVEL {
            return Err(Error::Config(format!(
                "level {level} exceeds the maximum {MAX_LEVEL}"
            )));
        }
        let side = 1u128 << level;
        if let Some(k) = coords.iter().find(|&&k| k >= side) {
            return Err(Error::Config(format!(
                "coordinate {k} out of range for level {level}"
            )));
        }
        Ok(DyadicCube {
            level,
            coords: SmallVec::from_slice(coords),
        })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn coords(&self) -> &[u128] {
        &self.coords
    }

    /// `log2 Λ(Q) = -d n`.
    pub fn log2_volume(&self) -> f64 {
        -(self.dim() as f64) * self.level as f64
    }

    pub fn volume(&self) -> f64 {
        self.log2_volume().exp2()
    }

    pub fn side(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn child_count(&self) -> usize {
        1 << self.dim()
    }

    pub fn child(&self, index: usize) -> DyadicCube {
        debug_assert!(index < self.child_count());
        let coords = self
            .coords
            .iter()
            .enumerate()
            .map(|(axis, &k)| 2 * k + ((index >> axis) & 1) as u128)
            .collect();
        DyadicCube {
            level: self.level + 1,
            coords,
        }
    }

    pub fn children(&self) -> impl Iterator<Item = DyadicCube> + '_ {
        (0..self.child_count()).map(move |c| self.child(c))
    }

    pub fn parent(&self) -> Option<DyadicCube> {
        (self.level > 0).then(|| DyadicCube {
            level: self.level - 1,
            coords: self.coords.iter().map(|k| k >> 1).collect(),
        })
    }

    /// Ancestor at the given (shallower or equal) level.
    pub fn ancestor(&self, level: u32) -> DyadicCube {
        debug_assert!(level <= self.level);
        let shift = self.level - level;
        DyadicCube {
            level,
            coords: self.coords.iter().map(|k| k >> shift).collect(),
        }
    }

    /// Child index taken when descending from level `step - 1` to `step`.
    pub fn child_index_at(&self, step: u32) -> usize {
        debug_assert!(step >= 1 && step <= self.level);
        let shift = self.level - step;
        self.coords
            .iter()
            .enumerate()
            .fold(0, |acc, (axis, k)| acc | ((((k >> shift) & 1) as usize) << axis))
    }

    /// Interior cubes form the Dirichlet grid: the closure avoids the boundary
    /// of the unit cube, i.e. `1 <= k_i <= 2^n - 2` on every axis.
    pub fn is_interior(&self) -> bool {
        if self.level < 2 {
            return false;
        }
        let last = (1u128 << self.level) - 1;
        self.coords.iter().all(|&k| k >= 1 && k < last)
    }

    /// Per-axis boundary contact, two bits per axis (low face, high face).
    pub fn boundary_flags(&self) -> u64 {
        let last = (1u128 << self.level) - 1;
        self.coords.iter().enumerate().fold(0u64, |acc, (axis, &k)| {
            let lo = (k == 0) as u64;
            let hi = (k == last) as u64;
            acc | (lo << (2 * axis)) | (hi << (2 * axis + 1))
        })
    }

    pub fn contains(&self, other: &DyadicCube) -> bool {
        other.dim() == self.dim()
            && other.level >= self.level
            && other.ancestor(self.level).coords == self.coords
    }

    /// Interval `(lo, hi]` along one axis.
    pub fn bounds(&self, axis: usize) -> (f64, f64) {
        let s = self.side();
        let k = self.coords[axis] as f64;
        (k * s, (k + 1.0) * s)
    }

    /// One-dimensional projection onto `axis`.
    pub fn project(&self, axis: usize) -> DyadicCube {
        DyadicCube {
            level: self.level,
            coords: SmallVec::from_elem(self.coords[axis], 1),
        }
    }
}

impl std::fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "L{}[", self.level)?;
        for (i, k) in self.coords.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}")?;
        }
        f.write_str("]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_tile_parent() {
        let q = DyadicCube::new(2, &[1, 3, 2]).unwrap();
        let kids: Vec<_> = q.children().collect();
        assert_eq!(kids.len(), 8);
        for c in &kids {
            assert_eq!(c.parent().unwrap(), q);
            assert!(q.contains(c));
        }
        let vol: f64 = kids.iter().map(|c| c.volume()).sum();
        assert!((vol - q.volume()).abs() < 1e-15);
        let mut dedup = kids.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 8);
    }

    #[test]
    fn child_index_roundtrip() {
        let mut q = DyadicCube::unit(3);
        let path = [5usize, 0, 7, 2, 1];
        for &c in &path {
            q = q.child(c);
        }
        for (step, &c) in path.iter().enumerate() {
            assert_eq!(q.child_index_at(step as u32 + 1), c);
        }
    }

    #[test]
    fn interior_classification() {
        assert!(!DyadicCube::new(1, &[0, 1]).unwrap().is_interior());
        let interior: usize = (0..4u128)
            .flat_map(|a| (0..4u128).map(move |b| (a, b)))
            .filter(|&(a, b)| DyadicCube::new(2, &[a, b]).unwrap().is_interior())
            .count();
        assert_eq!(interior, 4);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(DyadicCube::new(2, &[4]).is_err());
        assert!(DyadicCube::new(MAX_LEVEL + 1, &[0]).is_err());
    }
}
