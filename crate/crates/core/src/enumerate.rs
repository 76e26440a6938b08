//! Sparse enumeration of the positive-mass cubes of a level.

use crate::cube::DyadicCube;
use crate::error::{Error, Result};
use crate::measure::MeasureModel;
use crate::Mode;

pub const DEFAULT_BUDGET: usize = 4_000_000;

/// Positive-mass cubes of `D_n^{mode}` with their `log2` masses, sorted
/// level-major and lexicographically in the coordinates. The search only
/// descends through positive-mass ancestors.
pub fn enumerate_support(
    measure: &MeasureModel,
    n: u32,
    mode: Mode,
    budget: usize,
) -> Result<Vec<(DyadicCube, f64)>> {
    let root = DyadicCube::unit(measure.dim());
    let m0 = measure.log2_mass(&root)?;
    let mut out = Vec::new();
    if m0 == f64::NEG_INFINITY {
        return Ok(out);
    }
    let mut stack = vec![(root, m0)];
    let mut visited = 0usize;
    while let Some((cube, m)) = stack.pop() {
        if cube.level() == n {
            if mode.admits(&cube) {
                out.push((cube, m));
            }
            continue;
        }
        visited += 1;
        if visited + stack.len() > budget {
            return Err(Error::Budget {
                budget,
                level: cube.level(),
            });
        }
        let kids = measure.child_log2_masses(&cube, m)?;
        for (i, km) in kids.iter().enumerate().rev() {
            if *km > f64::NEG_INFINITY {
                stack.push((cube.child(i), *km));
            }
        }
        if out.len() > budget {
            return Err(Error::Budget { budget, level: n });
        }
    }
    out.sort_by(|a, b| a.0.coords().cmp(b.0.coords()));
    Ok(out)
}

/// Every cube of `D_n^{mode}` with its mass computed directly, positive ones
/// kept; an independent oracle for [`enumerate_support`].
pub fn full_sweep(measure: &MeasureModel, n: u32, mode: Mode) -> Result<Vec<(DyadicCube, f64)>> {
    let d = measure.dim();
    let side = 1u128 << n;
    let total = side.pow(d as u32);
    let mut out = Vec::new();
    for idx in 0..total {
        let mut rest = idx;
        let mut coords = vec![0u128; d];
        for c in coords.iter_mut().rev() {
            *c = rest % side;
            rest /= side;
        }
        let cube = DyadicCube::new(n, &coords)?;
        if !mode.admits(&cube) {
            continue;
        }
        let m = measure.log2_mass(&cube)?;
        if m > f64::NEG_INFINITY {
            out.push((cube, m));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn model(name: &str) -> MeasureModel {
        catalog::lookup(name).unwrap().spec.build().unwrap()
    }

    #[test]
    fn sierpinski_level_three() {
        let v = enumerate_support(&model("sierpinski-tetraeder"), 3, Mode::Neumann, 1000).unwrap();
        assert_eq!(v.len(), 64);
    }

    #[test]
    fn lebesgue_dirichlet_level_two() {
        let v = enumerate_support(&model("lebesgue-2"), 2, Mode::Dirichlet, 1000).unwrap();
        let coords: Vec<_> = v.iter().map(|(c, _)| c.coords().to_vec()).collect();
        assert_eq!(coords, vec![vec![1, 1], vec![1, 2], vec![2, 1], vec![2, 2]]);
    }

    #[test]
    fn budget_is_enforced() {
        let e = enumerate_support(&model("lebesgue-3"), 6, Mode::Neumann, 100).unwrap_err();
        assert!(matches!(e, Error::Budget { budget: 100, .. }));
    }
}
