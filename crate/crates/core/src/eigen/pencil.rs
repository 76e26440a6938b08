//! Lumped finite-element pencils on the uniform grid of mesh `2^-L`.

use nalgebra::DMatrix;

use crate::enumerate::{enumerate_support, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::measure::MeasureModel;
use crate::Mode;

/// Largest `d * L` accepted by [`assemble`].
pub const MAX_DIM_LEVEL: u32 = 26;

/// Symmetric pencil `(A, M)` on the kept grid nodes: `A` is the energy form
/// (plus the lumped Lebesgue mass under Neumann), `M` the lumped ν-mass.
/// Kept nodes are numbered with axis 0 running fastest.
#[derive(Debug, Clone)]
pub struct DiscretePencil {
    pub dim: usize,
    pub level: u32,
    pub mode: Mode,
    /// Kept nodes per axis.
    pub side: usize,
    offset: usize,
    bandwidth: usize,
    /// Lower band of the stiffness: `band[i * (bw + 1) + k] = K[i][i - k]`.
    band: Vec<f64>,
    /// Lumped Lebesgue mass added to the form (all zero under Dirichlet).
    pub lambda_mass: Vec<f64>,
    pub nu_mass: Vec<f64>,
    /// ν-mass of the dual cells of dropped boundary nodes.
    pub dropped_mass: f64,
}

impl DiscretePencil {
    pub fn len(&self) -> usize {
        self.nu_mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu_mass.is_empty()
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn active_count(&self) -> usize {
        self.nu_mass.iter().filter(|m| **m > 0.0).count()
    }

    /// Grid position of kept node `i`.
    pub fn position(&self, i: usize) -> Vec<f64> {
        let h = (-(self.level as f64)).exp2();
        let mut rest = i;
        (0..self.dim)
            .map(|_| {
                let c = rest % self.side;
                rest /= self.side;
                (c + self.offset) as f64 * h
            })
            .collect()
    }

    /// Pure stiffness entry `K[i][j]`.
    pub fn stiffness(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let k = hi - lo;
        if k > self.bandwidth {
            return 0.0;
        }
        self.band[hi * (self.bandwidth + 1) + k]
    }

    /// Form entry `K[i][j] + δ_ij Λ-mass`.
    pub fn form(&self, i: usize, j: usize) -> f64 {
        let k = self.stiffness(i, j);
        if i == j {
            k + self.lambda_mass[i]
        } else {
            k
        }
    }

    pub fn stiffness_row_sum(&self, i: usize) -> f64 {
        let lo = i.saturating_sub(self.bandwidth);
        let hi = (i + self.bandwidth).min(self.len() - 1);
        (lo..=hi).map(|j| self.stiffness(i, j)).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.nu_mass.iter().sum::<f64>() + self.dropped_mass
    }

    /// Lower band of `A - x M` in the layout of `band`.
    pub(crate) fn shifted_band(&self, x: f64) -> Vec<f64> {
        let w = self.bandwidth + 1;
        let mut out = self.band.clone();
        for i in 0..self.len() {
            out[i * w] += self.lambda_mass[i] - x * self.nu_mass[i];
        }
        out
    }

    /// Dense form restricted to the active nodes after eliminating the
    /// zero-mass ones (Schur complement), and the active masses.
    pub fn condensed(&self) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let active: Vec<usize> = (0..self.len()).filter(|&i| self.nu_mass[i] > 0.0).collect();
        let inactive: Vec<usize> = (0..self.len()).filter(|&i| self.nu_mass[i] == 0.0).collect();
        let block = |rows: &[usize], cols: &[usize]| {
            DMatrix::from_fn(rows.len(), cols.len(), |r, c| self.form(rows[r], cols[c]))
        };
        let mut s = block(&active, &active);
        if !inactive.is_empty() {
            let kii = block(&inactive, &inactive);
            let kia = block(&inactive, &active);
            let chol = kii.cholesky().ok_or_else(|| {
                Error::Precondition("form is not positive definite on the zero-mass nodes".into())
            })?;
            s -= kia.transpose() * chol.solve(&kia);
        }
        let m = active.iter().map(|&i| self.nu_mass[i]).collect();
        Ok((s, m))
    }
}

/// Assemble the pencil of `measure` (dimension 1 or 2) at mesh `2^-level`.
/// Node `j h` carries the ν-mass of its dual cell `(j h - h/2, j h + h/2]`,
/// read off the level-`(level+1)` dyadic masses.
pub fn assemble(measure: &MeasureModel, level: u32, mode: Mode) -> Result<DiscretePencil> {
    let d = measure.dim();
    if !(1..=2).contains(&d) {
        return Err(Error::Precondition(format!(
            "the eigen harness handles d = 1, 2 only, got d = {d}"
        )));
    }
    if level == 0 || d as u32 * level > MAX_DIM_LEVEL {
        return Err(Error::Precondition(format!(
            "need 1 <= L and d*L <= {MAX_DIM_LEVEL}, got d = {d}, L = {level}"
        )));
    }
    let n = 1usize << level;
    let full = n + 1;
    let full_index = |c: &[usize]| c.iter().rev().fold(0, |acc, &x| acc * full + x);
    let mut full_mass = vec![0.0; full.pow(d as u32)];
    for (cube, log2_m) in enumerate_support(measure, level + 1, Mode::Neumann, DEFAULT_BUDGET)? {
        let node: Vec<usize> = cube.coords().iter().map(|&c| (c as usize).div_ceil(2)).collect();
        full_mass[full_index(&node)] += log2_m.exp2();
    }
    if let Some(bad) = full_mass.iter().find(|m| !(**m >= 0.0)) {
        return Err(Error::Precondition(format!("lumped mass {bad} is negative or undefined")));
    }

    let (offset, side) = match mode {
        Mode::Neumann => (0, full),
        Mode::Dirichlet => (1, n - 1),
    };
    let kept = side.pow(d as u32);
    let bandwidth = if d == 1 { 1 } else { side };
    let w = bandwidth + 1;
    let mut band = vec![0.0; kept * w];
    let mut lambda_mass = vec![0.0; kept];
    let mut nu_mass = vec![0.0; kept];
    let h = 1.0 / n as f64;
    let on_boundary = |c: usize| c == 0 || c == n;
    let kept_index = |c: &[usize]| -> Option<usize> {
        let mut idx = 0;
        for &x in c.iter().rev() {
            if x < offset || x - offset >= side {
                return None;
            }
            idx = idx * side + (x - offset);
        }
        Some(idx)
    };

    let mut dropped = 0.0;
    let mut coords = vec![0usize; d];
    for flat in 0..full.pow(d as u32) {
        let mut rest = flat;
        for c in coords.iter_mut() {
            *c = rest % full;
            rest /= full;
        }
        let m = full_mass[full_index(&coords)];
        let p = kept_index(&coords);
        match p {
            Some(i) => {
                nu_mass[i] = m;
                if mode == Mode::Neumann {
                    lambda_mass[i] = coords
                        .iter()
                        .map(|&c| if on_boundary(c) { h / 2.0 } else { h })
                        .product();
                }
            }
            None => dropped += m,
        }
        // Edges to the forward neighbour along each axis. Boundary-parallel
        // edges carry half weight so that the form is the P1 energy.
        for a in 0..d {
            if coords[a] == n {
                continue;
            }
            let mut weight = h.powi(d as i32 - 2);
            for (b, &c) in coords.iter().enumerate() {
                if b != a && on_boundary(c) {
                    weight /= 2.0;
                }
            }
            let mut next = coords.clone();
            next[a] += 1;
            let q = kept_index(&next);
            if let Some(i) = p {
                band[i * w] += weight;
            }
            if let Some(j) = q {
                band[j * w] += weight;
            }
            if let (Some(i), Some(j)) = (p, q) {
                band[j * w + (j - i)] -= weight;
            }
        }
    }
    let pencil = DiscretePencil {
        dim: d,
        level,
        mode,
        side,
        offset,
        bandwidth,
        band,
        lambda_mass,
        nu_mass,
        dropped_mass: dropped,
    };
    if pencil.active_count() == 0 {
        return Err(Error::Config(format!(
            "no grid node of level {level} carries positive mass under {mode} conditions"
        )));
    }
    Ok(pencil)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn model(name: &str) -> MeasureModel {
        catalog::lookup(name).unwrap().spec.build().unwrap()
    }

    #[test]
    fn lebesgue_line_dirichlet() {
        let p = assemble(&model("lebesgue-1"), 3, Mode::Dirichlet).unwrap();
        assert_eq!(p.len(), 7);
        assert_eq!(p.active_count(), 7);
        for m in &p.nu_mass {
            assert!((m - 0.125).abs() < 1e-15);
        }
        assert!((p.total_mass() - 1.0).abs() < 1e-12);
        assert_eq!(p.stiffness(3, 3), 16.0);
        assert_eq!(p.stiffness(3, 4), -8.0);
        assert_eq!(p.stiffness(2, 4), 0.0);
    }

    #[test]
    fn binomial_dual_cells() {
        let p = assemble(&model("binomial-0.7"), 2, Mode::Dirichlet).unwrap();
        // Level-3 cells: mass 0.7^(3-k) 0.3^k for k ones in the binary index.
        let cell = |c: u32| 0.7f64.powi(3 - c.count_ones() as i32) * 0.3f64.powi(c.count_ones() as i32);
        let want = [cell(1) + cell(2), cell(3) + cell(4), cell(5) + cell(6)];
        assert_eq!(p.position(0), vec![0.25]);
        for (got, want) in p.nu_mass.iter().zip(want) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
        assert!((p.dropped_mass - cell(0) - cell(7)).abs() < 1e-14);
    }

    #[test]
    fn lebesgue_square_neumann_kernel() {
        let p = assemble(&model("lebesgue-2"), 2, Mode::Neumann).unwrap();
        assert_eq!(p.len(), 25);
        for i in 0..25 {
            assert!(p.stiffness_row_sum(i).abs() < 1e-12);
            for j in 0..25 {
                assert_eq!(p.stiffness(i, j), p.stiffness(j, i));
            }
        }
        assert_eq!(p.stiffness(12, 12), 4.0);
        assert_eq!(p.stiffness(0, 0), 1.0);
        assert!((p.lambda_mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_three_dimensions() {
        assert!(matches!(
            assemble(&model("lebesgue-3"), 2, Mode::Neumann),
            Err(Error::Precondition(_))
        ));
    }
}
