//! Eigenvalue counting by Sylvester inertia.

use super::pencil::DiscretePencil;

/// Number of negative pivots in the `LDL^T` factorization (no pivoting) of
/// the symmetric band matrix stored as in [`DiscretePencil`].
pub fn negative_pivots(band: &[f64], n: usize, bw: usize) -> usize {
    let w = bw + 1;
    // Row i of L stored at l[i*w ..], position p holding column i - bw + p.
    let mut l = vec![0.0; n * w];
    let mut d = vec![0.0; n];
    let mut u = vec![0.0; w];
    let scale = band.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let pivmin = scale * f64::EPSILON * 1e-3;
    let mut negatives = 0;
    for i in 0..n {
        let first = i.saturating_sub(bw);
        // u[k - first] = L[i][k] d[k]
        for j in first..i {
            let a = band[i * w + (i - j)];
            let span = j - first;
            let lj = &l[j * w + (first + bw - j)..j * w + bw];
            let dot: f64 = u[..span].iter().zip(lj).map(|(x, y)| x * y).sum();
            let uj = a - dot;
            u[span] = uj;
            l[i * w + (j + bw - i)] = uj / d[j];
        }
        let span = i - first;
        let li = &l[i * w + (first + bw - i)..i * w + bw];
        let dot: f64 = u[..span].iter().zip(li).map(|(x, y)| x * y).sum();
        let mut di = band[i * w] - dot;
        if di.abs() < pivmin {
            di = -pivmin;
        }
        d[i] = di;
        if di < 0.0 {
            negatives += 1;
        }
    }
    negatives
}

/// Number of pencil eigenvalues below `x`. The zero-mass nodes form a
/// positive definite block of `A - x M`, so by Haynsworth additivity every
/// negative pivot belongs to the condensed pencil on the active nodes.
pub fn count_below(pencil: &DiscretePencil, x: f64) -> usize {
    negative_pivots(&pencil.shifted_band(x), pencil.len(), pencil.bandwidth())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_sturm_count() {
        // tridiag(-1, 2, -1) of size 5: eigenvalues 2 - 2 cos(k pi / 6).
        let n = 5;
        let mut band = vec![0.0; 2 * n];
        for i in 0..n {
            band[2 * i] = 2.0;
            if i > 0 {
                band[2 * i + 1] = -1.0;
            }
        }
        let eig: Vec<f64> = (1..=n).map(|k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / 6.0).cos()).collect();
        for x in [0.1, 0.5, 1.0, 2.5, 3.5, 4.0] {
            let mut shifted = band.clone();
            for i in 0..n {
                shifted[2 * i] -= x;
            }
            let want = eig.iter().filter(|e| **e < x).count();
            assert_eq!(negative_pivots(&shifted, n, 1), want, "x = {x}");
        }
    }
}
