//! Pseudo-spectral differentiation on the periodic q-grid and the even
//! (cosine) sector.

use nalgebra::DMatrix;

/// First-derivative matrix on `nq` equispaced points of `[0, 2pi)` (`nq` even).
pub fn diff_matrix(nq: usize) -> DMatrix<f64> {
    let dq = 2.0 * std::f64::consts::PI / nq as f64;
    DMatrix::from_fn(nq, nq, |j, l| {
        if j == l {
            0.0
        } else {
            let k = j as f64 - l as f64;
            let sign = if (j + l) % 2 == 0 { 1.0 } else { -1.0 };
            0.5 * sign / (0.5 * k * dq).tan()
        }
    })
}

/// Number of stored columns in the even sector, `q_j` for `j = 0..=nq/2`.
pub fn even_count(nq: usize) -> usize {
    nq / 2 + 1
}

/// Full-grid index of the even-sector value used at node `j`.
pub fn even_source(nq: usize, j: usize) -> usize {
    if j <= nq / 2 {
        j
    } else {
        nq - j
    }
}

/// Extension `E` (nq x nc) from even-sector values to the full grid.
pub fn even_extension(nq: usize) -> DMatrix<f64> {
    let nc = even_count(nq);
    let mut e = DMatrix::zeros(nq, nc);
    for j in 0..nq {
        e[(j, even_source(nq, j))] = 1.0;
    }
    e
}

/// `P A E`: restriction of a full-grid operator to the even sector.
pub fn restrict_even(a: &DMatrix<f64>) -> DMatrix<f64> {
    let nq = a.nrows();
    let nc = even_count(nq);
    let mut r = DMatrix::zeros(nc, nc);
    for j in 0..nc {
        for l in 0..nq {
            r[(j, even_source(nq, l))] += a[(j, l)];
        }
    }
    r
}

/// Trapezoid weights over one period for even-sector values.
pub fn even_weights(nq: usize) -> Vec<f64> {
    let dq = 2.0 * std::f64::consts::PI / nq as f64;
    let nc = even_count(nq);
    (0..nc).map(|j| if j == 0 || j == nc - 1 { dq } else { 2.0 * dq }).collect()
}

pub fn expand_even(nq: usize, v: &[f64]) -> Vec<f64> {
    (0..nq).map(|j| v[even_source(nq, j)]).collect()
}

pub fn matvec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let n = a.nrows();
    let mut y = vec![0.0; n];
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj != 0.0 {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi += a[(i, j)] * xj;
            }
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_is_exact_below_nyquist() {
        let nq = 16;
        let d = diff_matrix(nq);
        let dq = 2.0 * std::f64::consts::PI / nq as f64;
        for n in 1..8 {
            let f: Vec<f64> = (0..nq).map(|j| (n as f64 * j as f64 * dq).sin()).collect();
            let df = matvec(&d, &f);
            for j in 0..nq {
                let exact = n as f64 * (n as f64 * j as f64 * dq).cos();
                assert!((df[j] - exact).abs() < 1e-12, "n={n} j={j}");
            }
        }
        assert!((&d + d.transpose()).amax() < 1e-14);
    }

    #[test]
    fn even_sector_second_derivative_of_cosines() {
        let nq = 12;
        let d = diff_matrix(nq);
        let d2 = restrict_even(&(&d * &d));
        let nc = even_count(nq);
        let dq = 2.0 * std::f64::consts::PI / nq as f64;
        for n in 0..6 {
            let c: Vec<f64> = (0..nc).map(|j| (n as f64 * j as f64 * dq).cos()).collect();
            let r = matvec(&d2, &c);
            for j in 0..nc {
                assert!((r[j] + (n * n) as f64 * c[j]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn even_weights_integrate_cosines() {
        let nq = 10;
        let w = even_weights(nq);
        let dq = 2.0 * std::f64::consts::PI / nq as f64;
        let total: f64 = w.iter().sum();
        assert!((total - 2.0 * std::f64::consts::PI).abs() < 1e-14);
        let c2: f64 = w.iter().enumerate().map(|(j, w)| w * (j as f64 * dq).cos().powi(2)).sum();
        assert!((c2 - std::f64::consts::PI).abs() < 1e-13);
        assert_eq!(expand_even(4, &[1.0, 2.0, 3.0]), vec![1.0, 2.0, 3.0, 2.0]);
    }
}
