//! Banded LU with partial pivoting, bordered block elimination and
//! tridiagonal inertia counts.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular to working precision (pivot ratio {ratio:e} at row {row})")]
    Singular { row: usize, ratio: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Square band matrix with `kl` sub- and `ku` super-diagonals, stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        // room for the kl extra super-diagonals created by row interchanges
        let width = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> Option<usize> {
        let lo = i as isize - self.kl as isize;
        let d = j as isize - lo;
        if d < 0 || d >= self.width as isize {
            None
        } else {
            Some(i * self.width + d as usize)
        }
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        (j + self.kl >= i) && (j <= i + self.ku)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.offset(i, j) {
            Some(o) if self.in_band(i, j) => self.data[o],
            _ => 0.0,
        }
    }

    /// Adds `v` at `(i, j)`; panics when outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band kl={} ku={}", self.kl, self.ku);
        let o = self.offset(i, j).unwrap();
        self.data[o] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let o = self.offset(i, j).unwrap();
        self.data[o] = v;
    }

    pub fn col_range(&self, i: usize) -> (usize, usize) {
        (i.saturating_sub(self.kl), (i + self.ku).min(self.n - 1))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (a, b) = self.col_range(i);
                (a..=b).map(|j| self.data[self.offset(i, j).unwrap()] * x[j]).sum()
            })
            .collect()
    }

    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let (a, b) = self.col_range(i);
            for j in a..=b {
                y[j] += self.data[self.offset(i, j).unwrap()] * x[i];
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (a, b) = self.col_range(i);
            for j in a..=b {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn row_max_abs(&self, i: usize) -> f64 {
        let (a, b) = self.col_range(i);
        (a..=b).fold(0.0, |m, j| m.max(self.get(i, j).abs()))
    }

    pub fn factor(&self) -> Result<BandLu, LinalgError> {
        BandLu::new(self)
    }
}

/// LU factors with row interchanges, applied in the same interleaved order
/// as the factorization.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    piv: Vec<usize>,
    pub min_pivot_ratio: f64,
}

impl BandLu {
    fn new(a: &BandMatrix) -> Result<Self, LinalgError> {
        let n = a.n;
        let (kl, ku, width) = (a.kl, a.ku, a.width);
        let mut d = a.data.clone();
        let mut piv = vec![0; n];
        let off = |i: usize, j: usize| i * width + (j + kl - i);
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let mut min_ratio = f64::INFINITY;
        for k in 0..n {
            let rmax = (k + kl).min(n - 1);
            let cmax = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = d[off(k, k)].abs();
            for r in k + 1..=rmax {
                let v = d[off(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            piv[k] = p;
            min_ratio = min_ratio.min(best / scale);
            if best == 0.0 {
                return Err(LinalgError::Singular { row: k, ratio: 0.0 });
            }
            if p != k {
                for c in k..=cmax {
                    d.swap(off(k, c), off(p, c));
                }
            }
            let pivot = d[off(k, k)];
            for r in k + 1..=rmax {
                let l = d[off(r, k)] / pivot;
                d[off(r, k)] = l;
                if l != 0.0 {
                    for c in k + 1..=cmax {
                        d[off(r, c)] -= l * d[off(k, c)];
                    }
                }
            }
        }
        Ok(BandLu { n, kl, ku, width, data: d, piv, min_pivot_ratio: min_ratio })
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + (j + self.kl - i)]
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..=(k + self.kl).min(n - 1) {
                    b[r] -= self.at(r, k) * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let cmax = (k + self.kl + self.ku).min(n - 1);
            let mut s = b[k];
            for c in k + 1..=cmax {
                s -= self.at(k, c) * b[c];
            }
            b[k] = s / self.at(k, k);
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// `[[A, B], [C, D]]` with `A` banded and `k` dense border rows and columns.
#[derive(Debug, Clone)]
pub struct BorderedMatrix {
    pub a: BandMatrix,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl BorderedMatrix {
    pub fn new(a: BandMatrix, k: usize) -> Self {
        let n = a.n;
        BorderedMatrix { a, b: DMatrix::zeros(n, k), c: DMatrix::zeros(k, n), d: DMatrix::zeros(k, k) }
    }

    pub fn n_band(&self) -> usize {
        self.a.n
    }

    pub fn k(&self) -> usize {
        self.d.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.n + self.k()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.a.n;
        let k = self.k();
        let (xa, xb) = x.split_at(n);
        let mut y = self.a.matvec(xa);
        for i in 0..n {
            for j in 0..k {
                y[i] += self.b[(i, j)] * xb[j];
            }
        }
        for i in 0..k {
            let mut s = 0.0;
            for j in 0..n {
                s += self.c[(i, j)] * xa[j];
            }
            for j in 0..k {
                s += self.d[(i, j)] * xb[j];
            }
            y.push(s);
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.a.n;
        let k = self.k();
        let mut m = DMatrix::zeros(n + k, n + k);
        m.view_mut((0, 0), (n, n)).copy_from(&self.a.to_dense());
        m.view_mut((0, n), (n, k)).copy_from(&self.b);
        m.view_mut((n, 0), (k, n)).copy_from(&self.c);
        m.view_mut((n, n), (k, k)).copy_from(&self.d);
        m
    }

    /// Largest absolute entry over all blocks.
    pub fn max_abs(&self) -> f64 {
        let m = |x: &DMatrix<f64>| x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        self.a.max_abs().max(m(&self.b)).max(m(&self.c)).max(m(&self.d))
    }
}

/// Outcome of a bordered solve.
#[derive(Debug, Clone)]
pub struct SolveInfo {
    pub residual_inf: f64,
    pub rhs_inf: f64,
    pub refinements: usize,
    pub min_pivot_ratio: f64,
    pub cond_estimate: f64,
}

/// Factorization of a bordered matrix by block elimination on the band part.
pub struct BorderedLu {
    lu: BandLu,
    x: DMatrix<f64>,
    schur: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    pub min_pivot_ratio: f64,
}

impl BorderedLu {
    pub fn new(m: &BorderedMatrix) -> Result<Self, LinalgError> {
        let lu = m.a.factor()?;
        let n = m.a.n;
        let k = m.k();
        let mut x = DMatrix::zeros(n, k);
        for j in 0..k {
            let col: Vec<f64> = m.b.column(j).iter().cloned().collect();
            let sol = lu.solve(&col);
            x.column_mut(j).copy_from_slice(&sol);
        }
        let schur = if k > 0 {
            let s = &m.d - &m.c * &x;
            Some(s.lu())
        } else {
            None
        };
        Ok(BorderedLu { min_pivot_ratio: lu.min_pivot_ratio, lu, x, schur })
    }

    fn solve_once(&self, m: &BorderedMatrix, rhs: &[f64]) -> Option<Vec<f64>> {
        let n = m.a.n;
        let k = m.k();
        let mut y = self.lu.solve(&rhs[..n]);
        if k == 0 {
            return Some(y);
        }
        let cy = &m.c * DVector::from_column_slice(&y);
        let r2 = DVector::from_column_slice(&rhs[n..]) - cy;
        let z = self.schur.as_ref().unwrap().solve(&r2)?;
        let xz = &self.x * &z;
        for i in 0..n {
            y[i] -= xz[i];
        }
        y.extend(z.iter());
        Some(y)
    }

    /// Solves with iterative refinement against the unfactored matrix.
    pub fn solve(&self, m: &BorderedMatrix, rhs: &[f64]) -> Result<(Vec<f64>, SolveInfo), LinalgError> {
        let rhs_inf = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut x = self
            .solve_once(m, rhs)
            .ok_or(LinalgError::Singular { row: m.a.n, ratio: 0.0 })?;
        let mut refinements = 0;
        let mut res_inf = f64::INFINITY;
        for _ in 0..6 {
            let ax = m.matvec(&x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let new_res = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if new_res >= res_inf * 0.5 && refinements > 0 {
                res_inf = res_inf.min(new_res);
                break;
            }
            res_inf = new_res;
            if res_inf <= 1e-15 * rhs_inf.max(f64::MIN_POSITIVE) {
                break;
            }
            let dx = match self.solve_once(m, &r) {
                Some(v) => v,
                None => break,
            };
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
            refinements += 1;
        }
        let x_inf = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let cond = m.max_abs() * x_inf / rhs_inf.max(f64::MIN_POSITIVE);
        Ok((
            x,
            SolveInfo {
                residual_inf: res_inf,
                rhs_inf,
                refinements,
                min_pivot_ratio: self.min_pivot_ratio,
                cond_estimate: cond,
            },
        ))
    }

    /// Cheap lower bound on the infinity-norm condition number from a few
    /// solves with sign vectors.
    pub fn condition_estimate(&self, m: &BorderedMatrix) -> f64 {
        let dim = m.dim();
        let norm_a = (0..m.a.n)
            .map(|i| {
                let (a, b) = m.a.col_range(i);
                (a..=b).map(|j| m.a.get(i, j).abs()).sum::<f64>() + m.b.row(i).iter().map(|v| v.abs()).sum::<f64>()
            })
            .chain((0..m.k()).map(|i| m.c.row(i).iter().chain(m.d.row(i).iter()).map(|v| v.abs()).sum::<f64>()))
            .fold(0.0f64, f64::max);
        let mut best = 0.0f64;
        for seed in 0..3u64 {
            // deterministic pseudo-random sign pattern
            let mut state = 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(seed + 1);
            let z: Vec<f64> = (0..dim)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    if state & 1 == 0 { 1.0 } else { -1.0 }
                })
                .collect();
            if let Some(x) = self.solve_once(m, &z) {
                let xi = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                best = best.max(xi);
            } else {
                return f64::INFINITY;
            }
        }
        norm_a * best
    }
}

/// Number of negative pivots in the LDL^T factorization of the symmetric
/// tridiagonal matrix `diag(d) + offdiag(e)` (Sylvester inertia).
pub fn tridiagonal_negative_count(d: &[f64], e: &[f64]) -> usize {
    let n = d.len();
    let mut count = 0;
    let mut piv = 0.0;
    let tiny = f64::MIN_POSITIVE.sqrt();
    for i in 0..n {
        piv = if i == 0 { d[0] } else { d[i] - e[i - 1] * e[i - 1] / piv };
        if piv == 0.0 {
            piv = -tiny;
        }
        if piv < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solves a tridiagonal system (no pivoting) with sub/diag/super arrays.
pub fn tridiagonal_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { sup[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = sup[i] / m;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / m;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> BandMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = BandMatrix::zeros(n, kl, ku);
        for i in 0..n {
            let (lo, hi) = a.col_range(i);
            for j in lo..=hi {
                a.set(i, j, rng.random_range(-1.0..1.0));
            }
            // keep triangular cases (kl = 0) well conditioned
            a.add(i, i, 2.0);
        }
        a
    }

    #[test]
    fn band_lu_matches_dense_solve() {
        for (n, kl, ku) in [(1, 0, 0), (7, 2, 1), (40, 5, 3), (33, 0, 4)] {
            let a = random_band(n, kl, ku, n as u64);
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let x = a.factor().unwrap().solve(&b);
            let r = a.matvec(&x);
            let err = r.iter().zip(&b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            assert!(err < 1e-10, "n={n} err={err}");
        }
    }

    #[test]
    fn band_lu_pivots_through_zero_diagonal() {
        let mut a = BandMatrix::zeros(3, 1, 1);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 2, 1.0);
        a.set(2, 1, 1.0);
        a.set(2, 2, 1.0);
        let x = a.factor().unwrap().solve(&[1.0, 2.0, 3.0]);
        assert_eq!(a.matvec(&x), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn singular_band_is_reported() {
        let mut a = BandMatrix::zeros(3, 1, 1);
        a.set(0, 0, 1.0);
        a.set(1, 0, 1.0);
        a.set(2, 2, 1.0);
        assert!(matches!(a.factor(), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn bordered_solve_matches_dense() {
        let n = 30;
        let mut m = BorderedMatrix::new(random_band(n, 3, 3, 7), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..n {
            for j in 0..2 {
                m.b[(i, j)] = rng.random_range(-1.0..1.0);
                m.c[(j, i)] = rng.random_range(-1.0..1.0);
            }
        }
        m.d[(0, 0)] = 0.3;
        m.d[(1, 1)] = -0.2;
        let rhs: Vec<f64> = (0..n + 2).map(|i| 1.0 + i as f64).collect();
        let lu = BorderedLu::new(&m).unwrap();
        let (x, info) = lu.solve(&m, &rhs).unwrap();
        let dense = m.to_dense().lu().solve(&DVector::from_column_slice(&rhs)).unwrap();
        for (a, b) in x.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
        assert!(info.residual_inf < 1e-12 * info.rhs_inf);
    }

    #[test]
    fn inertia_count_matches_eigenvalues() {
        // second-difference matrix shifted so that exactly two eigenvalues are negative
        let n = 10;
        let h = std::f64::consts::PI / (n as f64 + 1.0);
        let eig = |k: usize| 2.0 - 2.0 * (k as f64 * h).cos();
        let shift = 0.5 * (eig(2) + eig(3));
        let d = vec![2.0 - shift; n];
        let e = vec![-1.0; n - 1];
        assert_eq!(tridiagonal_negative_count(&d, &e), 2);
    }

    #[test]
    fn tridiagonal_solver() {
        let sub = [1.0, 1.0];
        let diag = [4.0, 4.0, 4.0];
        let sup = [1.0, 1.0];
        let x = tridiagonal_solve(&sub, &diag, &sup, &[5.0, 6.0, 5.0]);
        for v in x {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }
}
