//! The interface eigenproblem with the spectral parameter in the transmission
//! condition, discretized by linear elements with lumped mass.
//!
//! Unknowns are the p-nodes strictly between bed and lid. The stiffness form
//! is `sum_cells a_c^3 (du)^2 / h + g drho u(p1)^2`, the indefinite mass form
//! `sum_nodes a_i w_i u_i^2 - (sigma/2) u(p1)^2`.

use crate::laminar::{
    bernoulli_q_prime, compute_gamma_rel, lambda0, laminar_flow, DiscreteCoefficients, LaminarError, LaminarFlow,
    RelativeCirculation,
};
use crate::linalg::{tridiagonal_negative_count, BandMatrix, LinalgError};
use crate::model::{GridD, ModelError, PhysicalParams};
use crate::quad::bracketed_root;
use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("not admissible: {0}")]
    NotAdmissible(String),
    #[error("indefinite inner product undefined for sigma = 0")]
    SigmaZero,
    #[error("lambda = {lambda} is not above lambda0 = {lambda0}")]
    NotInPositiveRegime { lambda: f64, lambda0: f64 },
    #[error("found {0} negative-type eigenpairs, expected exactly one")]
    MultipleNegativeType(usize),
    #[error("eigensolver breakdown: {0}")]
    Breakdown(String),
    #[error("LBCFails: nu = {nu_lo} < -1 already at the lower end lambda = {lo}")]
    LBCFails { lo: f64, nu_lo: f64 },
    #[error("NoBracket: nu = {nu_hi} > -1 at the upper end lambda = {hi}")]
    NoBracket { hi: f64, nu_hi: f64 },
    #[error("Q'(lambda*) vanishes at lambda = {0}")]
    QPrimeVanishes(f64),
    #[error(transparent)]
    Laminar(#[from] LaminarError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Symmetric tridiagonal stiffness `A` and diagonal indefinite mass `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPencil {
    pub lambda: f64,
    pub sigma: f64,
    pub grid: GridD,
    /// All p-nodes, bed first.
    pub p: Vec<f64>,
    /// Unknown index of the interface node.
    pub iface: usize,
    pub a_diag: Vec<f64>,
    pub a_off: Vec<f64>,
    pub m_diag: Vec<f64>,
    /// Mass without the surface-tension contribution (positive).
    pub mass_pos: Vec<f64>,
    pub coeffs: DiscreteCoefficients,
    pub grav_drho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PontryaginType {
    Positive,
    Negative,
    Neutral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub mu: f64,
    /// Values at the interior nodes, normalized to max |u| = 1.
    pub vector: Vec<f64>,
    /// `sigma u(p1)`.
    pub b: f64,
    pub pontryagin_norm: f64,
    pub kind: PontryaginType,
    /// `|A x - mu M x|_inf / |A x|_inf`.
    pub residual: f64,
    /// Stiffness form on the eigenvector.
    pub energy: f64,
}

const NEUTRAL_TOL: f64 = 1e-8;
const EIG_RESIDUAL_TOL: f64 = 1e-10;

impl SpectralPencil {
    pub fn dim(&self) -> usize {
        self.a_diag.len()
    }

    pub fn matrix_a(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut a = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.a_diag));
        for i in 0..n - 1 {
            a[(i, i + 1)] = self.a_off[i];
            a[(i + 1, i)] = self.a_off[i];
        }
        a
    }

    pub fn matrix_m(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.m_diag))
    }

    pub fn apply_a(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = self.a_diag[i] * x[i];
                if i > 0 {
                    s += self.a_off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.a_off[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    pub fn apply_m(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.m_diag).map(|(x, m)| x * m).collect()
    }

    pub fn form_a(&self, x: &[f64]) -> f64 {
        dot(x, &self.apply_a(x))
    }

    pub fn form_m(&self, x: &[f64]) -> f64 {
        dot(x, &self.apply_m(x))
    }

    /// Stiffness form evaluated cell by cell from its definition
    /// `int a^3 u'^2 + g drho u(p1)^2` with the given cell coefficients.
    pub fn quadrature_energy(&self, x: &[f64], cell_a: &[f64]) -> f64 {
        let nodes = self.to_nodes(x);
        let mut s = 0.0;
        for c in 0..nodes.len() - 1 {
            let h = self.p[c + 1] - self.p[c];
            let du = (nodes[c + 1] - nodes[c]) / h;
            s += cell_a[c].powi(3) * du * du * h;
        }
        s + self.grav_drho * x[self.iface] * x[self.iface]
    }

    /// Interior values padded with the zero bed and lid values.
    pub fn to_nodes(&self, x: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(x.len() + 2);
        v.push(0.0);
        v.extend_from_slice(x);
        v.push(0.0);
        v
    }

    /// `A - mu M` as (diag, offdiag).
    fn shifted(&self, mu: f64) -> (Vec<f64>, Vec<f64>) {
        let d = self.a_diag.iter().zip(&self.m_diag).map(|(a, m)| a - mu * m).collect();
        (d, self.a_off.clone())
    }

    /// Negative eigenvalue count of `A - mu M`.
    pub fn inertia(&self, mu: f64) -> usize {
        let (d, e) = self.shifted(mu);
        tridiagonal_negative_count(&d, &e)
    }

    /// Derivatives of `A` (diag, offdiag) and `M` (diag) with respect to lambda.
    pub fn lambda_derivative(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let c = &self.coeffs;
        let mut da = vec![0.0; n];
        let mut de = vec![0.0; n.saturating_sub(1)];
        for cell in 0..self.p.len() - 1 {
            let h = self.p[cell + 1] - self.p[cell];
            let ds = 3.0 * c.cell[cell].powi(2) * c.cell_dlambda[cell] / h;
            stamp(&mut da, &mut de, cell, ds);
        }
        let mut dm = vec![0.0; n];
        for (j, dmj) in dm.iter_mut().enumerate() {
            let i = j + 1;
            if j == self.iface {
                let hw = self.p[i] - self.p[i - 1];
                *dmj = 0.5 * hw;
            } else {
                *dmj = c.node_dlambda[i] * 0.5 * (self.p[i + 1] - self.p[i - 1]);
            }
        }
        (da, de, dm)
    }
}

fn stamp(diag: &mut [f64], off: &mut [f64], cell: usize, s: f64) {
    // cell spans nodes cell, cell+1; unknown index = node - 1
    let n = diag.len();
    let (l, r) = (cell as isize - 1, cell as isize);
    if l >= 0 {
        diag[l as usize] += s;
    }
    if (r as usize) < n {
        diag[r as usize] += s;
    }
    if l >= 0 && (r as usize) < n {
        off[l as usize] -= s;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn assemble_pencil(params: &PhysicalParams, flow: &LaminarFlow) -> SpectralPencil {
    let grid = flow.grid.clone();
    let coeffs = flow.coefficients();
    let p = grid.p_nodes();
    let n_nodes = p.len();
    let n = n_nodes - 2;
    let k = grid.iface();
    let gdr = params.grav * params.delta_rho();
    let mut a_diag = vec![0.0; n];
    let mut a_off = vec![0.0; n - 1];
    for c in 0..n_nodes - 1 {
        let h = p[c + 1] - p[c];
        stamp(&mut a_diag, &mut a_off, c, coeffs.cell[c].powi(3) / h);
    }
    a_diag[k - 1] += gdr;
    let mut mass_pos = vec![0.0; n];
    for (j, m) in mass_pos.iter_mut().enumerate() {
        let i = j + 1;
        *m = if i == k {
            0.5 * ((p[k + 1] - p[k]) * coeffs.node[k] + (p[k] - p[k - 1]) * coeffs.iface_water)
        } else {
            0.5 * (p[i + 1] - p[i - 1]) * coeffs.node[i]
        };
    }
    let mut m_diag = mass_pos.clone();
    m_diag[k - 1] -= 0.5 * params.sigma;
    SpectralPencil {
        lambda: flow.lambda,
        sigma: params.sigma,
        grid,
        p,
        iface: k - 1,
        a_diag,
        a_off,
        m_diag,
        mass_pos,
        coeffs,
        grav_drho: gdr,
    }
}

/// `<a u1, u2> - b1 b2 / (2 sigma)` with the lumped quadrature of the pencil.
pub fn indefinite_inner(pencil: &SpectralPencil, u1: (&[f64], f64), u2: (&[f64], f64)) -> Result<f64, SpectralError> {
    if pencil.sigma == 0.0 {
        return Err(SpectralError::SigmaZero);
    }
    let field: f64 = pencil.mass_pos.iter().zip(u1.0.iter().zip(u2.0)).map(|(w, (a, b))| w * a * b).sum();
    Ok(field - u1.1 * u2.1 / (2.0 * pencil.sigma))
}

fn classify(norm: f64, scale: f64) -> PontryaginType {
    if norm.abs() < NEUTRAL_TOL * scale {
        PontryaginType::Neutral
    } else if norm < 0.0 {
        PontryaginType::Negative
    } else {
        PontryaginType::Positive
    }
}

fn make_pair(pencil: &SpectralPencil, mu: f64, mut x: Vec<f64>) -> EigenPair {
    let imax = (0..x.len()).max_by(|&i, &j| x[i].abs().total_cmp(&x[j].abs())).unwrap_or(0);
    let s = x[imax];
    let mut sign = if s < 0.0 { -1.0 } else { 1.0 };
    if x[pencil.iface].abs() > 1e-12 * s.abs() && x[pencil.iface] * s < 0.0 {
        sign = -sign;
    }
    for v in x.iter_mut() {
        *v *= sign / s.abs();
    }
    let ax = pencil.apply_a(&x);
    let mx = pencil.apply_m(&x);
    let res = ax.iter().zip(&mx).fold(0.0f64, |m, (a, b)| m.max((a - mu * b).abs()));
    let ax_inf = ax.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let norm = dot(&x, &mx);
    let scale: f64 = pencil.m_diag.iter().zip(&x).map(|(m, v)| m.abs() * v * v).sum();
    EigenPair {
        mu,
        b: pencil.sigma * x[pencil.iface],
        pontryagin_norm: norm,
        kind: classify(norm, scale),
        residual: res / ax_inf.max(f64::MIN_POSITIVE),
        energy: dot(&x, &ax),
        vector: x,
    }
}

/// All eigenpairs of `A x = mu M x`, ascending in `mu`. Requires `A` positive
/// definite (the regime lambda > lambda0); otherwise reports a breakdown.
pub fn solve_pencil(pencil: &SpectralPencil) -> Result<Vec<EigenPair>, SpectralError> {
    let a = pencil.matrix_a();
    let n = pencil.dim();
    let chol = a.cholesky().ok_or_else(|| {
        SpectralError::Breakdown(format!("stiffness matrix not positive definite at lambda = {}", pencil.lambda))
    })?;
    let l = chol.l();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| SpectralError::Breakdown("singular Cholesky factor".into()))?;
    let mut c = &linv * pencil.matrix_m() * linv.transpose();
    c = 0.5 * (&c + c.transpose());
    let eig = c.symmetric_eigen();
    let scale = eig.eigenvalues.amax();
    let mut pairs = Vec::with_capacity(n);
    for j in 0..n {
        let theta = eig.eigenvalues[j];
        if theta.abs() <= 1e-14 * scale {
            return Err(SpectralError::Breakdown(format!("infinite eigenvalue (theta = {theta:e})")));
        }
        let y = eig.eigenvectors.column(j).clone_owned();
        let x = linv.transpose() * y;
        let pair = make_pair(pencil, 1.0 / theta, x.iter().cloned().collect());
        if !(pair.residual <= EIG_RESIDUAL_TOL) {
            return Err(SpectralError::Breakdown(format!(
                "eigenpair residual {:e} above tolerance at mu = {}",
                pair.residual, pair.mu
            )));
        }
        pairs.push(pair);
    }
    pairs.sort_by(|a, b| a.mu.total_cmp(&b.mu));
    Ok(pairs)
}

/// Negative-type eigenpair of the pencil by inertia bisection and inverse
/// iteration.
pub fn negative_type_pair(pencil: &SpectralPencil) -> Result<EigenPair, SpectralError> {
    let (l0, _) = lambda0_from_pencil(pencil);
    if pencil.inertia(0.0) != 0 {
        return Err(SpectralError::NotInPositiveRegime { lambda: pencil.lambda, lambda0: l0 });
    }
    let negatives = pencil.m_diag.iter().filter(|m| **m < 0.0).count();
    if negatives != 1 {
        return Err(SpectralError::MultipleNegativeType(negatives));
    }
    let mut lo = -1.0;
    let mut guard = 0;
    while pencil.inertia(lo) == 0 {
        lo *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(SpectralError::Breakdown("no lower bound for the negative eigenvalue".into()));
        }
    }
    let mut hi = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi || (hi - lo) <= 1e-9 * lo.abs() {
            break;
        }
        if pencil.inertia(mid) >= 1 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // shifted inverse iteration from the bracket midpoint
    let shift = 0.5 * (lo + hi);
    let n = pencil.dim();
    let mut band = BandMatrix::zeros(n, 1, 1);
    let (d, e) = pencil.shifted(shift);
    for i in 0..n {
        band.set(i, i, d[i]);
        if i + 1 < n {
            band.set(i, i + 1, e[i]);
            band.set(i + 1, i, e[i]);
        }
    }
    let lu = band.factor()?;
    let mut x = vec![0.0; n];
    x[pencil.iface] = 1.0;
    let mut mu = shift;
    for _ in 0..6 {
        let mut y = lu.solve(&pencil.apply_m(&x));
        let s = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        y.iter_mut().for_each(|v| *v /= s);
        x = y;
        let new_mu = pencil.form_a(&x) / pencil.form_m(&x);
        let done = (new_mu - mu).abs() <= 1e-15 * mu.abs();
        mu = new_mu;
        if done {
            break;
        }
    }
    let pair = make_pair(pencil, mu, x);
    if pair.kind != PontryaginType::Negative {
        return Err(SpectralError::MultipleNegativeType(0));
    }
    if !(pair.residual <= EIG_RESIDUAL_TOL) {
        return Err(SpectralError::Breakdown(format!("inverse iteration residual {:e}", pair.residual)));
    }
    Ok(pair)
}

fn lambda0_from_pencil(pencil: &SpectralPencil) -> (f64, f64) {
    let g = &pencil.grid;
    let l0 = (-pencil.grav_drho * (g.p1 - g.p0)).cbrt();
    (l0, 0.0)
}

/// nu(lambda) together with its eigenpair.
pub fn nu_pair(
    params: &PhysicalParams,
    gamma_rel: &RelativeCirculation,
    lambda: f64,
    grid: &GridD,
) -> Result<(EigenPair, SpectralPencil), SpectralError> {
    let (l0, _) = lambda0(params);
    if !(lambda > l0) {
        return Err(SpectralError::NotInPositiveRegime { lambda, lambda0: l0 });
    }
    let flow = laminar_flow(params, gamma_rel, lambda, grid)?;
    let pencil = assemble_pencil(params, &flow);
    let pair = negative_type_pair(&pencil)?;
    Ok((pair, pencil))
}

pub fn nu(params: &PhysicalParams, gamma_rel: &RelativeCirculation, lambda: f64, grid: &GridD) -> Result<f64, SpectralError> {
    nu_pair(params, gamma_rel, lambda, grid).map(|(p, _)| p.mu)
}

/// d nu / d lambda from the discrete Green's identity
/// `x^T (A' - nu M') x / x^T M x` at the negative-type eigenvector.
pub fn nu_derivative(pencil: &SpectralPencil, pair: &EigenPair) -> f64 {
    let (da, de, dm) = pencil.lambda_derivative();
    let x = &pair.vector;
    let n = x.len();
    let mut num = 0.0;
    for i in 0..n {
        num += (da[i] - pair.mu * dm[i]) * x[i] * x[i];
        if i + 1 < n {
            num += 2.0 * de[i] * x[i] * x[i + 1];
        }
    }
    num / pencil.form_m(x)
}

/// Indefinite Rayleigh quotient of a nodal function vanishing at bed and lid.
pub fn rayleigh(phi: &[f64], pencil: &SpectralPencil) -> Result<f64, SpectralError> {
    let n = pencil.p.len();
    if phi.len() != n {
        return Err(SpectralError::NotAdmissible(format!("expected {n} nodal values, got {}", phi.len())));
    }
    let scale = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if phi[0].abs() > 1e-14 * scale || phi[n - 1].abs() > 1e-14 * scale {
        return Err(SpectralError::NotAdmissible("phi must vanish at bed and lid".into()));
    }
    let x = &phi[1..n - 1];
    let den = pencil.form_m(x);
    if !(den < 0.0) {
        return Err(SpectralError::NotAdmissible(format!("denominator {den:e} is not negative")));
    }
    Ok(pencil.form_a(x) / den)
}

/// Result of the lambda* search.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaStar {
    pub lambda: f64,
    pub nu: f64,
    /// Mode on all p-nodes, max |phi| = 1, phi(p1) > 0.
    pub mode: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda0: f64,
    pub q_prime: f64,
    pub interval: (f64, f64),
    pub pair: EigenPair,
}

pub fn default_interval(params: &PhysicalParams) -> (f64, f64) {
    let (l0, _) = lambda0(params);
    (l0 + 1e-3, l0 + 10.0 * l0)
}

/// lambda* with nu(lambda*) = -1 by safeguarded root-finding on the
/// decreasing function nu.
pub fn find_lambda_star(
    params: &PhysicalParams,
    gamma_rel: &RelativeCirculation,
    grid: &GridD,
    interval: Option<(f64, f64)>,
) -> Result<LambdaStar, SpectralError> {
    find_lambda_star_n(params, gamma_rel, grid, interval, 1)
}

/// As [`find_lambda_star`] with target nu = -n^2.
pub fn find_lambda_star_n(
    params: &PhysicalParams,
    gamma_rel: &RelativeCirculation,
    grid: &GridD,
    interval: Option<(f64, f64)>,
    n: u32,
) -> Result<LambdaStar, SpectralError> {
    let (lo, hi) = interval.unwrap_or_else(|| default_interval(params));
    let target = -((n * n) as f64);
    let nu_lo = nu(params, gamma_rel, lo, grid)?;
    if nu_lo < target {
        return Err(SpectralError::LBCFails { lo, nu_lo });
    }
    let nu_hi = nu(params, gamma_rel, hi, grid)?;
    if nu_hi > target {
        return Err(SpectralError::NoBracket { hi, nu_hi });
    }
    let f = |l: f64| nu(params, gamma_rel, l, grid).map(|v| v - target).unwrap_or(f64::NAN);
    let lambda = bracketed_root(&f, lo, hi, 1e-15 * hi, 300)
        .ok_or_else(|| SpectralError::Breakdown("lost the nu bracket".into()))?;
    let (pair, pencil) = nu_pair(params, gamma_rel, lambda, grid)?;
    if (pair.mu - target).abs() > 1e-10 {
        return Err(SpectralError::Breakdown(format!("|nu + n^2| = {:e} after root-finding", (pair.mu - target).abs())));
    }
    let q_prime = bernoulli_q_prime(params, lambda);
    if q_prime.abs() < 1e-12 {
        return Err(SpectralError::QPrimeVanishes(lambda));
    }
    Ok(LambdaStar {
        lambda,
        nu: pair.mu,
        mode: pencil.to_nodes(&pair.vector),
        p: pencil.p.clone(),
        lambda0: lambda0(params).0,
        q_prime,
        interval: (lo, hi),
        pair,
    })
}

/// Sup of sampled nu over `samples` points of `(lo, hi)`, and whether it
/// exceeds -1.
pub fn lbc_sup_nu(
    params: &PhysicalParams,
    gamma_rel: &RelativeCirculation,
    grid: &GridD,
    interval: (f64, f64),
    samples: usize,
) -> Result<(f64, bool), SpectralError> {
    let mut sup = f64::NEG_INFINITY;
    for s in 0..samples {
        let t = s as f64 / (samples - 1).max(1) as f64;
        let l = interval.0 + t * (interval.1 - interval.0);
        sup = sup.max(nu(params, gamma_rel, l, grid)?);
    }
    Ok((sup, sup > -1.0))
}

/// Smallest singular value of the mass-scaled q-independent linearized
/// system, where the nonlocal lid condition identifies the lid value with
/// the interface value.
pub fn zero_mode_check(params: &PhysicalParams, gamma_rel: &RelativeCirculation, lambda: f64, grid: &GridD) -> Result<f64, SpectralError> {
    let flow = laminar_flow(params, gamma_rel, lambda, grid)?;
    let pencil = assemble_pencil(params, &flow);
    let n = pencil.dim();
    let k = pencil.iface;
    let p = &pencil.p;
    let n_nodes = p.len();
    // stiffness with the lid node folded onto the interface unknown
    let mut kmat = pencil.matrix_a();
    let top = n_nodes - 2;
    let s_top = pencil.coeffs.cell[top].powi(3) / (p[top + 1] - p[top]);
    // cell (top, lid): s (u_top - u_k)^2 replaces s u_top^2
    kmat[(k, k)] += s_top;
    kmat[(top - 1, k)] -= s_top;
    kmat[(k, top - 1)] -= s_top;
    let w: Vec<f64> = pencil.mass_pos.iter().map(|m| 1.0 / m.sqrt()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| w[i] * kmat[(i, j)] * w[j]);
    let eig = s.symmetric_eigen();
    Ok(eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs())))
}

/// Convenience: relative circulation and pencil at lambda on a grid.
pub fn pencil_at(params: &PhysicalParams, lambda: f64, grid: &GridD) -> Result<SpectralPencil, SpectralError> {
    let rc = compute_gamma_rel(params, grid)?;
    let flow = laminar_flow(params, &rc, lambda, grid)?;
    Ok(assemble_pencil(params, &flow))
}
