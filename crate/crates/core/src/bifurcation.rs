//! Height-equation residual, its exact discrete linearization, the
//! Crandall-Rabinowitz checks at lambda*, continuation of the bifurcating
//! branch and reconstruction of the physical wave.
//!
//! The residual is a conservative discretization: p-fluxes
//! `(1 + h_q^2) / (2 h_p^2)` live on cells, the vorticity term enters as the
//! p-derivative of `Gamma_rel^2 / 2` with the laminar cell values, q-derivatives
//! are spectral, and the interface row closes with half-cell balances on both
//! sides. With this choice `F(lambda, 0)` vanishes to round-off and the
//! linearization at `m = 0` restricted to `phi(p) cos(n q)` is the 1D pencil
//! `-(K + n^2 W)` row by row.

use crate::elliptic2d::{kernel_dim, DiscreteOperator, Layout, LidCondition, RowClass, Sector};
use crate::fourier::diff_matrix;
use crate::laminar::{bernoulli_q, bernoulli_q_prime, laminar_flow, LaminarError, LaminarFlow, RelativeCirculation};
use crate::linalg::{norm_inf, BorderedLu, BorderedMatrix, LinalgError};
use crate::model::{FieldOnD, GridD, ModelError, PhysicalParams, Side};
use crate::spectral1d::LambdaStar;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BifurcationError {
    #[error("Stagnation: h_p = {hp:e} <= 0 in cell {cell}, column {column}")]
    Stagnation { cell: usize, column: usize, hp: f64 },
    #[error("perturbation must vanish on the bed (max |m| = {0:e})")]
    BedNotZero(f64),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("KernelMismatch: even-sector kernel dimension {dim}, expected 1")]
    KernelMismatch { dim: usize },
    #[error("SignViolation: transversality Xi = {xi:e} is not negative")]
    SignViolation { xi: f64 },
    #[error("NewtonDiverged at s = {s}: residual {residual:e} after {iterations} iterations")]
    NewtonDiverged { s: f64, residual: f64, iterations: usize },
    #[error("StagnationOnBranch at s = {s}")]
    StagnationOnBranch { s: f64 },
    #[error("invalid continuation parameters: {0}")]
    InvalidStep(String),
    #[error(transparent)]
    Laminar(#[from] LaminarError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Discrete residual on all p-rows (`np_total x nq`, row-major, bed row zero).
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualF {
    pub grid: GridD,
    pub rows: Vec<f64>,
}

impl ResidualF {
    fn row(&self, i: usize) -> &[f64] {
        let nq = self.grid.nq;
        &self.rows[i * nq..(i + 1) * nq]
    }

    /// Air interior rows.
    pub fn f1(&self) -> &[f64] {
        let nq = self.grid.nq;
        &self.rows[(self.grid.iface() + 1) * nq..self.grid.lid() * nq]
    }

    /// Water interior rows.
    pub fn f2(&self) -> &[f64] {
        let nq = self.grid.nq;
        &self.rows[nq..self.grid.iface() * nq]
    }

    pub fn f3(&self) -> &[f64] {
        self.row(self.grid.iface())
    }

    pub fn f4(&self) -> &[f64] {
        self.row(self.grid.lid())
    }

    pub fn max_abs(&self) -> f64 {
        norm_inf(&self.rows)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.rows[i * self.grid.nq + j]
    }

    /// Residual rows from stored layout values (the mean border is dropped).
    pub fn from_stored(layout: &Layout, y: &[f64]) -> Self {
        ResidualF { grid: layout.grid.clone(), rows: layout.to_full_nodes(&y[..layout.n_field()]) }
    }
}

/// Nodal heights `h = H + m` with the derived cell and node quantities.
struct State {
    nq: usize,
    k: usize,
    lid: usize,
    p: Vec<f64>,
    h: Vec<DVector<f64>>,
    dh: Vec<DVector<f64>>,
    hp: Vec<DVector<f64>>,
    hq: Vec<DVector<f64>>,
    psi: Vec<DVector<f64>>,
    /// `A_c^2 / 2` on air cells, zero on water cells (they cancel there).
    off: Vec<f64>,
}

fn check_grid(flow: &LaminarFlow, m: &FieldOnD) -> Result<(), BifurcationError> {
    if flow.grid != m.grid {
        return Err(BifurcationError::GridMismatch("perturbation and laminar flow use different grids".into()));
    }
    Ok(())
}

impl State {
    fn new(flow: &LaminarFlow, m_nodes: &[f64], d: &DMatrix<f64>) -> Result<Self, BifurcationError> {
        let g = &flow.grid;
        let nq = g.nq;
        let n = g.np_total();
        let k = g.iface();
        let bed = norm_inf(&m_nodes[..nq]);
        if bed > 0.0 {
            return Err(BifurcationError::BedNotZero(bed));
        }
        let h: Vec<DVector<f64>> = (0..n)
            .map(|i| DVector::from_iterator(nq, m_nodes[i * nq..(i + 1) * nq].iter().map(|v| v + flow.h[i])))
            .collect();
        let dh: Vec<DVector<f64>> = h.iter().map(|r| d * r).collect();
        let p = flow.p.clone();
        let coeffs = flow.coefficients();
        let mut hp = Vec::with_capacity(n - 1);
        let mut hq = Vec::with_capacity(n - 1);
        let mut psi = Vec::with_capacity(n - 1);
        let mut off = Vec::with_capacity(n - 1);
        for c in 0..n - 1 {
            let dp = p[c + 1] - p[c];
            let s = (&h[c + 1] - &h[c]) / dp;
            if let Some((j, v)) = s.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(BifurcationError::Stagnation { cell: c, column: j, hp: *v });
            }
            let q = (&dh[c] + &dh[c + 1]) * 0.5;
            let ps = DVector::from_iterator(nq, q.iter().zip(s.iter()).map(|(q, s)| (1.0 + q * q) / (2.0 * s * s)));
            hp.push(s);
            hq.push(q);
            psi.push(ps);
            off.push(if c >= k { 0.5 * coeffs.cell[c].powi(2) } else { 0.0 });
        }
        Ok(State { nq, k, lid: n - 1, p, h, dh, hp, hq, psi, off })
    }

    fn min_hp(&self) -> f64 {
        self.hp.iter().flat_map(|v| v.iter()).cloned().fold(f64::INFINITY, f64::min)
    }

    /// Centered slope at an interior node.
    fn node_slope(&self, i: usize) -> DVector<f64> {
        (&self.h[i + 1] - &self.h[i - 1]) / (self.p[i + 1] - self.p[i - 1])
    }

    /// `D (h_q / s)` for the slope vector `s`.
    fn q_flux(&self, i: usize, s: &DVector<f64>, d: &DMatrix<f64>) -> DVector<f64> {
        d * self.dh[i].component_div(s)
    }

    /// Divergence `G` at an interior node.
    fn g_interior(&self, i: usize, d: &DMatrix<f64>) -> DVector<f64> {
        let dp = 0.5 * (self.p[i + 1] - self.p[i - 1]);
        let s = self.node_slope(i);
        let shift = (self.off[i] - self.off[i - 1]) / dp;
        (&self.psi[i] - &self.psi[i - 1]) / dp - self.q_flux(i, &s, d) - DVector::from_element(self.nq, shift)
    }
}

struct Physics {
    c: f64,
    gdr: f64,
    sigma: f64,
    q: f64,
}

impl Physics {
    fn new(params: &PhysicalParams, gamma_rel: &RelativeCirculation, lambda: f64) -> Self {
        Physics {
            c: gamma_rel.c,
            gdr: params.grav * params.delta_rho(),
            sigma: params.sigma,
            q: bernoulli_q(params, gamma_rel, lambda),
        }
    }
}

fn residual_rows(st: &State, ph: &Physics, m_nodes: &[f64], d: &DMatrix<f64>) -> Vec<f64> {
    let (nq, k, lid) = (st.nq, st.k, st.lid);
    let mut out = vec![0.0; (lid + 1) * nq];
    for i in 1..lid {
        let row: DVector<f64> = if i == k {
            let ha = st.p[k + 1] - st.p[k];
            let hw = st.p[k] - st.p[k - 1];
            let sp = &st.hp[k];
            let sm = &st.hp[k - 1];
            let tp = st.q_flux(k, sp, d);
            let tm = st.q_flux(k, sm, d);
            let hqq = d * &st.dh[k];
            let kappa = DVector::from_iterator(nq, hqq.iter().zip(st.dh[k].iter()).map(|(a, b)| a / (1.0 + b * b).powf(1.5)));
            (&st.psi[k] - &st.psi[k - 1]) * -2.0 + tp * ha + tm * hw - &st.h[k] * (2.0 * ph.gdr) - kappa * ph.sigma
                + DVector::from_element(nq, 2.0 * st.off[k] - ph.c + ph.q)
        } else {
            let s = st.node_slope(i);
            let g = st.g_interior(i, d);
            -DVector::from_iterator(nq, s.iter().zip(g.iter()).map(|(s, g)| s.powi(3) * g))
        };
        out[i * nq..(i + 1) * nq].copy_from_slice(row.as_slice());
    }
    let mean = m_nodes[k * nq..(k + 1) * nq].iter().sum::<f64>() / nq as f64;
    for j in 0..nq {
        out[lid * nq + j] = m_nodes[lid * nq + j] - mean;
    }
    out
}

/// `F(lambda, m)` on the grid of `m`.
pub fn residual(
    params: &PhysicalParams,
    gamma_rel: &RelativeCirculation,
    lambda: f64,
    m: &FieldOnD,
) -> Result<ResidualF, BifurcationError> {
    let flow = laminar_flow(params, gamma_rel, lambda, &m.grid)?;
    residual_on(params, gamma_rel, &flow, m)
}

/// As [`residual`] with a precomputed laminar flow.
pub fn residual_on(
    params: &PhysicalParams,
    gamma_rel: &RelativeCirculation,
    flow: &LaminarFlow,
    m: &FieldOnD,
) -> Result<ResidualF, BifurcationError> {
    check_grid(flow, m)?;
    let d = diff_matrix(m.grid.nq);
    let nodes = m.to_nodes();
    let st = State::new(flow, &nodes, &d)?;
    let ph = Physics::new(params, gamma_rel, flow.lambda);
    Ok(ResidualF { grid: m.grid.clone(), rows: residual_rows(&st, &ph, &nodes, &d) })
}

fn dg(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(v)
}

/// `D diag(v) D`.
fn d_diag_d(d: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let mut r = d.clone();
    for (mut row, s) in r.row_iter_mut().zip(v.iter()) {
        row *= *s;
    }
    d * r
}

/// `D diag(v)`.
fn d_diag(d: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let mut r = d.clone();
    for (mut col, s) in r.column_iter_mut().zip(v.iter()) {
        col *= *s;
    }
    r
}

/// `diag(v) D`.
fn diag_d(d: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let mut r = d.clone();
    for (mut row, s) in r.row_iter_mut().zip(v.iter()) {
        row *= *s;
    }
    r
}

/// Derivatives of the cell flux `psi_c` with respect to its lower and upper rows.
fn psi_blocks(st: &State, c: usize, d: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let dp = st.p[c + 1] - st.p[c];
    let alpha = DVector::from_iterator(st.nq, st.hq[c].iter().zip(st.hp[c].iter()).map(|(q, s)| q / (s * s)));
    let beta = DVector::from_iterator(st.nq, st.hq[c].iter().zip(st.hp[c].iter()).map(|(q, s)| (1.0 + q * q) / (s * s * s)));
    let half = diag_d(d, &alpha) * 0.5;
    let b = dg(&beta) / dp;
    (&half + &b, half - b)
}

/// Jacobian blocks of row `i` with respect to rows `i - 1`, `i`, `i + 1`.
fn row_blocks(st: &State, ph: &Physics, i: usize, d: &DMatrix<f64>) -> [DMatrix<f64>; 3] {
    let nq = st.nq;
    let (lo_i, up_i) = psi_blocks(st, i, d);
    let (lo_m, up_m) = psi_blocks(st, i - 1, d);
    if i == st.k {
        let k = st.k;
        let ha = st.p[k + 1] - st.p[k];
        let hw = st.p[k] - st.p[k - 1];
        let sp = &st.hp[k];
        let sm = &st.hp[k - 1];
        let inv = |s: &DVector<f64>| s.map(|v| 1.0 / v);
        let ep = d_diag(d, &st.dh[k].component_div(&sp.component_mul(sp)));
        let em = d_diag(d, &st.dh[k].component_div(&sm.component_mul(sm)));
        let q1 = &st.dh[k];
        let q2 = d * q1;
        let w3 = q1.map(|b| (1.0 + b * b).powf(-1.5));
        let w5 = DVector::from_iterator(nq, q1.iter().zip(q2.iter()).map(|(b, a)| -3.0 * a * b * (1.0 + b * b).powf(-2.5)));
        let dkappa = diag_d(&(d * d), &w3) + diag_d(d, &w5);
        let up = &up_i * -2.0 - &ep;
        let mid = (&lo_i - &up_m) * -2.0
            + d_diag_d(d, &inv(sp)) * ha
            + &ep
            + d_diag_d(d, &inv(sm)) * hw
            - &em
            - DMatrix::identity(nq, nq) * (2.0 * ph.gdr)
            - dkappa * ph.sigma;
        let lo = &lo_m * 2.0 + em;
        return [lo, mid, up];
    }
    let dp = 0.5 * (st.p[i + 1] - st.p[i - 1]);
    let p2 = st.p[i + 1] - st.p[i - 1];
    let s = st.node_slope(i);
    let g = st.g_interior(i, d);
    let e = d_diag(d, &st.dh[i].component_div(&s.component_mul(&s)));
    let s3 = dg(&s.map(|v| -v.powi(3)));
    let gs = dg(&DVector::from_iterator(nq, s.iter().zip(g.iter()).map(|(s, g)| -3.0 * s * s * g / p2)));
    let g_lo = -&lo_m / dp - &e / p2;
    let g_mid = (&lo_i - &up_m) / dp - d_diag_d(d, &s.map(|v| 1.0 / v));
    let g_up = &up_i / dp + &e / p2;
    [&s3 * g_lo - &gs, &s3 * g_mid, &s3 * g_up + gs]
}

fn assemble_jacobian(st: &State, ph: &Physics, grid: &GridD, sector: Sector, d: &DMatrix<f64>) -> DiscreteOperator {
    let lay = Layout::new(grid, sector);
    let mut band = lay.empty_band();
    let lid = st.lid;
    let mut row_class = Vec::with_capacity(lay.n_field() + 1);
    for i in 1..=lid {
        for _ in 0..lay.nc {
            row_class.push(lay.row_class(i));
        }
        if i == lid {
            lay.stamp(&mut band, i, i, &DMatrix::identity(st.nq, st.nq));
            continue;
        }
        let [lo, mid, up] = row_blocks(st, ph, i, d);
        lay.stamp(&mut band, i, i - 1, &lo);
        lay.stamp(&mut band, i, i, &mid);
        lay.stamp(&mut band, i, i + 1, &up);
    }
    let mut m = BorderedMatrix::new(band, 1);
    let w = lay.mean_weights();
    for c in 0..lay.nc {
        m.b[(lay.idx(lid, c), 0)] = -1.0;
        m.c[(0, lay.idx(st.k, c))] = -w[c];
    }
    m.d[(0, 0)] = 1.0;
    row_class.push(RowClass::LidMean);
    DiscreteOperator { layout: lay, lid: LidCondition::Nonlocal, matrix: m, row_class, alpha: 1.0, theta: 1.0 }
}

/// Exact Jacobian of the discrete residual at `(lambda, m)`.
///
/// Unknowns are the stored values of `m` on rows `1..=lid` followed by the
/// interface mean `d(m)`; the lid rows read `m_lid - d(m)`.
pub fn linearize(
    params: &PhysicalParams,
    gamma_rel: &RelativeCirculation,
    lambda: f64,
    m: &FieldOnD,
    sector: Sector,
) -> Result<DiscreteOperator, BifurcationError> {
    let flow = laminar_flow(params, gamma_rel, lambda, &m.grid)?;
    linearize_on(params, gamma_rel, &flow, m, sector)
}

pub fn linearize_on(
    params: &PhysicalParams,
    gamma_rel: &RelativeCirculation,
    flow: &LaminarFlow,
    m: &FieldOnD,
    sector: Sector,
) -> Result<DiscreteOperator, BifurcationError> {
    check_grid(flow, m)?;
    let d = diff_matrix(m.grid.nq);
    let nodes = m.to_nodes();
    let st = State::new(flow, &nodes, &d)?;
    let ph = Physics::new(params, gamma_rel, flow.lambda);
    Ok(assemble_jacobian(&st, &ph, &m.grid, sector, &d))
}

/// Stored unknowns `[m, d(m)]` of a field for an operator from [`linearize`].
pub fn stored(op: &DiscreteOperator, m: &FieldOnD) -> Vec<f64> {
    let lay = &op.layout;
    let nodes = m.to_nodes();
    let mut x = lay.from_full_nodes(&nodes);
    let nq = lay.grid.nq;
    let k = lay.grid.iface();
    x.push(nodes[k * nq..(k + 1) * nq].iter().sum::<f64>() / nq as f64);
    x
}

/// `dH / dlambda` on all nodes of the grid.
fn laminar_dlambda(flow: &LaminarFlow) -> Vec<f64> {
    let g = &flow.grid;
    let l2 = flow.lambda * flow.lambda;
    let k = g.iface();
    let mut out = Vec::with_capacity(g.np_total() * g.nq);
    for i in 0..g.np_total() {
        let v = if i < k { -(flow.p[i] - g.p0) / l2 } else { -(g.p1 - g.p0) / l2 };
        out.extend(std::iter::repeat_n(v, g.nq));
    }
    out
}

/// `sum_interior a^3 w A phi + 1/2 sum_I A phi + sum_T a^3 A phi_p` with the
/// laminar coefficients of `flow`, integrated over the full q-period.
pub fn range_pairing(flow: &LaminarFlow, data: &ResidualF, phi: &FieldOnD) -> Result<f64, BifurcationError> {
    let g = &flow.grid;
    if data.grid != *g || phi.grid != *g {
        return Err(BifurcationError::GridMismatch("pairing operands use different grids".into()));
    }
    let coeffs = flow.coefficients();
    let nq = g.nq;
    let dq = g.dq();
    let nodes = phi.to_nodes();
    let k = g.iface();
    let lid = g.lid();
    let mut total = 0.0;
    for i in 1..=lid {
        let row_sum = |weight: &dyn Fn(usize) -> f64| (0..nq).map(|j| data.at(i, j) * weight(j)).sum::<f64>();
        let term = if i == k {
            0.5 * row_sum(&|j| nodes[i * nq + j])
        } else if i == lid {
            let h = g.p(lid) - g.p(lid - 1);
            coeffs.cell[lid - 1].powi(3) * row_sum(&|j| (nodes[lid * nq + j] - nodes[(lid - 1) * nq + j]) / h)
        } else {
            let w = 0.5 * (g.p(i + 1) - g.p(i - 1));
            coeffs.node[i].powi(3) * w * row_sum(&|j| nodes[i * nq + j])
        };
        total += term * dq;
    }
    Ok(total)
}

/// `phi_1(p) cos q` on the full grid.
pub fn mode_field(grid: &GridD, profile: &[f64]) -> Result<FieldOnD, BifurcationError> {
    if profile.len() != grid.np_total() {
        return Err(BifurcationError::GridMismatch(format!(
            "profile has {} nodes, grid has {}",
            profile.len(),
            grid.np_total()
        )));
    }
    let nq = grid.nq;
    let nodes: Vec<f64> = (0..grid.np_total())
        .flat_map(|i| (0..nq).map(move |j| profile[i] * grid.q(j).cos()))
        .collect();
    Ok(FieldOnD::from_nodes(grid, &nodes)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMethod {
    DenseSvd,
    InverseIteration,
}

/// Operators up to this many unknowns get a dense SVD kernel check.
pub const DENSE_KERNEL_LIMIT: usize = 2500;
const KERNEL_RTOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct NullVector {
    pub phi: FieldOnD,
    /// `phi_1` on the p-nodes, max 1.
    pub profile: Vec<f64>,
    pub kernel_dim: usize,
    /// Angle between the computed 2D kernel vector and `phi`.
    pub angle: f64,
    /// Smallest relative singular values (estimates for inverse iteration).
    pub singular_values: Vec<f64>,
    pub method: KernelMethod,
}

fn sin_angle(v: &[f64], w: &[f64]) -> f64 {
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let ww: f64 = w.iter().map(|x| x * x).sum();
    let vw: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
    (1.0 - vw * vw / (vv * ww)).max(0.0).sqrt()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= n;
    }
    n
}

fn seeded(n: usize, seed: u64) -> Vec<f64> {
    let mut state = 0x2545_F491_4F6C_DD1Du64 ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

/// Two smallest singular value estimates and the near-null vector by
/// (deflated) inverse iteration with the bordered band factorization.
fn inverse_iteration(op: &DiscreteOperator) -> Result<(Vec<f64>, [f64; 2]), BifurcationError> {
    let m = &op.matrix;
    let lu = BorderedLu::new(m)?;
    let n = m.dim();
    let scale = m.max_abs();
    let mut v = seeded(n, 1);
    normalize(&mut v);
    for _ in 0..4 {
        v = lu.solve(m, &v)?.0;
        normalize(&mut v);
    }
    let s1 = norm2(&m.matvec(&v)) / scale;
    let mut w = seeded(n, 2);
    for _ in 0..4 {
        let vw: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi -= vw * vi;
        }
        normalize(&mut w);
        w = lu.solve(m, &w)?.0;
        let vw: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi -= vw * vi;
        }
        normalize(&mut w);
    }
    let s2 = norm2(&m.matvec(&w)) / scale;
    Ok((v, [s1, s2]))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `phi* = phi_1(p) cos q` with the 2D kernel check at lambda*.
pub fn null_vector(
    params: &PhysicalParams,
    gamma_rel: &RelativeCirculation,
    star: &LambdaStar,
    grid: &GridD,
) -> Result<NullVector, BifurcationError> {
    let phi = mode_field(grid, &star.mode)?;
    let zero = FieldOnD::zeros(grid);
    let op = linearize(params, gamma_rel, star.lambda, &zero, Sector::Even)?;
    let target = stored(&op, &phi);
    let nf = op.layout.n_field();
    let (dim, vec, singular_values, method) = if op.dim() <= DENSE_KERNEL_LIMIT {
        let info = kernel_dim(&op);
        let v = info.basis.first().cloned().unwrap_or_else(|| vec![0.0; op.dim()]);
        let sv = info.relative_singular_values.iter().take(3).cloned().collect();
        (info.dim, v, sv, KernelMethod::DenseSvd)
    } else {
        let (v, s) = inverse_iteration(&op)?;
        let dim = s.iter().filter(|x| **x < KERNEL_RTOL).count();
        (dim, v, s.to_vec(), KernelMethod::InverseIteration)
    };
    if dim != 1 {
        return Err(BifurcationError::KernelMismatch { dim });
    }
    let angle = sin_angle(&vec[..nf], &target[..nf]).asin();
    Ok(NullVector { phi, profile: star.mode.clone(), kernel_dim: dim, angle, singular_values, method })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transversality {
    /// `-int_water phi*^2 - 3 lambda^2 int_water (phi*_p)^2`.
    pub closed_form: f64,
    /// Pairing of `F_{lambda m} phi*` with `phi*`.
    pub pairing: f64,
    pub relative_gap: f64,
}

/// Closed form of the transversality integral for `phi_1(p) cos q`.
pub fn transversality_closed_form(grid: &GridD, lambda: f64, profile: &[f64]) -> f64 {
    let k = grid.iface();
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for c in 0..k {
        let h = grid.p(c + 1) - grid.p(c);
        l2 += 0.5 * h * (profile[c].powi(2) + profile[c + 1].powi(2));
        h1 += (profile[c + 1] - profile[c]).powi(2) / h;
    }
    PI * (-l2 - 3.0 * lambda * lambda * h1)
}

/// Both transversality routes; fails unless both are negative.
pub fn transversality(
    params: &PhysicalParams,
    gamma_rel: &RelativeCirculation,
    lambda_star: f64,
    phi_star: &FieldOnD,
    profile: &[f64],
) -> Result<Transversality, BifurcationError> {
    let grid = &phi_star.grid;
    let closed_form = transversality_closed_form(grid, lambda_star, profile);
    let zero = FieldOnD::zeros(grid);
    let delta = 1e-5 * lambda_star;
    let jp = linearize(params, gamma_rel, lambda_star + delta, &zero, Sector::Full)?;
    let jm = linearize(params, gamma_rel, lambda_star - delta, &zero, Sector::Full)?;
    let x = stored(&jp, phi_star);
    let dj: Vec<f64> = jp.apply(&x).iter().zip(jm.apply(&x)).map(|(a, b)| (a - b) / (2.0 * delta)).collect();
    let data = ResidualF::from_stored(&jp.layout, &dj);
    let flow = laminar_flow(params, gamma_rel, lambda_star, grid)?;
    let pairing = range_pairing(&flow, &data, phi_star)?;
    let relative_gap = (closed_form - pairing).abs() / closed_form.abs();
    if !(closed_form < 0.0) {
        return Err(BifurcationError::SignViolation { xi: closed_form });
    }
    if !(pairing < 0.0) {
        return Err(BifurcationError::SignViolation { xi: pairing });
    }
    Ok(Transversality { closed_form, pairing, relative_gap })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 25, max_halvings: 30 }
    }
}

#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub s: f64,
    pub lambda: f64,
    pub q: f64,
    pub m: FieldOnD,
    pub h: FieldOnD,
    pub newton_residual: f64,
    pub newton_iterations: usize,
    pub min_hp: f64,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub lambda_star: f64,
    pub null: NullVector,
    pub transversality: Transversality,
    pub points: Vec<BranchPoint>,
}

/// Newton solver for the amplitude-bordered system at one grid.
struct Continuation<'a> {
    params: &'a PhysicalParams,
    gamma_rel: &'a RelativeCirculation,
    grid: GridD,
    layout: Layout,
    d: DMatrix<f64>,
    amp: Vec<f64>,
    opts: NewtonOptions,
}

struct Iterate {
    x: Vec<f64>,
    delta: f64,
    lambda: f64,
}

impl<'a> Continuation<'a> {
    fn new(
        params: &'a PhysicalParams,
        gamma_rel: &'a RelativeCirculation,
        phi: &FieldOnD,
        opts: NewtonOptions,
    ) -> Self {
        let grid = phi.grid.clone();
        let layout = Layout::new(&grid, Sector::Even);
        let pw = p_weights(&grid);
        let qw = layout.mean_weights();
        let ph = layout.from_full_nodes(&phi.to_nodes());
        let mut amp = vec![0.0; layout.n_field()];
        let mut norm = 0.0;
        for i in 1..=layout.n_rows {
            for c in 0..layout.nc {
                let id = layout.idx(i, c);
                amp[id] = pw[i] * qw[c] * ph[id];
                norm += amp[id] * ph[id];
            }
        }
        for a in amp.iter_mut() {
            *a /= norm;
        }
        let d = diff_matrix(grid.nq);
        Continuation { params, gamma_rel, grid, layout, d, amp, opts }
    }

    fn nodes(&self, x: &[f64]) -> Vec<f64> {
        self.layout.to_full_nodes(x)
    }

    fn amplitude(&self, x: &[f64]) -> f64 {
        self.amp.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Full residual `[F; mean row; amplitude row]` or a stagnation error.
    fn residual(&self, it: &Iterate, s: f64) -> Result<(Vec<f64>, State, LaminarFlow, Physics), BifurcationError> {
        let flow = laminar_flow(self.params, self.gamma_rel, it.lambda, &self.grid)?;
        let nodes = self.nodes(&it.x);
        let st = State::new(&flow, &nodes, &self.d)?;
        let ph = Physics::new(self.params, self.gamma_rel, it.lambda);
        let rows = residual_rows(&st, &ph, &nodes, &self.d);
        let lay = &self.layout;
        let nq = self.grid.nq;
        let lid = self.grid.lid();
        let k = self.grid.iface();
        let mut r = vec![0.0; lay.n_field() + 2];
        for i in 1..=lid {
            for c in 0..lay.nc {
                r[lay.idx(i, c)] = if i == lid { nodes[i * nq + c] - it.delta } else { rows[i * nq + c] };
            }
        }
        let w = lay.mean_weights();
        r[lay.n_field()] = it.delta - (0..lay.nc).map(|c| w[c] * it.x[lay.idx(k, c)]).sum::<f64>();
        r[lay.n_field() + 1] = self.amplitude(&it.x) - s;
        Ok((r, st, flow, ph))
    }

    fn solve(&self, s: f64, mut it: Iterate) -> Result<(Iterate, f64, usize), BifurcationError> {
        let n = self.layout.n_field();
        let (mut r, mut st, mut flow, mut ph) = self.residual(&it, s)?;
        let mut res = norm_inf(&r);
        let mut iterations = 0;
        while res > self.opts.tol {
            if iterations == self.opts.max_iter {
                return Err(BifurcationError::NewtonDiverged { s, residual: res, iterations });
            }
            iterations += 1;
            let op = assemble_jacobian(&st, &ph, &self.grid, Sector::Even, &self.d);
            let dh = self.layout.from_full_nodes(&laminar_dlambda(&flow));
            let mut lam_col = op.matrix.a.matvec(&dh);
            let lid = self.grid.lid();
            for c in 0..self.layout.nc {
                lam_col[self.layout.idx(lid, c)] = 0.0;
                lam_col[self.layout.idx(self.grid.iface(), c)] += bernoulli_q_prime(self.params, it.lambda);
            }
            let mut m = BorderedMatrix::new(op.matrix.a.clone(), 2);
            for i in 0..n {
                m.b[(i, 0)] = op.matrix.b[(i, 0)];
                m.b[(i, 1)] = lam_col[i];
                m.c[(0, i)] = op.matrix.c[(0, i)];
                m.c[(1, i)] = self.amp[i];
            }
            m.d[(0, 0)] = 1.0;
            let lu = BorderedLu::new(&m)?;
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let (step, _) = lu.solve(&m, &rhs)?;
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..=self.opts.max_halvings {
                let trial = Iterate {
                    x: it.x.iter().zip(&step).map(|(a, b)| a + t * b).collect(),
                    delta: it.delta + t * step[n],
                    lambda: it.lambda + t * step[n + 1],
                };
                if let Ok(out) = self.residual(&trial, s) {
                    let tres = norm_inf(&out.0);
                    if tres < res {
                        accepted = Some((trial, out, tres));
                        break;
                    }
                }
                t *= 0.5;
            }
            match accepted {
                Some((trial, out, tres)) => {
                    it = trial;
                    (r, st, flow, ph) = out;
                    res = tres;
                }
                None => return Err(BifurcationError::NewtonDiverged { s, residual: res, iterations }),
            }
        }
        let _ = (&st, &flow);
        Ok((it, res, iterations))
    }

    fn point(&self, s: f64, it: &Iterate, res: f64, iterations: usize) -> Result<BranchPoint, BifurcationError> {
        let nodes = self.nodes(&it.x);
        let m = FieldOnD::from_nodes(&self.grid, &nodes)?;
        let flow = laminar_flow(self.params, self.gamma_rel, it.lambda, &self.grid)?;
        let st = State::new(&flow, &nodes, &self.d)?;
        let nq = self.grid.nq;
        let h_nodes: Vec<f64> = nodes.iter().enumerate().map(|(id, v)| v + flow.h[id / nq]).collect();
        Ok(BranchPoint {
            s,
            lambda: it.lambda,
            q: bernoulli_q(self.params, self.gamma_rel, it.lambda),
            h: FieldOnD::from_nodes(&self.grid, &h_nodes)?,
            m,
            newton_residual: res,
            newton_iterations: iterations,
            min_hp: st.min_hp(),
        })
    }
}

/// Trapezoid weights in p over both blocks (bed weight irrelevant).
fn p_weights(g: &GridD) -> Vec<f64> {
    let mut w = vec![0.0; g.np_total()];
    for side in [Side::Water, Side::Air] {
        for (i, v) in g.p_weights(side) {
            w[i] += v;
        }
    }
    w
}

/// Crandall-Rabinowitz checks at lambda* on `grid`.
pub fn check_hypotheses(
    params: &PhysicalParams,
    gamma_rel: &RelativeCirculation,
    star: &LambdaStar,
    grid: &GridD,
) -> Result<(NullVector, Transversality), BifurcationError> {
    let null = null_vector(params, gamma_rel, star, grid)?;
    let tr = transversality(params, gamma_rel, star.lambda, &null.phi, &null.profile)?;
    Ok((null, tr))
}

/// Continues the branch for `s = ds, 2 ds, ..., s_max` after checking the
/// hypotheses. The first point is the bifurcation point itself (`s = 0`).
pub fn continue_branch(
    params: &PhysicalParams,
    gamma_rel: &RelativeCirculation,
    star: &LambdaStar,
    grid: &GridD,
    s_max: f64,
    ds: f64,
) -> Result<Branch, BifurcationError> {
    continue_branch_with(params, gamma_rel, star, grid, s_max, ds, NewtonOptions::default())
}

pub fn continue_branch_with(
    params: &PhysicalParams,
    gamma_rel: &RelativeCirculation,
    star: &LambdaStar,
    grid: &GridD,
    s_max: f64,
    ds: f64,
    opts: NewtonOptions,
) -> Result<Branch, BifurcationError> {
    if !(ds > 0.0 && s_max >= ds) {
        return Err(BifurcationError::InvalidStep(format!("need 0 < ds <= s_max, got ds = {ds}, s_max = {s_max}")));
    }
    let (null, transversality) = check_hypotheses(params, gamma_rel, star, grid)?;
    let cont = Continuation::new(params, gamma_rel, &null.phi, opts);
    let phi_stored = cont.layout.from_full_nodes(&null.phi.to_nodes());
    let n_steps = (s_max / ds * (1.0 + 1e-12)).floor() as usize;
    let mut points = Vec::with_capacity(n_steps + 1);
    let origin = Iterate { x: vec![0.0; cont.layout.n_field()], delta: 0.0, lambda: star.lambda };
    points.push(cont.point(0.0, &origin, cont.residual(&origin, 0.0)?.0.iter().fold(0.0, |a, v| a.max(v.abs())), 0)?);
    let mut lambda = star.lambda;
    for step in 1..=n_steps {
        let s = step as f64 * ds;
        let guess = Iterate { x: phi_stored.iter().map(|v| s * v).collect(), delta: 0.0, lambda };
        let (it, res, iters) = cont.solve(s, guess).map_err(|e| match e {
            BifurcationError::Stagnation { .. } => BifurcationError::StagnationOnBranch { s },
            other => other,
        })?;
        let pt = cont.point(s, &it, res, iters)?;
        if !(pt.min_hp > 0.0) {
            return Err(BifurcationError::StagnationOnBranch { s });
        }
        lambda = it.lambda;
        points.push(pt);
    }
    Ok(Branch { lambda_star: star.lambda, null, transversality, points })
}

/// Velocity and height samples of one fluid layer; rows bottom to top.
#[derive(Debug, Clone, Serialize)]
pub struct LayerFields {
    pub rows: usize,
    /// Physical height `y = h(x, p)` of each sample.
    pub y: Vec<f64>,
    pub u_minus_c: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructedWave {
    pub x: Vec<f64>,
    pub eta: Vec<f64>,
    pub kappa: Vec<f64>,
    /// Mean interface height `d(h)`.
    pub depth: f64,
    pub water: LayerFields,
    pub air: LayerFields,
    /// `[[|grad psi|^2]] + 2 g [[rho]] (eta + d) + sigma kappa - Q` on the interface.
    pub bernoulli_jump: Vec<f64>,
    pub bernoulli_jump_residual: f64,
}

/// Second-order p-derivative on the nodes `rows` (ascending) of one block.
fn block_slope(h: &[f64], nq: usize, rows: &[usize], p: &[f64]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let dp = p[rows[1]] - p[rows[0]];
    (0..n)
        .map(|r| {
            (0..nq)
                .map(|j| {
                    let v = |t: usize| h[rows[t] * nq + j];
                    if r == 0 {
                        (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * dp)
                    } else if r == n - 1 {
                        (3.0 * v(n - 1) - 4.0 * v(n - 2) + v(n - 3)) / (2.0 * dp)
                    } else {
                        (v(r + 1) - v(r - 1)) / (2.0 * dp)
                    }
                })
                .collect()
        })
        .collect()
}

fn layer(h: &[f64], rows: &[usize], p: &[f64], nq: usize, rho: f64, d: &DMatrix<f64>) -> (LayerFields, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let hp = block_slope(h, nq, rows, p);
    let sr = rho.sqrt();
    let mut y = Vec::with_capacity(rows.len() * nq);
    let mut u = Vec::with_capacity(rows.len() * nq);
    let mut v = Vec::with_capacity(rows.len() * nq);
    let mut hqs = Vec::with_capacity(rows.len());
    for (r, &i) in rows.iter().enumerate() {
        let row = DVector::from_column_slice(&h[i * nq..(i + 1) * nq]);
        let hq = d * &row;
        for j in 0..nq {
            y.push(row[j]);
            u.push(-1.0 / (sr * hp[r][j]));
            v.push(-hq[j] / (sr * hp[r][j]));
        }
        hqs.push(hq.iter().cloned().collect());
    }
    (LayerFields { rows: rows.len(), y, u_minus_c: u, v }, hp, hqs)
}

/// Physical fields of a branch point.
pub fn reconstruct(params: &PhysicalParams, point: &BranchPoint) -> Result<ReconstructedWave, BifurcationError> {
    let g = &point.h.grid;
    let nq = g.nq;
    let k = g.iface();
    let p = g.p_nodes();
    let h = point.h.to_nodes();
    let d = diff_matrix(nq);
    let water_rows: Vec<usize> = (0..=k).collect();
    let air_rows: Vec<usize> = (k..=g.lid()).collect();
    let (water, hp_w, hq_w) = layer(&h, &water_rows, &p, nq, params.rho_water, &d);
    let (air, hp_a, hq_a) = layer(&h, &air_rows, &p, nq, params.rho_air, &d);
    let surface = &h[k * nq..(k + 1) * nq];
    let depth = surface.iter().sum::<f64>() / nq as f64;
    let eta: Vec<f64> = surface.iter().map(|v| v - depth).collect();
    let ex = &d * DVector::from_column_slice(&eta);
    let exx = &d * &ex;
    let kappa: Vec<f64> = (0..nq).map(|j| exx[j] / (1.0 + ex[j] * ex[j]).powf(1.5)).collect();
    let gdr = params.grav * params.delta_rho();
    let jump: Vec<f64> = (0..nq)
        .map(|j| {
            let ea = (1.0 + hq_a[0][j].powi(2)) / hp_a[0][j].powi(2);
            let ew = (1.0 + hq_w[k][j].powi(2)) / hp_w[k][j].powi(2);
            ea - ew + 2.0 * gdr * (eta[j] + depth) + params.sigma * kappa[j] - point.q
        })
        .collect();
    Ok(ReconstructedWave {
        x: (0..nq).map(|j| g.q(j)).collect(),
        eta,
        kappa,
        depth,
        water,
        air,
        bernoulli_jump_residual: norm_inf(&jump),
        bernoulli_jump: jump,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laminar::compute_gamma_rel;
    use crate::model::VorticityFn;
    use crate::spectral1d::{assemble_pencil, find_lambda_star};

    fn setup(nq: usize, np: usize) -> (PhysicalParams, RelativeCirculation, GridD) {
        let params = PhysicalParams::reference().with_sigma(4.0 / 1f64.tanh() - 1.0);
        let grid = GridD::for_params(&params, nq, np, np).unwrap();
        let rc = compute_gamma_rel(&params, &grid).unwrap();
        (params, rc, grid)
    }

    fn smooth(grid: &GridD, eps: f64) -> FieldOnD {
        let (p0, p1) = (grid.p0, grid.p1);
        FieldOnD::continuous(grid, |q, p| {
            let w = if p <= p1 { (p - p0) / (p1 - p0) } else { 1.0 + 0.3 * (p - p1) / -p1 };
            eps * w * (q.cos() + 0.4 * (2.0 * q).cos() + 0.2 * q.sin())
        })
    }

    #[test]
    fn trivial_branch_is_exact() {
        let (params, rc, grid) = setup(8, 9);
        let zero = FieldOnD::zeros(&grid);
        for lambda in [0.85, 1.0, 1.7, 3.0] {
            let r = residual(&params, &rc, lambda, &zero).unwrap();
            assert!(r.max_abs() < 1e-13, "{lambda}: {}", r.max_abs());
        }
    }

    #[test]
    fn trivial_branch_exact_with_air_vorticity() {
        let mut params = PhysicalParams::reference().with_sigma(3.0);
        params.gamma = VorticityFn::constant(0.4);
        let grid = GridD::for_params(&params, 8, 9, 13).unwrap();
        let rc = compute_gamma_rel(&params, &grid).unwrap();
        let r = residual(&params, &rc, 1.3, &FieldOnD::zeros(&grid)).unwrap();
        assert!(r.max_abs() < 1e-12, "{}", r.max_abs());
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let (params, rc, grid) = setup(8, 7);
        let m = smooth(&grid, 0.05);
        let w = smooth(&grid, 1.0);
        let op = linearize(&params, &rc, 1.1, &m, Sector::Full).unwrap();
        let jw = op.apply(&stored(&op, &w));
        let eps = 1e-5;
        let shift = |e: f64| {
            let nodes: Vec<f64> = m.to_nodes().iter().zip(w.to_nodes()).map(|(a, b)| a + e * b).collect();
            FieldOnD::from_nodes(&grid, &nodes).unwrap()
        };
        let rp = residual(&params, &rc, 1.1, &shift(eps)).unwrap();
        let rm = residual(&params, &rc, 1.1, &shift(-eps)).unwrap();
        let fd: Vec<f64> = rp.rows.iter().zip(&rm.rows).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        let jw_rows = ResidualF::from_stored(&op.layout, &jw);
        let err = norm_inf(&fd.iter().zip(&jw_rows.rows).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(err / norm_inf(&fd) < 1e-6, "{err:e}");
    }

    #[test]
    fn linearization_at_rest_reproduces_pencil_rows() {
        let (params, rc, grid) = setup(8, 9);
        let flow = laminar_flow(&params, &rc, 1.2, &grid).unwrap();
        let pencil = assemble_pencil(&params, &flow);
        let mut profile: Vec<f64> = grid.p_nodes().iter().map(|p| (p - grid.p0) * (0.3 - p)).collect();
        *profile.last_mut().unwrap() = 0.0;
        let op = linearize_on(&params, &rc, &flow, &FieldOnD::zeros(&grid), Sector::Full).unwrap();
        let coeffs = flow.coefficients();
        for n in [1usize, 2] {
            let pr = &profile;
            let g = &grid;
            let nodes: Vec<f64> =
                (0..grid.np_total()).flat_map(|i| (0..g.nq).map(move |j| pr[i] * (n as f64 * g.q(j)).cos())).collect();
            let f = FieldOnD::from_nodes(&grid, &nodes).unwrap();
            let y = ResidualF::from_stored(&op.layout, &op.apply(&stored(&op, &f)));
            let x = &profile[1..profile.len() - 1];
            let ax = pencil.apply_a(x);
            let mx = pencil.apply_m(x);
            for i in 1..grid.lid() {
                let weight = if i == grid.iface() { 0.5 } else { coeffs.node[i].powi(3) * 0.5 * (grid.p(i + 1) - grid.p(i - 1)) };
                let expect = -(ax[i - 1] + (n * n) as f64 * mx[i - 1]);
                let got = weight * y.at(i, 0);
                assert!((got - expect).abs() < 1e-10 * (1.0 + expect.abs()), "n={n} row {i}: {got} vs {expect}");
            }
        }
    }

    #[test]
    fn range_pairing_annihilates_images_and_transversality_routes_agree() {
        let (params, rc, grid) = setup(8, 17);
        let star = find_lambda_star(&params, &rc, &grid, None).unwrap();
        let (null, tr) = check_hypotheses(&params, &rc, &star, &grid).unwrap();
        assert_eq!(null.kernel_dim, 1);
        assert!(null.angle < 1e-6, "{}", null.angle);
        assert!(tr.closed_form < 0.0 && tr.relative_gap < 1e-6, "{tr:?}");
        let flow = laminar_flow(&params, &rc, star.lambda, &grid).unwrap();
        let op = linearize_on(&params, &rc, &flow, &FieldOnD::zeros(&grid), Sector::Full).unwrap();
        let w = smooth(&grid, 1.0);
        let img = ResidualF::from_stored(&op.layout, &op.apply(&stored(&op, &w)));
        let pair = range_pairing(&flow, &img, &null.phi).unwrap();
        assert!(pair.abs() < 1e-9 * img.max_abs(), "{pair:e}");
        let doubled = FieldOnD::from_nodes(&grid, &null.phi.to_nodes().iter().map(|v| 2.0 * v).collect::<Vec<_>>()).unwrap();
        let profile2: Vec<f64> = null.profile.iter().map(|v| 2.0 * v).collect();
        let tr2 = transversality(&params, &rc, star.lambda, &doubled, &profile2).unwrap();
        assert!((tr2.closed_form / tr.closed_form - 4.0).abs() < 1e-12);
    }

    #[test]
    fn short_branch_converges() {
        let (params, rc, grid) = setup(8, 9);
        let star = find_lambda_star(&params, &rc, &grid, None).unwrap();
        let br = continue_branch(&params, &rc, &star, &grid, 0.02, 0.01).unwrap();
        assert_eq!(br.points.len(), 3);
        assert_eq!(br.points[0].lambda, star.lambda);
        for pt in &br.points {
            assert!(pt.newton_residual <= 1e-10);
        }
        let wave = reconstruct(&params, &br.points[2]).unwrap();
        let nq = grid.nq;
        assert!(norm_inf(&wave.water.v[..nq]) < 1e-12);
        assert!(norm_inf(&wave.air.v[wave.air.v.len() - nq..]) < 1e-12);
    }

    #[test]
    fn stagnation_is_refused() {
        let (params, rc, grid) = setup(8, 5);
        let bad = FieldOnD::continuous(&grid, |_, p| if p > grid.p0 { -3.0 * (p - grid.p0) } else { 0.0 });
        assert!(matches!(residual(&params, &rc, 1.0, &bad), Err(BifurcationError::Stagnation { .. })));
    }
}
