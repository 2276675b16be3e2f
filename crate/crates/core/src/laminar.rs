//! Relative circulation and the explicit laminar family.

use crate::model::{GridD, PhysicalParams, Side, VorticityFn};
use crate::quad::{adaptive_simpson, bracketed_root, composite_simpson};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LaminarError {
    #[error("no positive relative circulation satisfies the depth constraint: {0}")]
    NoPositiveCirculation(String),
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("stagnation: H_p <= 0 at p = {0}")]
    Stagnation(f64),
}

const ROOT_RTOL: f64 = 1e-12;

/// Gamma_rel with Gamma_rel(p)^2 = C + 2 int_{p1}^p gamma(-s) ds.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeCirculation {
    pub c: f64,
    pub p1: f64,
    pub ell: f64,
    /// Air p-nodes, `p1` first.
    pub p: Vec<f64>,
    pub values: Vec<f64>,
    /// `int_{p1}^0 dp / Gamma_rel - ell` at the returned C.
    pub depth_error: f64,
    gamma: VorticityFn,
}

impl RelativeCirculation {
    pub fn squared(&self, p: f64) -> f64 {
        self.c + 2.0 * self.gamma.integral_on_streamlines(self.p1, p)
    }

    pub fn at(&self, p: f64) -> f64 {
        self.squared(p).max(0.0).sqrt()
    }

    /// `int_a^b ds / Gamma_rel(s)`.
    pub fn inverse_integral(&self, a: f64, b: f64) -> f64 {
        let f = |s: f64| 1.0 / self.at(s);
        adaptive_simpson(&f, a, b, 1e-16 * (1.0 + self.ell))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn depth_residual(gamma: &VorticityFn, p1: f64, ell: f64, c: f64) -> f64 {
    let f = |s: f64| {
        let g2 = c + 2.0 * gamma.integral_on_streamlines(p1, s);
        1.0 / g2.max(1e-300).sqrt()
    };
    adaptive_simpson(&f, p1, 0.0, 1e-15 * ell.max(1.0)) - ell
}

/// Smallest C keeping C + 2 int gamma positive on [p1, 0].
fn c_min(gamma: &VorticityFn, p1: f64) -> f64 {
    let n = 4096;
    let mut gmin = 0.0f64;
    let mut kmin = 0;
    for k in 0..=n {
        let s = p1 * (1.0 - k as f64 / n as f64);
        let g = gamma.integral_on_streamlines(p1, s);
        if g < gmin {
            gmin = g;
            kmin = k;
        }
    }
    if kmin > 0 && kmin < n {
        // golden-section refinement of an interior minimum
        let (mut a, mut b) = (p1 * (1.0 - (kmin - 1) as f64 / n as f64), p1 * (1.0 - (kmin + 1) as f64 / n as f64));
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let x1 = b - r * (b - a);
            let x2 = a + r * (b - a);
            if gamma.integral_on_streamlines(p1, x1) < gamma.integral_on_streamlines(p1, x2) {
                b = x2;
            } else {
                a = x1;
            }
        }
        gmin = gmin.min(gamma.integral_on_streamlines(p1, 0.5 * (a + b)));
    }
    (-2.0 * gmin).max(0.0)
}

/// Solves for the integration constant C by safeguarded root-finding on the
/// depth constraint, which is decreasing in C.
pub fn compute_gamma_rel(params: &PhysicalParams, grid: &GridD) -> Result<RelativeCirculation, LaminarError> {
    let (p1, ell) = (params.p1, params.ell);
    let gamma = &params.gamma;
    let cmin = c_min(gamma, p1);
    let scale = (p1 / ell).powi(2);
    let lo = cmin + 1e-14 * (cmin + scale);
    let f = |c: f64| depth_residual(gamma, p1, ell, c);
    let flo = f(lo);
    if !(flo > 0.0) {
        return Err(LaminarError::NoPositiveCirculation(format!(
            "depth integral at the positivity limit C = {lo:e} is already below ell"
        )));
    }
    let mut hi = cmin + scale.max(1e-300);
    let mut tries = 0;
    while f(hi) > 0.0 {
        hi = cmin + 4.0 * (hi - cmin);
        tries += 1;
        if tries > 200 {
            return Err(LaminarError::NoPositiveCirculation("no upper bracket for C".into()));
        }
    }
    let c = bracketed_root(&f, lo, hi, ROOT_RTOL * hi.abs().max(1e-300) * 1e-3, 400)
        .ok_or_else(|| LaminarError::NoPositiveCirculation("root bracket lost".into()))?;
    let p: Vec<f64> = (grid.iface()..=grid.lid()).map(|i| grid.p(i)).collect();
    let mut rc = RelativeCirculation {
        c,
        p1,
        ell,
        values: Vec::new(),
        p,
        depth_error: 0.0,
        gamma: gamma.clone(),
    };
    rc.values = rc.p.iter().map(|&s| rc.at(s)).collect();
    if rc.values.iter().any(|v| !(*v > 0.0)) {
        return Err(LaminarError::NoPositiveCirculation("Gamma_rel vanishes on a node".into()));
    }
    rc.depth_error = rc.inverse_integral(p1, 0.0) - ell;
    Ok(rc)
}

/// One member of the laminar family on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LaminarFlow {
    pub lambda: f64,
    pub p: Vec<f64>,
    pub h: Vec<f64>,
    /// `a = 1 / H_p`; at the interface row this is the air value.
    pub a: Vec<f64>,
    /// Water value of `a` (equals lambda).
    pub a_water: f64,
    pub q: f64,
    pub depth: f64,
    pub grid: GridD,
}

impl LaminarFlow {
    pub fn region(&self, i: usize) -> Side {
        self.grid.side_of_row(i)
    }

    /// `a` at row `i` seen from `side` (differs only at the interface).
    pub fn a_at(&self, i: usize, side: Side) -> f64 {
        if i == self.grid.iface() && side == Side::Water {
            self.a_water
        } else {
            self.a[i]
        }
    }
}

/// Discrete laminar coefficients `a = 1 / H_p` read off the nodal heights,
/// shared by the 1D pencil and the 2D linearization.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCoefficients {
    /// Cell values `dp / (H_{i+1} - H_i)`, cell `i` spanning nodes `i, i+1`.
    pub cell: Vec<f64>,
    /// Node values from centered slopes; at the interface the air value.
    pub node: Vec<f64>,
    /// Water-side value at the interface (last water cell).
    pub iface_water: f64,
    /// `d a_cell / d lambda` (nonzero only in water).
    pub cell_dlambda: Vec<f64>,
    pub node_dlambda: Vec<f64>,
}

impl LaminarFlow {
    pub fn coefficients(&self) -> DiscreteCoefficients {
        let g = &self.grid;
        let n = g.np_total();
        let k = g.iface();
        let h = &self.h;
        let p = &self.p;
        let cell: Vec<f64> = (0..n - 1).map(|c| (p[c + 1] - p[c]) / (h[c + 1] - h[c])).collect();
        let mut node = vec![0.0; n];
        node[0] = cell[0];
        node[n - 1] = cell[n - 2];
        for i in 1..n - 1 {
            node[i] = if i == k { cell[k] } else { (p[i + 1] - p[i - 1]) / (h[i + 1] - h[i - 1]) };
        }
        let cell_dlambda = (0..n - 1).map(|c| if c < k { 1.0 } else { 0.0 }).collect();
        let node_dlambda = (0..n).map(|i| if i < k { 1.0 } else { 0.0 }).collect();
        DiscreteCoefficients { iface_water: cell[k - 1], cell, node, cell_dlambda, node_dlambda }
    }
}

/// Bernoulli constant of the laminar flow at `lambda`.
pub fn bernoulli_q(params: &PhysicalParams, gamma_rel: &RelativeCirculation, lambda: f64) -> f64 {
    2.0 * params.grav * params.delta_rho() * (params.p1 - params.p0) / lambda + gamma_rel.c - lambda * lambda
}

pub fn bernoulli_q_prime(params: &PhysicalParams, lambda: f64) -> f64 {
    -2.0 * params.grav * params.delta_rho() * (params.p1 - params.p0) / (lambda * lambda) - 2.0 * lambda
}

pub fn bernoulli_q_second(params: &PhysicalParams, lambda: f64) -> f64 {
    4.0 * params.grav * params.delta_rho() * (params.p1 - params.p0) / lambda.powi(3) - 2.0
}

pub fn laminar_flow(
    params: &PhysicalParams,
    gamma_rel: &RelativeCirculation,
    lambda: f64,
    grid: &GridD,
) -> Result<LaminarFlow, LaminarError> {
    if !(lambda > 0.0) {
        return Err(LaminarError::NonPositiveLambda(lambda));
    }
    let depth = (params.p1 - params.p0) / lambda;
    let n = grid.np_total();
    let k = grid.iface();
    let mut h = vec![0.0; n];
    let mut a = vec![0.0; n];
    for i in 0..k {
        h[i] = (grid.p(i) - params.p0) / lambda;
        a[i] = lambda;
    }
    h[k] = depth;
    let mut acc = 0.0;
    for i in k..n {
        if i > k {
            acc += gamma_rel.inverse_integral(grid.p(i - 1), grid.p(i));
            h[i] = depth + acc;
        }
        a[i] = gamma_rel.at(grid.p(i));
        if !(a[i] > 0.0) {
            return Err(LaminarError::Stagnation(grid.p(i)));
        }
    }
    Ok(LaminarFlow {
        lambda,
        p: grid.p_nodes(),
        h,
        a,
        a_water: lambda,
        q: bernoulli_q(params, gamma_rel, lambda),
        depth,
        grid: grid.clone(),
    })
}

/// lambda_0 maximizing Q, together with Q'(lambda_0).
pub fn lambda0(params: &PhysicalParams) -> (f64, f64) {
    let l0 = (-params.grav * params.delta_rho() * (params.p1 - params.p0)).cbrt();
    (l0, bernoulli_q_prime(params, l0))
}

/// Discrete residuals of the laminar ODE system on the flow's grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaminarResidual {
    pub air: f64,
    pub water: f64,
    pub jump: f64,
    pub bed: f64,
    pub lid: f64,
}

impl LaminarResidual {
    pub fn max(&self) -> f64 {
        [self.air, self.water, self.jump, self.bed, self.lid].iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn laminar_residual(flow: &LaminarFlow, params: &PhysicalParams) -> LaminarResidual {
    let g = &flow.grid;
    let h = &flow.h;
    let k = g.iface();
    let n = g.np_total();
    let mut air = 0.0f64;
    let mut water = 0.0f64;
    for i in 1..n - 1 {
        if i == k {
            continue;
        }
        let dp = g.dp_above(i);
        let hpp = (h[i + 1] - 2.0 * h[i] + h[i - 1]) / (dp * dp);
        let hp = (h[i + 1] - h[i - 1]) / (2.0 * dp);
        if i > k {
            air = air.max((hpp + params.gamma.on_streamline(g.p(i)) * hp.powi(3)).abs());
        } else {
            water = water.max(hpp.abs());
        }
    }
    let (da, dw) = (g.dp_air(), g.dp_water());
    let hp_air = (-3.0 * h[k] + 4.0 * h[k + 1] - h[k + 2]) / (2.0 * da);
    let hp_water = (3.0 * h[k] - 4.0 * h[k - 1] + h[k - 2]) / (2.0 * dw);
    let jump = hp_air.powi(-2) - hp_water.powi(-2) + 2.0 * params.grav * params.delta_rho() * h[k] - flow.q;
    LaminarResidual {
        air,
        water,
        jump: jump.abs(),
        bed: h[0].abs(),
        lid: (h[n - 1] - params.ell - h[k]).abs(),
    }
}

/// Size of the surface tension above which the local bifurcation condition
/// is guaranteed.
pub fn size_condition_bound(params: &PhysicalParams, gamma_rel: &RelativeCirculation) -> f64 {
    let (l0, _) = lambda0(params);
    let p1 = params.p1;
    let f = |p: f64| {
        let g = gamma_rel.at(p);
        g * g * g + p * p * g
    };
    let integral = composite_simpson(&f, p1, 0.0, 4096);
    2.0 * l0 * (p1 - params.p0) / 3.0 + 2.0 / (p1 * p1) * integral
}
