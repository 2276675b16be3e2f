//! Validation suites for the transmission/Wentzell solver: manufactured
//! solutions, the discrete maximum principle on random data, the Fredholm
//! alternative and the theta-homotopy.
//!
//! Manufactured data are produced from closures by fourth-order central
//! differences with a fixed step, independent of the solver's stencils.

use crate::elliptic2d::{
    assemble, homotopy_solve, kernel_dim, max_principle_check, CoefficientField, EllipticError, LidCondition,
    MaxPrincipleReport, PointCoeffs, Sector, WentzellSign,
};
use crate::linalg::norm_inf;
use crate::model::{FieldOnD, GridD, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Smooth exact solution with varying coefficients for one sign combination.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedCase {
    pub alpha: f64,
    pub sign: WentzellSign,
    pub p0: f64,
    pub p1: f64,
}

impl ManufacturedCase {
    pub fn new(alpha: f64, sign: WentzellSign) -> Self {
        ManufacturedCase { alpha, sign, p0: -2.0, p1: -1.0 }
    }

    pub fn on(mut self, p0: f64, p1: f64) -> Self {
        self.p0 = p0;
        self.p1 = p1;
        self
    }

    pub fn coeffs(&self, q: f64, p: f64, side: Side) -> PointCoeffs {
        let t = (p - self.p0) / (self.p1 - self.p0);
        match side {
            Side::Water => PointCoeffs {
                a11: 1.0 + 0.2 * q.sin() * t * t,
                a12: 0.1 * q.cos(),
                a22: 1.5 - 0.3 * t,
                b1: 0.3,
                b2: 0.2 * t,
                c: 1.0 + 0.5 * q.cos(),
            },
            Side::Air => {
                let r = p / self.p1;
                PointCoeffs {
                    a11: 2.0 + 0.3 * q.cos(),
                    a12: -0.15 * (1.0 - r) * q.sin(),
                    a22: 2.0 - 0.5 * q.cos() * r,
                    b1: 0.1 * r,
                    b2: 0.25,
                    c: 0.5,
                }
            }
        }
    }

    /// `(afrak, bfrak, cfrak)`; the zeroth-order term is negative for the
    /// switched sign.
    pub fn interface(&self, q: f64) -> (f64, f64, f64) {
        let c = 2.0 + q.sin();
        let c = if self.sign == WentzellSign::Switched { -c } else { c };
        (1.0 + 0.3 * q.cos(), 0.2, c)
    }

    pub fn u(&self, q: f64, p: f64, side: Side) -> f64 {
        let l = self.p1 - self.p0;
        let top = l * (l + 1.0);
        let phi = match side {
            Side::Water => (p - self.p0) * (p - self.p0 + 1.0),
            Side::Air => top * (p / self.p1) * (1.0 + 0.5 * (p - self.p1)),
        };
        (q.sin() + (2.0 * q).cos() + 0.5) * phi
    }

    fn u_q(&self, q: f64, p: f64, s: Side) -> f64 {
        d1(&|x| self.u(x, p, s), q)
    }

    fn u_p(&self, q: f64, p: f64, s: Side) -> f64 {
        d1(&|x| self.u(q, x, s), p)
    }

    /// `L u` in divergence form.
    pub fn source(&self, q: f64, p: f64, s: Side) -> f64 {
        let flux1 = |q: f64, p: f64| {
            let k = self.coeffs(q, p, s);
            k.a11 * self.u_q(q, p, s) + k.a12 * self.u_p(q, p, s)
        };
        let flux2 = |q: f64, p: f64| {
            let k = self.coeffs(q, p, s);
            k.a12 * self.u_q(q, p, s) + k.a22 * self.u_p(q, p, s)
        };
        let k = self.coeffs(q, p, s);
        -d1(&|x| flux1(x, p), q) - d1(&|x| flux2(q, x), p)
            + k.b1 * self.u_q(q, p, s)
            + k.b2 * self.u_p(q, p, s)
            + k.c * self.u(q, p, s)
    }

    /// `B u` on the interface.
    pub fn boundary(&self, q: f64) -> f64 {
        let ws = if self.sign == WentzellSign::Switched { -1.0 } else { 1.0 };
        let p1 = self.p1;
        let (_, bf, cf) = self.interface(q);
        let tang = d1(&|x| self.interface(x).0 * self.u_q(x, p1, Side::Air), q);
        let conormal = |s: Side| {
            let k = self.coeffs(q, p1, s);
            -(k.a22 * self.u_p(q, p1, s) + k.a12 * self.u_q(q, p1, s))
        };
        -ws * tang
            + self.alpha * (conormal(Side::Air) - conormal(Side::Water))
            + bf * self.u_q(q, p1, Side::Air)
            + cf * self.u(q, p1, Side::Air)
    }
}

const EPS: f64 = 1e-3;

fn d1(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    (-f(x + 2.0 * EPS) + 8.0 * f(x + EPS) - 8.0 * f(x - EPS) + f(x - 2.0 * EPS)) / (12.0 * EPS)
}

/// Max nodal error of the discrete solution on an `nq x (np, np)` grid.
pub fn manufactured_error(case: &ManufacturedCase, nq: usize, np: usize) -> Result<f64, EllipticError> {
    let g = GridD::new(case.p0, case.p1, nq, np, np).map_err(|e| EllipticError::SizeMismatch(e.to_string()))?;
    let cf = CoefficientField::sample(&g, |q, p, s| case.coeffs(q, p, s), |q| case.interface(q), case.alpha, case.sign);
    let f = FieldOnD::from_fn(&g, |q, p, s| case.source(q, p, s));
    let gv: Vec<f64> = (0..nq).map(|j| case.boundary(g.q(j))).collect();
    let op = assemble(&cf, &g, LidCondition::Dirichlet, Sector::Full)?;
    let u = op.solve(&f, &gv)?;
    let exact = FieldOnD::from_fn(&g, |q, p, s| case.u(q, p, s));
    Ok(u.to_nodes().iter().zip(exact.to_nodes()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

/// Errors on successive refinements and the observed orders between them.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub np: Vec<usize>,
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
}

pub fn convergence_study(case: &ManufacturedCase, nq: usize, nps: &[usize]) -> Result<ConvergenceStudy, EllipticError> {
    let errors = nps.iter().map(|&n| manufactured_error(case, nq, n)).collect::<Result<Vec<_>, _>>()?;
    let orders = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(ConvergenceStudy { np: nps.to_vec(), errors, orders })
}

/// Random smooth coefficients with `c >= 0`, interface `c > 0` and `alpha = +1`.
pub fn random_positive_field(rng: &mut impl Rng, grid: &GridD) -> CoefficientField {
    random_coeffs(rng, grid, 1.0, WentzellSign::Standard)
}

fn random_coeffs(rng: &mut impl Rng, grid: &GridD, alpha: f64, sign: WentzellSign) -> CoefficientField {
    let a = [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
    let sh = rng.random_range(0.0..6.3);
    let amp = rng.random_range(0.0..0.3);
    let c0 = [rng.random_range(0.0..1.5), rng.random_range(0.0..1.5)];
    let b = rng.random_range(-0.5..0.5);
    let ci = rng.random_range(0.2..3.0);
    let ci = if sign == WentzellSign::Switched { -ci } else { ci };
    CoefficientField::sample(
        grid,
        |q, _, s| {
            let i = if s == Side::Water { 0 } else { 1 };
            PointCoeffs {
                a11: a[i] * (1.0 + amp * (q + sh).cos()),
                a12: 0.2 * amp * (q - sh).sin(),
                a22: a[1 - i] + amp,
                b1: b,
                b2: -b,
                c: c0[i] * (1.0 + (q + sh).sin()).max(0.0),
            }
        },
        |q| (1.0 + amp * q.sin(), b, ci * (1.0 + 0.5 * (q + sh).cos())),
        alpha,
        sign,
    )
}

/// Random data of mixed sign for the maximum principle.
pub fn random_data(rng: &mut impl Rng, grid: &GridD) -> (FieldOnD, Vec<f64>) {
    let (fa, fb, ga) = (rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0), rng.random_range(-2.0..2.0));
    let f = FieldOnD::from_fn(grid, |q, p, _| fa + fb * (q + p).sin());
    let g = (0..grid.nq).map(|j| ga * (1.0 + 0.5 * grid.q(j).cos())).collect();
    (f, g)
}

/// Random coefficients of either sign combination (for the Fredholm suite).
pub fn random_field(rng: &mut impl Rng, grid: &GridD) -> CoefficientField {
    let alpha = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let sign = if rng.random_bool(0.5) { WentzellSign::Standard } else { WentzellSign::Switched };
    random_coeffs(rng, grid, alpha, sign)
}

/// Laplace problem whose q-independent piecewise linear profile is a kernel
/// vector: `alpha = -1` and `c_I = 1 / (p1 - p0) + 1 / |p1|`.
pub fn singular_field(grid: &GridD) -> CoefficientField {
    let c = 1.0 / (grid.p1 - grid.p0) + 1.0 / grid.p1.abs();
    CoefficientField::laplace(grid, 1.0, c, -1.0, WentzellSign::Standard)
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Check { name: name.into(), passed, detail }
    }
}

/// `samples` randomized maximum-principle checks.
pub fn max_principle_suite(grid: &GridD, seed: u64, samples: usize) -> Result<Vec<MaxPrincipleReport>, EllipticError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let cf = random_positive_field(&mut rng, grid);
            let (f, g) = random_data(&mut rng, grid);
            max_principle_check(&cf, grid, &f, &g)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FredholmReport {
    pub kernel_dim: usize,
    pub unknowns: usize,
    /// Relative residuals of the random right-hand sides.
    pub residuals: Vec<f64>,
    pub singular_kernel_dim: usize,
    pub singular_detected: bool,
}

/// Kernel-free random operator solves random data; the constructed singular
/// operator is rejected.
pub fn fredholm_suite(grid: &GridD, seed: u64, rhs_count: usize) -> Result<FredholmReport, EllipticError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cf = random_field(&mut rng, grid);
    let op = assemble(&cf, grid, LidCondition::Dirichlet, Sector::Full)?;
    let kd = kernel_dim(&op).dim;
    let mut residuals = Vec::with_capacity(rhs_count);
    if kd == 0 {
        for _ in 0..rhs_count {
            let rhs: Vec<f64> = (0..op.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (x, _) = op.solve_vec(&rhs)?;
            let ax = op.apply(&x);
            let r: Vec<f64> = ax.iter().zip(&rhs).map(|(a, b)| a - b).collect();
            residuals.push(norm_inf(&r) / norm_inf(&rhs));
        }
    }
    let sing = assemble(&singular_field(grid), grid, LidCondition::Dirichlet, Sector::Full)?;
    let sk = kernel_dim(&sing).dim;
    let g = vec![1.0; grid.nq];
    let rejected = matches!(sing.solve(&FieldOnD::zeros(grid), &g), Err(EllipticError::Singular { .. }));
    Ok(FredholmReport {
        kernel_dim: kd,
        unknowns: op.dim(),
        residuals,
        singular_kernel_dim: sk,
        singular_detected: sk >= 1 && rejected,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HomotopyReport {
    pub steps: usize,
    pub max_cond: f64,
    pub difference_to_direct: f64,
}

pub fn homotopy_suite(grid: &GridD, seed: u64, steps: usize) -> Result<HomotopyReport, EllipticError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cf = random_positive_field(&mut rng, grid);
    let (f, g) = random_data(&mut rng, grid);
    let (u, log) = homotopy_solve(&cf, grid, LidCondition::Dirichlet, Sector::Full, &f, &g, steps)?;
    let direct = assemble(&cf, grid, LidCondition::Dirichlet, Sector::Full)?.solve(&f, &g)?;
    let diff = u.to_nodes().iter().zip(direct.to_nodes()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(HomotopyReport {
        steps: log.len(),
        max_cond: log.iter().map(|s| s.cond_estimate).fold(0.0, f64::max),
        difference_to_direct: diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manufactured_solution_is_continuous_and_vanishes_on_boundaries() {
        let c = ManufacturedCase::new(1.0, WentzellSign::Standard).on(-3.0, -0.5);
        for q in [0.0, 1.0, 4.0] {
            assert!((c.u(q, -0.5, Side::Water) - c.u(q, -0.5, Side::Air)).abs() < 1e-14);
            assert!(c.u(q, -3.0, Side::Water).abs() < 1e-14);
            assert!(c.u(q, 0.0, Side::Air).abs() < 1e-14);
        }
    }

    #[test]
    fn random_fields_are_elliptic() {
        let g = GridD::new(-2.0, -1.0, 8, 9, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            assert!(random_positive_field(&mut rng, &g).validate(&g).is_ok());
            assert!(random_field(&mut rng, &g).validate(&g).is_ok());
        }
    }

    #[test]
    fn singular_field_has_a_kernel_for_general_depths() {
        let g = GridD::new(-3.0, -0.5, 4, 5, 7).unwrap();
        let op = assemble(&singular_field(&g), &g, LidCondition::Dirichlet, Sector::Full).unwrap();
        assert!(kernel_dim(&op).dim >= 1);
    }
}
