//! Transmission problem with a Wentzell condition on the periodic two-block
//! rectangle.
//!
//! Interior rows use a conservative finite-volume discretization in p and
//! pseudo-spectral differentiation in q. Interface rows combine the
//! tangential operator with the co-normal jump, where each one-sided flux is
//! recovered from a half-cell balance of the interior equation.

use crate::fourier::{diff_matrix, even_count, even_weights, expand_even, restrict_even};
use crate::linalg::{BandMatrix, BorderedLu, BorderedMatrix, LinalgError, SolveInfo};
use crate::model::{FieldOnD, GridD, Side};
use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EllipticError {
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("ellipticity violated: {0}")]
    NotElliptic(String),
    #[error("operator is singular (condition estimate {cond:e})")]
    Singular { cond: f64 },
    #[error("operator is singular at theta = {theta}")]
    SingularAt { theta: f64 },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("solve residual {residual:e} exceeds tolerance relative to |rhs| = {rhs:e}")]
    Residual { residual: f64, rhs: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WentzellSign {
    /// `B u = -d(a d u) + ...`
    Standard,
    /// `B u = +d(a d u) + ...`
    Switched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LidCondition {
    Dirichlet,
    /// `u - mean(u on the interface) = 0` through one extra border unknown.
    Nonlocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sector {
    Full,
    /// Only `q_j, j = 0..=nq/2` is stored; data and coefficients must be even.
    Even,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowClass {
    InteriorWater,
    InteriorAir,
    Interface,
    Lid,
    LidMean,
}

/// Coefficients of `L` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointCoeffs {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
    pub b1: f64,
    pub b2: f64,
    pub c: f64,
}

impl PointCoeffs {
    pub fn identity() -> Self {
        PointCoeffs { a11: 1.0, a22: 1.0, ..Default::default() }
    }

    fn min_eig(&self) -> f64 {
        let t = 0.5 * (self.a11 + self.a22);
        let d = (0.25 * (self.a11 - self.a22).powi(2) + self.a12 * self.a12).sqrt();
        t - d
    }
}

/// Sampled coefficients. Index 1 is q, index 2 is p.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub grid: GridD,
    pub a11: FieldOnD,
    pub a12: FieldOnD,
    pub a22: FieldOnD,
    pub b1: FieldOnD,
    pub b2: FieldOnD,
    pub c: FieldOnD,
    /// Cell-midpoint values, `(np_total - 1) x nq`.
    pub a22_mid: Vec<f64>,
    pub a21_mid: Vec<f64>,
    pub afrak: Vec<f64>,
    pub bfrak: Vec<f64>,
    pub cfrak: Vec<f64>,
    pub alpha: f64,
    pub wentzell: WentzellSign,
}

/// Ellipticity constants of a coefficient field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ellipticity {
    pub lambda_ell: f64,
    pub mu_ell: f64,
}

impl CoefficientField {
    pub fn sample(
        grid: &GridD,
        interior: impl Fn(f64, f64, Side) -> PointCoeffs,
        interface: impl Fn(f64) -> (f64, f64, f64),
        alpha: f64,
        wentzell: WentzellSign,
    ) -> Self {
        let pick = |sel: fn(&PointCoeffs) -> f64| FieldOnD::from_fn(grid, |q, p, s| sel(&interior(q, p, s)));
        let nq = grid.nq;
        let k = grid.iface();
        let mut a22_mid = Vec::with_capacity((grid.np_total() - 1) * nq);
        let mut a21_mid = Vec::with_capacity((grid.np_total() - 1) * nq);
        for c in 0..grid.np_total() - 1 {
            let side = if c < k { Side::Water } else { Side::Air };
            for j in 0..nq {
                let pc = interior(grid.q(j), grid.p_mid(c), side);
                a22_mid.push(pc.a22);
                a21_mid.push(pc.a12);
            }
        }
        let (mut af, mut bf, mut cf) = (Vec::new(), Vec::new(), Vec::new());
        for j in 0..nq {
            let (a, b, c) = interface(grid.q(j));
            af.push(a);
            bf.push(b);
            cf.push(c);
        }
        CoefficientField {
            grid: grid.clone(),
            a11: pick(|c| c.a11),
            a12: pick(|c| c.a12),
            a22: pick(|c| c.a22),
            b1: pick(|c| c.b1),
            b2: pick(|c| c.b2),
            c: pick(|c| c.c),
            a22_mid,
            a21_mid,
            afrak: af,
            bfrak: bf,
            cfrak: cf,
            alpha,
            wentzell,
        }
    }

    /// `-Laplace` in both blocks with the given interface coefficients.
    pub fn laplace(grid: &GridD, afrak: f64, cfrak: f64, alpha: f64, wentzell: WentzellSign) -> Self {
        Self::sample(grid, |_, _, _| PointCoeffs::identity(), |_| (afrak, 0.0, cfrak), alpha, wentzell)
    }

    pub fn validate(&self, grid: &GridD) -> Result<Ellipticity, EllipticError> {
        if &self.grid != grid {
            return Err(EllipticError::SizeMismatch("coefficients sampled on a different grid".into()));
        }
        let nq = grid.nq;
        let cells = (grid.np_total() - 1) * nq;
        for (name, f) in [("a11", &self.a11), ("a12", &self.a12), ("a22", &self.a22), ("b1", &self.b1), ("b2", &self.b2), ("c", &self.c)] {
            if f.grid != *grid {
                return Err(EllipticError::SizeMismatch(format!("{name} sampled on a different grid")));
            }
        }
        if self.a22_mid.len() != cells || self.a21_mid.len() != cells {
            return Err(EllipticError::SizeMismatch(format!("cell coefficients need {cells} values")));
        }
        if self.afrak.len() != nq || self.bfrak.len() != nq || self.cfrak.len() != nq {
            return Err(EllipticError::SizeMismatch(format!("interface coefficients need {nq} values")));
        }
        if self.alpha != 1.0 && self.alpha != -1.0 {
            return Err(EllipticError::NotElliptic(format!("alpha must be +1 or -1, got {}", self.alpha)));
        }
        let mu_ell = self.afrak.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(mu_ell > 0.0) {
            return Err(EllipticError::NotElliptic(format!("interface diffusion must be positive, min = {mu_ell}")));
        }
        let mut lambda_ell = f64::INFINITY;
        for i in 0..grid.np_total() {
            for side in [Side::Water, Side::Air] {
                if grid.side_of_row(i) != side && i != grid.iface() {
                    continue;
                }
                for j in 0..nq {
                    let pc = self.point(i, j, side);
                    lambda_ell = lambda_ell.min(pc.min_eig());
                }
            }
        }
        for c in 0..grid.np_total() - 1 {
            for j in 0..nq {
                let i = c * nq + j;
                let pc = PointCoeffs { a11: self.a11_cell(c, j), a12: self.a21_mid[i], a22: self.a22_mid[i], ..Default::default() };
                lambda_ell = lambda_ell.min(pc.min_eig());
            }
        }
        if !(lambda_ell > 0.0) {
            return Err(EllipticError::NotElliptic(format!("lambda_ell = {lambda_ell}")));
        }
        Ok(Ellipticity { lambda_ell, mu_ell })
    }

    fn a11_cell(&self, c: usize, j: usize) -> f64 {
        let side = if c < self.grid.iface() { Side::Water } else { Side::Air };
        0.5 * (self.a11.at(c, j, side) + self.a11.at(c + 1, j, side))
    }

    pub fn point(&self, i: usize, j: usize, side: Side) -> PointCoeffs {
        PointCoeffs {
            a11: self.a11.at(i, j, side),
            a12: self.a12.at(i, j, side),
            a22: self.a22.at(i, j, side),
            b1: self.b1.at(i, j, side),
            b2: self.b2.at(i, j, side),
            c: self.c.at(i, j, side),
        }
    }

    fn row_of(f: &FieldOnD, i: usize, side: Side) -> Vec<f64> {
        (0..f.grid.nq).map(|j| f.at(i, j, side)).collect()
    }

    fn mid_row(v: &[f64], c: usize, nq: usize) -> Vec<f64> {
        v[c * nq..(c + 1) * nq].to_vec()
    }
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v))
}

/// Lays out unknowns row-major in p (rows `1..=lid`) with `nc` q-columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub grid: GridD,
    pub sector: Sector,
    pub nc: usize,
    pub n_rows: usize,
}

impl Layout {
    pub fn new(grid: &GridD, sector: Sector) -> Self {
        let nc = match sector {
            Sector::Full => grid.nq,
            Sector::Even => even_count(grid.nq),
        };
        Layout { grid: grid.clone(), sector, nc, n_rows: grid.lid() }
    }

    pub fn n_field(&self) -> usize {
        self.n_rows * self.nc
    }

    /// Index of grid row `i >= 1`, stored column `c`.
    pub fn idx(&self, i: usize, c: usize) -> usize {
        (i - 1) * self.nc + c
    }

    pub fn empty_band(&self) -> BandMatrix {
        let w = 2 * self.nc - 1;
        BandMatrix::zeros(self.n_field(), w, w)
    }

    /// Restricts a full nq x nq block to the stored sector.
    pub fn reduce(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self.sector {
            Sector::Full => b.clone(),
            Sector::Even => restrict_even(b),
        }
    }

    pub fn stamp(&self, band: &mut BandMatrix, row: usize, col: usize, block: &DMatrix<f64>) {
        if col == 0 {
            return;
        }
        let b = self.reduce(block);
        for r in 0..self.nc {
            for c in 0..self.nc {
                let v = b[(r, c)];
                if v != 0.0 {
                    band.add(self.idx(row, r), self.idx(col, c), v);
                }
            }
        }
    }

    /// Values on all nodes (bed row zero) on the full q-grid.
    pub fn to_full_nodes(&self, x: &[f64]) -> Vec<f64> {
        let nq = self.grid.nq;
        let mut out = vec![0.0; self.grid.np_total() * nq];
        for i in 1..=self.n_rows {
            let row = &x[self.idx(i, 0)..self.idx(i, 0) + self.nc];
            let full = match self.sector {
                Sector::Full => row.to_vec(),
                Sector::Even => expand_even(nq, row),
            };
            out[i * nq..(i + 1) * nq].copy_from_slice(&full);
        }
        out
    }

    /// Stored unknowns from full node values (bed row ignored).
    pub fn from_full_nodes(&self, nodes: &[f64]) -> Vec<f64> {
        let nq = self.grid.nq;
        let mut x = vec![0.0; self.n_field()];
        for i in 1..=self.n_rows {
            for c in 0..self.nc {
                x[self.idx(i, c)] = nodes[i * nq + c];
            }
        }
        x
    }

    /// Weights of the periodic mean for stored columns (sum to 1).
    pub fn mean_weights(&self) -> Vec<f64> {
        let nq = self.grid.nq;
        match self.sector {
            Sector::Full => vec![1.0 / nq as f64; nq],
            Sector::Even => even_weights(nq).iter().map(|w| w / (2.0 * std::f64::consts::PI)).collect(),
        }
    }

    pub fn row_class(&self, i: usize) -> RowClass {
        let g = &self.grid;
        if i == g.lid() {
            RowClass::Lid
        } else if i == g.iface() {
            RowClass::Interface
        } else if i < g.iface() {
            RowClass::InteriorWater
        } else {
            RowClass::InteriorAir
        }
    }
}

/// Assembled operator: banded part over the field unknowns plus the border
/// of the nonlocal lid condition.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub layout: Layout,
    pub lid: LidCondition,
    pub matrix: BorderedMatrix,
    pub row_class: Vec<RowClass>,
    pub alpha: f64,
    pub theta: f64,
}

impl DiscreteOperator {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.matvec(x)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.matrix.to_dense()
    }

    /// Right-hand side for data `f` in both blocks and `g` on the interface.
    pub fn rhs(&self, f: &FieldOnD, g: &[f64]) -> Result<Vec<f64>, EllipticError> {
        let lay = &self.layout;
        let grid = &lay.grid;
        if f.grid != *grid || g.len() != grid.nq {
            return Err(EllipticError::SizeMismatch("data does not match the grid".into()));
        }
        let k = grid.iface();
        let hw = grid.p(k) - grid.p(k - 1);
        let ha = grid.p(k + 1) - grid.p(k);
        let mut r = vec![0.0; self.dim()];
        for i in 1..grid.lid() {
            for c in 0..lay.nc {
                r[lay.idx(i, c)] = if i == k {
                    let data = g[c] + self.alpha * 0.5 * (hw * f.at(k, c, Side::Water) + ha * f.at(k, c, Side::Air));
                    self.theta * data + (1.0 - self.theta) * g[c]
                } else {
                    f.at(i, c, grid.side_of_row(i))
                };
            }
        }
        Ok(r)
    }

    /// Factorizes and solves, refusing numerically singular systems.
    pub fn solve_vec(&self, rhs: &[f64]) -> Result<(Vec<f64>, SolveInfo), EllipticError> {
        let lu = BorderedLu::new(&self.matrix).map_err(|e| match e {
            LinalgError::Singular { ratio, .. } => EllipticError::Singular { cond: 1.0 / ratio.max(f64::MIN_POSITIVE) },
            other => EllipticError::SizeMismatch(other.to_string()),
        })?;
        let cond = lu.condition_estimate(&self.matrix);
        if !(cond < SINGULAR_COND) {
            return Err(EllipticError::Singular { cond });
        }
        let (x, mut info) = lu.solve(&self.matrix, rhs).map_err(|_| EllipticError::Singular { cond: f64::INFINITY })?;
        info.cond_estimate = cond;
        if info.residual_inf > 1e-10 * info.rhs_inf {
            return Err(EllipticError::Residual { residual: info.residual_inf, rhs: info.rhs_inf });
        }
        Ok((x, info))
    }

    pub fn solve(&self, f: &FieldOnD, g: &[f64]) -> Result<FieldOnD, EllipticError> {
        let rhs = self.rhs(f, g)?;
        let (x, _) = self.solve_vec(&rhs)?;
        Ok(self.to_field(&x))
    }

    pub fn to_field(&self, x: &[f64]) -> FieldOnD {
        let nodes = self.layout.to_full_nodes(&x[..self.layout.n_field()]);
        FieldOnD::from_nodes(&self.layout.grid, &nodes).expect("layout matches grid")
    }
}

/// Condition estimate above which a system is reported singular.
pub const SINGULAR_COND: f64 = 1e11;

pub fn assemble(coeffs: &CoefficientField, grid: &GridD, lid: LidCondition, sector: Sector) -> Result<DiscreteOperator, EllipticError> {
    assemble_theta(coeffs, grid, lid, sector, 1.0)
}

/// Assembles the problem with `B_theta = theta B + (1 - theta)(-d_qq + 1)`.
pub fn assemble_theta(
    coeffs: &CoefficientField,
    grid: &GridD,
    lid: LidCondition,
    sector: Sector,
    theta: f64,
) -> Result<DiscreteOperator, EllipticError> {
    coeffs.validate(grid)?;
    let lay = Layout::new(grid, sector);
    let nq = grid.nq;
    let d = diff_matrix(nq);
    let id = DMatrix::<f64>::identity(nq, nq);
    let mut band = lay.empty_band();
    let k = grid.iface();
    let n_lid = grid.lid();
    let cf = coeffs;
    let q_part = |i: usize, side: Side| -> DMatrix<f64> {
        let a11 = CoefficientField::row_of(&cf.a11, i, side);
        let b1 = CoefficientField::row_of(&cf.b1, i, side);
        let c = CoefficientField::row_of(&cf.c, i, side);
        -(&d * diag(&a11) * &d) + diag(&b1) * &d + diag(&c)
    };
    // coefficient of u_p in the q-flux and drift: -D a12 + b2
    let cross = |i: usize, side: Side| -> DMatrix<f64> {
        let a12 = CoefficientField::row_of(&cf.a12, i, side);
        let b2 = CoefficientField::row_of(&cf.b2, i, side);
        -(&d * diag(&a12)) + diag(&b2)
    };
    // p-flux through cell c: (lower-node block, upper-node block)
    let flux = |c: usize| -> (DMatrix<f64>, DMatrix<f64>) {
        let h = grid.p(c + 1) - grid.p(c);
        let a22 = diag(&CoefficientField::mid_row(&cf.a22_mid, c, nq));
        let a21 = diag(&CoefficientField::mid_row(&cf.a21_mid, c, nq));
        let half = 0.5 * (&a21 * &d);
        (-(&a22 / h) + &half, &a22 / h + half)
    };
    let mut row_class = Vec::with_capacity(lay.n_field() + 1);
    for i in 1..=n_lid {
        for _ in 0..lay.nc {
            row_class.push(lay.row_class(i));
        }
        if i == n_lid {
            match lid {
                LidCondition::Dirichlet | LidCondition::Nonlocal => lay.stamp(&mut band, i, i, &id),
            }
            continue;
        }
        if i == k {
            let hw = grid.p(k) - grid.p(k - 1);
            let ha = grid.p(k + 1) - grid.p(k);
            let (fw_lo, fw_hi) = flux(k - 1);
            let (fa_lo, fa_hi) = flux(k);
            let xp = cross(k, Side::Air);
            let xm = cross(k, Side::Water);
            let rp = q_part(k, Side::Air);
            let rm = q_part(k, Side::Water);
            let ws = match cf.wentzell {
                WentzellSign::Standard => 1.0,
                WentzellSign::Switched => -1.0,
            };
            let tangential = -ws * (&d * diag(&cf.afrak) * &d) + diag(&cf.bfrak) * &d + diag(&cf.cfrak);
            let al = cf.alpha * theta;
            let up = al * (-&fa_hi + 0.5 * &xp);
            let mid = al * (&fw_hi - &fa_lo + 0.5 * hw * &rm + 0.5 * ha * &rp - 0.5 * &xp + 0.5 * &xm)
                + theta * tangential
                + (1.0 - theta) * (-(&d * &d) + &id);
            let lo = al * (&fw_lo - 0.5 * &xm);
            lay.stamp(&mut band, i, i + 1, &up);
            lay.stamp(&mut band, i, i, &mid);
            lay.stamp(&mut band, i, i - 1, &lo);
            continue;
        }
        let side = grid.side_of_row(i);
        let dp = 0.5 * (grid.p(i + 1) - grid.p(i - 1));
        let (fm_lo, fm_hi) = flux(i - 1);
        let (fp_lo, fp_hi) = flux(i);
        let x = cross(i, side) * (0.5 / dp);
        let up = -(&fp_hi / dp) + &x;
        let mid = -(&fp_lo / dp) + &fm_hi / dp + q_part(i, side);
        let lo = &fm_lo / dp - &x;
        lay.stamp(&mut band, i, i + 1, &up);
        lay.stamp(&mut band, i, i, &mid);
        lay.stamp(&mut band, i, i - 1, &lo);
    }
    let nb = if lid == LidCondition::Nonlocal { 1 } else { 0 };
    let mut m = BorderedMatrix::new(band, nb);
    if nb == 1 {
        let w = lay.mean_weights();
        for c in 0..lay.nc {
            m.b[(lay.idx(n_lid, c), 0)] = -1.0;
            m.c[(0, lay.idx(k, c))] = -w[c];
        }
        m.d[(0, 0)] = 1.0;
        row_class.push(RowClass::LidMean);
    }
    Ok(DiscreteOperator { layout: lay, lid, matrix: m, row_class, alpha: cf.alpha, theta })
}

/// Kernel of the operator by dense SVD of the row-equilibrated matrix.
#[derive(Debug, Clone)]
pub struct KernelInfo {
    pub dim: usize,
    pub basis: Vec<Vec<f64>>,
    /// Singular values relative to the largest, ascending.
    pub relative_singular_values: Vec<f64>,
}

pub fn kernel_dim(op: &DiscreteOperator) -> KernelInfo {
    kernel_dim_dense(op.to_dense(), 1e-8)
}

pub fn kernel_dim_dense(mut a: DMatrix<f64>, rel_tol: f64) -> KernelInfo {
    for mut row in a.row_iter_mut() {
        let s = row.amax();
        if s > 0.0 {
            row /= s;
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.max();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let rel: Vec<f64> = order.iter().map(|&i| svd.singular_values[i] / smax).collect();
    let basis: Vec<Vec<f64>> = order
        .iter()
        .filter(|&&i| svd.singular_values[i] < rel_tol * smax)
        .map(|&i| vt.row(i).iter().cloned().collect())
        .collect();
    KernelInfo { dim: basis.len(), basis, relative_singular_values: rel }
}

#[derive(Debug, Clone, Serialize)]
pub struct HomotopyStep {
    pub theta: f64,
    pub cond_estimate: f64,
    pub residual: f64,
    pub sup_norm: f64,
}

/// Solves the theta-family from the reference Wentzell operator to `B`.
pub fn homotopy_solve(
    coeffs: &CoefficientField,
    grid: &GridD,
    lid: LidCondition,
    sector: Sector,
    f: &FieldOnD,
    g: &[f64],
    theta_steps: usize,
) -> Result<(FieldOnD, Vec<HomotopyStep>), EllipticError> {
    let steps = theta_steps.max(1);
    let mut log = Vec::with_capacity(steps + 1);
    let mut last = None;
    for s in 0..=steps {
        let theta = s as f64 / steps as f64;
        let op = assemble_theta(coeffs, grid, lid, sector, theta)?;
        let rhs = op.rhs(f, g)?;
        let (x, info) = op.solve_vec(&rhs).map_err(|e| match e {
            EllipticError::Singular { .. } => EllipticError::SingularAt { theta },
            other => other,
        })?;
        let u = op.to_field(&x);
        log.push(HomotopyStep { theta, cond_estimate: info.cond_estimate, residual: info.residual_inf, sup_norm: u.max_abs() });
        last = Some(u);
    }
    Ok((last.unwrap(), log))
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxPrincipleReport {
    pub sup_u: f64,
    pub g_term: f64,
    pub f_term: f64,
    pub constant: f64,
    pub lambda_ell: f64,
    pub tau: f64,
    pub sigma: f64,
    pub width: f64,
    pub bound: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Discrete check of `sup u <= sup|g/c_I| + C sup|f/lambda_ell|` with
/// `C = exp(sigma d) - 1` and `sigma^2 - tau sigma >= 1`.
pub fn max_principle_check(
    coeffs: &CoefficientField,
    grid: &GridD,
    f: &FieldOnD,
    g: &[f64],
) -> Result<MaxPrincipleReport, EllipticError> {
    if coeffs.alpha != 1.0 || coeffs.wentzell != WentzellSign::Standard {
        return Err(EllipticError::Hypothesis("requires alpha = +1 and the standard Wentzell sign".into()));
    }
    if coeffs.c.water.iter().chain(&coeffs.c.air).any(|v| *v < 0.0) {
        return Err(EllipticError::Hypothesis("c >= 0 violated".into()));
    }
    if coeffs.cfrak.iter().any(|v| !(*v > 0.0)) {
        return Err(EllipticError::Hypothesis("interface c > 0 violated".into()));
    }
    let ell = coeffs.validate(grid)?;
    let op = assemble(coeffs, grid, LidCondition::Dirichlet, Sector::Full)?;
    let u = op.solve(f, g)?;
    let tau = (drift_sup(coeffs, grid, Side::Water) + drift_sup(coeffs, grid, Side::Air)) / ell.lambda_ell;
    let sigma = (0.5 * (tau + (tau * tau + 4.0).sqrt())).max(1.0);
    let width = grid.p0.abs();
    let constant = (sigma * width).exp() - 1.0;
    let g_term = g.iter().zip(&coeffs.cfrak).fold(0.0f64, |m, (g, c)| m.max((g / c).abs()));
    let f_term = f.max_abs() / ell.lambda_ell;
    let bound = g_term + constant * f_term;
    let h = grid.dp_water().max(grid.dp_air());
    let slack = h * h * (1.0 + bound);
    let sup_u = u.max().max(0.0);
    Ok(MaxPrincipleReport {
        sup_u,
        g_term,
        f_term,
        constant,
        lambda_ell: ell.lambda_ell,
        tau,
        sigma,
        width,
        bound,
        slack,
        passed: sup_u <= bound + slack,
    })
}

/// `sup |b - div a|` over one block, by differences of the sampled coefficients.
fn drift_sup(cf: &CoefficientField, grid: &GridD, side: Side) -> f64 {
    let nq = grid.nq;
    let d = diff_matrix(nq);
    let (lo, hi) = match side {
        Side::Water => (0, grid.iface()),
        Side::Air => (grid.iface(), grid.lid()),
    };
    let mut sup = 0.0f64;
    for i in lo..=hi {
        let ia = if i == lo { i } else { i - 1 };
        let ib = if i == hi { i } else { i + 1 };
        let dp = grid.p(ib) - grid.p(ia);
        let row = |f: &FieldOnD, r: usize| CoefficientField::row_of(f, r, side);
        let dq_a11 = crate::fourier::matvec(&d, &row(&cf.a11, i));
        let dq_a12 = crate::fourier::matvec(&d, &row(&cf.a12, i));
        let (a12a, a12b, a22a, a22b) = (row(&cf.a12, ia), row(&cf.a12, ib), row(&cf.a22, ia), row(&cf.a22, ib));
        let b1 = row(&cf.b1, i);
        let b2 = row(&cf.b2, i);
        for j in 0..nq {
            let t1 = b1[j] - dq_a11[j] - (a12b[j] - a12a[j]) / dp;
            let t2 = b2[j] - dq_a12[j] - (a22b[j] - a22a[j]) / dp;
            sup = sup.max(t1.abs() + t2.abs());
        }
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(nq: usize, np: usize) -> GridD {
        GridD::new(-2.0, -1.0, nq, np, np).unwrap()
    }

    #[test]
    fn zero_data_gives_zero() {
        let g = grid(8, 9);
        let cf = CoefficientField::laplace(&g, 1.0, 1.0, 1.0, WentzellSign::Standard);
        let op = assemble(&cf, &g, LidCondition::Dirichlet, Sector::Full).unwrap();
        assert!(op.apply(&vec![0.0; op.dim()]).iter().all(|v| *v == 0.0));
        let u = op.solve(&FieldOnD::zeros(&g), &[0.0; 8]).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn rejects_bad_coefficients() {
        let g = grid(8, 9);
        let cf = CoefficientField::laplace(&g, 0.0, 1.0, 1.0, WentzellSign::Standard);
        assert!(matches!(assemble(&cf, &g, LidCondition::Dirichlet, Sector::Full), Err(EllipticError::NotElliptic(_))));
        let cf = CoefficientField::laplace(&g, 1.0, 1.0, 1.0, WentzellSign::Standard);
        let other = grid(8, 17);
        assert!(matches!(assemble(&cf, &other, LidCondition::Dirichlet, Sector::Full), Err(EllipticError::SizeMismatch(_))));
        let mut bad = cf.clone();
        bad.afrak.pop();
        assert!(matches!(assemble(&bad, &g, LidCondition::Dirichlet, Sector::Full), Err(EllipticError::SizeMismatch(_))));
    }

    #[test]
    fn separated_modes_reduce_to_one_dimensional_rows() {
        // q-independent coefficients: the operator on M(p) cos(n q) is the
        // 1D operator with d_qq -> -n^2, computed here row by row.
        let g = grid(8, 9);
        let a22 = |p: f64| 1.0 + 0.3 * p * p;
        let a11 = |p: f64| 3.0 + p;
        let cf = CoefficientField::sample(
            &g,
            |_, p, s| PointCoeffs { a11: a11(p), a22: a22(p) * if s == Side::Air { 2.0 } else { 1.0 }, c: 0.5, ..Default::default() },
            |_| (1.5, 0.0, 0.7),
            1.0,
            WentzellSign::Standard,
        );
        let op = assemble(&cf, &g, LidCondition::Dirichlet, Sector::Full).unwrap();
        let n = 2.0;
        let m: Vec<f64> = (0..g.np_total()).map(|i| if i == 0 || i == g.lid() { 0.0 } else { (i as f64).sin() }).collect();
        let nodes: Vec<f64> = (0..g.np_total()).flat_map(|i| (0..8).map(move |j| (i, j))).map(|(i, j)| m[i] * (n * g.q(j)).cos()).collect();
        let y = op.apply(&op.layout.from_full_nodes(&nodes));
        let k = g.iface();
        for i in 1..g.lid() {
            let s = g.side_of_row(i);
            let cell = |c: usize| cf.a22_mid[c * 8];
            let expect = if i == k {
                let (hw, ha) = (g.dp_water(), g.dp_air());
                1.5 * n * n * m[k] + 0.7 * m[k]
                    + cell(k - 1) * (m[k] - m[k - 1]) / hw
                    - cell(k) * (m[k + 1] - m[k]) / ha
                    + 0.5 * hw * (n * n * a11(g.p(k)) + 0.5) * m[k]
                    + 0.5 * ha * (n * n * a11(g.p(k)) + 0.5) * m[k]
            } else {
                let dp = g.dp_above(i);
                -(cell(i) * (m[i + 1] - m[i]) - cell(i - 1) * (m[i] - m[i - 1])) / (dp * dp)
                    + (n * n * cf.a11.at(i, 0, s) + 0.5) * m[i]
            };
            for j in 0..8 {
                let got = y[op.layout.idx(i, j)];
                assert!((got - expect * (n * g.q(j)).cos()).abs() < 1e-10, "row {i} col {j}: {got} vs {expect}");
            }
        }
    }

    #[test]
    fn even_sector_matches_full_on_even_data() {
        let g = grid(8, 9);
        let cf = CoefficientField::sample(
            &g,
            |q, p, _| PointCoeffs { a11: 1.0 + 0.2 * q.cos(), a22: 1.0 - 0.1 * p, c: 1.0, ..Default::default() },
            |q| (1.0 + 0.1 * q.cos(), 0.0, 1.0),
            1.0,
            WentzellSign::Standard,
        );
        let f = FieldOnD::from_fn(&g, |q, p, _| (2.0 * q).cos() * p * (p + 2.0));
        let gv: Vec<f64> = (0..8).map(|j| g.q(j).cos()).collect();
        let full = assemble(&cf, &g, LidCondition::Nonlocal, Sector::Full).unwrap().solve(&f, &gv).unwrap();
        let even = assemble(&cf, &g, LidCondition::Nonlocal, Sector::Even).unwrap().solve(&f, &gv).unwrap();
        let diff = full.to_nodes().iter().zip(even.to_nodes()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn theta_zero_decouples_interface() {
        let g = grid(8, 9);
        let cf = CoefficientField::laplace(&g, 2.0, 3.0, 1.0, WentzellSign::Standard);
        let op = assemble_theta(&cf, &g, LidCondition::Dirichlet, Sector::Full, 0.0).unwrap();
        let gv: Vec<f64> = (0..8).map(|j| 1.0 + (2.0 * g.q(j)).cos()).collect();
        let u = op.solve(&FieldOnD::zeros(&g), &gv).unwrap();
        // -u'' + u = 1 + cos 2q  =>  u = 1 + cos(2q) / 5
        for j in 0..8 {
            let exact = 1.0 + (2.0 * g.q(j)).cos() / 5.0;
            assert!((u.at(g.iface(), j, Side::Air) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_laplace_has_trivial_kernel() {
        let g = grid(4, 5);
        let cf = CoefficientField::laplace(&g, 1.0, 1.0, 1.0, WentzellSign::Standard);
        let op = assemble(&cf, &g, LidCondition::Dirichlet, Sector::Full).unwrap();
        assert_eq!(kernel_dim(&op).dim, 0);
    }
}
