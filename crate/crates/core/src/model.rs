//! Physical constants, vorticity, the two-block grid and piecewise fields on it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("interface index {index} out of range (nq = {nq})")]
    IndexOutOfRange { index: usize, nq: usize },
    #[error("field size mismatch: {0}")]
    SizeMismatch(String),
    #[error("interface traces differ by {jump:e} > {tol:e}")]
    Discontinuous { jump: f64, tol: f64 },
    #[error("invalid vorticity table: {0}")]
    InvalidTable(String),
}

/// Vorticity strength.
///
/// `Poly` holds coefficients of gamma in its own argument, so the value seen on
/// the streamline `p` is `sum c_k (-p)^k`. `Table` holds samples keyed by the
/// streamline coordinate `p` in `[p1, 0]`, i.e. the table is `p -> gamma(-p)`,
/// interpolated by a natural cubic spline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum VorticityFn {
    Poly { coeffs: Vec<f64> },
    Table { p: Vec<f64>, gamma: Vec<f64> },
}

impl VorticityFn {
    pub fn zero() -> Self {
        VorticityFn::Poly { coeffs: vec![] }
    }

    pub fn constant(k: f64) -> Self {
        VorticityFn::Poly { coeffs: vec![k] }
    }

    /// gamma(-p) on the streamline p.
    pub fn on_streamline(&self, p: f64) -> f64 {
        match self {
            VorticityFn::Poly { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * (-p) + c),
            VorticityFn::Table { p: ps, gamma } => Spline::new(ps, gamma).eval(p),
        }
    }

    /// Exact integral of gamma(-s) for s from `a` to `b`.
    pub fn integral_on_streamlines(&self, a: f64, b: f64) -> f64 {
        match self {
            VorticityFn::Poly { coeffs } => {
                // antiderivative of sum c_k (-s)^k is sum c_k (-1)^k s^{k+1}/(k+1)
                let anti = |s: f64| {
                    coeffs
                        .iter()
                        .enumerate()
                        .map(|(k, c)| {
                            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                            sign * c * s.powi(k as i32 + 1) / (k as f64 + 1.0)
                        })
                        .sum::<f64>()
                };
                anti(b) - anti(a)
            }
            VorticityFn::Table { p: ps, gamma } => Spline::new(ps, gamma).integral(a, b),
        }
    }

    fn check(&self, p1: f64) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            VorticityFn::Poly { coeffs } => {
                if coeffs.iter().any(|c| !c.is_finite()) {
                    out.push("gamma coefficients must be finite".to_string());
                }
            }
            VorticityFn::Table { p, gamma } => {
                if p.len() != gamma.len() {
                    out.push("gamma table: p and gamma lengths differ".to_string());
                } else if p.len() < 2 {
                    out.push("gamma table needs at least 2 samples".to_string());
                } else {
                    if p.windows(2).any(|w| w[1] <= w[0]) {
                        out.push("gamma table: p must be strictly increasing".to_string());
                    }
                    let tol = 1e-12 * (1.0 + p1.abs());
                    if p[0] > p1 + tol || p[p.len() - 1] < -tol {
                        out.push("gamma table must cover [p1, 0]".to_string());
                    }
                    if gamma.iter().any(|g| !g.is_finite()) {
                        out.push("gamma table values must be finite".to_string());
                    }
                }
            }
        }
        out
    }
}

/// Natural cubic spline through `(x, y)`.
struct Spline<'a> {
    x: &'a [f64],
    y: &'a [f64],
    m: Vec<f64>,
}

impl<'a> Spline<'a> {
    fn new(x: &'a [f64], y: &'a [f64]) -> Self {
        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for second derivatives, natural ends
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let a = h0 / 6.0;
                let b = (h0 + h1) / 3.0;
                let cc = h1 / 6.0;
                let r = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
                let denom = b - a * c[i - 1];
                c[i] = cc / denom;
                d[i] = (r - a * d[i - 1]) / denom;
            }
            for i in (1..n - 1).rev() {
                m[i] = d[i] - c[i] * m[i + 1];
            }
        }
        Spline { x, y, m }
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        let k = self.segment(t);
        let (x0, x1) = (self.x[k], self.x[k + 1]);
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        a * self.y[k]
            + b * self.y[k + 1]
            + ((a * a * a - a) * self.m[k] + (b * b * b - b) * self.m[k + 1]) * h * h / 6.0
    }

    fn antiderivative_in_segment(&self, k: usize, t: f64) -> f64 {
        // integral from x_k to t of the cubic on segment k
        let (x0, x1) = (self.x[k], self.x[k + 1]);
        let h = x1 - x0;
        let prim = |t: f64| {
            let a = (x1 - t) / h;
            let b = (t - x0) / h;
            -h * a * a / 2.0 * self.y[k] + h * b * b / 2.0 * self.y[k + 1]
                + h * h * h / 6.0
                    * (-(a.powi(4) / 4.0 - a * a / 2.0) * self.m[k]
                        + (b.powi(4) / 4.0 - b * b / 2.0) * self.m[k + 1])
        };
        prim(t) - prim(x0)
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        let ka = self.segment(a);
        let kb = self.segment(b);
        if ka == kb {
            return self.antiderivative_in_segment(ka, b) - self.antiderivative_in_segment(ka, a);
        }
        let mut total = self.antiderivative_in_segment(ka, self.x[ka + 1])
            - self.antiderivative_in_segment(ka, a);
        for k in ka + 1..kb {
            total += self.antiderivative_in_segment(k, self.x[k + 1]);
        }
        total + self.antiderivative_in_segment(kb, b)
    }
}

/// Physical constants of the lidded two-fluid problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub p0: f64,
    pub p1: f64,
    pub ell: f64,
    pub grav: f64,
    pub rho_air: f64,
    pub rho_water: f64,
    pub sigma: f64,
    pub gamma: VorticityFn,
}

impl PhysicalParams {
    /// Density jump, air minus water. Negative for valid parameters.
    pub fn delta_rho(&self) -> f64 {
        self.rho_air - self.rho_water
    }

    /// Reference configuration used throughout the tests: irrotational air,
    /// unit lid height, densities 1/2 and 1.
    pub fn reference() -> Self {
        PhysicalParams {
            p0: -2.0,
            p1: -1.0,
            ell: 1.0,
            grav: 1.0,
            rho_air: 0.5,
            rho_water: 1.0,
            sigma: 1.0,
            gamma: VorticityFn::zero(),
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }
}

/// Every violated invariant of `params`, empty when valid.
pub fn validate_params(params: &PhysicalParams) -> Vec<String> {
    let mut out = Vec::new();
    let finite = [
        params.p0,
        params.p1,
        params.ell,
        params.grav,
        params.rho_air,
        params.rho_water,
        params.sigma,
    ];
    if finite.iter().any(|x| !x.is_finite()) {
        out.push("all parameters must be finite".to_string());
    }
    if !(params.p0 < params.p1) {
        out.push("p0 < p1 violated".to_string());
    }
    if !(params.p1 < 0.0) {
        out.push("p1 < 0 violated".to_string());
    }
    if !(params.ell > 0.0) {
        out.push("ell > 0 violated".to_string());
    }
    if !(params.grav > 0.0) {
        out.push("grav > 0 violated".to_string());
    }
    if !(params.rho_air > 0.0) {
        out.push("rho_air > 0 violated".to_string());
    }
    if !(params.rho_air < params.rho_water) {
        out.push("rho_air < rho_water violated".to_string());
    }
    if !(params.sigma >= 0.0) {
        out.push("sigma >= 0 violated".to_string());
    }
    out.extend(params.gamma.check(params.p1));
    out
}

/// Which block a trace belongs to. Air is the upper block `p1 < p < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Air,
    Water,
}

/// Tensor grid on `[0, 2pi) x [p0, 0]` with one shared row at `p = p1`.
///
/// Global p-rows are numbered from the bed (`i = 0`, `p = p0`) through the
/// interface (`i = np_water - 1`) to the lid (`i = np_water + np_air - 2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridD {
    pub nq: usize,
    pub np_water: usize,
    pub np_air: usize,
    pub p0: f64,
    pub p1: f64,
}

impl GridD {
    pub fn new(p0: f64, p1: f64, nq: usize, np_water: usize, np_air: usize) -> Result<Self, ModelError> {
        if !(p0 < p1 && p1 < 0.0) {
            return Err(ModelError::InvalidGrid(format!("need p0 < p1 < 0, got {p0}, {p1}")));
        }
        if np_water < 3 || np_air < 3 {
            return Err(ModelError::InvalidGrid(format!(
                "need at least 3 p-nodes per block, got water {np_water}, air {np_air}"
            )));
        }
        if nq < 4 || !nq.is_multiple_of(2) {
            return Err(ModelError::InvalidGrid(format!("nq must be even and >= 4, got {nq}")));
        }
        Ok(GridD { nq, np_water, np_air, p0, p1 })
    }

    pub fn for_params(params: &PhysicalParams, nq: usize, np_water: usize, np_air: usize) -> Result<Self, ModelError> {
        Self::new(params.p0, params.p1, nq, np_water, np_air)
    }

    pub fn np_total(&self) -> usize {
        self.np_water + self.np_air - 1
    }

    pub fn iface(&self) -> usize {
        self.np_water - 1
    }

    pub fn lid(&self) -> usize {
        self.np_total() - 1
    }

    pub fn dp_water(&self) -> f64 {
        (self.p1 - self.p0) / (self.np_water - 1) as f64
    }

    pub fn dp_air(&self) -> f64 {
        -self.p1 / (self.np_air - 1) as f64
    }

    pub fn dq(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.nq as f64
    }

    /// Spacing of the cell between rows `i` and `i + 1`.
    pub fn dp_above(&self, i: usize) -> f64 {
        if i < self.iface() {
            self.dp_water()
        } else {
            self.dp_air()
        }
    }

    pub fn p(&self, i: usize) -> f64 {
        let k = self.iface();
        if i < k {
            self.p0 + i as f64 * self.dp_water()
        } else if i == k {
            self.p1
        } else if i == self.lid() {
            0.0
        } else {
            self.p1 + (i - k) as f64 * self.dp_air()
        }
    }

    /// Midpoint of the cell between rows `i` and `i + 1`.
    pub fn p_mid(&self, i: usize) -> f64 {
        0.5 * (self.p(i) + self.p(i + 1))
    }

    pub fn q(&self, j: usize) -> f64 {
        j as f64 * self.dq()
    }

    pub fn p_nodes(&self) -> Vec<f64> {
        (0..self.np_total()).map(|i| self.p(i)).collect()
    }

    pub fn side_of_row(&self, i: usize) -> Side {
        if i < self.iface() {
            Side::Water
        } else {
            Side::Air
        }
    }

    /// Number of q-columns in the even sector `[0, pi]`.
    pub fn nq_even(&self) -> usize {
        self.nq / 2 + 1
    }

    /// Trapezoid weights in p for the water block (`Side::Water`) or air block.
    pub fn p_weights(&self, side: Side) -> Vec<(usize, f64)> {
        let (lo, hi, dp) = match side {
            Side::Water => (0, self.iface(), self.dp_water()),
            Side::Air => (self.iface(), self.lid(), self.dp_air()),
        };
        (lo..=hi)
            .map(|i| (i, if i == lo || i == hi { 0.5 * dp } else { dp }))
            .collect()
    }

    /// Same grid with both blocks refined to `2 (n - 1) + 1` nodes.
    pub fn refined(&self) -> Self {
        GridD {
            np_water: 2 * (self.np_water - 1) + 1,
            np_air: 2 * (self.np_air - 1) + 1,
            ..self.clone()
        }
    }
}

/// Piecewise field on the grid; the interface row is stored once per block so
/// both one-sided traces are available.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldOnD {
    pub grid: GridD,
    /// `np_water x nq`, row 0 at the bed, last row the water-side interface trace.
    pub water: Vec<f64>,
    /// `np_air x nq`, row 0 the air-side interface trace, last row the lid.
    pub air: Vec<f64>,
    continuity_tol: Option<f64>,
}

impl FieldOnD {
    pub fn zeros(grid: &GridD) -> Self {
        FieldOnD {
            water: vec![0.0; grid.np_water * grid.nq],
            air: vec![0.0; grid.np_air * grid.nq],
            grid: grid.clone(),
            continuity_tol: None,
        }
    }

    /// Samples `f(q, p, side)`; both traces are sampled at the interface.
    pub fn from_fn(grid: &GridD, f: impl Fn(f64, f64, Side) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        let nq = grid.nq;
        for r in 0..grid.np_water {
            for j in 0..nq {
                out.water[r * nq + j] = f(grid.q(j), grid.p(r), Side::Water);
            }
        }
        for r in 0..grid.np_air {
            for j in 0..nq {
                out.air[r * nq + j] = f(grid.q(j), grid.p(grid.iface() + r), Side::Air);
            }
        }
        out
    }

    /// Samples a function that is continuous across the interface and marks the
    /// field continuous at round-off tolerance.
    pub fn continuous(grid: &GridD, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::from_fn(grid, |q, p, _| f(q, p));
        out.continuity_tol = Some(0.0);
        out
    }

    /// Field from one value per global node (`np_total x nq`, row-major in p).
    pub fn from_nodes(grid: &GridD, nodes: &[f64]) -> Result<Self, ModelError> {
        let nq = grid.nq;
        if nodes.len() != grid.np_total() * nq {
            return Err(ModelError::SizeMismatch(format!(
                "expected {} node values, got {}",
                grid.np_total() * nq,
                nodes.len()
            )));
        }
        let split = grid.iface() * nq;
        let mut out = Self::zeros(grid);
        out.water.copy_from_slice(&nodes[..split + nq]);
        out.air.copy_from_slice(&nodes[split..]);
        out.continuity_tol = Some(0.0);
        Ok(out)
    }

    /// One value per global node; the interface row takes the air trace.
    pub fn to_nodes(&self) -> Vec<f64> {
        let nq = self.grid.nq;
        let split = self.grid.iface() * nq;
        let mut out = Vec::with_capacity(self.grid.np_total() * nq);
        out.extend_from_slice(&self.water[..split]);
        out.extend_from_slice(&self.air);
        out
    }

    /// Value at global row `i`; at the interface `side` selects the trace.
    pub fn at(&self, i: usize, j: usize, side: Side) -> f64 {
        let nq = self.grid.nq;
        let k = self.grid.iface();
        if i < k || (i == k && side == Side::Water) {
            self.water[i * nq + j]
        } else {
            self.air[(i - k) * nq + j]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, side: Side, v: f64) {
        let nq = self.grid.nq;
        let k = self.grid.iface();
        if i < k || (i == k && side == Side::Water) {
            self.water[i * nq + j] = v;
        } else {
            self.air[(i - k) * nq + j] = v;
        }
    }

    /// Sets a node value, writing both traces at the interface.
    pub fn set_node(&mut self, i: usize, j: usize, v: f64) {
        self.set(i, j, Side::Water, v);
        self.set(i, j, Side::Air, v);
    }

    pub fn interface_trace(&self, side: Side) -> &[f64] {
        let nq = self.grid.nq;
        match side {
            Side::Water => &self.water[self.grid.iface() * nq..],
            Side::Air => &self.air[..nq],
        }
    }

    /// Air trace minus water trace at interface column `j`.
    pub fn jump(&self, j: usize) -> Result<f64, ModelError> {
        if j >= self.grid.nq {
            return Err(ModelError::IndexOutOfRange { index: j, nq: self.grid.nq });
        }
        Ok(self.interface_trace(Side::Air)[j] - self.interface_trace(Side::Water)[j])
    }

    pub fn max_jump(&self) -> f64 {
        (0..self.grid.nq)
            .map(|j| self.jump(j).unwrap_or(0.0).abs())
            .fold(0.0, f64::max)
    }

    /// Declares the field continuous; fails if the traces differ by more than `tol`.
    pub fn mark_continuous(&mut self, tol: f64) -> Result<(), ModelError> {
        let jump = self.max_jump();
        if jump > tol {
            return Err(ModelError::Discontinuous { jump, tol });
        }
        self.continuity_tol = Some(tol);
        Ok(())
    }

    pub fn continuity_tol(&self) -> Option<f64> {
        self.continuity_tol
    }

    pub fn max_abs(&self) -> f64 {
        self.water.iter().chain(&self.air).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.water.iter().chain(&self.air).fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// Wrap-around column index used by periodic stencils.
    pub fn wrap(&self, j: isize) -> usize {
        j.rem_euclid(self.grid.nq as isize) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_params_are_valid() {
        assert!(validate_params(&PhysicalParams::reference()).is_empty());
    }

    #[test]
    fn ordering_violations_are_reported() {
        let mut p = PhysicalParams::reference();
        p.p0 = -1.0;
        p.p1 = -2.0;
        let v = validate_params(&p);
        assert!(v.contains(&"p0 < p1 violated".to_string()), "{v:?}");

        let mut p = PhysicalParams::reference();
        p.rho_air = 1.0;
        p.rho_water = 0.5;
        assert_eq!(validate_params(&p), vec!["rho_air < rho_water violated".to_string()]);
    }

    #[test]
    fn jump_of_traces() {
        let g = GridD::new(-2.0, -1.0, 8, 5, 5).unwrap();
        let f = FieldOnD::from_fn(&g, |_, _, s| if s == Side::Air { 3.0 } else { 1.0 });
        assert_eq!(f.jump(3).unwrap(), 2.0);
        assert!(matches!(f.jump(8), Err(ModelError::IndexOutOfRange { .. })));
        let c = FieldOnD::continuous(&g, |q, p| q.sin() * p);
        assert_eq!(c.max_jump(), 0.0);
        let mut f = f;
        assert!(f.mark_continuous(1e-12).is_err());
    }

    #[test]
    fn periodic_wrap() {
        let g = GridD::new(-2.0, -1.0, 8, 5, 5).unwrap();
        let f = FieldOnD::zeros(&g);
        assert_eq!(f.wrap(-1), 7);
        assert_eq!(f.wrap(8), 0);
    }

    #[test]
    fn grid_rows_share_interface() {
        let g = GridD::new(-2.0, -1.0, 8, 5, 3).unwrap();
        assert_eq!(g.np_total(), 7);
        assert_eq!(g.p(g.iface()), -1.0);
        assert_eq!(g.p(0), -2.0);
        assert_eq!(g.p(g.lid()), 0.0);
        assert!((g.p(5) + 0.5).abs() < 1e-15);
        let nodes: Vec<f64> = (0..7 * 8).map(|k| k as f64).collect();
        let f = FieldOnD::from_nodes(&g, &nodes).unwrap();
        assert_eq!(f.to_nodes(), nodes);
        assert_eq!(f.max_jump(), 0.0);
    }

    #[test]
    fn polynomial_vorticity_integral() {
        let g = VorticityFn::Poly { coeffs: vec![1.0, 2.0, 3.0] };
        // gamma(-s) = 1 - 2 s + 3 s^2
        let exact = |s: f64| s - s * s + s * s * s;
        assert!((g.integral_on_streamlines(-1.0, -0.25) - (exact(-0.25) - exact(-1.0))).abs() < 1e-14);
        assert!((g.on_streamline(-0.5) - (1.0 + 1.0 + 0.75)).abs() < 1e-15);
    }

    #[test]
    fn spline_reproduces_lines_and_integrates() {
        let ps: Vec<f64> = (0..9).map(|k| -1.0 + k as f64 / 8.0).collect();
        let gs: Vec<f64> = ps.iter().map(|p| 2.0 - 3.0 * p).collect();
        let table = VorticityFn::Table { p: ps, gamma: gs };
        assert!((table.on_streamline(-0.33) - (2.0 + 0.99)).abs() < 1e-13);
        let exact = |s: f64| 2.0 * s - 1.5 * s * s;
        let got = table.integral_on_streamlines(-0.9, -0.1);
        assert!((got - (exact(-0.1) - exact(-0.9))).abs() < 1e-13);
    }

    #[test]
    fn params_json_field_names() {
        let p = PhysicalParams::reference();
        let s = serde_json::to_string(&p).unwrap();
        for key in ["\"p0\"", "\"p1\"", "\"ell\"", "\"grav\"", "\"rho_air\"", "\"rho_water\"", "\"sigma\"", "\"gamma\"", "\"type\":\"poly\""] {
            assert!(s.contains(key), "{s}");
        }
        let t: PhysicalParams = serde_json::from_str(
            r#"{"p0":-2,"p1":-1,"ell":1,"grav":1,"rho_air":0.5,"rho_water":1,"sigma":1,
                "gamma":{"type":"table","p":[-1,-0.5,0],"gamma":[0,0,0]}}"#,
        )
        .unwrap();
        assert!(validate_params(&t).is_empty());
    }
}
