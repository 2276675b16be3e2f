use wavebif::laminar::{
    bernoulli_q, bernoulli_q_prime, compute_gamma_rel, lambda0, laminar_flow, laminar_residual, LaminarError,
};
use wavebif::model::{GridD, PhysicalParams, VorticityFn};

fn with_vorticity(k: f64) -> PhysicalParams {
    let mut p = PhysicalParams::reference();
    p.gamma = VorticityFn::constant(k);
    p
}

// For constant vorticity k the air layer integrates in closed form:
// Gamma^2 = C + 2 k (p - p1), and the depth constraint gives
// sqrt(C) = (2 |p1| - k ell^2) / (2 ell).
fn constant_vorticity_c(p: &PhysicalParams, k: f64) -> f64 {
    let root = (2.0 * -p.p1 - k * p.ell * p.ell) / (2.0 * p.ell);
    root * root
}

#[test]
fn constant_vorticity_matches_closed_form() {
    for k in [-0.6, 0.4, 1.2] {
        let p = with_vorticity(k);
        let g = GridD::for_params(&p, 8, 17, 33).unwrap();
        let rc = compute_gamma_rel(&p, &g).unwrap();
        let c = constant_vorticity_c(&p, k);
        assert!((rc.c - c).abs() < 1e-12 * c.max(1.0), "k = {k}: {} vs {c}", rc.c);
        let lambda = 1.3;
        let flow = laminar_flow(&p, &rc, lambda, &g).unwrap();
        let d = (p.p1 - p.p0) / lambda;
        for i in g.iface()..=g.lid() {
            let pp = g.p(i);
            let exact = d + ((c + 2.0 * k * (pp - p.p1)).sqrt() - c.sqrt()) / k;
            assert!((flow.h[i] - exact).abs() < 1e-11, "k = {k}, p = {pp}: {} vs {exact}", flow.h[i]);
        }
        assert!((flow.h[g.lid()] - flow.h[g.iface()] - p.ell).abs() < 1e-11);
    }
}

#[test]
fn bernoulli_constant_is_maximal_at_lambda0() {
    let p = with_vorticity(0.3);
    let g = GridD::for_params(&p, 8, 9, 9).unwrap();
    let rc = compute_gamma_rel(&p, &g).unwrap();
    let (l0, qp0) = lambda0(&p);
    assert!(qp0.abs() < 1e-14);
    let q0 = bernoulli_q(&p, &rc, l0);
    for dl in [-0.3, -0.05, 0.05, 0.3] {
        assert!(bernoulli_q(&p, &rc, l0 + dl) < q0);
    }
    for l in [0.6, 1.0, 2.5] {
        let h = 1e-5;
        let fd = (bernoulli_q(&p, &rc, l + h) - bernoulli_q(&p, &rc, l - h)) / (2.0 * h);
        assert!((fd - bernoulli_q_prime(&p, l)).abs() < 1e-8);
    }
}

#[test]
fn discrete_residual_is_second_order_with_vorticity() {
    let p = with_vorticity(0.4);
    let mut errs = Vec::new();
    for n in [33, 65, 129, 257] {
        let g = GridD::for_params(&p, 8, n, n).unwrap();
        let rc = compute_gamma_rel(&p, &g).unwrap();
        let flow = laminar_flow(&p, &rc, 1.1, &g).unwrap();
        let r = laminar_residual(&flow, &p);
        assert!(r.water < 1e-10 && r.bed < 1e-14 && r.lid < 1e-11);
        errs.push(r.air.max(r.jump));
    }
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 1.8, "{errs:?}");
    }
}

#[test]
fn vorticity_that_closes_the_air_layer_is_rejected() {
    // Gamma^2 = C + 2 k (p - p1) with k large and negative cannot stay
    // positive while the air layer keeps depth ell
    let mut p = with_vorticity(-50.0);
    p.ell = 3.0;
    let g = GridD::for_params(&p, 8, 9, 9).unwrap();
    assert!(matches!(compute_gamma_rel(&p, &g), Err(LaminarError::NoPositiveCirculation(_))));
}
