//! Acceptance criteria, one line per criterion. Runs without the libtest
//! harness so the lines are always printed.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavebif::bifurcation::{
    check_hypotheses, continue_branch, linearize, reconstruct, residual, stored, ResidualF,
};
use wavebif::elliptic2d::{Sector, WentzellSign};
use wavebif::laminar::{bernoulli_q, compute_gamma_rel, lambda0, laminar_flow, size_condition_bound, RelativeCirculation};
use wavebif::linalg::norm_inf;
use wavebif::model::{FieldOnD, GridD, PhysicalParams};
use wavebif::spectral1d::{find_lambda_star, lbc_sup_nu, nu, pencil_at, solve_pencil, zero_mode_check, PontryaginType};
use wavebif::verify::{convergence_study, fredholm_suite, max_principle_suite, ManufacturedCase};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn reference() -> PhysicalParams {
    PhysicalParams::reference()
}

fn setup(params: &PhysicalParams, nq: usize, np_water: usize, np_air: usize) -> Result<(GridD, RelativeCirculation), String> {
    let grid = GridD::for_params(params, nq, np_water, np_air).map_err(err)?;
    let rc = compute_gamma_rel(params, &grid).map_err(err)?;
    Ok((grid, rc))
}

/// Separation of variables for the reference flow with `nu = -1`: water
/// modes `sinh((p - p0) / lambda)`, air modes `sinh(-p / a_air)` with
/// `a_air = |p1| / ell`, glued by the interface condition. Returns the
/// surface tension making `lambda` the root.
fn dispersion_sigma(params: &PhysicalParams, lambda: f64) -> f64 {
    let a_air = -params.p1 / params.ell;
    let coth = |x: f64| 1.0 / x.tanh();
    let water = lambda * lambda * coth((params.p1 - params.p0) / lambda);
    let air = a_air * a_air * coth(-params.p1 / a_air);
    2.0 * (water + air + params.grav * (params.rho_air - params.rho_water))
}

/// Bisection on the dispersion relation for given sigma.
fn dispersion_root(params: &PhysicalParams, sigma: f64, mut lo: f64, mut hi: f64) -> f64 {
    let f = |l: f64| dispersion_sigma(params, l) - sigma;
    assert!(f(lo) * f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn oracle_params() -> PhysicalParams {
    let p = reference();
    let sigma = dispersion_sigma(&p, 1.0);
    p.with_sigma(sigma)
}

fn ac1() -> Outcome {
    let p = reference();
    let (grid, rc) = setup(&p, 8, 33, 33)?;
    let flow = laminar_flow(&p, &rc, 1.0, &grid).map_err(err)?;
    let h_err = flow.p.iter().zip(&flow.h).fold(0.0f64, |m, (p, h)| m.max((h - (p + 2.0)).abs()));
    let q_err = (bernoulli_q(&p, &rc, 1.0) + 1.0).abs();
    let d_err = (flow.depth - 1.0).abs();
    let l0_err = (lambda0(&p).0 - 0.5f64.powf(1.0 / 3.0)).abs();
    let worst = h_err.max(q_err).max(d_err).max(l0_err);
    ensure(
        worst <= 1e-12,
        format!("|H - (p+2)| = {h_err:.1e}, |Q + 1| = {q_err:.1e}, |d - 1| = {d_err:.1e}, |lambda0 - 0.5^(1/3)| = {l0_err:.1e}"),
    )
}

fn ac2() -> Outcome {
    let p = oracle_params();
    let root = dispersion_root(&p, p.sigma, lambda0(&p).0 + 1e-6, 10.0);
    let root_err = (root - 1.0).abs();
    let (grid, rc) = setup(&p, 8, 64, 64)?;
    let star = find_lambda_star(&p, &rc, &grid, None).map_err(err)?;
    let e64 = (star.lambda - root).abs();
    let mut errors = Vec::new();
    for np in [17, 33, 65, 129] {
        let (g, rc) = setup(&p, 8, np, np)?;
        errors.push((find_lambda_star(&p, &rc, &g, None).map_err(err)?.lambda - root).abs());
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let ok = root_err < 1e-12 && e64 <= 1e-4 && ratios.iter().all(|r| (r - 4.0).abs() <= 0.5);
    ensure(
        ok,
        format!(
            "sigma = {:.9}, oracle lambda* = {root:.12}, |lambda*_64 - oracle| = {e64:.2e}, ratios {:?}",
            p.sigma,
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn ac3() -> Outcome {
    let p = oracle_params();
    let (grid, _) = setup(&p, 8, 33, 33)?;
    let l0 = lambda0(&p).0;
    let mut min_margin = f64::INFINITY;
    for i in 0..10 {
        let lambda = l0 + 0.02 + 0.35 * i as f64;
        let pencil = pencil_at(&p, lambda, &grid).map_err(err)?;
        let pairs = solve_pencil(&pencil).map_err(err)?;
        let neg: Vec<_> = pairs.iter().filter(|e| e.kind == PontryaginType::Negative).collect();
        if neg.len() != 1 || pairs.iter().any(|e| e.kind == PontryaginType::Neutral) {
            return Err(format!("lambda = {lambda}: {} negative-type pairs", neg.len()));
        }
        for e in &pairs {
            let sign_ok = if e.kind == PontryaginType::Negative { e.mu < 0.0 } else { e.mu > 0.0 };
            if !sign_ok || e.energy.is_nan() || e.energy <= 0.0 {
                return Err(format!("lambda = {lambda}: mu = {}, [K u, u] = {}", e.mu, e.energy));
            }
            min_margin = min_margin.min(e.mu.abs()).min(e.pontryagin_norm.abs()).min(e.energy);
        }
    }
    ensure(min_margin >= 1e-8, format!("10 samples, one negative-type pair each, min classification margin {min_margin:.2e}"))
}

fn ac4() -> Outcome {
    let p = oracle_params();
    let (grid, rc) = setup(&p, 8, 33, 33)?;
    let l0 = lambda0(&p).0;
    let lambdas: Vec<f64> = (0..20).map(|i| l0 + 0.01 + 3.0 * i as f64 / 19.0).collect();
    let nus = lambdas.iter().map(|&l| nu(&p, &rc, l, &grid)).collect::<Result<Vec<_>, _>>().map_err(err)?;
    let monotone = nus.windows(2).filter(|w| w[0] < 0.0 && w[1] < 0.0).all(|w| w[1] < w[0]);
    let bound = size_condition_bound(&p, &rc);
    let q = p.clone().with_sigma(bound + 0.1);
    let (sup, lbc) = lbc_sup_nu(&q, &rc, &grid, (l0 + 1e-3, l0 + 3.0), 20).map_err(err)?;
    ensure(monotone && lbc, format!("nu strictly decreasing: {monotone}; sigma = bound + 0.1 = {:.4}, sup nu = {sup:.4}", bound + 0.1))
}

fn ac5() -> Outcome {
    let p = oracle_params();
    let (grid, rc) = setup(&p, 8, 64, 65)?;
    let l0 = lambda0(&p).0;
    let at = zero_mode_check(&p, &rc, l0, &grid).map_err(err)?;
    let below = zero_mode_check(&p, &rc, l0 - 0.2, &grid).map_err(err)?;
    let above = zero_mode_check(&p, &rc, l0 + 0.2, &grid).map_err(err)?;
    ensure(
        grid.np_total() == 128 && at <= 1e-3 && below >= 0.1 && above >= 0.1,
        format!("s_min(lambda0) = {at:.2e}, s_min(lambda0 - 0.2) = {below:.3}, s_min(lambda0 + 0.2) = {above:.3}"),
    )
}

fn ac6() -> Outcome {
    let mut orders = Vec::new();
    for (alpha, sign) in [
        (1.0, WentzellSign::Standard),
        (-1.0, WentzellSign::Standard),
        (1.0, WentzellSign::Switched),
        (-1.0, WentzellSign::Switched),
    ] {
        let st = convergence_study(&ManufacturedCase::new(alpha, sign), 16, &[9, 17, 33, 65]).map_err(err)?;
        orders.extend(st.orders);
    }
    let orders_ok = orders.iter().all(|o| (o - 2.0).abs() <= 0.2);
    let grid = GridD::new(-2.0, -1.0, 16, 17, 17).map_err(err)?;
    let mp = max_principle_suite(&grid, 11, 10).map_err(err)?;
    let mp_ok = mp.len() == 10 && mp.iter().all(|r| r.passed);
    let fgrid = GridD::new(-2.0, -1.0, 16, 33, 33).map_err(err)?;
    let fr = fredholm_suite(&fgrid, 5, 5).map_err(err)?;
    let worst = fr.residuals.iter().cloned().fold(0.0, f64::max);
    let fr_ok = fr.unknowns <= 2000 && fr.kernel_dim == 0 && fr.residuals.len() == 5 && worst <= 1e-10 && fr.singular_detected;
    let (lo, hi) = orders.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &o| (a.min(o), b.max(o)));
    ensure(
        orders_ok && mp_ok && fr_ok,
        format!(
            "orders in [{lo:.3}, {hi:.3}]; max principle {}/10; Fredholm: {} unknowns, kernel {}, max rel. residual {worst:.1e}, singular detected {}",
            mp.iter().filter(|r| r.passed).count(),
            fr.unknowns,
            fr.kernel_dim,
            fr.singular_detected
        ),
    )
}

fn ac7() -> Outcome {
    let p = oracle_params();
    let (grid, rc) = setup(&p, 16, 33, 33)?;
    let star = find_lambda_star(&p, &rc, &grid, None).map_err(err)?;
    let (null, tr) = check_hypotheses(&p, &rc, &star, &grid).map_err(err)?;
    ensure(
        null.kernel_dim == 1 && null.angle <= 1e-4 && tr.closed_form < 0.0 && tr.pairing < 0.0 && tr.relative_gap <= 1e-4,
        format!(
            "kernel dim {}, angle {:.1e}; Xi closed form {:.6}, pairing {:.6}, relative gap {:.1e}",
            null.kernel_dim, null.angle, tr.closed_form, tr.pairing, tr.relative_gap
        ),
    )
}

fn ac8() -> Outcome {
    let p = oracle_params();
    let (grid, rc) = setup(&p, 64, 64, 64)?;
    let star = find_lambda_star(&p, &rc, &grid, None).map_err(err)?;
    let branch = continue_branch(&p, &rc, &star, &grid, 0.05, 0.005).map_err(err)?;
    let reached = branch.points.last().map_or(0.0, |pt| pt.s);
    let worst = branch.points.iter().map(|pt| pt.newton_residual).fold(0.0, f64::max);
    let phi = branch.null.phi.to_nodes();
    let ratio = |s: f64| -> Result<f64, String> {
        let pt = branch.points.iter().find(|pt| (pt.s - s).abs() < 1e-12).ok_or(format!("no point at s = {s}"))?;
        let d = pt.m.to_nodes().iter().zip(&phi).fold(0.0f64, |m, (a, b)| m.max((a - s * b).abs()));
        Ok(d / s)
    };
    let ratios = [0.04, 0.02, 0.01, 0.005].iter().map(|&s| ratio(s)).collect::<Result<Vec<_>, _>>()?;
    let decreasing = ratios.windows(2).all(|w| w[1] < w[0]);
    let mut v_max = 0.0f64;
    let mut jump = 0.0f64;
    let nq = grid.nq;
    for pt in branch.points.iter().filter(|pt| pt.s > 0.0) {
        let w = reconstruct(&p, pt).map_err(err)?;
        let bed = w.water.v[..nq].iter().chain(&w.air.v[(w.air.rows - 1) * nq..]).fold(0.0f64, |m, v| m.max(v.abs()));
        v_max = v_max.max(bed);
        jump = jump.max(w.bernoulli_jump_residual);
    }
    ensure(
        (reached - 0.05).abs() < 1e-12 && worst <= 1e-10 && decreasing && ratios[3] <= 0.5 && v_max <= 1e-12 && jump <= 1e-3,
        format!(
            "{} points to s = {reached}, max Newton residual {worst:.1e}; |m - s phi*|/s at 0.04..0.005: {:?}; max |v| bed/lid {v_max:.1e}; Bernoulli jump {jump:.1e}",
            branch.points.len(),
            ratios.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>()
        ),
    )
}

fn ac9() -> Outcome {
    let p = oracle_params();
    let (grid, rc) = setup(&p, 8, 9, 9)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (p0, p1) = (grid.p0, grid.p1);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let lambda = rng.random_range(0.9..1.6);
        let amps: Vec<f64> = (0..4).map(|_| rng.random_range(-0.04..0.04)).collect();
        let lid_w = rng.random_range(0.5..1.5);
        let m = FieldOnD::continuous(&grid, |q, pp| {
            let w = if pp <= p1 { (pp - p0) / (p1 - p0) } else { 1.0 + (lid_w - 1.0) * (pp - p1) / -p1 };
            w * (amps[0] * q.cos() + amps[1] * (2.0 * q).cos() + amps[2] * q.sin() + amps[3] * (3.0 * q + pp).cos())
        });
        let op = linearize(&p, &rc, lambda, &m, Sector::Full).map_err(err)?;
        let nodes = m.to_nodes();
        let eps = 1e-6;
        let mut diff = 0.0f64;
        let mut scale = 0.0f64;
        // every column that does not touch the bed
        for n in grid.nq..nodes.len() {
            let mut e = vec![0.0; nodes.len()];
            e[n] = 1.0;
            let ef = FieldOnD::from_nodes(&grid, &e).map_err(err)?;
            let jw = ResidualF::from_stored(&op.layout, &op.apply(&stored(&op, &ef)));
            let shifted = |s: f64| {
                let mut x = nodes.clone();
                x[n] += s;
                FieldOnD::from_nodes(&grid, &x).map_err(err)
            };
            let rp = residual(&p, &rc, lambda, &shifted(eps)?).map_err(err)?;
            let rm = residual(&p, &rc, lambda, &shifted(-eps)?).map_err(err)?;
            let fd: Vec<f64> = rp.rows.iter().zip(&rm.rows).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
            diff = diff.max(norm_inf(&fd.iter().zip(&jw.rows).map(|(a, b)| a - b).collect::<Vec<_>>()));
            scale = scale.max(norm_inf(&fd));
        }
        worst = worst.max(diff / scale);
    }
    ensure(worst <= 1e-6, format!("5 random points, full Jacobian, max relative error {worst:.2e}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("laminar closed forms", ac1, Duration::from_secs(1)),
        ("dispersion oracle", ac2, Duration::from_secs(10)),
        ("spectral structure", ac3, Duration::from_secs(30)),
        ("monotonicity and LBC", ac4, Duration::from_secs(30)),
        ("zero mode", ac5, Duration::from_secs(60)),
        ("elliptic validation", ac6, Duration::from_secs(120)),
        ("Crandall-Rabinowitz hypotheses", ac7, Duration::from_secs(60)),
        ("branch asymptotics", ac8, Duration::from_secs(300)),
        ("Jacobian correctness", ac9, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = f();
        let dt = t.elapsed();
        let (ok, msg) = match out {
            Ok(m) => (dt <= *budget, m),
            Err(m) => (false, m),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "AC{} {} {name}: {msg} [{:.2} s, budget {} s]",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            dt.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
