//! Command-line front end: JSON configs in, CSV fields and JSON reports out.

use std::fmt::Debug;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bifurcation::{continue_branch_with, reconstruct, BranchPoint, NewtonOptions};
use crate::elliptic2d::{WentzellSign, SINGULAR_COND};
use crate::laminar::{compute_gamma_rel, laminar_flow, laminar_residual, lambda0, RelativeCirculation};
use crate::model::{validate_params, FieldOnD, GridD, PhysicalParams, Side};
use crate::spectral1d::{find_lambda_star, pencil_at, solve_pencil, PontryaginType};
use crate::verify::{
    convergence_study, fredholm_suite, homotopy_suite, max_principle_suite, Check, ManufacturedCase,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "wavebif", version, about = "Steady two-layer wind-driven capillary-gravity waves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Laminar height profile H(p) for one lambda.
    Laminar {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Negative-type eigenvalue nu(lambda) on a uniform lambda grid.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lambda_min: f64,
        #[arg(long)]
        lambda_max: f64,
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bifurcation parameter lambda* with nu(lambda*) = -1 and its mode.
    FindLambdaStar {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Continue the bifurcating branch in the amplitude s.
    Branch {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `params.sigma` of the config.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        s_max: f64,
        #[arg(long)]
        ds: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Physical fields of a branch point written by `branch`.
    Reconstruct {
        #[arg(long)]
        point: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validation suites of the elliptic solver.
    VerifyElliptic {
        #[arg(long, value_enum)]
        case: VerifyCase,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyCase {
    MaxPrinciple,
    Fredholm,
    Homotopy,
    Manufactured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nq: usize,
    pub np_water: usize,
    pub np_air: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Newton residual on the branch.
    pub newton: f64,
    /// Relative eigenpair residual.
    pub eig: f64,
    /// `|nu(lambda*) + 1|`.
    pub root: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { newton: 1e-10, eig: 1e-10, root: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaStarConfig {
    /// Bracket for the root search; defaults to `(lambda0 + 1e-3, 11 lambda0)`.
    pub interval: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EllipticConfig {
    pub seed: u64,
    /// Random configurations (max-principle), right-hand sides (fredholm).
    pub samples: usize,
    pub homotopy_steps: usize,
    /// Accepted deviation of the observed order from 2 (manufactured).
    pub order_tol: f64,
    /// Relative residual accepted for Fredholm solves and the homotopy end point.
    pub solve_tol: f64,
}

impl Default for EllipticConfig {
    fn default() -> Self {
        EllipticConfig { seed: 7, samples: 10, homotopy_steps: 8, order_tol: 0.2, solve_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: PhysicalParams,
    pub grid: GridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub lambda_star: LambdaStarConfig,
    #[serde(default)]
    pub elliptic: EllipticConfig,
}

impl RunConfig {
    pub fn reference() -> Self {
        RunConfig {
            params: PhysicalParams::reference(),
            grid: GridConfig { nq: 16, np_water: 17, np_air: 17 },
            tolerances: Tolerances::default(),
            lambda_star: LambdaStarConfig::default(),
            elliptic: EllipticConfig::default(),
        }
    }

    /// Every violated invariant, empty when valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = validate_params(&self.params);
        let t = &self.tolerances;
        for (name, v) in [("newton", t.newton), ("eig", t.eig), ("root", t.root)] {
            if !(v > 0.0) {
                out.push(format!("tolerances.{name} must be > 0, got {v}"));
            }
        }
        let g = &self.grid;
        for (name, v) in [("nq", g.nq), ("np_water", g.np_water), ("np_air", g.np_air)] {
            if v < 8 {
                out.push(format!("grid.{name} must be >= 8, got {v}"));
            }
        }
        if !g.nq.is_multiple_of(2) {
            out.push(format!("grid.nq must be even, got {}", g.nq));
        }
        if let Some((lo, hi)) = self.lambda_star.interval {
            if !(lo < hi) {
                out.push(format!("lambda_star.interval must satisfy lo < hi, got ({lo}, {hi})"));
            }
        }
        let e = &self.elliptic;
        if !(e.order_tol > 0.0 && e.solve_tol > 0.0) {
            out.push("elliptic tolerances must be > 0".into());
        }
        out
    }

    pub fn grid_d(&self) -> Result<GridD, String> {
        GridD::new(self.params.p0, self.params.p1, self.grid.nq, self.grid.np_water, self.grid.np_air)
            .map_err(|e| e.to_string())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub config_hash: Option<String>,
    pub wall_time: f64,
    pub outputs: Vec<String>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub exit_code: i32,
    pub error: Option<String>,
    /// Command-specific results.
    pub data: Value,
}

enum Failure {
    Config(String),
    Numeric { name: String, message: String },
}

impl Failure {
    fn numeric<E: Debug + std::fmt::Display>(e: E) -> Self {
        let dbg = format!("{e:?}");
        let name = dbg.split(['(', '{', ' ']).next().unwrap_or("Error").to_string();
        Failure::Numeric { name, message: e.to_string() }
    }
}

struct Run {
    hash: Option<String>,
    outputs: Vec<String>,
    checks: Vec<Check>,
    data: Value,
    report_path: Option<PathBuf>,
}

impl Run {
    fn new() -> Self {
        Run { hash: None, outputs: vec![], checks: vec![], data: json!({}), report_path: None }
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check::new(name, passed, detail));
    }

    fn write(&mut self, path: &Path, contents: &str) -> Result<(), Failure> {
        write_atomic(path, contents).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }
}

/// Writes through a temporary file in the target directory and renames it.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn num(x: f64) -> String {
    // adding zero maps -0 to +0
    format!("{:.16e}", x + 0.0)
}

fn region(s: Side) -> &'static str {
    match s {
        Side::Water => "water",
        Side::Air => "air",
    }
}

/// Parses `argv` (program name first) and executes the command. Usage errors
/// come back as `Err` with clap's message.
pub fn run<I, T>(argv: I) -> Result<RunReport, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    Ok(execute(cli.command))
}

/// Entry point of the binary: prints the report and returns the exit code.
pub fn main_with_args(argv: Vec<std::ffi::OsString>) -> i32 {
    match run(argv) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            report.exit_code
        }
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_OK
            }
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Laminar { .. } => "laminar",
        Command::Spectrum { .. } => "spectrum",
        Command::FindLambdaStar { .. } => "find-lambda-star",
        Command::Branch { .. } => "branch",
        Command::Reconstruct { .. } => "reconstruct",
        Command::VerifyElliptic { .. } => "verify-elliptic",
    }
}

fn execute(command: Command) -> RunReport {
    let start = Instant::now();
    let name = command_name(&command);
    let mut run = Run::new();
    let result = match command {
        Command::Laminar { config, lambda, out } => cmd_laminar(&mut run, &config, lambda, &out),
        Command::Spectrum { config, lambda_min, lambda_max, samples, out } => {
            cmd_spectrum(&mut run, &config, lambda_min, lambda_max, samples, &out)
        }
        Command::FindLambdaStar { config, out } => cmd_find_lambda_star(&mut run, &config, &out),
        Command::Branch { config, sigma, s_max, ds, out } => cmd_branch(&mut run, &config, sigma, s_max, ds, &out),
        Command::Reconstruct { point, out } => cmd_reconstruct(&mut run, &point, &out),
        Command::VerifyElliptic { case, config, out } => cmd_verify(&mut run, case, &config, &out),
    };
    let (exit_code, error) = match result {
        Ok(()) if run.checks.iter().all(|c| c.passed) => (EXIT_OK, None),
        Ok(()) => (EXIT_CHECK, None),
        Err(Failure::Config(m)) => {
            run.check("config", false, m.clone());
            (EXIT_CONFIG, Some(m))
        }
        Err(Failure::Numeric { name, message }) => {
            run.check(&name, false, message.clone());
            (EXIT_CHECK, Some(message))
        }
    };
    let mut report = RunReport {
        command: name.into(),
        config_hash: run.hash.clone(),
        wall_time: 0.0,
        outputs: run.outputs.clone(),
        checks: run.checks,
        passed: exit_code == EXIT_OK,
        exit_code,
        error,
        data: run.data,
    };
    if let Some(path) = run.report_path {
        report.outputs.push(path.display().to_string());
        report.wall_time = start.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        if let Err(e) = write_atomic(&path, &text) {
            report.outputs.pop();
            report.checks.push(Check::new("config", false, format!("cannot write {}: {e}", path.display())));
            report.passed = false;
            report.exit_code = EXIT_CONFIG;
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    report
}

pub fn load_config(path: &Path) -> Result<RunConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let bad = cfg.validate();
    if !bad.is_empty() {
        return Err(bad.join("; "));
    }
    Ok(cfg)
}

/// Loads and validates the config, records its hash, builds the grid and the
/// relative circulation.
fn setup(run: &mut Run, cfg: &RunConfig) -> Result<(GridD, RelativeCirculation), Failure> {
    run.hash = Some(cfg.hash());
    let grid = cfg.grid_d().map_err(Failure::Config)?;
    let rc = compute_gamma_rel(&cfg.params, &grid).map_err(Failure::numeric)?;
    Ok((grid, rc))
}

fn sibling_report(out: &Path) -> PathBuf {
    out.with_extension("report.json")
}

fn cmd_laminar(run: &mut Run, config: &Path, lambda: f64, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(config).map_err(Failure::Config)?;
    run.report_path = Some(sibling_report(out));
    let (grid, rc) = setup(run, &cfg)?;
    let flow = laminar_flow(&cfg.params, &rc, lambda, &grid).map_err(Failure::numeric)?;
    let k = grid.iface();
    let mut csv = String::from("p,H,a,region\n");
    for i in 0..grid.np_total() {
        if i == k {
            csv += &format!("{},{},{},water\n", num(flow.p[i]), num(flow.h[i]), num(flow.a_water));
        }
        csv += &format!("{},{},{},{}\n", num(flow.p[i]), num(flow.h[i]), num(flow.a[i]), region(flow.region(i)));
    }
    run.write(out, &csv)?;
    let res = laminar_residual(&flow, &cfg.params);
    run.check("bed_condition", res.bed <= 1e-12, format!("|H(p0)| = {:e}", res.bed));
    run.check("depth_constraint", res.lid <= 1e-10, format!("|H(0) - H(p1) - ell| = {:e}", res.lid));
    let min_a = flow.a.iter().chain([&flow.a_water]).cloned().fold(f64::INFINITY, f64::min);
    run.check("no_stagnation", min_a > 0.0, format!("min a = {min_a:e}"));
    run.data = json!({
        "lambda": lambda,
        "Q": flow.q,
        "depth": flow.depth,
        "gamma_rel_c": rc.c,
        "residual": {"air": res.air, "water": res.water, "jump": res.jump, "bed": res.bed, "lid": res.lid},
    });
    Ok(())
}

/// Worker threads for `spectrum`: available parallelism capped by
/// `WAVEBIF_THREADS`.
fn worker_threads() -> usize {
    let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let cap = std::env::var("WAVEBIF_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    cap.map_or(avail, |c| c.min(avail)).max(1)
}

struct SpectrumSample {
    lambda: f64,
    nu: f64,
    n_negative: Option<usize>,
    error: Option<String>,
}

fn spectrum_sample(params: &PhysicalParams, grid: &GridD, lambda: f64) -> SpectrumSample {
    let l0 = lambda0(params).0;
    let res = if lambda > l0 {
        pencil_at(params, lambda, grid).and_then(|pencil| solve_pencil(&pencil))
    } else {
        Err(crate::spectral1d::SpectralError::NotInPositiveRegime { lambda, lambda0: l0 })
    };
    match res {
        Ok(pairs) => {
            let neg: Vec<f64> = pairs.iter().filter(|p| p.kind == PontryaginType::Negative).map(|p| p.mu).collect();
            let nu = if neg.len() == 1 { neg[0] } else { f64::NAN };
            SpectrumSample { lambda, nu, n_negative: Some(neg.len()), error: None }
        }
        Err(e) => SpectrumSample { lambda, nu: f64::NAN, n_negative: None, error: Some(e.to_string()) },
    }
}

fn cmd_spectrum(run: &mut Run, config: &Path, lo: f64, hi: f64, samples: usize, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(config).map_err(Failure::Config)?;
    run.report_path = Some(sibling_report(out));
    if samples == 0 || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Failure::Config(format!("need samples >= 1 and lambda-min <= lambda-max, got {samples}, {lo}, {hi}")));
    }
    let (grid, _) = setup(run, &cfg)?;
    let lambdas: Vec<f64> = (0..samples)
        .map(|i| if samples == 1 { lo } else { lo + (hi - lo) * i as f64 / (samples - 1) as f64 })
        .collect();
    let threads = worker_threads().min(samples);
    let chunk = samples.div_ceil(threads);
    let params = &cfg.params;
    let grid_ref = &grid;
    let results: Vec<SpectrumSample> = std::thread::scope(|scope| {
        let handles: Vec<_> = lambdas
            .chunks(chunk)
            .map(|ls| scope.spawn(move || ls.iter().map(|&l| spectrum_sample(params, grid_ref, l)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("spectrum worker panicked")).collect()
    });
    let mut csv = String::from("lambda,nu,n_negative_type\n");
    for s in &results {
        let n = s.n_negative.map_or("NaN".to_string(), |n| n.to_string());
        csv += &format!("{},{},{}\n", num(s.lambda), num(s.nu), n);
    }
    run.write(out, &csv)?;
    let failed: Vec<String> = results.iter().filter_map(|s| s.error.as_ref().map(|e| format!("lambda = {}: {e}", s.lambda))).collect();
    run.check("all_samples_solved", failed.is_empty(), if failed.is_empty() { "ok".into() } else { failed.join("; ") });
    run.data = json!({ "threads": threads, "samples": samples });
    Ok(())
}

fn cmd_find_lambda_star(run: &mut Run, config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(config).map_err(Failure::Config)?;
    run.report_path = Some(sibling_report(out));
    let (grid, rc) = setup(run, &cfg)?;
    let star = find_lambda_star(&cfg.params, &rc, &grid, cfg.lambda_star.interval).map_err(Failure::numeric)?;
    let k = grid.iface();
    let mut csv = String::from("p,phi,region\n");
    for (i, (&p, &phi)) in star.p.iter().zip(&star.mode).enumerate() {
        if i == k {
            csv += &format!("{},{},water\n", num(p), num(phi));
        }
        csv += &format!("{},{},{}\n", num(p), num(phi), region(grid.side_of_row(i)));
    }
    run.write(out, &csv)?;
    let t = &cfg.tolerances;
    let gap = (star.nu + 1.0).abs();
    run.check("nu_equals_minus_one", gap <= t.root, format!("|nu(lambda*) + 1| = {gap:e}"));
    run.check("eigen_residual", star.pair.residual <= t.eig, format!("relative residual {:e}", star.pair.residual));
    run.data = json!({
        "lambda_star": star.lambda,
        "nu": star.nu,
        "lambda0": star.lambda0,
        "q_prime": star.q_prime,
        "interval": [star.interval.0, star.interval.1],
        "pontryagin_norm": star.pair.pontryagin_norm,
    });
    Ok(())
}

fn point_file(k: usize) -> String {
    format!("point_{k}.csv")
}

fn cmd_branch(run: &mut Run, config: &Path, sigma: Option<f64>, s_max: f64, ds: f64, out: &Path) -> Result<(), Failure> {
    let mut cfg = load_config(config).map_err(Failure::Config)?;
    if let Some(s) = sigma {
        cfg.params.sigma = s;
        let bad = cfg.validate();
        if !bad.is_empty() {
            return Err(Failure::Config(bad.join("; ")));
        }
    }
    fs::create_dir_all(out).map_err(|e| Failure::Config(format!("cannot create {}: {e}", out.display())))?;
    run.report_path = Some(out.join("report.json"));
    let (grid, rc) = setup(run, &cfg)?;
    let star = find_lambda_star(&cfg.params, &rc, &grid, cfg.lambda_star.interval).map_err(Failure::numeric)?;
    let opts = NewtonOptions { tol: cfg.tolerances.newton, ..Default::default() };
    let branch = continue_branch_with(&cfg.params, &rc, &star, &grid, s_max, ds, opts).map_err(Failure::numeric)?;
    let mut points = Vec::with_capacity(branch.points.len());
    for (k, pt) in branch.points.iter().enumerate() {
        let file = point_file(k);
        let nodes = pt.h.to_nodes();
        let mut csv = String::from("q,p,h\n");
        for i in 0..grid.np_total() {
            for j in 0..grid.nq {
                csv += &format!("{},{},{}\n", num(grid.q(j)), num(grid.p(i)), num(nodes[i * grid.nq + j]));
            }
        }
        run.write(&out.join(&file), &csv)?;
        points.push(json!({
            "s": pt.s,
            "lambda": pt.lambda,
            "Q": pt.q,
            "residual": pt.newton_residual,
            "iterations": pt.newton_iterations,
            "min_hp": pt.min_hp,
            "file": file,
        }));
    }
    let worst = branch.points.iter().map(|p| p.newton_residual).fold(0.0, f64::max);
    run.check("newton_converged", worst <= cfg.tolerances.newton, format!("max residual {worst:e}"));
    let min_hp = branch.points.iter().map(|p| p.min_hp).fold(f64::INFINITY, f64::min);
    run.check("no_stagnation", min_hp > 0.0, format!("min h_p = {min_hp:e}"));
    run.check("simple_kernel", branch.null.kernel_dim == 1, format!("kernel dimension {}", branch.null.kernel_dim));
    let tr = &branch.transversality;
    run.check("transversality", tr.closed_form < 0.0 && tr.pairing < 0.0, format!("Xi = {:e}", tr.pairing));
    let doc = json!({
        "config": cfg,
        "config_hash": run.hash,
        "lambda_star": branch.lambda_star,
        "lambda0": star.lambda0,
        "q_prime": star.q_prime,
        "null": {
            "kernel_dim": branch.null.kernel_dim,
            "angle": branch.null.angle,
            "singular_values": branch.null.singular_values,
            "method": format!("{:?}", branch.null.method),
            "profile": branch.null.profile,
        },
        "transversality": {
            "closed_form": tr.closed_form,
            "pairing": tr.pairing,
            "relative_gap": tr.relative_gap,
        },
        "points": points,
    });
    run.write(&out.join("branch.json"), &serde_json::to_string_pretty(&doc).expect("branch serializes"))?;
    run.data = json!({ "lambda_star": branch.lambda_star, "points": branch.points.len() });
    Ok(())
}

/// Reads `q,p,h` rows back into a field on `grid`.
pub fn read_point_csv(path: &Path, grid: &GridD) -> Result<FieldOnD, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("q,p,h") {
        return Err(format!("{}: expected header q,p,h", path.display()));
    }
    let mut h = Vec::with_capacity(grid.np_total() * grid.nq);
    for (n, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        let v = match cols.as_slice() {
            [_, _, v] => v.trim().parse::<f64>().map_err(|e| format!("{}:{}: {e}", path.display(), n + 2))?,
            _ => return Err(format!("{}:{}: expected 3 columns", path.display(), n + 2)),
        };
        h.push(v);
    }
    FieldOnD::from_nodes(grid, &h).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_reconstruct(run: &mut Run, point: &Path, out: &Path) -> Result<(), Failure> {
    let dir = point.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let meta_path = dir.join("branch.json");
    let meta: Value = fs::read_to_string(&meta_path)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
        .map_err(|e| Failure::Config(format!("{}: {e}", meta_path.display())))?;
    let cfg: RunConfig = serde_json::from_value(meta["config"].clone())
        .map_err(|e| Failure::Config(format!("{}: config: {e}", meta_path.display())))?;
    run.report_path = Some(sibling_report(out));
    let (grid, rc) = setup(run, &cfg)?;
    let name = point.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let entry = meta["points"]
        .as_array()
        .and_then(|ps| ps.iter().find(|p| p["file"] == name.as_str()))
        .ok_or_else(|| Failure::Config(format!("{name} is not listed in {}", meta_path.display())))?;
    let field = |key: &str| entry[key].as_f64().ok_or_else(|| Failure::Config(format!("point entry lacks {key}")));
    let (s, lambda, q) = (field("s")?, field("lambda")?, field("Q")?);
    let h = read_point_csv(point, &grid).map_err(Failure::Config)?;
    let flow = laminar_flow(&cfg.params, &rc, lambda, &grid).map_err(Failure::numeric)?;
    let m_nodes: Vec<f64> = h.to_nodes().iter().enumerate().map(|(n, v)| v - flow.h[n / grid.nq]).collect();
    let bp = BranchPoint {
        s,
        lambda,
        q,
        m: FieldOnD::from_nodes(&grid, &m_nodes).map_err(Failure::numeric)?,
        h,
        newton_residual: field("residual")?,
        newton_iterations: entry["iterations"].as_u64().unwrap_or(0) as usize,
        min_hp: field("min_hp")?,
    };
    let wave = reconstruct(&cfg.params, &bp).map_err(Failure::numeric)?;
    let nq = grid.nq;
    let k = grid.iface();
    let mut csv = String::from("x,p,region,y,eta,u_minus_c,v\n");
    for (layer, first_row, side) in [(&wave.water, 0, Side::Water), (&wave.air, k, Side::Air)] {
        for r in 0..layer.rows {
            for j in 0..nq {
                let n = r * nq + j;
                csv += &format!(
                    "{},{},{},{},{},{},{}\n",
                    num(wave.x[j]),
                    num(grid.p(first_row + r)),
                    region(side),
                    num(layer.y[n]),
                    num(wave.eta[j]),
                    num(layer.u_minus_c[n]),
                    num(layer.v[n])
                );
            }
        }
    }
    run.write(out, &csv)?;
    let bed = wave.water.v[..nq].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lid = wave.air.v[(wave.air.rows - 1) * nq..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    run.check("kinematic_bed", bed <= 1e-12, format!("max |v| on the bed {bed:e}"));
    run.check("kinematic_lid", lid <= 1e-12, format!("max |v| on the lid {lid:e}"));
    run.check(
        "dynamic_condition",
        wave.bernoulli_jump_residual <= 1e-3,
        format!("max Bernoulli jump residual {:e}", wave.bernoulli_jump_residual),
    );
    run.data = json!({ "s": s, "lambda": lambda, "Q": q, "depth": wave.depth, "bernoulli_jump_residual": wave.bernoulli_jump_residual });
    Ok(())
}

fn cmd_verify(run: &mut Run, case: VerifyCase, config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(config).map_err(Failure::Config)?;
    run.report_path = Some(out.to_path_buf());
    run.hash = Some(cfg.hash());
    let grid = cfg.grid_d().map_err(Failure::Config)?;
    let e = &cfg.elliptic;
    match case {
        VerifyCase::MaxPrinciple => {
            let reports = max_principle_suite(&grid, e.seed, e.samples).map_err(Failure::numeric)?;
            for (i, r) in reports.iter().enumerate() {
                run.check(
                    &format!("max_principle[{i}]"),
                    r.passed,
                    format!("sup u = {:e}, bound = {:e}, C = {:e}", r.sup_u, r.bound, r.constant),
                );
            }
            run.data = json!({ "reports": reports });
        }
        VerifyCase::Fredholm => {
            let r = fredholm_suite(&grid, e.seed, e.samples).map_err(Failure::numeric)?;
            run.check("kernel_free", r.kernel_dim == 0, format!("kernel dimension {}", r.kernel_dim));
            let worst = r.residuals.iter().cloned().fold(0.0, f64::max);
            let solved = r.residuals.len() == e.samples && worst <= e.solve_tol;
            run.check("unique_solvability", solved, format!("{} solves, max relative residual {worst:e}", r.residuals.len()));
            run.check(
                "singular_detected",
                r.singular_detected,
                format!("constructed singular operator, kernel dimension {}", r.singular_kernel_dim),
            );
            run.data = json!({ "report": r });
        }
        VerifyCase::Homotopy => {
            let r = homotopy_suite(&grid, e.seed, e.homotopy_steps).map_err(Failure::numeric)?;
            run.check("homotopy_regular", r.max_cond < SINGULAR_COND, format!("max condition estimate {:e}", r.max_cond));
            run.check("homotopy_endpoint", r.difference_to_direct <= e.solve_tol, format!("|u_1 - u| = {:e}", r.difference_to_direct));
            run.data = json!({ "report": r });
        }
        VerifyCase::Manufactured => {
            let np = cfg.grid.np_water.min(cfg.grid.np_air);
            let nps = [np, 2 * np - 1, 4 * np - 3];
            let mut studies = Vec::new();
            for (alpha, sign) in [
                (1.0, WentzellSign::Standard),
                (-1.0, WentzellSign::Standard),
                (1.0, WentzellSign::Switched),
                (-1.0, WentzellSign::Switched),
            ] {
                let c = ManufacturedCase::new(alpha, sign).on(cfg.params.p0, cfg.params.p1);
                let st = convergence_study(&c, cfg.grid.nq, &nps).map_err(Failure::numeric)?;
                let ok = st.orders.iter().all(|o| (o - 2.0).abs() <= e.order_tol);
                let label = format!("second_order[alpha={alpha:+},{sign:?}]").to_lowercase();
                run.check(&label, ok, format!("errors {:?}, orders {:?}", st.errors, st.orders));
                studies.push(json!({ "alpha": alpha, "sign": sign, "study": st }));
            }
            run.data = json!({ "studies": studies });
        }
    }
    run.data["case"] = json!(case);
    Ok(())
}
