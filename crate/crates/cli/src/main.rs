use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use conetree::green::{max_residual, solve, solve_boundary};
use conetree::io::{read_json, read_matrix, Cell, Csv, Report};
use conetree::operator::{realize_on_tree, OperatorKind, OperatorSpec};
use conetree::oracle::{assemble_matrix, Resolvent};
use conetree::radial::{solve_radial, RadialOptions, RadialPotentialFile};
use conetree::random::{build_two_sphere_context, estimate_deviation, kappa_survey, PotentialSpec, Sampler, SamplerOptions};
use conetree::scan::{linear_grid, scan_bands, ScanOptions};
use conetree::spectral::{density, extend_to_full_green, off_diagonal_green, truncated_green_on_tree, LeafSeed};
use conetree::tree::check_axioms;
use conetree::{Complex64, Error, OperatorParams, SolverOptions, SubstitutionMatrix, TruncatedTree};

const VERSION: &str = env!("CONETREE_VERSION");

#[derive(Parser)]
#[command(name = "conetree", version = VERSION, about = "Green functions and spectra of operators on trees of finite cone type")]
struct Cli {
    /// Worker threads for grids and samples.
    #[arg(long, global = true, env = "CONETREE_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the substitution matrix axioms.
    Check(CheckArgs),
    /// Reduced truncated Green function at one spectral point.
    Solve(SolveArgs),
    /// Band scan along the real axis.
    Scan(ScanArgs),
    /// Density of states at fixed eta.
    Density(DensityArgs),
    /// Layered Green functions for a radial potential.
    Radial(RadialArgs),
    /// Monte Carlo deviation statistics for random potentials.
    Random(RandomArgs),
    /// Survey of the averaged contraction coefficient.
    Kappa(KappaArgs),
    /// Recursion against a direct solve on a truncated tree.
    Oracle(OracleArgs),
}

#[derive(Args, Serialize)]
struct Output {
    /// Write the main output here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct OperatorArgs {
    /// Substitution matrix JSON.
    #[arg(long)]
    matrix: PathBuf,
    /// Operator JSON; overrides --kind.
    #[arg(long)]
    operator: Option<PathBuf>,
    /// adjacency, laplacian or normalized.
    #[arg(long, default_value = "adjacency")]
    kind: String,
}

impl OperatorArgs {
    fn load(&self) -> anyhow::Result<(SubstitutionMatrix, OperatorParams)> {
        let m = read_matrix(&self.matrix).with_context(|| format!("reading {}", self.matrix.display()))?;
        let spec = match &self.operator {
            Some(path) => read_json::<OperatorSpec>(path).with_context(|| format!("reading {}", path.display()))?,
            None => {
                let kind: OperatorKind = serde_json::from_value(serde_json::Value::String(self.kind.clone()))
                    .map_err(|_| Error::Invalid(format!("unknown operator kind {:?}", self.kind)))?;
                if kind == OperatorKind::Custom {
                    return Err(Error::Invalid("custom operators need --operator".into()).into());
                }
                OperatorSpec::kind(kind)
            }
        };
        let p = spec.build(&m)?;
        Ok((m, p))
    }
}

fn label_index(m: &SubstitutionMatrix, name: &Option<String>) -> anyhow::Result<usize> {
    match name {
        None => Ok(0),
        Some(n) => Ok(m
            .label_index(n)
            .ok_or_else(|| Error::Invalid(format!("unknown label {n:?}")))?),
    }
}

fn solver_options(eta_min: Option<f64>, tau: Option<f64>) -> SolverOptions {
    let mut opts = SolverOptions::default();
    if let Some(e) = eta_min {
        opts.eta_min = e;
    }
    if let Some(t) = tau {
        opts.tau = t;
    }
    opts
}

fn emit(out: &Output, text: &str) -> anyhow::Result<()> {
    write_to(out.output.as_deref(), text)
}

fn write_to(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

fn report<C: Serialize, R: Serialize>(command: &str, config: &C, result: &R) -> anyhow::Result<String> {
    Ok(Report {
        version: VERSION,
        command,
        config,
        result,
    }
    .to_json()?)
}

#[derive(Args, Serialize)]
struct CheckArgs {
    matrix: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    out: Output,
}

fn check(a: &CheckArgs) -> anyhow::Result<()> {
    let m = read_matrix(&a.matrix).with_context(|| format!("reading {}", a.matrix.display()))?;
    emit(&a.out, &report("check", a, &check_axioms(&m))?)
}

#[derive(Args, Serialize)]
struct SolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    op: OperatorArgs,
    #[arg(long = "E", allow_hyphen_values = true)]
    #[serde(rename = "E")]
    e: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    /// Continue to the real axis.
    #[arg(long)]
    boundary: bool,
    #[arg(long)]
    eta_min: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    out: Output,
}

#[derive(Serialize)]
struct SolveResult {
    labels: Vec<String>,
    gamma: Vec<Complex64>,
    eta: f64,
    real_limit: bool,
    residual: f64,
}

fn solve_cmd(a: &SolveArgs) -> anyhow::Result<()> {
    let (m, p) = a.op.load()?;
    let opts = solver_options(a.eta_min, a.tau);
    let (gamma, eta, real_limit) = if a.boundary || a.eta == 0.0 {
        let b = solve_boundary(&p, a.e, &opts)?;
        (b.gamma, b.eta, b.real_limit)
    } else {
        (solve(&p, Complex64::new(a.e, a.eta), &opts)?, a.eta, false)
    };
    let result = SolveResult {
        labels: m.labels().to_vec(),
        residual: max_residual(&p, Complex64::new(a.e, eta), &gamma),
        gamma: gamma.components,
        eta,
        real_limit,
    };
    emit(&a.out, &report("solve", a, &result)?)
}

#[derive(Args, Serialize)]
struct ScanArgs {
    #[command(flatten)]
    #[serde(flatten)]
    op: OperatorArgs,
    #[arg(long, allow_hyphen_values = true)]
    emin: f64,
    #[arg(long, allow_hyphen_values = true)]
    emax: f64,
    #[arg(long)]
    points: usize,
    #[arg(long)]
    eta_min: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    align_tol: f64,
    /// Densities `Im Gamma_j / pi` per grid point.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    out: Output,
}

#[derive(Serialize)]
struct ScanResult {
    points: usize,
    sigma1_intervals: Vec<[f64; 2]>,
    sigma0_candidates: Vec<f64>,
    sigma0_refined: Vec<f64>,
    failures: Vec<conetree::scan::ScanFailure>,
    max_residual: f64,
}

fn scan_cmd(a: &ScanArgs) -> anyhow::Result<()> {
    let (m, p) = a.op.load()?;
    let grid = linear_grid(a.emin, a.emax, a.points)?;
    let opts = ScanOptions {
        solver: solver_options(a.eta_min, a.tau),
        align_tol: a.align_tol,
        ..ScanOptions::default()
    };
    let scan = scan_bands(&p, &grid, &opts)?;
    if let Some(path) = &a.csv {
        let mut header = vec!["E".to_string()];
        header.extend(m.labels().iter().map(|l| format!("rho_{l}")));
        let mut csv = Csv::new(header);
        for (e, im) in scan.grid.iter().zip(&scan.im_gamma) {
            let mut row = vec![Cell::Num(*e)];
            row.extend(im.iter().map(|x| Cell::Num(x / std::f64::consts::PI)));
            csv.push(row)?;
        }
        write_to(Some(path), &csv.render())?;
    }
    let result = ScanResult {
        points: scan.grid.len(),
        sigma1_intervals: scan.sigma1_intervals,
        sigma0_candidates: scan.sigma0_candidates,
        sigma0_refined: scan.sigma0_refined,
        failures: scan.failures,
        max_residual: scan.max_residual,
    };
    emit(&a.out, &report("scan", a, &result)?)
}

fn parse_grid(s: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Invalid(format!("grid {s:?} is not emin:emax:points")).into());
    }
    let bad = |_| Error::Invalid(format!("grid {s:?} is not emin:emax:points"));
    let emin: f64 = parts[0].parse().map_err(bad)?;
    let emax: f64 = parts[1].parse().map_err(bad)?;
    let points: usize = parts[2]
        .parse()
        .map_err(|_| Error::Invalid(format!("grid {s:?} is not emin:emax:points")))?;
    Ok(linear_grid(emin, emax, points)?)
}

#[derive(Args, Serialize)]
struct DensityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    op: OperatorArgs,
    #[arg(long)]
    eta: f64,
    /// `emin:emax:points`.
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
    /// Label of the root; defaults to the first label.
    #[arg(long)]
    root_label: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    out: Output,
}

fn density_cmd(a: &DensityArgs) -> anyhow::Result<()> {
    let (m, p) = a.op.load()?;
    let root = label_index(&m, &a.root_label)?;
    let grid = parse_grid(&a.grid)?;
    let rho = density(&p, root, &grid, a.eta, &SolverOptions::default())?;
    let mut csv = Csv::new(["E", "rho"]);
    for (e, r) in grid.iter().zip(&rho) {
        csv.push(vec![(*e).into(), (*r).into()])?;
    }
    emit(&a.out, &csv.render())
}

#[derive(Args, Serialize)]
struct RadialArgs {
    #[command(flatten)]
    #[serde(flatten)]
    op: OperatorArgs,
    /// Potential JSON `{"horizon", "values": [[s, label, v], ...], "default"}`.
    #[arg(long)]
    potential: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[arg(long = "E", allow_hyphen_values = true)]
    #[serde(rename = "E")]
    e: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    seed_tol: f64,
    #[command(flatten)]
    #[serde(flatten)]
    out: Output,
}

fn radial_cmd(a: &RadialArgs) -> anyhow::Result<()> {
    let (m, p) = a.op.load()?;
    let file: RadialPotentialFile = read_json(&a.potential).with_context(|| format!("reading {}", a.potential.display()))?;
    let v = file.resolve(&m)?;
    let opts = RadialOptions {
        n_layers: a.layers,
        seed_tol: a.seed_tol,
        ..RadialOptions::default()
    };
    let sol = solve_radial(&p, Complex64::new(a.e, a.eta), a.lambda, &v, &opts)?;
    let mut header = vec!["s".to_string()];
    for l in m.labels() {
        header.push(format!("re_{l}"));
        header.push(format!("im_{l}"));
    }
    let mut csv = Csv::new(header);
    for (s, layer) in sol.layers.iter().enumerate() {
        let mut row = vec![Cell::from(s)];
        for g in &layer.components {
            row.push(g.re.into());
            row.push(g.im.into());
        }
        csv.push(row)?;
    }
    emit(&a.out, &csv.render())
}

#[derive(Args, Serialize)]
struct RandomArgs {
    #[command(flatten)]
    #[serde(flatten)]
    op: OperatorArgs,
    /// Potential spec JSON; its lambda and seed are replaced by the flags.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    lambdas: Vec<f64>,
    #[arg(long)]
    samples: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long = "E", allow_hyphen_values = true)]
    #[serde(rename = "E")]
    e: f64,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    #[arg(long, default_value_t = 10)]
    depth: usize,
    #[arg(long)]
    root_label: Option<String>,
    #[arg(long, default_value_t = 1e-3)]
    depth_tol: f64,
    #[command(flatten)]
    #[serde(flatten)]
    out: Output,
}

fn random_cmd(a: &RandomArgs) -> anyhow::Result<()> {
    let (m, p) = a.op.load()?;
    let root = label_index(&m, &a.root_label)?;
    let base: PotentialSpec = read_json(&a.spec).with_context(|| format!("reading {}", a.spec.display()))?;
    let tree = TruncatedTree::build(&m, root, a.depth)?;
    let z = Complex64::new(a.e, a.eta);
    let opts = SamplerOptions {
        depth_tol: a.depth_tol,
        ..SamplerOptions::default()
    };
    let mut csv = Csv::new([
        "lambda",
        "samples",
        "mean",
        "std_err",
        "ci95_lo",
        "ci95_hi",
        "green_p_mean",
        "green_p_std_err",
        "seed_sensitivity",
    ]);
    for &lam in &a.lambdas {
        let spec = PotentialSpec {
            lambda: lam,
            seed: a.seed,
            ..base.clone()
        };
        let sampler = Sampler::new(&p, &tree, &spec, z, &opts)?;
        let st = estimate_deviation(&sampler, a.p, a.samples)?;
        csv.push(vec![
            lam.into(),
            st.samples.into(),
            st.root.mean.into(),
            st.root.std_err.into(),
            st.root.ci95[0].into(),
            st.root.ci95[1].into(),
            st.green_p.mean.into(),
            st.green_p.std_err.into(),
            st.seed_sensitivity.into(),
        ])?;
    }
    emit(&a.out, &csv.render())
}

#[derive(Args, Serialize)]
struct KappaArgs {
    #[command(flatten)]
    #[serde(flatten)]
    op: OperatorArgs,
    #[arg(long = "R")]
    #[serde(rename = "R")]
    r: f64,
    #[arg(long)]
    samples: usize,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long = "E", allow_hyphen_values = true)]
    #[serde(rename = "E")]
    e: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    root_label: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    out: Output,
}

fn kappa_cmd(a: &KappaArgs) -> anyhow::Result<()> {
    let (m, p) = a.op.load()?;
    let root = label_index(&m, &a.root_label)?;
    let ctx = build_two_sphere_context(&p, &m, root, Complex64::new(a.e, a.eta), &SolverOptions::default())?;
    let survey = kappa_survey(&ctx, a.lambda, a.r, a.samples, a.p, a.seed)?;
    emit(&a.out, &report("kappa", a, &survey)?)
}

#[derive(Args, Serialize)]
struct OracleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    op: OperatorArgs,
    #[arg(long)]
    depth: usize,
    /// `re,im`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    z: Vec<f64>,
    #[arg(long)]
    root_label: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    out: Output,
}

#[derive(Serialize)]
struct OracleResult {
    vertices: usize,
    recursion_root: Complex64,
    dense_root: Complex64,
    root_abs_diff: f64,
    /// Pairs `(x, y)` on the path from the root to the last vertex.
    offdiag_pairs: usize,
    offdiag_max_abs_diff: f64,
    diag_max_abs_diff: f64,
    factor_nonzeros: usize,
}

fn oracle_cmd(a: &OracleArgs) -> anyhow::Result<()> {
    let (m, p) = a.op.load()?;
    let root = label_index(&m, &a.root_label)?;
    let [re, im] = a.z[..] else {
        return Err(Error::Invalid("--z takes re,im".into()).into());
    };
    let z = Complex64::new(re, im);
    if !(z.im > 0.0) {
        return Err(Error::Invalid(format!("oracle needs Im z > 0, got {z}")).into());
    }
    let tree = TruncatedTree::build(&m, root, a.depth)?;
    let vo = realize_on_tree(&p, &tree)?;
    let mat = assemble_matrix(&vo)?;
    let lu = Resolvent::new(&mat, z)?;
    let gamma = truncated_green_on_tree(&vo, z, LeafSeed::Free);
    let full = extend_to_full_green(&vo, &gamma)?;
    let idx = |v| mat.index(v);
    let dense_root = lu.entry(idx(tree.root()), idx(tree.root()));
    let last = tree.len() - 1;
    let path = tree.path_from_root(last);
    let column = {
        let mut b = vec![Complex64::new(0.0, 0.0); tree.len()];
        b[idx(last)] = Complex64::new(1.0, 0.0);
        lu.solve(&b)
    };
    let mut off = 0.0f64;
    let mut diag = 0.0f64;
    for &x in &path {
        let got = off_diagonal_green(&vo, &gamma, &full, x, last)?;
        off = off.max((got - column[idx(x)]).norm());
        diag = diag.max((full[x] - lu.entry(idx(x), idx(x))).norm());
    }
    let result = OracleResult {
        vertices: tree.len(),
        recursion_root: gamma[tree.root()],
        dense_root,
        root_abs_diff: (gamma[tree.root()] - dense_root).norm(),
        offdiag_pairs: path.len(),
        offdiag_max_abs_diff: off,
        diag_max_abs_diff: diag,
        factor_nonzeros: lu.nonzeros(),
    };
    emit(&a.out, &report("oracle", a, &result)?)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::NoConvergence { .. } | Error::ZeroDenominator { .. } | Error::DepthInsufficient { .. }) => 3,
        Some(Error::SizeCap { .. }) => 4,
        _ => 2,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Invalid("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    match &cli.command {
        Command::Check(a) => check(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Scan(a) => scan_cmd(a),
        Command::Density(a) => density_cmd(a),
        Command::Radial(a) => radial_cmd(a),
        Command::Random(a) => random_cmd(a),
        Command::Kappa(a) => kappa_cmd(a),
        Command::Oracle(a) => oracle_cmd(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
