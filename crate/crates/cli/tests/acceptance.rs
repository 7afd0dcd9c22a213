//! Acceptance suite. Runs every criterion, prints one line each, and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use conetree::green::{closed_form_regular, gm_bounds, solve, solve_boundary};
use conetree::operator::{build_adjacency, realize_on_tree, OperatorParams};
use conetree::oracle::{assemble_matrix, Resolvent};
use conetree::radial::{solve_radial, RadialOptions, RadialPotential};
use conetree::random::{
    build_two_sphere_context, estimate_deviation, kappa, kappa_survey, sample_on_gamma_sphere, two_step_bound, z0_z1, Distribution,
    PotentialSpec, Sampler, SamplerOptions,
};
use conetree::scan::{linear_grid, scan_bands, ScanOptions};
use conetree::spectral::{density, extend_to_full_green, off_diagonal_green, trapezoid, truncated_green_on_tree, LeafSeed};
use conetree::tree::check_axioms;
use conetree::{Complex64, SolverOptions, SubstitutionMatrix, TruncatedTree};
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn matrix(rows: Vec<Vec<u32>>) -> SubstitutionMatrix {
    SubstitutionMatrix::from_rows(rows).unwrap()
}

fn m1() -> SubstitutionMatrix {
    matrix(vec![vec![1, 2], vec![1, 1]])
}

fn m2() -> SubstitutionMatrix {
    matrix(vec![vec![1, 42], vec![1, 1]])
}

fn regular_closed_form() -> Outcome {
    let start = Instant::now();
    let opts = SolverOptions::default();
    let mut worst = 0.0f64;
    for k in [2u32, 3, 5] {
        for w in [0.0, 1.0] {
            let p = OperatorParams::new(vec![vec![k as f64]], vec![w]).unwrap();
            let half = 2.0 * (k as f64).sqrt();
            for i in 0..200 {
                let e = w - half + 2.0 * half * (i as f64 + 0.5) / 200.0;
                let got = solve_boundary(&p, e, &opts).unwrap().gamma[0];
                let want = closed_form_regular(k as f64, w, Complex64::new(e, 0.0)).unwrap();
                worst = worst.max((got - want).norm());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst < 1e-8 && secs < 5.0, format!("max error {worst:.2e}, {secs:.2} s"))
}

fn quartic_residual() -> Outcome {
    let p = build_adjacency(&m1());
    let opts = SolverOptions::default();
    let mut worst = 0.0f64;
    for i in 0..500 {
        let z = Complex64::new(-3.1 + 6.2 * i as f64 / 499.0, 1e-6);
        let x = solve(&p, z, &opts).unwrap()[0];
        let r = x.powi(4) + 2.0 * z * x.powi(3) + (z * z - 4.0) * x * x - 1.0;
        worst = worst.max(r.norm());
    }
    outcome(worst < 1e-7, format!("max residual {worst:.2e} over 500 energies"))
}

fn three_bands() -> Outcome {
    let p = build_adjacency(&m2());
    let opts = ScanOptions {
        solver: SolverOptions {
            eta_min: 1e-7,
            tau: 1e-4,
            ..SolverOptions::default()
        },
        ..ScanOptions::default()
    };
    let start = Instant::now();
    let scan = scan_bands(&p, &linear_grid(-15.0, 15.0, 3001).unwrap(), &opts).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let n = scan.sigma1_intervals.len();
    let disjoint = scan.sigma1_intervals.windows(2).all(|w| w[0][1] < w[1][0]);
    outcome(
        n == 3 && disjoint && secs < 60.0,
        format!("{n} intervals {:?}, {secs:.2} s", scan.sigma1_intervals),
    )
}

fn sigma0() -> Outcome {
    let p = build_adjacency(&m1());
    let mut ok = true;
    let mut found = Vec::new();
    for points in [801, 800, 2001] {
        let grid = linear_grid(-4.0, 4.0, points).unwrap();
        let step = grid[1] - grid[0];
        let scan = scan_bands(&p, &grid, &ScanOptions::default()).unwrap();
        let want: Vec<f64> = grid.iter().copied().filter(|e| e.abs() < step).collect();
        let got = &scan.sigma0_candidates;
        ok &= !got.is_empty() && got.iter().all(|e| want.contains(e));
        found.push(format!("{points} points: {got:?} (refined {:?})", scan.sigma0_refined));
    }
    outcome(ok, found.join("; "))
}

fn random_params(rng: &mut SmallRng) -> OperatorParams {
    loop {
        let n = rng.random_range(1..=3usize);
        let mut rows: Vec<Vec<u32>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(0..=3)).collect()).collect();
        for (j, row) in rows.iter_mut().enumerate() {
            row[j] = row[j].max(if n == 1 { 2 } else { 1 });
        }
        let m = matrix(rows);
        if !check_axioms(&m).all() {
            continue;
        }
        let offdiag = (0..n)
            .map(|j| {
                (0..n)
                    .map(|k| if m.entry(j, k) > 0 { rng.random_range(0.1..3.0) } else { 0.0 })
                    .collect()
            })
            .collect();
        let diag = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        return OperatorParams::new(offdiag, diag).unwrap();
    }
}

fn bounds_and_herglotz() -> Outcome {
    let mut rng = SmallRng::seed_from_u64(20240501);
    let opts = SolverOptions::default();
    let (mut violations, mut failures, mut literal) = (0, 0, 0);
    for _ in 0..10_000 {
        let p = random_params(&mut rng);
        let z = Complex64::new(rng.random_range(-6.0..6.0), 10f64.powf(rng.random_range(-6.0..0.0)));
        let g = match solve(&p, z, &opts) {
            Ok(g) => g,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        for (j, (lo, hi)) in gm_bounds(&p, z).into_iter().enumerate() {
            let a = g[j].norm();
            if !(g[j].im > 0.0) || a < lo * (1.0 - 1e-12) || a > hi * (1.0 + 1e-12) {
                violations += 1;
            }
            // lower bound with sqrt(m_jj) in every term of the sum
            let s: f64 = p.offdiag[j].iter().sum::<f64>() / p.offdiag[j][j].sqrt();
            if a < (1.0 - 1e-12) / (z.norm() + p.diag[j].abs() + s) {
                literal += 1;
            }
        }
    }
    outcome(
        violations == 0 && failures == 0,
        format!(
            "{violations} violations, {failures} failed solves in 10000 draws \
             (lower bound with sqrt(m_jj) throughout would be violated {literal} times)"
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let m = matrix(vec![vec![2]]);
    let tree = TruncatedTree::build(&m, 0, 12).unwrap();
    let vo = realize_on_tree(&build_adjacency(&m), &tree).unwrap();
    let mat = assemble_matrix(&vo).unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for z in [Complex64::new(0.3, 0.5), Complex64::new(0.0, 0.5)] {
        let lu = Resolvent::new(&mat, z).unwrap();
        let gamma = truncated_green_on_tree(&vo, z, LeafSeed::Free);
        let full = extend_to_full_green(&vo, &gamma).unwrap();
        let root_err = (lu.entry(mat.index(0), mat.index(0)) - gamma[0]).norm();
        let y = tree.len() - 1;
        let mut b = vec![Complex64::new(0.0, 0.0); tree.len()];
        b[mat.index(y)] = Complex64::new(1.0, 0.0);
        let col = lu.solve(&b);
        let off_err = tree
            .path_from_root(y)
            .into_iter()
            .map(|x| (off_diagonal_green(&vo, &gamma, &full, x, y).unwrap() - col[mat.index(x)]).norm())
            .fold(0.0, f64::max);
        ok &= root_err < 1e-6 && off_err < 1e-6;
        details.push(format!("z={z}: root {root_err:.1e}, path {off_err:.1e}"));
    }
    outcome(ok, format!("{} vertices; {}", tree.len(), details.join("; ")))
}

fn spectral_mass() -> Outcome {
    let opts = SolverOptions::default();
    let mut ok = true;
    let mut details = Vec::new();
    for (name, m, edge) in [("k=2", matrix(vec![vec![2]]), 2.0 * 2f64.sqrt()), ("M1", m1(), 3.1536743)] {
        let p = build_adjacency(&m);
        let grid = linear_grid(-edge - 1.0, edge + 1.0, 40_001).unwrap();
        let rho = density(&p, 0, &grid, 1e-3, &opts).unwrap();
        let mass = trapezoid(&grid, &rho);
        ok &= (0.99..=1.01).contains(&mass);
        details.push(format!("{name} {mass:.6}"));
    }
    outcome(ok, details.join(", "))
}

fn bipartite_symmetry() -> Outcome {
    let opts = SolverOptions::default();
    let grid = linear_grid(-6.0, 6.0, 1201).unwrap();
    let mut worst = 0.0f64;
    for m in [matrix(vec![vec![2]]), m1(), matrix(vec![vec![2, 1], vec![1, 1]])] {
        let rho = density(&build_adjacency(&m), 0, &grid, 1e-3, &opts).unwrap();
        for i in 0..grid.len() {
            worst = worst.max((rho[i] - rho[grid.len() - 1 - i]).abs());
        }
    }
    outcome(worst < 1e-8, format!("max |rho(E) - rho(-E)| = {worst:.2e}"))
}

fn radial_identities() -> Outcome {
    let p = build_adjacency(&m1());
    let opts = SolverOptions::default();
    let ropts = RadialOptions::default();
    let mut zero = 0.0f64;
    let mut shift = 0.0f64;
    for e in [-2.0, 0.3, 1.5, 2.9] {
        let z = Complex64::new(e, 0.2);
        let g = solve(&p, z, &opts).unwrap();
        let v = RadialPotential::from_fn(2, 12, 0.0, |s, j| if (s * 7 + j) % 3 == 0 { 1.0 } else { -0.5 }).unwrap();
        let sol = solve_radial(&p, z, 0.0, &v, &ropts).unwrap();
        for j in 0..2 {
            zero = zero.max((sol.layers[0][j] - g[j]).norm());
        }
        let c = RadialPotential::constant(2, 12, 0.7).unwrap();
        let sol = solve_radial(&p, z, 0.3, &c, &ropts).unwrap();
        let want = solve(&p, z - 0.3 * 0.7, &opts).unwrap();
        for j in 0..2 {
            shift = shift.max((sol.layers[0][j] - want[j]).norm());
        }
    }
    outcome(
        zero <= 1e-14 && shift < 1e-12,
        format!("lambda=0 error {zero:.1e}, constant shift error {shift:.1e}"),
    )
}

fn deviation_trend() -> Outcome {
    let m = m1();
    let p = build_adjacency(&m);
    let tree = TruncatedTree::build(&m, 0, 10).unwrap();
    let z = Complex64::new(1.5, 0.5);
    let mut rows = Vec::new();
    for lam in [0.0, 0.02, 0.1, 0.2] {
        let spec = PotentialSpec::diagonal(Distribution::Uniform, lam, 77);
        let s = Sampler::new(&p, &tree, &spec, z, &SamplerOptions::default()).unwrap();
        let st = estimate_deviation(&s, 2.0, 10_000).unwrap();
        rows.push((lam, st.root.mean, st.root.std_err));
    }
    let zero_ok = rows[0].1 == 0.0;
    let increasing = rows[1..].windows(2).all(|w| w[0].1 + 3.0 * w[0].2 < w[1].1 - 3.0 * w[1].2);
    let text: Vec<String> = rows.iter().map(|(l, m, s)| format!("{l}: {m:.3e}±{s:.1e}")).collect();
    outcome(zero_ok && increasing, text.join(", "))
}

fn kappa_properties() -> (Outcome, Vec<String>) {
    let m = m1();
    let p = build_adjacency(&m);
    let opts = SolverOptions::default();
    let mut rng = SmallRng::seed_from_u64(99);
    let ctxs: Vec<_> = [(1.5, 0.0), (0.7, 0.0), (1.5, 0.1), (-2.0, 0.5)]
        .iter()
        .map(|&(e, eta)| build_two_sphere_context(&p, &m, 0, Complex64::new(e, eta), &opts).unwrap())
        .collect();
    let mut bad_kappa = 0;
    let mut bad_z = 0;
    let mut kmax = 0.0f64;
    for i in 0..100_000 {
        let ctx = &ctxs[i % ctxs.len()];
        let r = 10f64.powf(rng.random_range(-4.0..2.0));
        let g = sample_on_gamma_sphere(&ctx.h, r, &mut rng);
        let v = rng.random_range(-0.2..0.2);
        let p_exp = rng.random_range(1.0..4.0);
        let zv = z0_z1(ctx, v, &g, p_exp).unwrap();
        if zv.z0.abs().powf(p_exp) > zv.z1 * (1.0 + 1e-12) {
            bad_z += 1;
        }
        if i % 10 == 0 {
            let k = kappa(ctx, v, &g, p_exp, i as u64).unwrap().kappa;
            kmax = kmax.max(k);
            if !(0.0..=1.0).contains(&k) {
                bad_kappa += 1;
            }
        }
    }

    // two-step expansion at lambda = 0, per distance from the real axis
    let mut lines = Vec::new();
    let mut all_hold = true;
    for eta in [0.0, 1e-3, 0.1, 0.5] {
        let ctx = build_two_sphere_context(&p, &m, 0, Complex64::new(1.5, eta), &opts).unwrap();
        let (mut viol, mut neg_c, mut worst) = (0, 0, 0.0f64);
        for _ in 0..10_000 {
            let r = 10f64.powf(rng.random_range(-4.0..2.0));
            let g = sample_on_gamma_sphere(&ctx.h, r, &mut rng);
            let b = two_step_bound(&ctx, 0.0, 0.0, 0.0, &g).unwrap();
            let excess = (b.lhs - b.rhs()) / (1.0 + b.rhs());
            if excess > 1e-10 {
                viol += 1;
                neg_c += usize::from(b.c_oprime < 0.0);
                worst = worst.max(excess);
            }
        }
        all_hold &= viol == 0;
        lines.push(format!(
            "eta={eta}: {viol}/10000 violations ({neg_c} with c_o' < 0), worst relative excess {worst:.2e}"
        ));
    }
    let pass = bad_kappa == 0 && bad_z == 0 && all_hold;
    (
        outcome(
            pass,
            format!(
                "kappa outside [0,1]: {bad_kappa}/10000 (max {kmax:.3}); Z0^p > Z1: {bad_z}/100000; two-step at lambda=0 {}",
                if all_hold { "holds" } else { "fails off the real axis" }
            ),
        ),
        lines,
    )
}

fn kappa_survey_margin() -> Outcome {
    let m = m1();
    let p = build_adjacency(&m);
    let ctx = build_two_sphere_context(&p, &m, 0, Complex64::new(1.5, 0.0), &SolverOptions::default()).unwrap();
    let s = kappa_survey(&ctx, 0.0, 0.1, 10_000, 2.0, 4242).unwrap();
    outcome(
        s.delta_hat > 0.0 && s.max_kappa <= 1.0 - s.delta_hat + 1e-15,
        format!("max kappa {:.4}, delta {:.4}", s.max_kappa, s.delta_hat),
    )
}

fn run_cli(args: &[&str], threads: &str, dir: &Path) -> (Vec<u8>, bool) {
    let out = Command::new(env!("CARGO_BIN_EXE_conetree"))
        .args(args)
        .args(["--threads", threads])
        .current_dir(dir)
        .env_remove("CONETREE_THREADS")
        .output()
        .expect("binary runs");
    (out.stdout, out.status.success())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("m1.json"), r#"{"matrix": [[1,2],[1,1]]}"#).unwrap();
    std::fs::write(d.join("m2.json"), r#"{"matrix": [[1,42],[1,1]]}"#).unwrap();
    std::fs::write(d.join("spec.json"), r#"{"kind":"diagonal","distributions":[{"kind":"uniform"}],"lambda":0,"seed":0}"#).unwrap();
    std::fs::write(d.join("pot.json"), r#"{"horizon": 4, "values": [[0, "1", 1.0], [3, "2", -1.0]], "default": 0}"#).unwrap();
    let runs: Vec<Vec<&str>> = vec![
        vec!["scan", "--matrix", "m2.json", "--emin", "-15", "--emax", "15", "--points", "601", "--csv", "scan.csv"],
        vec!["density", "--matrix", "m1.json", "--eta", "1e-3", "--grid", "-4:4:401"],
        vec!["radial", "--matrix", "m1.json", "--potential", "pot.json", "--lambda", "0.2", "--E", "0.5", "--eta", "0.1"],
        vec!["random", "--matrix", "m1.json", "--spec", "spec.json", "--lambdas", "0.05,0.2", "--samples", "500", "--seed", "3", "--E", "1.5"],
        vec!["kappa", "--matrix", "m1.json", "--R", "0.1", "--samples", "300", "--E", "1.5", "--seed", "5"],
        vec!["oracle", "--matrix", "m1.json", "--depth", "5", "--z", "0.3,0.5"],
    ];
    let mut mismatched = Vec::new();
    for args in &runs {
        let mut outputs = Vec::new();
        for threads in ["1", "1", "8"] {
            let (stdout, ok) = run_cli(args, threads, d);
            if !ok {
                return outcome(false, format!("`{}` failed", args[0]));
            }
            let extra = std::fs::read(d.join("scan.csv")).unwrap_or_default();
            outputs.push((stdout, if args[0] == "scan" { extra } else { Vec::new() }));
        }
        if outputs.windows(2).any(|w| w[0] != w[1]) {
            mismatched.push(args[0]);
        }
    }
    outcome(
        mismatched.is_empty(),
        format!("{} commands x 3 runs (threads 1, 1, 8); mismatches: {mismatched:?}", runs.len()),
    )
}

fn main() {
    // single-threaded so runtimes are comparable with the stated budgets
    rayon::ThreadPoolBuilder::new().num_threads(1).build_global().unwrap();
    let mut failed = Vec::new();
    let mut report = |n: usize, name: &str, o: Outcome| {
        println!("criterion {n:>2} {name:<28} {}  {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(n);
        }
    };
    report(1, "regular closed form", regular_closed_form());
    report(2, "quartic residual", quartic_residual());
    report(3, "three bands", three_bands());
    report(4, "sigma0 detection", sigma0());
    report(5, "bounds and herglotz", bounds_and_herglotz());
    report(6, "oracle equivalence", oracle_equivalence());
    report(7, "spectral mass", spectral_mass());
    report(8, "bipartite symmetry", bipartite_symmetry());
    report(9, "radial identities", radial_identities());
    report(10, "deviation trend", deviation_trend());
    let (k, lines) = kappa_properties();
    for line in lines {
        println!("             two-step expansion {line}");
    }
    report(11, "kappa properties", k);
    report(12, "kappa survey", kappa_survey_margin());
    report(13, "determinism", determinism());
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
