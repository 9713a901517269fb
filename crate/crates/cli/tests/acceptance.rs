//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use fplay_cli::config::RunConfig;
use fplay_core::diagnostics::{cesaro_check, potential_trend, DEFAULT_TAIL_FRACTION};
use fplay_core::fokker_planck::continuity_residual;
use fplay_core::geometry::{sup_t_d1, DensityFlow, TorusGrid};
use fplay_core::hamiltonian::{convexity_sweep, DriftField, DriftModes, QuadraticHamiltonian};
use fplay_core::nplayer::{compare_to_mfg, place_players, run_nplayer};
use fplay_core::parabolic::{run_parabolic, solve_mfg_damped, DampedOptions, ParabolicState};
use fplay_core::report::PlayReport;
use fplay_core::trajectory::{run_first_order, FirstOrderOutcome, StrategyState};
use fplay_core::verification::{bellman_sweep, cesaro_fixtures, d1_sweep, fp_refinement, hjb_refinement, legendre_sweep};
use fplay_core::Exec;

const WALL_LIMIT: Duration = Duration::from_secs(120);

fn config(name: &str) -> RunConfig {
    RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)).expect("reference config")
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// Reference runs shared by several criteria.
struct Runs {
    parabolic: PlayReport,
    parabolic_time: Duration,
    parabolic_h: f64,
    parabolic_dt: f64,
    /// Per-stage conservation and continuity of the averaged pair.
    parabolic_mass: f64,
    parabolic_min: f64,
    parabolic_continuity: f64,
    first_order: FirstOrderOutcome,
    first_order_time: Duration,
    first_order_h: f64,
}

fn reference_runs() -> Runs {
    let cfg = config("parabolic_reference.toml");
    let problem = cfg.parabolic_problem().unwrap();
    let start = Instant::now();
    let mut state = ParabolicState::new(&problem, DensityFlow::constant(&problem.m0, problem.time)).unwrap();
    let (mut mass, mut min, mut continuity) = (0.0f64, f64::INFINITY, 0.0f64);
    while state.termination().is_none() {
        state.iterate(&problem).unwrap();
        let realized = state.last().unwrap();
        mass = mass.max(state.belief().max_mass_drift()).max(realized.m.max_mass_drift());
        min = min.min(state.belief().min_value()).min(realized.m.min_value());
        continuity = continuity.max(continuity_residual(state.belief(), state.flux(), &problem.scheme).unwrap());
    }
    let parabolic_time = start.elapsed();
    let parabolic = state.into_report().unwrap();

    let cfg = config("first_order_reference.toml");
    let fo = cfg.first_order_problem().unwrap();
    let start = Instant::now();
    let first_order = run_first_order(&fo, StrategyState::new(&fo)).unwrap();
    Runs {
        parabolic,
        parabolic_time,
        parabolic_h: problem.grid().h(),
        parabolic_dt: problem.time.dt(),
        parabolic_mass: mass,
        parabolic_min: min,
        parabolic_continuity: continuity,
        first_order_time: start.elapsed(),
        first_order_h: fo.grid().h(),
        first_order,
    }
}

/// `a_1` of the parabolic loop is its stage-2 value: stage 1 averages a single flow.
fn decay(a: &[f64], first: usize) -> (f64, f64, Option<usize>) {
    let a1 = a[first];
    let threshold = f64::max(1e-4, 0.05 * a1);
    let hit = (first..a.len().min(200)).find(|i| a[*i] < threshold).map(|i| i + 1);
    (a1, threshold, hit)
}

fn exploitability_decay(runs: &Runs) -> Outcome {
    let (pa1, pt, ph) = decay(&runs.parabolic.a_history(), 1);
    let (fa1, ft, fh) = decay(&runs.first_order.report.a_history(), 0);
    let passed = ph.is_some() && fh.is_some() && runs.parabolic_time <= WALL_LIMIT && runs.first_order_time <= WALL_LIMIT;
    outcome(
        passed,
        format!(
            "parabolic a_1 {pa1:.3e} below {pt:.3e} at n = {ph:?} ({:.1?}); first-order a_1 {fa1:.3e} below {ft:.3e} at n = {fh:?} ({:.1?})",
            runs.parabolic_time, runs.first_order_time
        ),
    )
}

fn almost_decreasing_potential(runs: &Runs) -> Outcome {
    let p = potential_trend(&runs.parabolic.phi_history()).unwrap();
    let f = potential_trend(&runs.first_order.report.phi_history()).unwrap();
    outcome(
        p.holds() && f.holds(),
        format!(
            "parabolic upticks {:.2e} <= {:.2e}, decreased {}; first-order upticks {:.2e} <= {:.2e}, decreased {}",
            p.upticks, p.bound, p.decreased, f.upticks, f.bound, f.decreased
        ),
    )
}

fn uniqueness() -> Outcome {
    let cfg = config("parabolic_uniqueness.toml");
    let problem = cfg.parabolic_problem().unwrap();
    let beliefs = cfg.initial_beliefs(&problem.m0, problem.time).unwrap();
    let limits: Vec<PlayReport> = beliefs.into_iter().map(|b| run_parabolic(&problem, b).unwrap().0).collect();
    let d = sup_t_d1(&limits[0].belief, &limits[1].belief).unwrap();
    let h = problem.grid().h();
    outcome(
        d <= 2.0 * h && limits.iter().all(|r| r.termination.converged()),
        format!(
            "uniform vs spike limits ({} and {} stages): sup_t d1 {d:.3e} <= 2h = {:.3e}",
            limits[0].iterations(),
            limits[1].iterations(),
            2.0 * h
        ),
    )
}

fn fixed_point_residual(runs: &Runs) -> Outcome {
    let cfg = config("parabolic_reference.toml");
    let problem = cfg.parabolic_problem().unwrap();
    let damped = solve_mfg_damped(&problem, DensityFlow::constant(&problem.m0, problem.time), DampedOptions::default())
        .unwrap();
    let tol = 10.0 * (runs.parabolic_h + runs.parabolic_dt);
    let (hjb, fp) = runs.parabolic.residual;
    let oracle = sup_t_d1(&runs.parabolic.belief, &damped.m).unwrap();
    let gap = runs.first_order.equilibrium_gap;
    outcome(
        hjb <= tol && fp <= tol && oracle <= 5.0 * runs.parabolic_h && gap <= 5.0 * runs.first_order_h,
        format!(
            "residuals {hjb:.2e}, {fp:.2e} <= {tol:.3e}; damped oracle ({} steps) at d1 {oracle:.2e} <= 5h; first-order equilibrium gap {gap:.2e} <= 5h",
            damped.iterations
        ),
    )
}

fn brute_force_oracles() -> Outcome {
    let b = bellman_sweep(50, 2025).unwrap();
    let d = d1_sweep(100, 24, 2026).unwrap();
    let l = legendre_sweep(100, 2027).unwrap();
    outcome(
        b.mismatches == 0 && b.max_gap <= 1e-12 && d.max_gap <= 1e-9 && l.max_gap <= 1e-5,
        format!(
            "bellman: {} couplings, gap {:.1e}, {} mismatches; d1: {} pairs, gap {:.1e}; legendre: {} samples, gap {:.1e}",
            b.cases, b.max_gap, b.mismatches, d.cases, d.max_gap, l.cases, l.max_gap
        ),
    )
}

fn conservation(runs: &Runs) -> Outcome {
    let fo_mass = runs.first_order.report.belief.max_mass_drift();
    outcome(
        runs.parabolic_mass <= 1e-12
            && runs.parabolic_min >= -1e-13
            && runs.parabolic_continuity <= 1e-12
            && fo_mass <= 1e-12,
        format!(
            "mass drift {:.1e} (first-order {fo_mass:.1e}), min density {:.3e}, max continuity residual {:.1e} over {} stages",
            runs.parabolic_mass,
            runs.parabolic_min,
            runs.parabolic_continuity,
            runs.parabolic.iterations()
        ),
    )
}

fn convexity_inequality() -> Outcome {
    let line = TorusGrid::line(64).unwrap();
    let modes = DriftModes { mean: 0.4, cos: vec![1.0, -0.5], sin: vec![0.7] };
    let h1 = QuadraticHamiltonian::new(DriftField::from_modes(line, std::slice::from_ref(&modes)).unwrap());
    let plane = TorusGrid::new(2, 16).unwrap();
    let h2 = QuadraticHamiltonian::new(DriftField::from_modes(plane, &[modes, DriftModes { mean: -1.0, cos: vec![0.3], sin: vec![] }]).unwrap());
    let r1 = convexity_sweep(&h1, 10_000, 6.0, 41, Exec::default());
    let r2 = convexity_sweep(&h2, 10_000, 6.0, 43, Exec::default());
    outcome(
        r1.min_slack >= -1e-10 && r2.min_slack >= -1e-10,
        format!("min slack {:.2e} (1D), {:.2e} (2D) over {} samples each", r1.min_slack, r2.min_slack, r1.samples),
    )
}

fn cesaro_lemma(runs: &Runs) -> Outcome {
    let fixtures = cesaro_fixtures().unwrap();
    let a = runs.parabolic.a_history();
    let seq = cesaro_check(&a[1..], None, DEFAULT_TAIL_FRACTION).unwrap();
    let run_ok = seq.cesaro_final() <= seq.cesaro_half();
    let names: Vec<String> = fixtures.iter().map(|f| format!("{} {}", f.name, if f.passed { "ok" } else { "failed" })).collect();
    outcome(
        fixtures.iter().all(|f| f.passed) && run_ok,
        format!(
            "{}; parabolic run average {:.2e} <= half-run average {:.2e}",
            names.join(", "),
            seq.cesaro_final(),
            seq.cesaro_half()
        ),
    )
}

fn nplayer_convergence(runs: &Runs) -> Outcome {
    let cfg = config("nplayer_reference.toml");
    let problem = cfg.first_order_problem().unwrap();
    let section = cfg.nplayer.as_ref().unwrap();
    let mfg = &runs.first_order.report;
    let distances: Vec<f64> = section
        .players
        .iter()
        .map(|n| {
            let players = place_players(&problem.m0, *n, section.placement()).unwrap();
            let out = run_nplayer(&problem, &players).unwrap();
            compare_to_mfg(&out.outcome.report, mfg, Exec::default()).unwrap()
        })
        .collect();
    let inversions: Vec<f64> = distances.windows(2).filter(|w| w[1] > w[0]).map(|w| w[1] / w[0] - 1.0).collect();
    let monotone = inversions.len() <= 1 && inversions.iter().all(|r| *r <= 0.10);
    let halved = distances[distances.len() - 1] <= 0.5 * distances[0];
    outcome(
        monotone && halved,
        format!("N = {:?}: distances {:?}", section.players, distances.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>()),
    )
}

fn scheme_convergence() -> Outcome {
    let hjb = hjb_refinement(32).unwrap();
    let fp = fp_refinement(32).unwrap();
    let ok = |r: f64| (1.7..=2.3).contains(&r);
    outcome(
        ok(hjb.ratio) && ok(fp.ratio),
        format!("HJB ratio {:.3} ({:.2e} -> {:.2e}); FP ratio {:.3} ({:.2e} -> {:.2e})", hjb.ratio, hjb.coarse, hjb.fine, fp.ratio, fp.coarse, fp.fine),
    )
}

fn csv_files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let configs = ["parabolic_reference", "first_order_reference", "nplayer_reference", "parabolic_uniqueness"];
    let mut details = Vec::new();
    let mut passed = true;
    for name in configs {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.toml"));
        let mut files = Vec::new();
        for (i, flags) in [vec![], vec![], vec!["--sequential"]].iter().enumerate() {
            let out = tmp.path().join(format!("{name}_{i}"));
            let status = Command::new(env!("CARGO_BIN_EXE_fplay"))
                .args(flags)
                .arg("run")
                .arg(&path)
                .arg("--out")
                .arg(&out)
                .output()
                .unwrap();
            passed &= status.status.code() == Some(0);
            files.push(csv_files(&out));
        }
        let same = !files[0].is_empty() && files.iter().all(|f| *f == files[0]);
        passed &= same;
        details.push(format!("{name}: {} csv files {}", files[0].len(), if same { "identical" } else { "DIFFER" }));
    }
    outcome(passed, format!("{} (two runs plus a sequential run each)", details.join("; ")))
}

fn main() {
    let runs = reference_runs();
    let criteria: Vec<Criterion> = vec![
        ("exploitability decay", Box::new(|| exploitability_decay(&runs))),
        ("almost-decreasing potential", Box::new(|| almost_decreasing_potential(&runs))),
        ("uniqueness under monotonicity", Box::new(uniqueness)),
        ("fixed-point residual", Box::new(|| fixed_point_residual(&runs))),
        ("brute-force oracles", Box::new(brute_force_oracles)),
        ("conservation and positivity", Box::new(|| conservation(&runs))),
        ("convexity inequality", Box::new(convexity_inequality)),
        ("cesaro fixtures", Box::new(|| cesaro_lemma(&runs))),
        ("n-player convergence", Box::new(|| nplayer_convergence(&runs))),
        ("scheme convergence", Box::new(scheme_convergence)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failures += usize::from(!o.passed);
        println!("{} [{:>2}] {name}: {}", if o.passed { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
