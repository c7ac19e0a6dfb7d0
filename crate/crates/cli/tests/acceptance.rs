//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use mbq_cli::commands::{self, GlobalOptions, VerifyArgs};
use mbq_cli::output::csv_body;
use mbq_cli::RunFile;
use mbq_core::complexity::{sample_complexity, BoundInputs, TailKind};
use mbq_core::diagnostics::{a_matrix_inf_norm, run_with_comparisons, DiagnosticsError};
use mbq_core::env::{random_mdp, stream_rng};
use mbq_core::learner::train;
use mbq_core::mdp::{bellman_residual, inf_norm_distance, value_iteration};
use mbq_core::{
    Algorithm, Budget, EmpiricalModel, QTable, Sampler, SamplerSpec, Source, TabularMdp, TrainerConfig,
};
use rand::Rng;

const SANDWICH_TOL: f64 = 1e-9;
const NORM_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;
const GAMMA: f64 = 0.9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn quiet(out: &Path) -> GlobalOptions {
    GlobalOptions {
        config: None,
        out: Some(out.to_path_buf()),
        seeds: None,
        threads: None,
        json: false,
    }
}

fn uniform_config(num_pairs: usize, alpha: f64, gamma: f64, steps: u64, seed: u64) -> TrainerConfig {
    let sampler = SamplerSpec::uniform(num_pairs, seed);
    let warmup_steps =
        mbq_core::complexity::data_collection_length(sampler.d_min().unwrap(), num_pairs, 0.1).unwrap();
    TrainerConfig {
        step_size: alpha,
        discount: gamma,
        warmup_steps,
        budget: Budget::Steps(steps),
        sampler,
        algorithm: Algorithm::Syncmbq,
        q_init: 0.0,
        log_stride: 1,
        max_episode_len: 200,
    }
}

/// Criterion 1 runs, shared with criteria 3 and 4.
struct SandwichRuns {
    violations: usize,
    errors: Vec<String>,
    max_q_abs: f64,
    max_w_after_visit: f64,
    unvisited: usize,
}

fn sandwich_runs() -> SandwichRuns {
    let mut runs = SandwichRuns {
        violations: 0,
        errors: Vec::new(),
        max_q_abs: 0.0,
        max_w_after_visit: 0.0,
        unvisited: 0,
    };
    for i in 0..20u64 {
        let (ns, na) = (2 + (i % 9) as usize, 1 + (i % 5) as usize);
        let mdp = random_mdp(ns, na, 100 + i).unwrap().with_discount(GAMMA).unwrap();
        let config = uniform_config(mdp.num_pairs(), 0.1, GAMMA, 50_000, i);
        match run_with_comparisons(&mdp, &config) {
            Ok(trace) => {
                runs.violations += trace.records.iter().filter(|r| !r.sandwich_ok).count();
                runs.max_q_abs = runs.max_q_abs.max(trace.max_q_abs);
                runs.max_w_after_visit = runs.max_w_after_visit.max(trace.max_w_after_visit);
                if trace.visitation_step.is_none() {
                    runs.unvisited += 1;
                }
            }
            Err(e @ DiagnosticsError::SandwichViolation { .. }) => {
                runs.violations += 1;
                runs.errors.push(e.to_string());
            }
            Err(e) => runs.errors.push(e.to_string()),
        }
    }
    runs
}

fn criterion1(runs: &SandwichRuns) -> Outcome {
    Outcome {
        pass: runs.violations == 0 && runs.errors.is_empty(),
        detail: format!(
            "20 random MDPs x 50000 steps, {} violations beyond {SANDWICH_TOL:e}, {} run errors {:?}",
            runs.violations,
            runs.errors.len(),
            runs.errors
        ),
    }
}

fn criterion2() -> Outcome {
    let bound = |alpha: f64, gamma: f64| 1.0 - (1.0 - gamma) * alpha;
    let (mut checked, mut over, mut unequal, mut partial_over) = (0, 0, 0, 0);
    for i in 0..10u64 {
        let (ns, na) = (2 + (i % 7) as usize, 2 + (i % 4) as usize);
        let gamma = [0.5, 0.9, 0.99][i as usize % 3];
        let alpha = 0.05 + 0.05 * i as f64;
        let mdp = random_mdp(ns, na, 500 + i).unwrap();
        let mut sampler = Sampler::new(SamplerSpec::uniform(mdp.num_pairs(), i)).unwrap();
        let mut model = EmpiricalModel::<f64>::new(ns, na);
        let mut rng = stream_rng(77, i);
        let random_q = |rng: &mut mbq_core::env::SimRng| {
            let values = (0..ns * na).map(|_| rng.random_range(-10.0..10.0)).collect();
            QTable::from_values(ns, na, values).unwrap()
        };
        while !model.all_visited() {
            model
                .record_transition(&sampler.iid_sample(&mdp).unwrap())
                .unwrap();
            // Partially visited models: unvisited rows have norm 1 - alpha.
            if model.total_steps().is_multiple_of(3) {
                let n = a_matrix_inf_norm(&model, &random_q(&mut rng), alpha, gamma);
                if n > 1.0 - alpha * (1.0 - gamma) + NORM_TOL && n > 1.0 - alpha + NORM_TOL {
                    partial_over += 1;
                }
            }
        }
        for _ in 0..100 {
            let n = a_matrix_inf_norm(&model, &random_q(&mut rng), alpha, gamma);
            checked += 1;
            if n > bound(alpha, gamma) + NORM_TOL {
                over += 1;
            }
            if (n - bound(alpha, gamma)).abs() > NORM_TOL {
                unequal += 1;
            }
        }
    }
    Outcome {
        pass: checked == 1000 && over == 0 && unequal == 0 && partial_over == 0,
        detail: format!(
            "{checked} tables over 10 models: {over} above 1-(1-g)a, {unequal} not equal within {NORM_TOL:e}, {partial_over} partial-visit excesses"
        ),
    }
}

fn criterion3(runs: &SandwichRuns, fig1_max_q: f64) -> Outcome {
    let bound = 1.0 / (1.0 - GAMMA);
    let worst = runs.max_q_abs.max(fig1_max_q);
    Outcome {
        pass: worst <= bound,
        detail: format!("max ||Q_k|| over criterion 1 and 6 runs = {worst:.6} <= r_max/(1-g) = {bound:.6}"),
    }
}

fn criterion4(runs: &SandwichRuns) -> Outcome {
    let bound = 2.0 / (1.0 - GAMMA);
    Outcome {
        pass: runs.max_w_after_visit <= bound && runs.unvisited == 0,
        detail: format!(
            "max ||w_k|| after visitation = {:.6} <= 2/(1-g) = {bound:.6} ({} runs never fully visited)",
            runs.max_w_after_visit, runs.unvisited
        ),
    }
}

fn criterion5(tmp: &Path) -> Outcome {
    let args = VerifyArgs {
        env: "random:4x4:0".into(),
        ks: vec![2000, 10_000, 50_000, 200_000],
        eps: vec![0.25, 0.5, 1.0, 1.5, 1.7],
        trials: 500,
        seed: 0,
        kinds: TailKind::ALL.to_vec(),
    };
    let report = match commands::verify(&args, &quiet(&tmp.join("verify"))) {
        Ok(r) => r,
        Err(e) => return fail(format!("verify failed: {e}")),
    };
    let mut per_kind = Vec::new();
    let mut bad = 0;
    for kind in TailKind::ALL {
        let grid: Vec<_> = report
            .checks
            .iter()
            .filter(|c| c.kind == kind && c.analytic.value <= 0.5)
            .collect();
        bad += grid.iter().filter(|c| c.empirical > c.allowance).count();
        per_kind.push(format!("{}:{}", kind.name(), grid.len()));
        if grid.is_empty() {
            bad += 1;
        }
    }
    Outcome {
        pass: bad == 0,
        detail: format!(
            "grid points with bound <= 0.5 [{}], {bad} above bound + 3 s.e. (500 trials)",
            per_kind.join(" ")
        ),
    }
}

fn criterion6(tmp: &Path) -> (Outcome, f64) {
    let run = RunFile::load(&workspace().join("configs/fig1_random4x4.json")).unwrap();
    let report = match commands::compare(&run, &quiet(&tmp.join("fig1"))) {
        Ok(r) => r,
        Err(e) => return (fail(format!("compare failed: {e}")), f64::INFINITY),
    };
    let visits: Vec<u64> = report.seeds.iter().filter_map(|s| s.visitation_step).collect();
    let late = report
        .seeds
        .iter()
        .filter(|s| s.visitation_step.is_none_or(|v| v > 120))
        .count();
    let not_decreasing = report
        .seeds
        .iter()
        .filter(|s| s.ma_at_visitation.is_none_or(|v| s.ma_final >= v))
        .count();
    let matches = report.seeds.iter().filter(|s| s.policy_match).count();
    let sandwich = report.seeds.iter().all(|s| s.sandwich_ok);
    let max_q = report.seeds.iter().map(|s| s.max_q_abs).fold(0.0, f64::max);
    let n = report.seeds.len();
    (
        Outcome {
            pass: n == 7 && late == 0 && not_decreasing == 0 && matches >= 6 && sandwich,
            detail: format!(
                "{n} seeds, visitation steps {visits:?} (<= 120), {not_decreasing} without MA decrease, policy match {matches}/{n}"
            ),
        },
        max_q,
    )
}

fn criterion7(tmp: &Path) -> Outcome {
    let started = Instant::now();
    let success = |name: &str| -> Result<f64, String> {
        let run =
            RunFile::load(&workspace().join(format!("configs/{name}.json"))).map_err(|e| e.to_string())?;
        let report = commands::train(&run, &quiet(&tmp.join(name))).map_err(|e| e.to_string())?;
        report
            .summary
            .iter()
            .find(|m| m.metric == "success_pct" && m.n == 20)
            .map(|m| m.mean)
            .ok_or_else(|| format!("{name}: no 20-seed success summary"))
    };
    let mut cells = Vec::new();
    let mut pass = true;
    for (env, alpha) in [
        ("taxi", "0.1"),
        ("taxi", "0.5"),
        ("frozenlake", "0.1"),
        ("frozenlake", "0.5"),
    ] {
        let (s, q) = match (
            success(&format!("{env}_syncmbq_a{alpha}")),
            success(&format!("{env}_qlearning_a{alpha}")),
        ) {
            (Ok(s), Ok(q)) => (s, q),
            (s, q) => return fail(format!("training failed: {:?} {:?}", s.err(), q.err())),
        };
        let ok = s >= q
            && match (env, alpha) {
                ("taxi", "0.1") => s >= 90.0 && q <= 15.0,
                ("taxi", _) => s >= 90.0 && (30.0..=60.0).contains(&q),
                ("frozenlake", "0.1") => s >= 60.0 && q <= s - 15.0,
                _ => s >= 60.0 && q <= 40.0,
            };
        pass &= ok;
        cells.push(format!(
            "{env} a={alpha}: SyncMBQ {s:.2} Q {q:.2}{}",
            if ok { "" } else { " (out)" }
        ));
    }
    let secs = started.elapsed().as_secs_f64();
    pass &= secs < 1800.0;
    Outcome {
        pass,
        detail: format!("{} [{secs:.0}s]", cells.join("; ")),
    }
}

fn criterion8() -> Outcome {
    let started = Instant::now();
    let text = std::fs::read_to_string(workspace().join("fixtures/synthetic3x2.json")).unwrap();
    let base = TabularMdp::<f64>::from_json(&text).unwrap();
    let inputs = |gamma| BoundInputs {
        epsilon: 0.5,
        delta: 0.1,
        gamma,
        alpha: 0.1,
        d_min: 1.0 / base.num_pairs() as f64,
        num_pairs: base.num_pairs(),
    };
    let first = sample_complexity(&inputs(0.5)).unwrap();
    let (gamma, report) = if first.k_star > 10_000_000 {
        (0.3, sample_complexity(&inputs(0.3)).unwrap())
    } else {
        (0.5, first.clone())
    };
    let mdp = base.with_discount(gamma).unwrap();
    let (q_star, _) = value_iteration(&mdp, 1e-13).unwrap();
    let mut within = 0;
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut config = uniform_config(mdp.num_pairs(), 0.1, gamma, report.k_star, seed);
        config.warmup_steps = report.m;
        config.log_stride = report.k_star;
        let trace = train::<f64>(Source::Iid(&mdp), &config, None).unwrap();
        let err = inf_norm_distance(&trace.final_q, &q_star).unwrap();
        worst = worst.max(err);
        if err <= 0.5 {
            within += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    Outcome {
        pass: within >= 95 && secs < 1200.0,
        detail: format!(
            "k* at g=0.5 is {} (> 1e7), substituted g={gamma}: k*={} m={}; {within}/100 seeds within eps=0.5 (worst {worst:.4}) [{secs:.0}s]",
            first.k_star, report.k_star, report.m
        ),
    }
}

fn criterion9() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    let mut paths: Vec<_> = std::fs::read_dir(workspace().join("fixtures"))
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    for path in paths {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let text = std::fs::read_to_string(&path).unwrap();
        let Ok(mdp) = TabularMdp::<f64>::from_json(&text) else {
            continue;
        };
        let (q, _) = value_iteration(&mdp, 1e-12).unwrap();
        let r = bellman_residual(&mdp, &q).unwrap();
        pass &= r <= RESIDUAL_TOL;
        lines.push(format!("{name} {r:.1e}"));
    }
    pass &= lines.len() >= 3;
    Outcome {
        pass,
        detail: format!("residuals <= {RESIDUAL_TOL:e}: {}", lines.join(", ")),
    }
}

fn bodies(dir: &Path) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().to_string(),
                csv_body(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

fn criterion10(tmp: &Path) -> Outcome {
    let root = workspace();
    let cases: Vec<(&str, Vec<String>)> = vec![
        (
            "train",
            vec![
                "train".into(),
                "--config".into(),
                root.join("configs/taxi_qlearning_a0.5.json")
                    .display()
                    .to_string(),
                "--seeds".into(),
                "3,1,2".into(),
            ],
        ),
        (
            "compare",
            vec![
                "compare".into(),
                "--config".into(),
                root.join("configs/fig1_random4x4.json").display().to_string(),
                "--seeds".into(),
                "0,5".into(),
            ],
        ),
        (
            "verify",
            vec![
                "verify".into(),
                "--k".into(),
                "500,2000".into(),
                "--trials".into(),
                "50".into(),
            ],
        ),
    ];
    let mut mismatched = Vec::new();
    let mut files = 0;
    for (name, args) in cases {
        let mut outputs = Vec::new();
        for (rep, threads) in [(0, "1"), (1, "3")] {
            let dir = tmp.join(format!("det_{name}_{rep}"));
            let status = Command::new(env!("CARGO_BIN_EXE_mbq"))
                .args(&args)
                .args(["--threads", threads, "--out"])
                .arg(&dir)
                .output()
                .unwrap();
            if !status.status.success() {
                return fail(format!("{name} exited with {:?}", status.status.code()));
            }
            outputs.push(bodies(&dir));
        }
        files += outputs[0].len();
        if outputs[0].is_empty() || outputs[0] != outputs[1] {
            mismatched.push(name);
        }
    }
    Outcome {
        pass: mismatched.is_empty(),
        detail: format!(
            "train/compare/verify repeated with 1 and 3 threads: {files} CSVs, mismatches {mismatched:?}"
        ),
    }
}

fn fail(detail: String) -> Outcome {
    Outcome { pass: false, detail }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let mut failed = 0;
    let mut report = |id: u32, name: &str, (outcome, took): (Outcome, Duration)| {
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "[{tag}] criterion {id:>2} {name}: {} ({:.1}s)",
            outcome.detail,
            took.as_secs_f64()
        );
    };

    let (runs, runs_time) = timed(sandwich_runs);
    report(1, "sandwich", (criterion1(&runs), runs_time));
    report(2, "contraction norm", timed(criterion2));
    let ((fig1, fig1_max_q), fig1_time) = timed(|| criterion6(tmp.path()));
    report(3, "iterate bound", timed(|| criterion3(&runs, fig1_max_q)));
    report(4, "noise bound", timed(|| criterion4(&runs)));
    report(5, "concentration", timed(|| criterion5(tmp.path())));
    report(6, "error curves", (fig1, fig1_time));
    report(7, "greedy success tables", timed(|| criterion7(tmp.path())));
    report(8, "sample complexity", timed(criterion8));
    report(9, "oracle residual", timed(criterion9));
    report(10, "determinism", timed(|| criterion10(tmp.path())));

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}
