//! Subcommand implementations. Each returns a report that the binary prints
//! as a table or JSON; artifacts go to the output directory.

use std::path::{Path, PathBuf};

use mbq_core::complexity::{
    check_tails, evaluate_bounds, pr_window, sample_deviations_range, w_window, BoundInputs, BoundReport,
    TailCheck, TailKind,
};
use mbq_core::diagnostics::{run_with_comparisons, ComparisonTrace};
use mbq_core::env::random_mdp;
use mbq_core::learner::{evaluate_greedy, train as train_run, RunTrace};
use mbq_core::mdp::{bellman_residual, value_iteration, QTableDocument};
use mbq_core::{QTable, TabularMdp};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::output::{ensure_dir, metadata_line, num, opt_int, opt_num, write_csv, write_json};
use crate::runfile::{Environment, RunFile, SamplingSpec, EVAL_SEED_OFFSET};
use crate::stats::{mean, moving_average, std_dev};

/// Options shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct GlobalOptions {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub threads: Option<usize>,
    pub json: bool,
}

impl GlobalOptions {
    pub fn run_file(&self) -> Result<RunFile, CliError> {
        let path = self
            .config
            .as_deref()
            .ok_or_else(|| CliError::Config("--config <run file> is required".into()))?;
        RunFile::load(path)?.with_seeds(self.seeds.clone())
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            if n == 0 {
                return Err(CliError::Config("--threads must be at least 1".into()));
            }
            builder = builder.num_threads(n);
        }
        Ok(builder.build()?)
    }
}

/// Runs `f` for every seed on the pool; results come back in seed order.
fn per_seed<R: Send>(
    opts: &GlobalOptions,
    seeds: &[u64],
    f: impl Fn(u64) -> Result<R, CliError> + Sync,
) -> Result<Vec<R>, CliError> {
    opts.pool()?.install(|| seeds.par_iter().map(|&s| f(s)).collect())
}

// ---------------------------------------------------------------- solve

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub discount: f64,
    pub iterations: usize,
    pub residual: f64,
    pub q: QTableDocument,
}

pub fn solve(mdp_path: &Path, tolerance: f64, opts: &GlobalOptions) -> Result<SolveReport, CliError> {
    let text = std::fs::read_to_string(mdp_path).map_err(|e| CliError::io(mdp_path, e))?;
    let mdp = TabularMdp::<f64>::from_json(&text)?;
    let (q, iterations) = value_iteration(&mdp, tolerance)?;
    let report = SolveReport {
        discount: mdp.discount(),
        iterations,
        residual: bellman_residual(&mdp, &q)?,
        q: q.to_document(),
    };
    if let Some(dir) = &opts.out {
        ensure_dir(dir)?;
        write_json(&dir.join("qstar.json"), &report)?;
    }
    Ok(report)
}

// ---------------------------------------------------------------- train

#[derive(Clone, Debug, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub success_pct: Option<f64>,
    pub final_inf_error: Option<f64>,
    pub visitation_step: Option<u64>,
    pub total_steps: u64,
    pub episodes: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainReport {
    pub environment: String,
    pub algorithm: String,
    pub step_size: f64,
    pub output_dir: PathBuf,
    pub seeds: Vec<SeedResult>,
    pub summary: Vec<MetricSummary>,
}

fn summarize(results: &[SeedResult]) -> Vec<MetricSummary> {
    let mut out = Vec::new();
    let mut push = |metric: &str, xs: Vec<f64>| {
        if xs.len() == results.len() && !xs.is_empty() {
            out.push(MetricSummary {
                metric: metric.to_string(),
                mean: mean(&xs),
                std: std_dev(&xs),
                n: xs.len(),
            });
        }
    };
    push(
        "success_pct",
        results.iter().filter_map(|r| r.success_pct).collect(),
    );
    push(
        "final_inf_error",
        results.iter().filter_map(|r| r.final_inf_error).collect(),
    );
    push(
        "total_steps",
        results.iter().map(|r| r.total_steps as f64).collect(),
    );
    push("episodes", results.iter().map(|r| r.episodes as f64).collect());
    out
}

fn environment_label(run: &RunFile) -> String {
    serde_json::to_value(&run.environment)
        .ok()
        .and_then(|v| v.get("name").and_then(|n| n.as_str().map(str::to_string)))
        .unwrap_or_default()
}

pub const TRACE_HEADER: [&str; 5] = ["step", "inf_error", "episode_return", "all_visited", "q_max_abs"];
pub const EPISODE_HEADER: [&str; 6] = [
    "episode",
    "end_step",
    "length",
    "episode_return",
    "success",
    "moving_average",
];
pub const FINAL_HEADER: [&str; 7] = [
    "seed",
    "algorithm",
    "success_pct",
    "final_inf_error",
    "visitation_step",
    "total_steps",
    "episodes",
];

fn write_seed_artifacts(
    dir: &Path,
    run: &RunFile,
    trace: &RunTrace<f64>,
    result: &SeedResult,
) -> Result<(), CliError> {
    let seed = result.seed;
    let meta = metadata_line(
        "train",
        &[
            ("seed", seed.to_string()),
            ("rng", trace.metadata.rng.clone()),
            ("algorithm", run.algorithm.name().to_string()),
            ("config_hash", format!("{:016x}", trace.metadata.config_hash)),
        ],
    );
    let rows: Vec<Vec<String>> = trace
        .records
        .iter()
        .map(|r| {
            vec![
                r.step.to_string(),
                opt_num(r.inf_error),
                opt_num(r.episode_return),
                r.all_visited.to_string(),
                num(r.q_max_abs),
            ]
        })
        .collect();
    write_csv(
        &dir.join(format!("trace_seed{seed}.csv")),
        &meta,
        &TRACE_HEADER,
        &rows,
    )?;

    if !trace.episodes.is_empty() {
        let returns: Vec<f64> = trace.episodes.iter().map(|e| e.episode_return).collect();
        let ma = moving_average(&returns, run.moving_average_window);
        let rows: Vec<Vec<String>> = trace
            .episodes
            .iter()
            .zip(&ma)
            .map(|(e, m)| {
                vec![
                    e.episode.to_string(),
                    e.end_step.to_string(),
                    e.length.to_string(),
                    num(e.episode_return),
                    e.success.to_string(),
                    num(*m),
                ]
            })
            .collect();
        write_csv(
            &dir.join(format!("episodes_seed{seed}.csv")),
            &meta,
            &EPISODE_HEADER,
            &rows,
        )?;
    }

    write_json(
        &dir.join(format!("q_seed{seed}.json")),
        &trace.final_q.to_document(),
    )?;
    let row = vec![
        seed.to_string(),
        run.algorithm.name().to_string(),
        opt_num(result.success_pct),
        opt_num(result.final_inf_error),
        opt_int(result.visitation_step),
        result.total_steps.to_string(),
        result.episodes.to_string(),
    ];
    write_csv(
        &dir.join(format!("final_seed{seed}.csv")),
        &meta,
        &FINAL_HEADER,
        &[row],
    )
}

/// Trains one seed and evaluates its greedy policy when the run file asks.
pub fn train_seed(
    run: &RunFile,
    env: &Environment,
    q_star: &QTable<f64>,
    seed: u64,
) -> Result<(RunTrace<f64>, SeedResult), CliError> {
    let config = run.trainer_config(env.mdp.num_pairs(), seed)?;
    let trace = train_run(env.source(&run.sampling), &config, Some(q_star))?;
    let success_pct = match &run.evaluation {
        Some(e) => Some(
            100.0
                * evaluate_greedy(
                    env.env.as_ref(),
                    &trace.final_q,
                    e.episodes,
                    e.max_episode_len,
                    seed.wrapping_add(EVAL_SEED_OFFSET),
                )?,
        ),
        None => None,
    };
    let result = SeedResult {
        seed,
        success_pct,
        final_inf_error: trace.records.last().and_then(|r| r.inf_error),
        visitation_step: trace.visitation_step,
        total_steps: trace.total_steps,
        episodes: trace.episodes.len() as u64,
    };
    Ok((trace, result))
}

pub fn train(run: &RunFile, opts: &GlobalOptions) -> Result<TrainReport, CliError> {
    let env = run.load_environment()?;
    let (q_star, _) = value_iteration(&env.mdp, 1e-10)?;
    let dir = run.output_dir(opts.out.as_deref());
    ensure_dir(&dir)?;
    let results = per_seed(opts, &run.seeds, |seed| {
        let (trace, result) = train_seed(run, &env, &q_star, seed)?;
        write_seed_artifacts(&dir, run, &trace, &result)?;
        Ok(result)
    })?;
    let summary = summarize(&results);
    let meta = metadata_line(
        "train",
        &[
            ("environment", environment_label(run)),
            ("algorithm", run.algorithm.name().to_string()),
            ("seeds", results.len().to_string()),
        ],
    );
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|m| vec![m.metric.clone(), num(m.mean), num(m.std), m.n.to_string()])
        .collect();
    write_csv(
        &dir.join("summary.csv"),
        &meta,
        &["metric", "mean", "std", "n"],
        &rows,
    )?;
    Ok(TrainReport {
        environment: environment_label(run),
        algorithm: run.algorithm.name().to_string(),
        step_size: run.step_size,
        output_dir: dir,
        seeds: results,
        summary,
    })
}

impl TrainReport {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{} / {} / alpha={} -> {}\n{:>8} {:>12} {:>14} {:>10} {:>10} {:>9}\n",
            self.environment,
            self.algorithm,
            self.step_size,
            self.output_dir.display(),
            "seed",
            "success_pct",
            "final_inf_err",
            "visited_at",
            "steps",
            "episodes"
        );
        for r in &self.seeds {
            out.push_str(&format!(
                "{:>8} {:>12} {:>14} {:>10} {:>10} {:>9}\n",
                r.seed,
                r.success_pct.map_or("-".into(), |v| format!("{v:.2}")),
                r.final_inf_error.map_or("-".into(), |v| format!("{v:.6}")),
                r.visitation_step.map_or("-".into(), |v| v.to_string()),
                r.total_steps,
                r.episodes
            ));
        }
        for m in &self.summary {
            out.push_str(&format!(
                "{:<16} {:.4} ± {:.4} (n={})\n",
                m.metric, m.mean, m.std, m.n
            ));
        }
        out
    }
}

// ---------------------------------------------------------------- compare

pub const COMPARISON_HEADER: [&str; 7] = [
    "step",
    "w_inf",
    "a_norm",
    "sandwich_ok",
    "up_err",
    "low_err",
    "main_err",
];

#[derive(Clone, Debug, Serialize)]
pub struct CompareSeed {
    pub seed: u64,
    pub visitation_step: Option<u64>,
    pub ma_at_visitation: Option<f64>,
    pub ma_final: f64,
    pub final_err: f64,
    pub policy_match: bool,
    pub max_w_after_visit: f64,
    pub max_a_norm_after_visit: f64,
    pub max_q_abs: f64,
    pub sandwich_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    pub output_dir: PathBuf,
    pub seeds: Vec<CompareSeed>,
}

/// Whether the greedy action of `q` is optimal in every state, counting
/// actions within `tie` of the best `q_star` value as optimal.
pub fn policy_matches(q: &QTable<f64>, q_star: &QTable<f64>, tie: f64) -> bool {
    (0..q.num_states()).all(|s| {
        let a = q.greedy_action(s);
        q_star.get(s, a) >= q_star.state_max(s) - tie
    })
}

pub fn compare(run: &RunFile, opts: &GlobalOptions) -> Result<CompareReport, CliError> {
    let env = run.load_environment()?;
    if !env.exact || matches!(run.sampling, SamplingSpec::EpsilonGreedy { .. }) {
        return Err(CliError::Config(
            "compare needs a synthetic MDP (random or file) with i.i.d. sampling".into(),
        ));
    }
    let dir = run.output_dir(opts.out.as_deref());
    ensure_dir(&dir)?;
    let window = run.moving_average_window;
    let traces: Vec<(ComparisonTrace, CompareSeed)> = per_seed(opts, &run.seeds, |seed| {
        let config = run.trainer_config(env.mdp.num_pairs(), seed)?;
        let trace = run_with_comparisons(&env.mdp, &config)?;
        let meta = metadata_line(
            "compare",
            &[
                ("seed", seed.to_string()),
                ("rng", mbq_core::env::RNG_ID.to_string()),
                ("config_hash", format!("{:016x}", config.fingerprint())),
            ],
        );
        let rows: Vec<Vec<String>> = trace
            .records
            .iter()
            .map(|r| {
                vec![
                    r.step.to_string(),
                    num(r.w_inf),
                    num(r.a_norm),
                    r.sandwich_ok.to_string(),
                    num(r.up_err),
                    num(r.low_err),
                    num(r.main_err),
                ]
            })
            .collect();
        write_csv(
            &dir.join(format!("comparison_seed{seed}.csv")),
            &meta,
            &COMPARISON_HEADER,
            &rows,
        )?;

        let errs: Vec<f64> = trace.records.iter().map(|r| r.main_err).collect();
        let ma = moving_average(&errs, window);
        let ma_at_visitation = trace
            .visitation_step
            .and_then(|v| trace.records.iter().position(|r| r.step >= v).map(|i| ma[i]));
        let summary = CompareSeed {
            seed,
            visitation_step: trace.visitation_step,
            ma_at_visitation,
            ma_final: ma.last().copied().unwrap_or(f64::NAN),
            final_err: errs.last().copied().unwrap_or(f64::NAN),
            policy_match: policy_matches(&trace.final_q, &trace.q_star, 1e-9),
            max_w_after_visit: trace.max_w_after_visit,
            max_a_norm_after_visit: trace.max_a_norm_after_visit,
            max_q_abs: trace.max_q_abs,
            sandwich_ok: trace.records.iter().all(|r| r.sandwich_ok),
        };
        Ok((trace, summary))
    })?;

    let meta = metadata_line(
        "compare",
        &[
            ("environment", environment_label(run)),
            ("seeds", run.seeds.len().to_string()),
            ("window", window.to_string()),
        ],
    );
    let mut header = vec!["step".to_string()];
    header.extend(run.seeds.iter().map(|s| format!("err_seed{s}")));
    header.extend(run.seeds.iter().map(|s| format!("ma_seed{s}")));
    let averages: Vec<Vec<f64>> = traces
        .iter()
        .map(|(t, _)| moving_average(&t.records.iter().map(|r| r.main_err).collect::<Vec<_>>(), window))
        .collect();
    let len = traces.iter().map(|(t, _)| t.records.len()).min().unwrap_or(0);
    let rows: Vec<Vec<String>> = (0..len)
        .map(|i| {
            let mut row = vec![traces[0].0.records[i].step.to_string()];
            row.extend(traces.iter().map(|(t, _)| num(t.records[i].main_err)));
            row.extend(averages.iter().map(|m| num(m[i])));
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&dir.join("error_curve.csv"), &meta, &header_refs, &rows)?;

    let seeds: Vec<CompareSeed> = traces.into_iter().map(|(_, s)| s).collect();
    let rows: Vec<Vec<String>> = seeds
        .iter()
        .map(|s| {
            vec![
                s.seed.to_string(),
                opt_int(s.visitation_step),
                opt_num(s.ma_at_visitation),
                num(s.ma_final),
                num(s.final_err),
                s.policy_match.to_string(),
                num(s.max_w_after_visit),
                num(s.max_a_norm_after_visit),
                num(s.max_q_abs),
                s.sandwich_ok.to_string(),
            ]
        })
        .collect();
    write_csv(
        &dir.join("compare_summary.csv"),
        &meta,
        &[
            "seed",
            "visitation_step",
            "ma_at_visitation",
            "ma_final",
            "final_err",
            "policy_match",
            "max_w_after_visit",
            "max_a_norm_after_visit",
            "max_q_abs",
            "sandwich_ok",
        ],
        &rows,
    )?;
    Ok(CompareReport {
        output_dir: dir,
        seeds,
    })
}

impl CompareReport {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "comparison traces -> {}\n{:>8} {:>10} {:>12} {:>12} {:>8} {:>9}\n",
            self.output_dir.display(),
            "seed",
            "visited_at",
            "ma_visit",
            "ma_final",
            "policy",
            "sandwich"
        );
        for s in &self.seeds {
            out.push_str(&format!(
                "{:>8} {:>10} {:>12} {:>12.6} {:>8} {:>9}\n",
                s.seed,
                s.visitation_step.map_or("-".into(), |v| v.to_string()),
                s.ma_at_visitation.map_or("-".into(), |v| format!("{v:.6}")),
                s.ma_final,
                s.policy_match,
                s.sandwich_ok
            ));
        }
        out
    }
}

// ---------------------------------------------------------------- bound

pub fn bound(inputs: &BoundInputs, tails_at: Option<(u64, f64)>) -> Result<BoundReport, CliError> {
    let report = evaluate_bounds(inputs, tails_at)?;
    if !report.eps_valid {
        return Err(CliError::BoundValidity(format!(
            "epsilon {} outside the admissible window [0, {}]",
            inputs.epsilon, report.eps_upper
        )));
    }
    Ok(report)
}

// ---------------------------------------------------------------- verify

#[derive(Clone, Debug)]
pub struct VerifyArgs {
    /// `random:<S>x<A>[:<seed>]` or a path to an MDP document.
    pub env: String,
    pub ks: Vec<u64>,
    pub eps: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub kinds: Vec<TailKind>,
}

impl Default for VerifyArgs {
    fn default() -> Self {
        Self {
            env: "random:4x4:0".into(),
            ks: vec![2_000, 10_000, 50_000],
            eps: vec![0.25, 0.5, 1.0, 1.5, 1.7],
            trials: 500,
            seed: 0,
            kinds: TailKind::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub num_pairs: usize,
    pub gamma: f64,
    pub trials: usize,
    pub checks: Vec<TailCheck>,
    pub all_sound: bool,
}

pub fn parse_env_spec(spec: &str) -> Result<TabularMdp<f64>, CliError> {
    if let Some(rest) = spec.strip_prefix("random:") {
        let mut parts = rest.split(':');
        let dims = parts.next().unwrap_or_default();
        let seed = parts.next().map_or(Ok(0), str::parse::<u64>);
        let (s, a) = dims.split_once('x').unwrap_or(("", ""));
        match (s.parse::<usize>(), a.parse::<usize>(), seed) {
            (Ok(s), Ok(a), Ok(seed)) => Ok(random_mdp(s, a, seed)?),
            _ => Err(CliError::Config(format!("cannot parse environment '{spec}'"))),
        }
    } else {
        let text = std::fs::read_to_string(spec).map_err(|e| CliError::io(spec, e))?;
        Ok(TabularMdp::from_json(&text)?)
    }
}

pub fn verify(args: &VerifyArgs, opts: &GlobalOptions) -> Result<VerifyReport, CliError> {
    if args.trials == 0 {
        return Err(CliError::Config("trials must be at least 1".into()));
    }
    if args.ks.is_empty() || args.eps.is_empty() || args.kinds.is_empty() {
        return Err(CliError::Config("k, eps and kinds must be non-empty".into()));
    }
    let mdp = parse_env_spec(&args.env)?;
    let gamma = mdp.discount();
    for kind in &args.kinds {
        let window = match kind {
            TailKind::W => w_window(gamma),
            _ => pr_window(gamma),
        };
        if let Some(e) = args.eps.iter().find(|e| !(**e >= 0.0 && **e * **e <= window)) {
            return Err(CliError::BoundValidity(format!(
                "epsilon {e} outside the {}-bound window [0, {}]",
                kind.name(),
                window.sqrt()
            )));
        }
    }
    let pairs = mdp.num_pairs();
    let distribution = vec![1.0 / pairs as f64; pairs];
    let inputs = BoundInputs {
        epsilon: args.eps[0].max(f64::MIN_POSITIVE),
        delta: 0.5,
        gamma,
        alpha: 0.5,
        d_min: 1.0 / pairs as f64,
        num_pairs: pairs,
    };
    // Trials split into contiguous chunks; each trial keeps its own stream.
    let chunks = opts.threads.unwrap_or(1).max(1);
    let per = args.trials.div_ceil(chunks);
    let starts: Vec<u64> = (0..args.trials).step_by(per).map(|s| s as u64).collect();
    let samples = per_seed(opts, &starts, |start| {
        let n = per.min(args.trials - start as usize);
        Ok(sample_deviations_range(
            &mdp,
            &distribution,
            &args.ks,
            start..start + n as u64,
            args.seed,
        )?)
    })?;
    let mut merged = samples[0].clone();
    for s in &samples[1..] {
        for (dst, src) in [
            (&mut merged.p, &s.p),
            (&mut merged.r, &s.r),
            (&mut merged.w, &s.w),
        ] {
            for (d, x) in dst.iter_mut().zip(src) {
                d.extend_from_slice(x);
            }
        }
    }
    let checks: Vec<TailCheck> = check_tails(&merged, &inputs, &args.eps)?
        .into_iter()
        .filter(|c| args.kinds.contains(&c.kind))
        .collect();
    let all_sound = checks.iter().all(|c| c.sound);
    let report = VerifyReport {
        num_pairs: pairs,
        gamma,
        trials: args.trials,
        checks,
        all_sound,
    };
    if let Some(dir) = &opts.out {
        ensure_dir(dir)?;
        let meta = metadata_line(
            "verify",
            &[
                ("env", args.env.clone()),
                ("seed", args.seed.to_string()),
                ("trials", args.trials.to_string()),
            ],
        );
        let rows: Vec<Vec<String>> = report
            .checks
            .iter()
            .map(|c| {
                vec![
                    c.kind.name().to_string(),
                    c.k.to_string(),
                    num(c.eps),
                    c.trials.to_string(),
                    num(c.empirical),
                    num(c.analytic.value),
                    num(c.allowance),
                    c.vacuous.to_string(),
                    c.sound.to_string(),
                ]
            })
            .collect();
        write_csv(
            &dir.join("verify.csv"),
            &meta,
            &[
                "kind",
                "k",
                "eps",
                "trials",
                "empirical",
                "analytic",
                "allowance",
                "vacuous",
                "sound",
            ],
            &rows,
        )?;
    }
    Ok(report)
}

impl VerifyReport {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "|S||A|={} gamma={} trials={}\n{:>4} {:>8} {:>6} {:>10} {:>12} {:>10} {:>6}\n",
            self.num_pairs,
            self.gamma,
            self.trials,
            "kind",
            "k",
            "eps",
            "empirical",
            "analytic",
            "allowance",
            "ok"
        );
        for c in &self.checks {
            out.push_str(&format!(
                "{:>4} {:>8} {:>6} {:>10.4} {:>12.4e} {:>10} {:>6}\n",
                c.kind.name(),
                c.k,
                c.eps,
                c.empirical,
                c.analytic.value,
                if c.vacuous {
                    "vacuous".to_string()
                } else {
                    format!("{:.4}", c.allowance)
                },
                c.sound
            ));
        }
        out
    }
}

// ---------------------------------------------------------------- eval

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub environment: String,
    pub episodes: u64,
    pub max_episode_len: u64,
    pub seed: u64,
    pub success_pct: f64,
}

pub fn eval(run: &RunFile, q_path: &Path, seed: Option<u64>) -> Result<EvalReport, CliError> {
    let env = run.load_environment()?;
    let text = std::fs::read_to_string(q_path).map_err(|e| CliError::io(q_path, e))?;
    let doc: QTableDocument = serde_json::from_str(&text)?;
    let q = QTable::<f64>::from_document(&doc)?;
    let evaluation = run.evaluation.clone().unwrap_or(crate::runfile::EvaluationSpec {
        episodes: 2000,
        max_episode_len: run.max_episode_len,
    });
    let seed = seed.unwrap_or(run.seeds[0]);
    let rate = evaluate_greedy(
        env.env.as_ref(),
        &q,
        evaluation.episodes,
        evaluation.max_episode_len,
        seed.wrapping_add(EVAL_SEED_OFFSET),
    )?;
    Ok(EvalReport {
        environment: environment_label(run),
        episodes: evaluation.episodes,
        max_episode_len: evaluation.max_episode_len,
        seed,
        success_pct: 100.0 * rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_match_ignores_ties() {
        let q_star = QTable::from_rows(&[vec![1.0, 1.0], vec![0.0, 2.0]]).unwrap();
        let q = QTable::from_rows(&[vec![0.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(policy_matches(&q, &q_star, 1e-9));
        let wrong = QTable::from_rows(&[vec![0.0, 0.5], vec![1.0, 0.0]]).unwrap();
        assert!(!policy_matches(&wrong, &q_star, 1e-9));
    }

    #[test]
    fn env_spec_parsing() {
        assert_eq!(parse_env_spec("random:4x3:2").unwrap().num_pairs(), 12);
        assert_eq!(parse_env_spec("random:2x2").unwrap().num_pairs(), 4);
        assert!(matches!(parse_env_spec("random:4"), Err(CliError::Config(_))));
    }
}
