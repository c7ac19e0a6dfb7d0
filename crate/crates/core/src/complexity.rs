//! Concentration inequalities, the sample-complexity thresholds, and Monte
//! Carlo checks of the tail bounds against simulated estimation passes.
//!
//! Bounds are evaluated in the log domain and returned in both forms; values
//! above one are vacuous but are returned unclamped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{error_decomposition, DiagnosticsError, ErrorTerms};
use crate::env::{stream_rng, EnvError, Sampler, SamplerSpec};
use crate::estimation::{EmpiricalModel, EstimationError};
use crate::mdp::{value_iteration, MdpError, TabularMdp};

/// Cap on fixed-point iterations for the implicit E3 threshold.
pub const E3_ITERATION_CAP: usize = 200;

#[derive(Debug, Error)]
pub enum BoundError {
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("epsilon {eps} outside the validity window [0, {upper}] of the {bound}")]
    EpsOutOfValidity {
        bound: &'static str,
        eps: f64,
        upper: f64,
    },
    #[error("E3 fixed point did not stabilize within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

/// A probability bound in log and linear form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub log: f64,
    pub value: f64,
}

impl TailBound {
    fn from_log(log: f64) -> Self {
        Self {
            log,
            value: log.exp(),
        }
    }

    /// The bound says nothing about the event.
    pub fn is_vacuous(&self) -> bool {
        self.log > 0.0
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub d_min: f64,
    pub num_pairs: usize,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<(), BoundError> {
        let bad = |m: String| Err(BoundError::InvalidRange(m));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta {} outside (0, 1)", self.delta));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} outside (0, 1)", self.gamma));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if !(self.d_min > 0.0 && self.d_min <= 1.0) {
            return bad(format!("d_min {} outside (0, 1]", self.d_min));
        }
        if self.num_pairs == 0 {
            return bad("num_pairs must be positive".into());
        }
        if self.d_min * self.num_pairs as f64 > 1.0 + 1e-9 {
            return bad(format!(
                "d_min {} exceeds the uniform mass 1/{}",
                self.d_min, self.num_pairs
            ));
        }
        Ok(())
    }
}

fn check_window(bound: &'static str, eps: f64, eps_sq_max: f64) -> Result<(), BoundError> {
    if !(eps >= 0.0) || eps * eps > eps_sq_max {
        return Err(BoundError::EpsOutOfValidity {
            bound,
            eps,
            upper: eps_sq_max.sqrt(),
        });
    }
    Ok(())
}

/// `2 exp(-2 n eps^2 / (b - a)^2)`.
pub fn hoeffding_tail(n: u64, eps: f64, a: f64, b: f64) -> Result<TailBound, BoundError> {
    if n == 0 || !(b > a) || !(eps >= 0.0) {
        return Err(BoundError::InvalidRange(format!(
            "n {n}, eps {eps}, [a, b] = [{a}, {b}]"
        )));
    }
    let width = b - a;
    Ok(TailBound::from_log(
        std::f64::consts::LN_2 - 2.0 * n as f64 * eps * eps / (width * width),
    ))
}

/// Validity window for [`visitation_adjusted_tail`]: `eps^2 <= 1.59 / B`.
pub fn visitation_window(b: f64) -> f64 {
    1.59 / b
}

/// `A exp(-k d B eps^2 / 2) + exp(-k d)`.
pub fn visitation_adjusted_tail(a: f64, b: f64, eps: f64, k: u64, d: f64) -> Result<TailBound, BoundError> {
    if !(a > 0.0 && b > 0.0) || k == 0 || !(d > 0.0 && d <= 1.0) {
        return Err(BoundError::InvalidRange(format!("A {a}, B {b}, k {k}, d {d}")));
    }
    check_window("visitation-adjusted tail", eps, visitation_window(b))?;
    let kd = k as f64 * d;
    Ok(TailBound::from_log(log_add_exp(
        a.ln() - kd * b * eps * eps / 2.0,
        -kd,
    )))
}

fn check_tail_inputs(k: u64, inputs: &BoundInputs) -> Result<(), BoundError> {
    if k == 0 {
        return Err(BoundError::InvalidRange("k must be positive".into()));
    }
    inputs.validate()
}

/// Window for the P̂ and R̂ bounds: `eps^2 <= min{3, 3/(1-gamma)^2}`.
pub fn pr_window(gamma: f64) -> f64 {
    let h = 1.0 - gamma;
    3.0f64.min(3.0 / (h * h))
}

/// Window for the noise bound: `eps^2 <= min{12, 12 gamma^2/(1-gamma)^2}`.
pub fn w_window(gamma: f64) -> f64 {
    let h = 1.0 - gamma;
    12.0f64.min(12.0 * gamma * gamma / (h * h))
}

/// Window of the sample-complexity theorem:
/// `eps^2 <= 36/(1-gamma)^2 min{12, 3 gamma^2/(1-gamma)^2}`.
pub fn theorem_window(gamma: f64) -> f64 {
    let h = 1.0 - gamma;
    36.0 / (h * h) * 12.0f64.min(3.0 * gamma * gamma / (h * h))
}

/// `P[||P̂_k Π^{Q*} Q* - P Π^{Q*} Q*||_inf >= eps]
///  <= 3 |S||A| exp(-k d_min (1-gamma)^2 eps^2 / 4)`.
pub fn p_tail_bound(k: u64, eps: f64, inputs: &BoundInputs) -> Result<TailBound, BoundError> {
    check_tail_inputs(k, inputs)?;
    check_window("transition-estimate bound", eps, pr_window(inputs.gamma))?;
    let h = 1.0 - inputs.gamma;
    Ok(TailBound::from_log(
        (3.0 * inputs.num_pairs as f64).ln() - k as f64 * inputs.d_min * h * h * eps * eps / 4.0,
    ))
}

/// `P[||R̂_k - R||_inf >= eps] <= 3 |S||A| exp(-k d_min eps^2 / 4)`.
pub fn r_tail_bound(k: u64, eps: f64, inputs: &BoundInputs) -> Result<TailBound, BoundError> {
    check_tail_inputs(k, inputs)?;
    check_window("reward-estimate bound", eps, pr_window(inputs.gamma))?;
    Ok(TailBound::from_log(
        (3.0 * inputs.num_pairs as f64).ln() - k as f64 * inputs.d_min * eps * eps / 4.0,
    ))
}

/// `P[||w_k||_inf >= eps] <= 6 |S||A| exp(-k d_min (1-gamma)^2 eps^2 / 16)`.
pub fn w_tail_bound(k: u64, eps: f64, inputs: &BoundInputs) -> Result<TailBound, BoundError> {
    check_tail_inputs(k, inputs)?;
    check_window("noise bound", eps, w_window(inputs.gamma))?;
    let h = 1.0 - inputs.gamma;
    Ok(TailBound::from_log(
        (6.0 * inputs.num_pairs as f64).ln() - k as f64 * inputs.d_min * h * h * eps * eps / 16.0,
    ))
}

/// `m = ceil((1/d_min) ln(2 |S||A| / delta))`.
pub fn data_collection_length(d_min: f64, num_pairs: usize, delta: f64) -> Result<u64, BoundError> {
    if !(d_min > 0.0 && d_min <= 1.0) || num_pairs == 0 || !(delta > 0.0 && delta < 1.0) {
        return Err(BoundError::InvalidRange(format!(
            "d_min {d_min}, num_pairs {num_pairs}, delta {delta}"
        )));
    }
    let m = ((2.0 * num_pairs as f64 / delta).ln() / d_min).ceil();
    Ok(m.max(0.0) as u64)
}

/// Tail values at a requested `(k, eps)`; `None` where eps leaves the window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub k: u64,
    pub eps: f64,
    pub p: Option<TailBound>,
    pub r: Option<TailBound>,
    pub w: Option<TailBound>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub m: u64,
    pub threshold_e1: u64,
    pub threshold_e2: u64,
    pub threshold_e3: u64,
    pub k_star: u64,
    pub e3_iterations: usize,
    pub eps_valid: bool,
    /// Largest admissible epsilon for the theorem.
    pub eps_upper: f64,
    pub tails: Option<TailReport>,
}

impl BoundReport {
    /// Fixed-width table for terminal output.
    pub fn to_table(&self) -> String {
        let i = &self.inputs;
        let mut out = String::new();
        let mut row = |k: &str, v: String| out.push_str(&format!("{k:<22}{v}\n"));
        row("epsilon", format!("{}", i.epsilon));
        row("delta", format!("{}", i.delta));
        row("gamma", format!("{}", i.gamma));
        row("alpha", format!("{}", i.alpha));
        row("d_min", format!("{}", i.d_min));
        row("|S||A|", format!("{}", i.num_pairs));
        row("eps window", format!("[0, {:.6}]", self.eps_upper));
        row("eps valid", format!("{}", self.eps_valid));
        row("m", format!("{}", self.m));
        row("threshold E1", format!("{}", self.threshold_e1));
        row("threshold E2", format!("{}", self.threshold_e2));
        row("threshold E3", format!("{}", self.threshold_e3));
        row("k*", format!("{}", self.k_star));
        if let Some(t) = &self.tails {
            let fmt = |b: &Option<TailBound>| match b {
                Some(b) if b.is_vacuous() => format!("{:.6e} (vacuous)", b.value),
                Some(b) => format!("{:.6e} (log {:.4})", b.value, b.log),
                None => "out of window".to_string(),
            };
            row(&format!("P-tail k={} eps={}", t.k, t.eps), fmt(&t.p));
            row(&format!("R-tail k={} eps={}", t.k, t.eps), fmt(&t.r));
            row(&format!("w-tail k={} eps={}", t.k, t.eps), fmt(&t.w));
        }
        out
    }
}

/// Smallest integer `k >= m + 2 + C ln(24 k |S||A| / delta)` with
/// `C = 1152 / (eps^2 (1-gamma)^4 d_min)`, by iterating the map from `m + 2`.
pub fn e3_threshold(inputs: &BoundInputs, m: u64) -> Result<(u64, usize), BoundError> {
    let h = 1.0 - inputs.gamma;
    let c = 1152.0 / (inputs.epsilon * inputs.epsilon * h.powi(4) * inputs.d_min);
    let scale = 24.0 * inputs.num_pairs as f64 / inputs.delta;
    let base = (m + 2) as f64;
    let mut k = m + 2;
    for iteration in 1..=E3_ITERATION_CAP {
        let next = (base + c * (scale * k as f64).ln()).ceil();
        if !next.is_finite() || next > 1e18 {
            return Err(BoundError::NonConvergence {
                iterations: iteration,
            });
        }
        let next = next as u64;
        if next == k {
            return Ok((k, iteration));
        }
        k = next;
    }
    Err(BoundError::NonConvergence {
        iterations: E3_ITERATION_CAP,
    })
}

/// Evaluates every threshold, flagging whether epsilon lies in the theorem's
/// window instead of rejecting it.
pub fn evaluate_bounds(
    inputs: &BoundInputs,
    tails_at: Option<(u64, f64)>,
) -> Result<BoundReport, BoundError> {
    inputs.validate()?;
    let h = 1.0 - inputs.gamma;
    let (eps, alpha) = (inputs.epsilon, inputs.alpha);
    let m = data_collection_length(inputs.d_min, inputs.num_pairs, inputs.delta)?;
    let ceil_from = |x: f64| (m as f64 + x.max(0.0)).ceil() as u64;
    let threshold_e1 = ceil_from((6.0 / (eps * h)).ln() / (alpha * h));
    let threshold_e2 = ceil_from(4.0 / (h * alpha) * (6.0 / (eps * h * h)).ln());
    let (threshold_e3, e3_iterations) = e3_threshold(inputs, m)?;
    let window = theorem_window(inputs.gamma);
    let tails = tails_at.map(|(k, e)| TailReport {
        k,
        eps: e,
        p: p_tail_bound(k, e, inputs).ok(),
        r: r_tail_bound(k, e, inputs).ok(),
        w: w_tail_bound(k, e, inputs).ok(),
    });
    Ok(BoundReport {
        inputs: *inputs,
        m,
        threshold_e1,
        threshold_e2,
        threshold_e3,
        k_star: threshold_e1.max(threshold_e2).max(threshold_e3),
        e3_iterations,
        eps_valid: eps * eps <= window,
        eps_upper: window.sqrt(),
        tails,
    })
}

/// The sample-complexity report; errors when epsilon leaves the theorem's
/// validity window.
pub fn sample_complexity(inputs: &BoundInputs) -> Result<BoundReport, BoundError> {
    let report = evaluate_bounds(inputs, None)?;
    if !report.eps_valid {
        return Err(BoundError::EpsOutOfValidity {
            bound: "sample-complexity theorem",
            eps: inputs.epsilon,
            upper: report.eps_upper,
        });
    }
    Ok(report)
}

/// Proof terms at `k` with the proof's choice `eps' = (1-gamma) eps / 6`.
pub fn proof_terms(k: u64, report: &BoundReport) -> Result<ErrorTerms, BoundError> {
    let i = &report.inputs;
    let eps_prime = (1.0 - i.gamma) * i.epsilon / 6.0;
    Ok(error_decomposition(k, report.m, i.alpha, i.gamma, eps_prime)?)
}

/// Which estimation error a Monte Carlo check measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailKind {
    /// `||P̂_k Π^{Q*} Q* - P Π^{Q*} Q*||_inf`
    P,
    /// `||R̂_k - R||_inf`
    R,
    /// `||w_k||_inf`
    W,
}

impl TailKind {
    pub const ALL: [TailKind; 3] = [TailKind::P, TailKind::R, TailKind::W];

    pub fn name(self) -> &'static str {
        match self {
            TailKind::P => "p",
            TailKind::R => "r",
            TailKind::W => "w",
        }
    }

    pub fn bound(self, k: u64, eps: f64, inputs: &BoundInputs) -> Result<TailBound, BoundError> {
        match self {
            TailKind::P => p_tail_bound(k, eps, inputs),
            TailKind::R => r_tail_bound(k, eps, inputs),
            TailKind::W => w_tail_bound(k, eps, inputs),
        }
    }
}

/// Per-trial sup-norm deviations at each checkpoint, indexed
/// `[checkpoint][trial]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationSamples {
    pub checkpoints: Vec<u64>,
    pub p: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
}

impl DeviationSamples {
    pub fn trials(&self) -> usize {
        self.p.first().map_or(0, Vec::len)
    }

    fn series(&self, kind: TailKind) -> &[Vec<f64>] {
        match kind {
            TailKind::P => &self.p,
            TailKind::R => &self.r,
            TailKind::W => &self.w,
        }
    }

    /// Fraction of trials whose deviation at checkpoint `k` is at least `eps`.
    pub fn frequency(&self, kind: TailKind, k: u64, eps: f64) -> Option<f64> {
        let idx = self.checkpoints.iter().position(|&c| c == k)?;
        let row = &self.series(kind)[idx];
        Some(row.iter().filter(|d| **d >= eps).count() as f64 / row.len() as f64)
    }
}

/// Runs `trials` independent i.i.d. estimation passes of length
/// `max(checkpoints)` and records the three deviations at every checkpoint.
/// Trial `i` draws from stream `i` of `seed`.
pub fn sample_deviations(
    mdp: &TabularMdp<f64>,
    distribution: &[f64],
    checkpoints: &[u64],
    trials: usize,
    seed: u64,
) -> Result<DeviationSamples, BoundError> {
    sample_deviations_range(mdp, distribution, checkpoints, 0..trials as u64, seed)
}

/// [`sample_deviations`] for the trials in `trials` only, so that a split
/// run concatenates to the same samples as a single one.
pub fn sample_deviations_range(
    mdp: &TabularMdp<f64>,
    distribution: &[f64],
    checkpoints: &[u64],
    trials: std::ops::Range<u64>,
    seed: u64,
) -> Result<DeviationSamples, BoundError> {
    if trials.is_empty() {
        return Err(BoundError::InvalidRange("trials must be at least 1".into()));
    }
    if checkpoints.is_empty() || checkpoints.contains(&0) {
        return Err(BoundError::InvalidRange("checkpoints must be positive".into()));
    }
    let mut sorted = checkpoints.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let (q_star, _) = value_iteration(mdp, 1e-12)?;
    let v_star = q_star.state_values();
    let gamma = mdp.discount();
    let true_next: Vec<f64> = (0..mdp.num_pairs())
        .map(|pair| {
            mdp.support_by_pair(pair)
                .iter()
                .map(|&(n, p)| p * v_star[n])
                .sum()
        })
        .collect();

    let mut out = DeviationSamples {
        checkpoints: sorted.clone(),
        p: vec![Vec::with_capacity((trials.end - trials.start) as usize); sorted.len()],
        r: vec![Vec::with_capacity((trials.end - trials.start) as usize); sorted.len()],
        w: vec![Vec::with_capacity((trials.end - trials.start) as usize); sorted.len()],
    };
    for trial in trials {
        let mut sampler = Sampler::new(SamplerSpec::iid(distribution.to_vec(), seed))?;
        *sampler.rng() = stream_rng(seed, trial);
        let mut model = EmpiricalModel::<f64>::new(mdp.num_states(), mdp.num_actions());
        let mut step = 0u64;
        for (idx, &k) in sorted.iter().enumerate() {
            while step < k {
                model.record_transition(&sampler.iid_sample(mdp)?)?;
                step += 1;
            }
            let (mut p, mut r, mut w) = (0.0f64, 0.0f64, 0.0f64);
            for pair in 0..mdp.num_pairs() {
                let dp = model.expected_next(pair, &v_star) - true_next[pair];
                let dr = model.rhat_pair(pair) - mdp.rewards()[pair];
                p = p.max(dp.abs());
                r = r.max(dr.abs());
                w = w.max((dr + gamma * dp).abs());
            }
            out.p[idx].push(p);
            out.r[idx].push(r);
            out.w[idx].push(w);
        }
    }
    Ok(out)
}

/// Outcome of comparing one empirical tail frequency with its bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub kind: TailKind,
    pub k: u64,
    pub eps: f64,
    pub trials: usize,
    pub empirical: f64,
    pub analytic: TailBound,
    /// `analytic + 3 sqrt(analytic (1 - analytic) / trials)`; infinite when vacuous.
    pub allowance: f64,
    pub vacuous: bool,
    pub sound: bool,
}

impl TailCheck {
    pub fn new(kind: TailKind, k: u64, eps: f64, trials: usize, empirical: f64, analytic: TailBound) -> Self {
        let vacuous = analytic.value > 1.0;
        let a = analytic.value.min(1.0);
        let allowance = if vacuous {
            f64::INFINITY
        } else {
            a + 3.0 * (a * (1.0 - a) / trials as f64).sqrt()
        };
        Self {
            kind,
            k,
            eps,
            trials,
            empirical,
            analytic,
            allowance,
            vacuous,
            sound: vacuous || empirical <= allowance,
        }
    }
}

/// Checks every `(kind, k, eps)` combination whose eps lies in the bound's
/// window. Out-of-window combinations are skipped.
pub fn check_tails(
    samples: &DeviationSamples,
    inputs: &BoundInputs,
    eps_grid: &[f64],
) -> Result<Vec<TailCheck>, BoundError> {
    let mut checks = Vec::new();
    for kind in TailKind::ALL {
        for &k in &samples.checkpoints {
            for &eps in eps_grid {
                let analytic = match kind.bound(k, eps, inputs) {
                    Ok(b) => b,
                    Err(BoundError::EpsOutOfValidity { .. }) => continue,
                    Err(e) => return Err(e),
                };
                let empirical = samples.frequency(kind, k, eps).expect("checkpoint sampled");
                checks.push(TailCheck::new(
                    kind,
                    k,
                    eps,
                    samples.trials(),
                    empirical,
                    analytic,
                ));
            }
        }
    }
    Ok(checks)
}

/// Fraction of `trials` passes with `||w_k||_inf >= eps`, alongside the bound.
pub fn monte_carlo_w_tail(
    mdp: &TabularMdp<f64>,
    distribution: &[f64],
    k: u64,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<TailCheck, BoundError> {
    let d_min = distribution.iter().cloned().fold(f64::INFINITY, f64::min);
    let inputs = BoundInputs {
        epsilon: eps.max(f64::MIN_POSITIVE),
        delta: 0.5,
        gamma: mdp.discount(),
        alpha: 0.5,
        d_min,
        num_pairs: mdp.num_pairs(),
    };
    let analytic = w_tail_bound(k, eps, &inputs)?;
    let samples = sample_deviations(mdp, distribution, &[k], trials, seed)?;
    let empirical = samples
        .frequency(TailKind::W, k, eps)
        .expect("checkpoint sampled");
    Ok(TailCheck::new(TailKind::W, k, eps, trials, empirical, analytic))
}
