//! Switched-system view of SyncMBQ: the noise vector `w_k`, the matrices
//! `A^Q_k = (1 - alpha) I + alpha gamma P̂_k Π^Q` applied in factored form,
//! and the upper/lower comparison recursions that bracket the iterate.

use std::time::Instant;

use thiserror::Error;

use crate::env::{EnvError, Sampler, SamplingMode};
use crate::estimation::{EmpiricalModel, EstimationError};
use crate::learner::{syncmbq_update, Budget, LearnerError, TrainerConfig};
use crate::mdp::{inf_norm_distance, value_iteration, MdpError, QTable, TabularMdp};
use crate::scalar::Scalar;

/// Tolerance for the elementwise ordering checks.
pub const SANDWICH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("size mismatch: expected {expected} entries, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error(
        "sandwich violated at step {step}, entry (s={state}, a={action}): lower {lower}, iterate {value}, upper {upper}"
    )]
    SandwichViolation {
        step: u64,
        state: usize,
        action: usize,
        lower: f64,
        value: f64,
        upper: f64,
    },
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

fn check_model<T: Scalar>(model: &EmpiricalModel<T>, q: &QTable<T>) -> Result<(), DiagnosticsError> {
    if model.num_states() != q.num_states() || model.num_actions() != q.num_actions() {
        return Err(DiagnosticsError::SizeMismatch {
            expected: model.num_pairs(),
            found: q.len(),
        });
    }
    Ok(())
}

/// `w_k = R̂_k - R + gamma (P̂_k - P) Π^{Q*} Q*`.
pub fn noise_vector<T: Scalar>(
    model: &EmpiricalModel<T>,
    mdp: &TabularMdp<T>,
    q_star: &QTable<T>,
) -> Result<QTable<T>, DiagnosticsError> {
    q_star.check_mdp(mdp)?;
    check_model(model, q_star)?;
    let v_star = q_star.state_values();
    let mut w = QTable::zeros(mdp.num_states(), mdp.num_actions());
    noise_into(model, mdp, &v_star, w.values_mut());
    Ok(w)
}

fn noise_into<T: Scalar>(model: &EmpiricalModel<T>, mdp: &TabularMdp<T>, v_star: &[T], out: &mut [T]) {
    let gamma = mdp.discount();
    for (pair, w) in out.iter_mut().enumerate() {
        let true_next: T = mdp
            .support_by_pair(pair)
            .iter()
            .map(|&(next, p)| p * v_star[next])
            .sum();
        *w = model.rhat_pair(pair) - mdp.rewards()[pair]
            + gamma * (model.expected_next(pair, v_star) - true_next);
    }
}

/// `A^Q_k x = (1 - alpha) x + alpha gamma P̂_k Π^Q x`, with `Q = policy_source`.
pub fn a_matrix_apply<T: Scalar>(
    model: &EmpiricalModel<T>,
    policy_source: &QTable<T>,
    x: &QTable<T>,
    alpha: T,
    gamma: T,
) -> Result<QTable<T>, DiagnosticsError> {
    check_model(model, x)?;
    policy_source.check_shape(x)?;
    let mut out = x.clone();
    let mut scratch = Vec::new();
    a_apply_into(
        model,
        policy_source,
        x,
        alpha,
        gamma,
        &mut scratch,
        out.values_mut(),
    );
    Ok(out)
}

fn a_apply_into<T: Scalar>(
    model: &EmpiricalModel<T>,
    policy_source: &QTable<T>,
    x: &QTable<T>,
    alpha: T,
    gamma: T,
    selected: &mut Vec<T>,
    out: &mut [T],
) {
    selected.clear();
    selected.extend((0..x.num_states()).map(|s| x.get(s, policy_source.greedy_action(s))));
    let keep = T::one() - alpha;
    let scale = alpha * gamma;
    for (pair, o) in out.iter_mut().enumerate() {
        *o = keep * x.values()[pair] + scale * model.expected_next(pair, selected);
    }
}

/// Induced sup-norm of `A^Q_k`: the largest absolute row sum.
///
/// Every row holds `1 - alpha` on the diagonal and `alpha gamma P̂(s'|s,a)` in
/// one column per successor, so the row sum does not depend on the selector.
pub fn a_matrix_inf_norm<T: Scalar>(
    model: &EmpiricalModel<T>,
    policy_source: &QTable<T>,
    alpha: T,
    gamma: T,
) -> T {
    debug_assert_eq!(policy_source.len(), model.num_pairs());
    let keep = (T::one() - alpha).abs();
    (0..model.num_pairs())
        .map(|pair| {
            let n = model.visit_counts()[pair];
            if n == 0 {
                return keep;
            }
            let mass: u64 = model.count_support(pair).iter().map(|&(_, c)| c).sum();
            keep + (alpha * gamma).abs() * T::lit(mass as f64) / T::lit(n as f64)
        })
        .fold(T::zero(), T::max)
}

/// Error coordinates of the two comparison systems.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonState<T> {
    pub q_upper_tilde: QTable<T>,
    pub q_lower_tilde: QTable<T>,
    pub step: u64,
}

impl<T: Scalar> ComparisonState<T> {
    /// Both systems start at the main iterate: `Q^U_0 = Q^L_0 = Q_0`.
    pub fn new(q0: &QTable<T>, q_star: &QTable<T>) -> Result<Self, DiagnosticsError> {
        let tilde = q0.difference(q_star)?;
        Ok(Self {
            q_upper_tilde: tilde.clone(),
            q_lower_tilde: tilde,
            step: 0,
        })
    }

    pub fn upper(&self, q_star: &QTable<T>) -> Result<QTable<T>, DiagnosticsError> {
        Ok(self.q_upper_tilde.sum(q_star)?)
    }

    pub fn lower(&self, q_star: &QTable<T>) -> Result<QTable<T>, DiagnosticsError> {
        Ok(self.q_lower_tilde.sum(q_star)?)
    }
}

/// `Q̃^U_{k+1} = A^{Q_k}_k Q̃^U_k + alpha w_k`,
/// `Q̃^L_{k+1} = A^{Q*}_k Q̃^L_k + alpha w_k`.
pub fn comparison_step<T: Scalar>(
    state: &ComparisonState<T>,
    model: &EmpiricalModel<T>,
    q_current: &QTable<T>,
    q_star: &QTable<T>,
    w: &QTable<T>,
    alpha: T,
    gamma: T,
) -> Result<ComparisonState<T>, DiagnosticsError> {
    for table in [q_current, q_star, w, &state.q_lower_tilde] {
        state.q_upper_tilde.check_shape(table)?;
    }
    check_model(model, q_current)?;
    let mut next = state.clone();
    let mut scratch = Vec::new();
    advance(
        &mut next.q_upper_tilde,
        &state.q_upper_tilde,
        model,
        q_current,
        w,
        alpha,
        gamma,
        &mut scratch,
    );
    advance(
        &mut next.q_lower_tilde,
        &state.q_lower_tilde,
        model,
        q_star,
        w,
        alpha,
        gamma,
        &mut scratch,
    );
    next.step += 1;
    Ok(next)
}

#[allow(clippy::too_many_arguments)]
fn advance<T: Scalar>(
    out: &mut QTable<T>,
    x: &QTable<T>,
    model: &EmpiricalModel<T>,
    selector: &QTable<T>,
    w: &QTable<T>,
    alpha: T,
    gamma: T,
    scratch: &mut Vec<T>,
) {
    a_apply_into(model, selector, x, alpha, gamma, scratch, out.values_mut());
    for (o, wi) in out.values_mut().iter_mut().zip(w.values()) {
        *o = *o + alpha * *wi;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRecord {
    pub step: u64,
    pub w_inf: f64,
    pub a_norm: f64,
    pub sandwich_ok: bool,
    pub up_err: f64,
    pub low_err: f64,
    pub main_err: f64,
    pub all_visited: bool,
    pub q_max_abs: f64,
}

#[derive(Clone, Debug)]
pub struct ComparisonTrace {
    pub records: Vec<ComparisonRecord>,
    pub q_star: QTable<f64>,
    pub final_q: QTable<f64>,
    pub visitation_step: Option<u64>,
    /// Largest `||w_k||_inf` over all steps after full visitation.
    pub max_w_after_visit: f64,
    /// Largest `||A^{Q_k}_k||_inf` over all steps after full visitation.
    pub max_a_norm_after_visit: f64,
    /// Largest `||Q_k||_inf` over every step.
    pub max_q_abs: f64,
    pub total_steps: u64,
    pub elapsed_secs: f64,
}

/// Co-evolves SyncMBQ with both comparison systems on one i.i.d. stream and
/// checks `Q^L_k <= Q_k <= Q^U_k` at every step.
///
/// During the first `warmup_steps` steps only the model moves; the iterate
/// and both comparison systems hold still.
pub fn run_with_comparisons(
    mdp: &TabularMdp<f64>,
    config: &TrainerConfig,
) -> Result<ComparisonTrace, DiagnosticsError> {
    config.validate()?;
    let steps = match config.budget {
        Budget::Steps(n) => n,
        Budget::Episodes(_) => {
            return Err(DiagnosticsError::InvalidRange(
                "comparison runs need a step budget".into(),
            ))
        }
    };
    if !matches!(config.sampler.mode, SamplingMode::Iid { .. }) {
        return Err(DiagnosticsError::InvalidRange(
            "comparison runs need an i.i.d. sampler".into(),
        ));
    }
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mdp = mdp.clone().with_discount(config.discount)?;
    let (q_star, _) = value_iteration(&mdp, 1e-12)?;
    let v_star = q_star.state_values();
    let (alpha, gamma) = (config.step_size, config.discount);

    let mut sampler = Sampler::new(config.sampler.clone())?;
    let mut model = EmpiricalModel::<f64>::new(ns, na);
    let mut q = QTable::filled(ns, na, config.q_init);
    let mut cmp = ComparisonState::new(&q, &q_star)?;
    let mut next = cmp.clone();
    let mut w = QTable::zeros(ns, na);
    let (mut scratch, mut selected) = (Vec::new(), Vec::new());

    let mut trace = ComparisonTrace {
        records: Vec::new(),
        q_star: q_star.clone(),
        final_q: q.clone(),
        visitation_step: None,
        max_w_after_visit: 0.0,
        max_a_norm_after_visit: 0.0,
        max_q_abs: q.max_abs(),
        total_steps: steps,
        elapsed_secs: 0.0,
    };
    let started = Instant::now();

    for step in 1..=steps {
        let t = sampler.iid_sample(&mdp)?;
        model.record_transition(&t)?;
        if model.all_visited() && trace.visitation_step.is_none() {
            trace.visitation_step = Some(step);
        }
        noise_into(&model, &mdp, &v_star, w.values_mut());
        let a_norm = a_matrix_inf_norm(&model, &q, alpha, gamma);
        let w_inf = w.max_abs();

        if model.total_steps() > config.warmup_steps {
            advance(
                &mut next.q_upper_tilde,
                &cmp.q_upper_tilde,
                &model,
                &q,
                &w,
                alpha,
                gamma,
                &mut selected,
            );
            advance(
                &mut next.q_lower_tilde,
                &cmp.q_lower_tilde,
                &model,
                &q_star,
                &w,
                alpha,
                gamma,
                &mut selected,
            );
            next.step = step;
            std::mem::swap(&mut cmp, &mut next);
            syncmbq_update(&mut q, &model, alpha, gamma, None, &mut scratch)?;
        }

        let mut main_err = 0.0f64;
        for (i, ((&qi, &qs), (&up, &low))) in q
            .values()
            .iter()
            .zip(q_star.values())
            .zip(cmp.q_upper_tilde.values().iter().zip(cmp.q_lower_tilde.values()))
            .enumerate()
        {
            let err = qi - qs;
            main_err = main_err.max(err.abs());
            if err > up + SANDWICH_TOLERANCE || err < low - SANDWICH_TOLERANCE {
                return Err(DiagnosticsError::SandwichViolation {
                    step,
                    state: i / na,
                    action: i % na,
                    lower: low + qs,
                    value: qi,
                    upper: up + qs,
                });
            }
        }
        let up_err = cmp.q_upper_tilde.max_abs();
        let low_err = cmp.q_lower_tilde.max_abs();
        if main_err > up_err.max(low_err) + SANDWICH_TOLERANCE {
            let i = q
                .values()
                .iter()
                .zip(q_star.values())
                .position(|(a, b)| (a - b).abs() == main_err)
                .unwrap_or(0);
            return Err(DiagnosticsError::SandwichViolation {
                step,
                state: i / na,
                action: i % na,
                lower: cmp.q_lower_tilde.values()[i] + q_star.values()[i],
                value: q.values()[i],
                upper: cmp.q_upper_tilde.values()[i] + q_star.values()[i],
            });
        }

        let q_max_abs = q.max_abs();
        trace.max_q_abs = trace.max_q_abs.max(q_max_abs);
        if model.all_visited() {
            trace.max_w_after_visit = trace.max_w_after_visit.max(w_inf);
            trace.max_a_norm_after_visit = trace.max_a_norm_after_visit.max(a_norm);
        }
        if step % config.log_stride == 0 {
            trace.records.push(ComparisonRecord {
                step,
                w_inf,
                a_norm,
                sandwich_ok: true,
                up_err,
                low_err,
                main_err,
                all_visited: model.all_visited(),
                q_max_abs,
            });
        }
    }
    trace.final_q = q;
    trace.elapsed_secs = started.elapsed().as_secs_f64();
    Ok(trace)
}

/// The three terms bounding `||Q̃_{k+1}||_inf` in the sample-complexity proof.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorTerms {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
}

impl ErrorTerms {
    pub fn total(&self) -> f64 {
        self.e1 + self.e2 + self.e3
    }
}

/// `E1 = 2/(1-gamma) exp(-(1-gamma) alpha (k-m+1))`,
/// `E2 = 2/(1-gamma)^2 (1-(1-gamma) alpha)^(k-m-ceil((k-m)/2))`,
/// `E3 = 2/(1-gamma) eps'`.
pub fn error_decomposition(
    k: u64,
    m: u64,
    alpha: f64,
    gamma: f64,
    eps_prime: f64,
) -> Result<ErrorTerms, DiagnosticsError> {
    if k < m {
        return Err(DiagnosticsError::InvalidRange(format!(
            "k = {k} is below m = {m}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0 && gamma > 0.0 && gamma < 1.0) || eps_prime < 0.0 {
        return Err(DiagnosticsError::InvalidRange(format!(
            "alpha {alpha}, gamma {gamma}, eps' {eps_prime}"
        )));
    }
    let h = 1.0 - gamma;
    let gap = k - m;
    let half = gap.div_ceil(2);
    let e1 = 2.0 / h * (-(h * alpha) * (gap + 1) as f64).exp();
    let e2 = 2.0 / (h * h) * (((gap - half) as f64) * (-h * alpha).ln_1p()).exp();
    let e3 = 2.0 / h * eps_prime;
    Ok(ErrorTerms { e1, e2, e3 })
}

/// `||Q_a - Q_b||_inf` in `f64`, a convenience for trace consumers.
pub fn error_norm<T: Scalar>(a: &QTable<T>, b: &QTable<T>) -> Result<f64, DiagnosticsError> {
    Ok(inf_norm_distance(a, b)?.as_f64())
}
