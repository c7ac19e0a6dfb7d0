use std::path::PathBuf;

use mbq_core::complexity::{proof_terms, sample_complexity, BoundInputs};
use mbq_core::diagnostics::run_with_comparisons;
use mbq_core::env::{by_name, random_mdp};
use mbq_core::learner::{evaluate_greedy, train};
use mbq_core::mdp::{bellman_residual, inf_norm_distance, value_iteration};
use mbq_core::{
    Algorithm, Budget, QTable, QTable32, SamplerSpec, SamplingMode, Source, TabularMdp, TabularMdp32,
    TieBreak, TrainerConfig,
};

fn fixture(name: &str) -> TabularMdp<f64> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    TabularMdp::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn iid_config(num_pairs: usize, steps: u64, seed: u64) -> TrainerConfig {
    TrainerConfig {
        step_size: 0.1,
        discount: 0.9,
        warmup_steps: 20,
        budget: Budget::Steps(steps),
        sampler: SamplerSpec::uniform(num_pairs, seed),
        algorithm: Algorithm::Syncmbq,
        q_init: 0.0,
        log_stride: 100,
        max_episode_len: 200,
    }
}

#[test]
fn single_state_fixture_is_geometric_series() {
    let (q, _) = value_iteration(&fixture("single_state.json"), 1e-12).unwrap();
    assert!((q.get(0, 0) - 10.0).abs() < 1e-10);
}

#[test]
fn chain_fixture_matches_golden() {
    let mdp = fixture("chain2.json");
    let (q, _) = value_iteration(&mdp, 1e-12).unwrap();
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/chain2_qstar.json");
    let golden: mbq_core::mdp::QTableDocument =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let golden = QTable::from_document(&golden).unwrap();
    assert!(inf_norm_distance(&q, &golden).unwrap() < 1e-10);
    assert!(bellman_residual(&mdp, &golden).unwrap() < 1e-12);
}

#[test]
fn syncmbq_reaches_fixture_optimum() {
    let mdp = fixture("chain2.json");
    let (q_star, _) = value_iteration(&mdp, 1e-12).unwrap();
    let trace = train(Source::Iid(&mdp), &iid_config(4, 20_000, 3), Some(&q_star)).unwrap();
    let last = trace.records.last().unwrap().inf_error.unwrap();
    let first = trace.records.first().unwrap().inf_error.unwrap();
    assert!(last < 0.05, "final error {last}");
    assert!(last < first);
    assert_eq!(trace.final_q.policy(), q_star.policy());
}

#[test]
fn single_precision_tracks_double() {
    let mdp = fixture("chain2.json");
    let config = iid_config(4, 5_000, 9);
    let q64 = train::<f64>(Source::Iid(&mdp), &config, None).unwrap().final_q;
    let q32: QTable32 = train::<f32>(Source::Iid(&mdp), &config, None).unwrap().final_q;
    let widened: QTable<f64> = q32.cast();
    assert!(inf_norm_distance(&q64, &widened).unwrap() < 1e-3);
    let mdp32: TabularMdp32 = mdp.cast().unwrap();
    let (v32, _) = value_iteration(&mdp32, 1e-5).unwrap();
    assert!((v32.get(1, 0) - 10.0).abs() < 1e-3);
}

#[test]
fn runs_are_reproducible_from_the_seed() {
    let mdp = random_mdp(5, 3, 4).unwrap();
    let config = iid_config(15, 3_000, 21);
    let a = train::<f64>(Source::Iid(&mdp), &config, None).unwrap();
    let b = train::<f64>(Source::Iid(&mdp), &config, None).unwrap();
    assert_eq!(a.final_q, b.final_q);
    assert_eq!(a.visitation_step, b.visitation_step);
    let mut other = config.clone();
    other.sampler.seed = 22;
    let c = train::<f64>(Source::Iid(&mdp), &other, None).unwrap();
    assert_ne!(a.final_q, c.final_q);
}

#[test]
fn comparison_systems_bracket_the_iterate() {
    let mdp = fixture("synthetic3x2.json").with_discount(0.9).unwrap();
    let trace = run_with_comparisons(&mdp, &iid_config(6, 5_000, 1)).unwrap();
    assert!(trace.records.iter().all(|r| r.sandwich_ok));
    assert!(trace
        .records
        .iter()
        .all(|r| r.main_err <= r.up_err.max(r.low_err) + 1e-9));
    let visited = trace.visitation_step.unwrap();
    let expected = 1.0 - (1.0 - 0.9) * 0.1;
    for r in trace.records.iter().filter(|r| r.step > visited.max(20)) {
        assert!((r.a_norm - expected).abs() < 1e-12);
    }
}

#[test]
fn episodic_training_learns_taxi() {
    let env = by_name("taxi").unwrap();
    let config = TrainerConfig {
        step_size: 0.5,
        discount: 0.9,
        warmup_steps: 0,
        budget: Budget::Episodes(200),
        sampler: SamplerSpec {
            mode: SamplingMode::EpsilonGreedy {
                epsilon: 0.1,
                tie_break: TieBreak::Random,
            },
            seed: 0,
        },
        algorithm: Algorithm::Syncmbq,
        q_init: 0.0,
        log_stride: 1000,
        max_episode_len: 200,
    };
    let trace = train::<f64>(Source::Episodic(env.as_ref()), &config, None).unwrap();
    assert_eq!(trace.episodes.len(), 200);
    let success = evaluate_greedy(env.as_ref(), &trace.final_q, 200, 200, 1).unwrap();
    assert!(success > 0.8, "success {success}");
}

#[test]
fn worked_example_proof_terms_meet_epsilon() {
    let inputs = BoundInputs {
        epsilon: 1.0,
        delta: 0.2,
        gamma: 0.5,
        alpha: 0.5,
        d_min: 0.25,
        num_pairs: 4,
    };
    let report = sample_complexity(&inputs).unwrap();
    assert_eq!((report.m, report.k_star), (15, 1_503_873));
    let terms = proof_terms(report.k_star, &report).unwrap();
    assert!(terms.total() <= inputs.epsilon + 1e-9, "{terms:?}");
}
