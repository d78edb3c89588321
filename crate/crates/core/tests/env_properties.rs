//! Environment invariants over random sentences and random action mixes.

use std::sync::OnceLock;

use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use readspeak::backend::{
    generate_corpus, Corpus, LearnedBackend, LearnedBackendConfig, OracleBackend, SynthesisBackend,
    SyntheticCorpusSpec,
};
use readspeak::baselines::{Policy, Wue};
use readspeak::env::{Env, EnvConfig, Observation};
use readspeak::episode::{Action, EpisodeTrace, Mode};
use readspeak::metrics::run_episode;

fn corpus() -> &'static Corpus {
    static C: OnceLock<Corpus> = OnceLock::new();
    C.get_or_init(|| {
        generate_corpus(&SyntheticCorpusSpec {
            size: 40,
            min_len: 1,
            max_len: 14,
            ..Default::default()
        })
        .unwrap()
    })
}

fn learned() -> &'static LearnedBackend {
    static L: OnceLock<LearnedBackend> = OnceLock::new();
    L.get_or_init(|| {
        LearnedBackend::new(
            LearnedBackend::arch_for(corpus(), &LearnedBackendConfig::default()),
            5,
        )
        .unwrap()
    })
}

struct Episode {
    trace: EpisodeTrace,
    rewards: Vec<f64>,
    component_sums: Vec<f64>,
    observations: Vec<Observation>,
}

fn random_episode(
    backend: &dyn SynthesisBackend,
    id: usize,
    mode: Mode,
    p_read: f64,
    seed: u64,
) -> Episode {
    let cfg = EnvConfig::default();
    let sentence = &corpus().sentences[id];
    let (mut env, obs) = Env::reset(sentence, backend, &cfg, mode).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rewards = Vec::new();
    let mut component_sums = Vec::new();
    let mut observations = vec![obs];
    while !env.is_terminal() {
        let c = env.counters();
        let a = if c.read < c.n && rng.random::<f64>() < p_read {
            Action::Read
        } else {
            Action::Speak
        };
        let step = env.step(a).unwrap();
        rewards.push(step.reward);
        component_sums.push(step.info.components().iter().map(|(_, v)| v).sum());
        observations.push(step.observation);
    }
    assert!(
        env.step(Action::Speak).is_err(),
        "stepping a finished episode must fail"
    );
    Episode {
        trace: env.into_trace().unwrap(),
        rewards,
        component_sums,
        observations,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn train_mode_invariants(id in 0usize..40, p_read in 0.0f64..1.0, seed in 0u64..1000, learned_backend: bool) {
        let backend: &dyn SynthesisBackend = if learned_backend { learned() } else { &OracleBackend::new(corpus().alphabet.clone()) };
        let ep = random_episode(backend, id, Mode::Train, p_read, seed);
        let t = &ep.trace;
        let sentence = &corpus().sentences[id];
        let cfg = EnvConfig::default();

        for (r, c) in ep.rewards.iter().zip(&ep.component_sums) {
            prop_assert!((r - c).abs() <= 1e-12);
        }
        for rec in &t.records {
            let parts = rec.r_cr + rec.r_ap + rec.r_q + rec.unread_penalty;
            prop_assert!((rec.r - parts).abs() <= 1e-12);
            if rec.action == Action::Read {
                prop_assert_eq!(rec.r_q, 0.0);
            } else {
                prop_assert_eq!(rec.r_cr, 0.0);
            }
            prop_assert!(rec.alpha.len() == t.n);
            prop_assert!((rec.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(rec.alpha[rec.read..].iter().all(|&a| a == 0.0));
        }
        let with_ap: Vec<usize> = t.records.iter().enumerate().filter(|(_, r)| r.r_ap != 0.0).map(|(k, _)| k).collect();
        prop_assert!(with_ap.len() <= 1);
        if let Some(&k) = with_ap.first() {
            prop_assert!(t.records[k].terminal && k + 1 == t.records.len());
        }
        prop_assert_eq!(t.records.iter().filter(|r| r.terminal).count(), 1);

        prop_assert_eq!(t.frames_emitted(), sentence.t());
        prop_assert!(t.d_t > 0.0 && t.d_t <= 1.0);
        prop_assert!((t.discounted_return - t.recompute_return()).abs() < 1e-9);
        let reads: Vec<usize> = t.records.iter().map(|r| r.read).collect();
        prop_assert!(reads.windows(2).all(|w| w[1] >= w[0]));
        let dim = Observation::dim(backend.hidden_dim(), cfg.window, backend.frame_dim());
        for o in &ep.observations {
            prop_assert_eq!(o.features().len(), dim);
            prop_assert!(o.window.iter().all(|&w| (0.0..=1.0).contains(&w)));
        }

        let again = random_episode(backend, id, Mode::Train, p_read, seed);
        prop_assert_eq!(t.to_ndjson().unwrap(), again.trace.to_ndjson().unwrap());
    }

    #[test]
    fn eval_mode_respects_the_frame_cap(id in 0usize..40, p_read in 0.0f64..1.0, seed in 0u64..1000) {
        let ep = random_episode(learned(), id, Mode::Eval, p_read, seed);
        let n = corpus().sentences[id].n();
        let emitted = ep.trace.frames_emitted();
        prop_assert!(emitted >= 1 && emitted <= EnvConfig::default().max_frames_per_char * n);
        prop_assert!(ep.trace.records.last().unwrap().terminal);
        prop_assert_eq!(ep.trace.records.last().unwrap().action, Action::Speak);
    }
}

#[test]
fn wue_on_the_oracle_has_no_quality_cost() {
    let oracle = OracleBackend::new(corpus().alphabet.clone());
    let cfg = EnvConfig::default();
    for s in &corpus().sentences {
        let t = run_episode(Wue.episode().as_mut(), s, &oracle, &cfg, Mode::Train).unwrap();
        assert_eq!(t.records.iter().map(|r| r.r_q).sum::<f64>(), 0.0);
        assert_eq!(t.d_t, 1.0);
    }
}
