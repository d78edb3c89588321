//! Episode collection and the REINFORCE training loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    select_action, Agent, AgentConfig, PolicyState, Selection, Transition, TransitionBatch,
};
use crate::backend::{Sentence, SynthesisBackend};
use crate::env::{Env, EnvConfig, Observation};
use crate::episode::{EpisodeTrace, Mode};
use crate::{Error, Result};

/// One teacher-forced episode played by the current policy.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub transitions: Vec<Transition>,
    pub trace: EpisodeTrace,
}

pub fn collect_episode<R: Rng>(
    agent: &Agent,
    sentence: &Sentence,
    backend: &dyn SynthesisBackend,
    env_cfg: &EnvConfig,
    selection: Selection,
    rng: &mut R,
) -> Result<Rollout> {
    let (mut env, mut obs): (Env, Observation) =
        Env::reset(sentence, backend, env_cfg, Mode::Train)?;
    let mut state = PolicyState::zeros(agent.policy.hidden());
    let mut transitions = Vec::new();
    while !env.is_terminal() {
        let counters = env.counters();
        let features = obs.features();
        let step = agent
            .policy
            .forward(&agent.policy_store, &features, &mut state)?;
        let action = select_action(&step.probs, selection, rng, &counters);
        let result = env.step(action)?;
        transitions.push(Transition {
            observation: features,
            action,
            reward: result.reward,
            masked: counters.source_exhausted(),
            ret: 0.0,
            baseline: 0.0,
            advantage: 0.0,
        });
        obs = result.observation;
    }
    Ok(Rollout {
        transitions,
        trace: env.into_trace()?,
    })
}

/// Per-update training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub batch: usize,
    pub mean_return: f64,
    #[serde(rename = "mean_d_T")]
    pub mean_d_t: f64,
    pub mean_mse: f64,
}

fn episode_rng(seed: u64, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode as u64 + 1);
    rng
}

/// Train on `sentences` for `cfg.total_episodes` episodes, updating after
/// every `cfg.episodes_per_update`. Episodes of one batch are collected in
/// parallel against a frozen copy of the parameters; each draws its
/// sentence and actions from its own seeded stream, so results do not
/// depend on thread scheduling.
pub fn train_agent(
    backend: &dyn SynthesisBackend,
    sentences: &[Sentence],
    env_cfg: &EnvConfig,
    cfg: &AgentConfig,
) -> Result<(Agent, Vec<CurveRow>)> {
    cfg.validate()?;
    env_cfg.validate()?;
    if sentences.is_empty() {
        return Err(Error::domain("no training sentences"));
    }
    let obs_dim = Observation::dim(backend.hidden_dim(), env_cfg.window, backend.frame_dim());
    let mut agent = Agent::new(obs_dim, cfg)?;
    let gamma = env_cfg.reward.gamma;
    let batches = cfg.total_episodes.div_ceil(cfg.episodes_per_update);
    let mut curve = Vec::with_capacity(batches);
    for b in 0..batches {
        let first = b * cfg.episodes_per_update;
        let last = (first + cfg.episodes_per_update).min(cfg.total_episodes);
        let frozen = &agent;
        let rollouts: Vec<Result<Rollout>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (first..last)
                .map(|e| {
                    scope.spawn(move || {
                        let mut rng = episode_rng(cfg.seed, e);
                        let sentence = &sentences[rng.random_range(0..sentences.len())];
                        collect_episode(frozen, sentence, backend, env_cfg, cfg.selection, &mut rng)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("collection worker panicked"))
                .collect()
        });
        let mut batch = TransitionBatch::default();
        let (mut ret, mut d_t, mut sq, mut frames) = (0.0, 0.0, 0.0, 0usize);
        let count = rollouts.len() as f64;
        for r in rollouts {
            let r = r?;
            ret += r.trace.discounted_return;
            d_t += r.trace.d_t;
            sq += r.trace.total_mse;
            frames += r.trace.scored_frames;
            batch.episodes.push(r.transitions);
        }
        agent.prepare_batch(&mut batch, gamma)?;
        let stats = agent.reinforce_update(&batch)?;
        let row = CurveRow {
            batch: b,
            mean_return: ret / count,
            mean_d_t: d_t / count,
            mean_mse: if frames == 0 { 0.0 } else { sq / frames as f64 },
        };
        if b % 50 == 0 || b + 1 == batches {
            log::info!(
                "batch {b}: return {:.4}, d_T {:.4}, mse {:.6}, baseline loss {:.4}",
                row.mean_return,
                row.mean_d_t,
                row.mean_mse,
                stats.baseline_loss
            );
        }
        curve.push(row);
    }
    Ok((agent, curve))
}
