//! The learned READ/SPEAK policy.
//!
//! Policy: observation → GRU → two ReLU dense layers → 2 logits → softmax
//! over `[READ, SPEAK]`. Baseline: a three-layer dense network mapping the
//! observation to a scalar return estimate. Both are trained with REINFORCE
//! on batches of whole episodes, using advantages `G_j − b(o_j)` normalized
//! over the batch.

mod train;

pub use train::{collect_episode, train_agent, CurveRow, Rollout};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{EpisodePolicy, Policy};
use crate::env::Observation;
use crate::episode::{Action, EpisodeCounters};
use crate::numerics::{
    log_softmax, softmax, AdamConfig, GruCache, GruCell, GruSpec, Mlp, MlpCache, MlpSpec,
    ParamStore, Tensor,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    #[default]
    Sample,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub gru_hidden: usize,
    /// Width of both dense layers after the GRU.
    pub dense_hidden: usize,
    /// Width of both hidden layers of the baseline network.
    pub baseline_hidden: usize,
    pub episodes_per_update: usize,
    pub total_episodes: usize,
    pub lr: f64,
    /// Added to the batch standard deviation when normalizing advantages.
    pub advantage_eps: f64,
    /// Action selection while collecting training episodes.
    pub selection: Selection,
    /// Global gradient-norm clip, applied to each network separately.
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gru_hidden: 64,
            dense_hidden: 64,
            baseline_hidden: 64,
            episodes_per_update: 10,
            total_episodes: 5000,
            lr: 1e-4,
            advantage_eps: 1e-8,
            selection: Selection::Sample,
            max_grad_norm: None,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gru_hidden == 0 || self.dense_hidden == 0 || self.baseline_hidden == 0 {
            return Err(Error::Config("agent: layer widths must be positive".into()));
        }
        if self.episodes_per_update == 0 {
            return Err(Error::Config(
                "agent: episodes_per_update must be at least 1".into(),
            ));
        }
        if self.lr <= 0.0 || self.lr.is_nan() || self.advantage_eps < 0.0 {
            return Err(Error::Config(
                "agent: lr must be positive, advantage_eps nonnegative".into(),
            ));
        }
        if matches!(self.max_grad_norm, Some(c) if c <= 0.0 || c.is_nan()) {
            return Err(Error::Config(
                "agent: max_grad_norm must be positive".into(),
            ));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig::with_lr(self.lr)
    }
}

/// Recurrent memory of the policy within one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub h: Vec<f64>,
}

impl PolicyState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolicyStep {
    pub probs: Vec<f64>,
    gru: GruCache,
    trunk: MlpCache,
}

#[derive(Debug, Clone)]
pub struct PolicyNet {
    gru: GruCell,
    trunk: Mlp,
}

impl PolicyNet {
    pub fn register(store: &mut ParamStore, obs_dim: usize, cfg: &AgentConfig) -> Result<Self> {
        let gru = GruCell::register(
            store,
            "policy.gru",
            GruSpec {
                input: obs_dim,
                hidden: cfg.gru_hidden,
            },
        )?;
        let trunk = Mlp::register(
            store,
            "policy.trunk",
            MlpSpec::relu_stack(cfg.gru_hidden, &[cfg.dense_hidden, cfg.dense_hidden], 2),
        )?;
        Ok(Self { gru, trunk })
    }

    pub fn hidden(&self) -> usize {
        self.gru.spec().hidden
    }

    pub fn obs_dim(&self) -> usize {
        self.gru.spec().input
    }

    /// One step: returns `[p_read, p_speak]` and advances `state`.
    pub fn forward(
        &self,
        store: &ParamStore,
        obs: &[f64],
        state: &mut PolicyState,
    ) -> Result<PolicyStep> {
        let (h, gru) = self.gru.forward(store, obs, &state.h)?;
        let (logits, trunk) = self.trunk.forward(store, &h)?;
        let probs = softmax(&logits)?;
        state.h = h;
        Ok(PolicyStep { probs, gru, trunk })
    }

    /// `−Σ_j w_j log π(a_j | o_1..o_j)` over one episode.
    pub fn weighted_nll(
        &self,
        store: &ParamStore,
        observations: &[Vec<f64>],
        actions: &[Action],
        weights: &[f64],
    ) -> Result<f64> {
        let mut state = PolicyState::zeros(self.hidden());
        let mut loss = 0.0;
        for ((o, a), w) in observations.iter().zip(actions).zip(weights) {
            let (h, _) = self.gru.forward(store, o, &state.h)?;
            let (logits, _) = self.trunk.forward(store, &h)?;
            loss -= w * log_softmax(&logits)?[a.index()];
            state.h = h;
        }
        Ok(loss)
    }

    /// Accumulate `∂/∂θ` of [`Self::weighted_nll`] by backpropagation
    /// through the unrolled GRU.
    pub fn backward_weighted_nll(
        &self,
        store: &mut ParamStore,
        observations: &[Vec<f64>],
        actions: &[Action],
        weights: &[f64],
    ) -> Result<()> {
        let mut state = PolicyState::zeros(self.hidden());
        let mut steps = Vec::with_capacity(observations.len());
        for o in observations {
            steps.push(self.forward(store, o, &mut state)?);
        }
        let mut grad_h_next = vec![0.0; self.hidden()];
        for j in (0..steps.len()).rev() {
            let step = &steps[j];
            // d(−w log p_a)/d logits = w (p − onehot(a))
            let mut g_logits: Vec<f64> = step.probs.iter().map(|p| weights[j] * p).collect();
            g_logits[actions[j].index()] -= weights[j];
            let mut grad_h = self.trunk.backward(store, &step.trunk, &g_logits)?;
            for (g, n) in grad_h.iter_mut().zip(&grad_h_next) {
                *g += n;
            }
            let (_, gh_prev) = self.gru.backward(store, &step.gru, &grad_h)?;
            grad_h_next = gh_prev;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BaselineNet {
    mlp: Mlp,
}

impl BaselineNet {
    pub fn register(store: &mut ParamStore, obs_dim: usize, cfg: &AgentConfig) -> Result<Self> {
        let mlp = Mlp::register(
            store,
            "baseline",
            MlpSpec::relu_stack(obs_dim, &[cfg.baseline_hidden, cfg.baseline_hidden], 1),
        )?;
        Ok(Self { mlp })
    }

    pub fn forward(&self, store: &ParamStore, obs: &[f64]) -> Result<f64> {
        Ok(self.mlp.forward(store, obs)?.0[0])
    }

    /// `mean_j (G_j − b(o_j))²`.
    pub fn loss(
        &self,
        store: &ParamStore,
        observations: &[Vec<f64>],
        returns: &[f64],
    ) -> Result<f64> {
        let mut total = 0.0;
        for (o, g) in observations.iter().zip(returns) {
            let d = g - self.forward(store, o)?;
            total += d * d;
        }
        Ok(total / observations.len().max(1) as f64)
    }

    /// Accumulate the gradient of [`Self::loss`]; returns the loss.
    pub fn backward_loss(
        &self,
        store: &mut ParamStore,
        observations: &[Vec<f64>],
        returns: &[f64],
    ) -> Result<f64> {
        let m = observations.len().max(1) as f64;
        let mut total = 0.0;
        for (o, g) in observations.iter().zip(returns) {
            let (b, cache) = self.mlp.forward(store, o)?;
            let d = g - b[0];
            total += d * d;
            self.mlp.backward(store, &cache, &[-2.0 * d / m])?;
        }
        Ok(total / m)
    }
}

/// Pick an action from `[p_read, p_speak]`. Greedy ties go to READ. READ is
/// never returned once the whole source has been read.
pub fn select_action<R: Rng>(
    probs: &[f64],
    selection: Selection,
    rng: &mut R,
    counters: &EpisodeCounters,
) -> Action {
    let action = match selection {
        Selection::Greedy => {
            if probs[0] >= probs[1] {
                Action::Read
            } else {
                Action::Speak
            }
        }
        Selection::Sample => {
            if rng.random::<f64>() < probs[0] {
                Action::Read
            } else {
                Action::Speak
            }
        }
    };
    if action == Action::Read && counters.source_exhausted() {
        Action::Speak
    } else {
        action
    }
}

/// `G_j = r_j + γ G_{j+1}`, where `r_j` is the reward returned by step `j`.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for j in (0..rewards.len()).rev() {
        g = rewards[j] + gamma * g;
        out[j] = g;
    }
    out
}

/// `(A − mean A) / (std A + ε)` with `A = G − b`, population statistics over
/// the whole batch.
pub fn normalize_advantages(returns: &[f64], baselines: &[f64], eps: f64) -> Vec<f64> {
    let n = returns.len();
    if n < 2 {
        log::warn!("advantage normalization over {n} step(s): using zero advantages");
        return vec![0.0; n];
    }
    let a: Vec<f64> = returns.iter().zip(baselines).map(|(g, b)| g - b).collect();
    let mean = a.iter().sum::<f64>() / n as f64;
    let var = a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let denom = var.sqrt() + eps;
    a.iter().map(|x| (x - mean) / denom).collect()
}

/// One agent decision inside a collected episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    /// The action was forced (READ impossible) and carries no gradient.
    pub masked: bool,
    pub ret: f64,
    pub baseline: f64,
    pub advantage: f64,
}

/// Whole episodes gathered since the last update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransitionBatch {
    pub episodes: Vec<Vec<Transition>>,
}

impl TransitionBatch {
    pub fn steps(&self) -> usize {
        self.episodes.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub baseline_loss: f64,
}

/// Policy network, baseline network and their separate optimizer states.
#[derive(Debug, Clone)]
pub struct Agent {
    pub cfg: AgentConfig,
    pub policy: PolicyNet,
    pub policy_store: ParamStore,
    pub baseline: BaselineNet,
    pub baseline_store: ParamStore,
}

impl Agent {
    pub fn new(obs_dim: usize, cfg: &AgentConfig) -> Result<Self> {
        cfg.validate()?;
        let mut policy_store = ParamStore::new();
        let policy = PolicyNet::register(&mut policy_store, obs_dim, cfg)?;
        let mut baseline_store = ParamStore::new();
        let baseline = BaselineNet::register(&mut baseline_store, obs_dim, cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        policy_store.init_uniform(&mut rng);
        baseline_store.init_uniform(&mut rng);
        Ok(Self {
            cfg: cfg.clone(),
            policy,
            policy_store,
            baseline,
            baseline_store,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.obs_dim()
    }

    /// Every parameter of both networks, policy first.
    pub fn named_tensors(&self) -> Vec<(&str, &Tensor)> {
        self.policy_store
            .named_values()
            .chain(self.baseline_store.named_values())
            .collect()
    }

    /// Rebuild from stored tensors, checking every name and shape.
    pub fn from_tensors<'a>(
        obs_dim: usize,
        cfg: &AgentConfig,
        tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>,
    ) -> Result<Self> {
        let mut agent = Self::new(obs_dim, cfg)?;
        let (policy, baseline): (Vec<_>, Vec<_>) = tensors
            .into_iter()
            .partition(|(name, _)| !name.starts_with("baseline"));
        crate::backend::learned::load_into(&mut agent.policy_store, policy)?;
        crate::backend::learned::load_into(&mut agent.baseline_store, baseline)?;
        Ok(agent)
    }

    /// Fill in returns, baseline values and normalized advantages.
    pub fn prepare_batch(&self, batch: &mut TransitionBatch, gamma: f64) -> Result<()> {
        let mut all_g = Vec::new();
        let mut all_b = Vec::new();
        for ep in &mut batch.episodes {
            let rewards: Vec<f64> = ep.iter().map(|t| t.reward).collect();
            for (t, g) in ep.iter_mut().zip(compute_returns(&rewards, gamma)) {
                t.ret = g;
                t.baseline = self
                    .baseline
                    .forward(&self.baseline_store, &t.observation)?;
                all_g.push(t.ret);
                all_b.push(t.baseline);
            }
        }
        let adv = normalize_advantages(&all_g, &all_b, self.cfg.advantage_eps);
        let mut k = 0;
        for ep in &mut batch.episodes {
            for t in ep.iter_mut() {
                t.advantage = adv[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// Batch policy loss `−Σ Â_j log π(a_j|o_j)` under the current parameters.
    pub fn policy_loss(&self, store: &ParamStore, batch: &TransitionBatch) -> Result<f64> {
        let mut total = 0.0;
        for ep in &batch.episodes {
            let (obs, actions, weights) = unzip_episode(ep);
            total += self.policy.weighted_nll(store, &obs, &actions, &weights)?;
        }
        Ok(total)
    }

    /// Batch baseline loss `mean_j (G_j − b(o_j))²`.
    pub fn baseline_loss(&self, store: &ParamStore, batch: &TransitionBatch) -> Result<f64> {
        let (obs, returns) = flatten_returns(batch);
        self.baseline.loss(store, &obs, &returns)
    }

    /// Accumulate gradients of both losses into the stores (zeroed first).
    pub fn accumulate_gradients(&mut self, batch: &TransitionBatch) -> Result<UpdateStats> {
        self.policy_store.zero_grad();
        self.baseline_store.zero_grad();
        let policy_loss = self.policy_loss(&self.policy_store, batch)?;
        for ep in &batch.episodes {
            let (obs, actions, weights) = unzip_episode(ep);
            self.policy
                .backward_weighted_nll(&mut self.policy_store, &obs, &actions, &weights)?;
        }
        let (obs, returns) = flatten_returns(batch);
        let baseline_loss =
            self.baseline
                .backward_loss(&mut self.baseline_store, &obs, &returns)?;
        if !policy_loss.is_finite() || !baseline_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "policy loss {policy_loss}, baseline loss {baseline_loss}"
            )));
        }
        Ok(UpdateStats {
            policy_loss,
            baseline_loss,
        })
    }

    /// One Adam step on each network from a prepared batch.
    pub fn reinforce_update(&mut self, batch: &TransitionBatch) -> Result<UpdateStats> {
        let stats = self.accumulate_gradients(batch)?;
        if let Some(c) = self.cfg.max_grad_norm {
            self.policy_store.clip_grad_norm(c);
            self.baseline_store.clip_grad_norm(c);
        }
        let adam = self.cfg.adam();
        self.policy_store.adam_step(&adam)?;
        self.baseline_store.adam_step(&adam)?;
        Ok(stats)
    }

    /// A greedy, read-only view for evaluation.
    pub fn greedy(&self) -> GreedyAgent<'_> {
        GreedyAgent { agent: self }
    }
}

fn unzip_episode(ep: &[Transition]) -> (Vec<Vec<f64>>, Vec<Action>, Vec<f64>) {
    let obs = ep.iter().map(|t| t.observation.clone()).collect();
    let actions = ep.iter().map(|t| t.action).collect();
    let weights = ep
        .iter()
        .map(|t| if t.masked { 0.0 } else { t.advantage })
        .collect();
    (obs, actions, weights)
}

fn flatten_returns(batch: &TransitionBatch) -> (Vec<Vec<f64>>, Vec<f64>) {
    let steps = batch.episodes.iter().flatten();
    (
        steps.clone().map(|t| t.observation.clone()).collect(),
        steps.map(|t| t.ret).collect(),
    )
}

pub struct GreedyAgent<'a> {
    agent: &'a Agent,
}

struct GreedyEpisode<'a> {
    agent: &'a Agent,
    state: PolicyState,
    rng: ChaCha8Rng,
}

impl EpisodePolicy for GreedyEpisode<'_> {
    fn act(&mut self, obs: &Observation, counters: &EpisodeCounters, _j: usize) -> Result<Action> {
        let step = self.agent.policy.forward(
            &self.agent.policy_store,
            &obs.features(),
            &mut self.state,
        )?;
        Ok(select_action(
            &step.probs,
            Selection::Greedy,
            &mut self.rng,
            counters,
        ))
    }
}

impl Policy for GreedyAgent<'_> {
    fn name(&self) -> String {
        "agent".into()
    }

    fn episode(&self) -> Box<dyn EpisodePolicy + '_> {
        Box::new(GreedyEpisode {
            agent: self.agent,
            state: PolicyState::zeros(self.agent.policy.hidden()),
            // greedy selection never draws
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_difference_grad;
    use proptest::{prop_assert, proptest};

    fn tiny_cfg(seed: u64) -> AgentConfig {
        AgentConfig {
            gru_hidden: 5,
            dense_hidden: 4,
            baseline_hidden: 6,
            seed,
            ..Default::default()
        }
    }

    fn random_batch(seed: u64, obs_dim: usize, episodes: usize) -> TransitionBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut batch = TransitionBatch::default();
        for _ in 0..episodes {
            let len = rng.random_range(1..5);
            batch.episodes.push(
                (0..len)
                    .map(|_| Transition {
                        observation: (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                        action: if rng.random::<bool>() {
                            Action::Read
                        } else {
                            Action::Speak
                        },
                        reward: rng.random_range(-2.0..0.0),
                        masked: false,
                        ret: 0.0,
                        baseline: 0.0,
                        advantage: 0.0,
                    })
                    .collect(),
            );
        }
        batch
    }

    fn rel_close(a: &[Tensor], b: &[Tensor]) {
        for (x, y) in a.iter().zip(b) {
            for (p, q) in x.data().iter().zip(y.data()) {
                let tol = 1e-4 * p.abs().max(q.abs()) + 1e-7;
                assert!((p - q).abs() <= tol, "{p} vs {q}");
            }
        }
    }

    #[test]
    fn zero_parameters_give_even_odds() {
        let mut a = Agent::new(7, &tiny_cfg(0)).unwrap();
        a.policy_store.fill(0.0);
        a.baseline_store.fill(0.0);
        let mut st = PolicyState::zeros(5);
        let p = a
            .policy
            .forward(&a.policy_store, &[0.3; 7], &mut st)
            .unwrap();
        assert_eq!(p.probs, vec![0.5, 0.5]);
        assert_eq!(
            a.baseline.forward(&a.baseline_store, &[0.3; 7]).unwrap(),
            0.0
        );
        assert!(a
            .policy
            .forward(&a.policy_store, &[0.3; 6], &mut st)
            .is_err());
    }

    #[test]
    fn selection_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let open = EpisodeCounters::start(3, Some(5)).unwrap();
        let done = EpisodeCounters::start(1, Some(5)).unwrap();
        for _ in 0..20 {
            assert_eq!(
                select_action(&[1.0, 0.0], Selection::Sample, &mut rng, &open),
                Action::Read
            );
            assert_eq!(
                select_action(&[1.0, 0.0], Selection::Sample, &mut rng, &done),
                Action::Speak
            );
        }
        assert_eq!(
            select_action(&[0.4, 0.6], Selection::Greedy, &mut rng, &open),
            Action::Speak
        );
        assert_eq!(
            select_action(&[0.5, 0.5], Selection::Greedy, &mut rng, &open),
            Action::Read
        );
        assert_eq!(
            select_action(&[0.5, 0.5], Selection::Greedy, &mut rng, &done),
            Action::Speak
        );
    }

    #[test]
    fn returns_examples() {
        assert_eq!(
            compute_returns(&[0.0, 0.0, -5.0], 1.0),
            vec![-5.0, -5.0, -5.0]
        );
        assert_eq!(compute_returns(&[1.0, 1.0], 0.5), vec![1.5, 1.0]);
        assert_eq!(compute_returns(&[1.0, 2.0, 3.0], 0.0), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn advantage_examples() {
        let a = normalize_advantages(&[1.0, -1.0], &[0.0, 0.0], 1e-8);
        assert!((a[0] - 1.0).abs() < 1e-7 && (a[1] + 1.0).abs() < 1e-7);
        assert_eq!(
            normalize_advantages(&[2.0; 4], &[0.0; 4], 1e-8),
            vec![0.0; 4]
        );
        assert_eq!(normalize_advantages(&[3.0], &[1.0], 1e-8), vec![0.0]);
    }

    proptest! {
        #[test]
        fn advantages_are_standardized(
            g in proptest::collection::vec(-50.0f64..50.0, 2..40),
            shift in -100.0f64..100.0,
        ) {
            let b = vec![0.0; g.len()];
            let a = normalize_advantages(&g, &b, 1e-8);
            let n = a.len() as f64;
            let mean = a.iter().sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            let spread = g.iter().cloned().fold(f64::MIN, f64::max) - g.iter().cloned().fold(f64::MAX, f64::min);
            if spread > 1e-3 {
                let sd = (a.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
                prop_assert!((1.0 - 1e-6..=1.0).contains(&sd));
            }
            let shifted: Vec<f64> = g.iter().map(|x| x + shift).collect();
            let a2 = normalize_advantages(&shifted, &b, 1e-8);
            for (x, y) in a.iter().zip(&a2) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn policy_gradient_matches_finite_differences() {
        for seed in 0..4 {
            let obs_dim = 4;
            let mut agent = Agent::new(obs_dim, &tiny_cfg(seed)).unwrap();
            let mut batch = random_batch(seed + 100, obs_dim, 3);
            agent.prepare_batch(&mut batch, 0.9).unwrap();
            agent.accumulate_gradients(&batch).unwrap();
            let analytic = agent.policy_store.grads();
            let a2 = agent.clone();
            let numeric = finite_difference_grad(
                &mut agent.policy_store,
                |s| a2.policy_loss(s, &batch).unwrap(),
                1e-5,
            );
            rel_close(&analytic, &numeric);

            let analytic = agent.baseline_store.grads();
            let numeric = finite_difference_grad(
                &mut agent.baseline_store,
                |s| a2.baseline_loss(s, &batch).unwrap(),
                1e-5,
            );
            rel_close(&analytic, &numeric);
        }
    }

    #[test]
    fn zero_advantages_leave_policy_unchanged() {
        let mut agent = Agent::new(4, &tiny_cfg(1)).unwrap();
        let mut batch = random_batch(5, 4, 2);
        agent.prepare_batch(&mut batch, 0.9).unwrap();
        for t in batch.episodes.iter_mut().flatten() {
            t.advantage = 0.0;
        }
        let before = agent.clone();
        agent.reinforce_update(&batch).unwrap();
        let same: Vec<_> = before
            .policy_store
            .named_values()
            .map(|(_, t)| t.clone())
            .collect();
        let after: Vec<_> = agent
            .policy_store
            .named_values()
            .map(|(_, t)| t.clone())
            .collect();
        assert_eq!(same, after);
        assert_ne!(
            before.baseline_store.named_values().next().unwrap().1,
            agent.baseline_store.named_values().next().unwrap().1
        );
    }

    #[test]
    fn duplicated_episodes_double_the_loss() {
        let agent = Agent::new(4, &tiny_cfg(2)).unwrap();
        let mut batch = random_batch(9, 4, 1);
        for t in batch.episodes.iter_mut().flatten() {
            t.advantage = 0.7;
        }
        let one = agent.policy_loss(&agent.policy_store, &batch).unwrap();
        batch.episodes.push(batch.episodes[0].clone());
        let two = agent.policy_loss(&agent.policy_store, &batch).unwrap();
        assert!((two - 2.0 * one).abs() < 1e-12);
    }

    #[test]
    fn reload_from_tensors() {
        let cfg = tiny_cfg(3);
        let a = Agent::new(4, &cfg).unwrap();
        let b = Agent::from_tensors(4, &cfg, a.named_tensors()).unwrap();
        assert_eq!(
            a.policy_store.named_values().collect::<Vec<_>>(),
            b.policy_store.named_values().collect::<Vec<_>>()
        );
        let mut partial = a.named_tensors();
        partial.pop();
        assert!(Agent::from_tensors(4, &cfg, partial).is_err());
        assert!(Agent::from_tensors(5, &cfg, a.named_tensors()).is_err());
    }
}
