//! The READ/SPEAK environment around a synthesis backend.
//!
//! Observation: attention context for the next frame, the last `k`
//! attention weights ending at the newest read position, and the most
//! recent frame (ground truth when teacher-forced).
//!
//! Reward: `r = r_cr + r_ap + r_q (+ unread penalty)` where
//! - `r_cr = ω · (sgn(c_j − c*) + 1)` on every READ,
//! - `r_q = λ · MSE(y_s, ŷ_s)` on every SPEAK,
//! - `r_ap = β · max(0, d_T − d*)` once, on the terminal step,
//! - the unread penalty is `−scale · (N − R)` when the target runs out
//!   before the source does.
//!
//! When a teacher-forced episode has read every character, the remaining
//! frames are emitted by the environment (the forced tail) and their
//! discounted rewards are returned as a single terminal reward.

use serde::{Deserialize, Serialize};

use crate::backend::{context_vector, BackendState, Sentence, SynthesisBackend};
use crate::episode::{
    apply_action, discounted_sum, Action, EpisodeCounters, EpisodeTrace, Mode, StepRecord,
};
use crate::numerics::ops::mse;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Consecutive-read weight ω.
    pub omega: f64,
    /// Area-penalty weight β.
    pub beta: f64,
    /// Quality weight λ.
    pub lambda: f64,
    /// Acceptable number of consecutive reads c*.
    pub c_star: usize,
    /// Target latency d*.
    pub d_star: f64,
    pub gamma: f64,
    /// Penalty per character left unread when the target runs out.
    pub unread_scale: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            omega: -1.0,
            beta: -10.0,
            lambda: -100.0,
            c_star: 4,
            d_star: 0.5,
            gamma: 0.99,
            unread_scale: 1.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("reward: {m}")));
        // zero weights are allowed so individual terms can be switched off
        if self.omega > 0.0 || self.beta > 0.0 || self.lambda > 0.0 {
            return bad("omega, beta and lambda must not be positive");
        }
        if self.c_star < 1 {
            return bad("c_star must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.d_star) {
            return bad("d_star must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.unread_scale < 0.0 {
            return bad("unread_scale must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub reward: RewardConfig,
    /// Length of the trailing attention window in the observation.
    pub window: usize,
    /// Free-running episodes stop after `max_frames_per_char · N` frames
    /// even if the backend never signals the end.
    pub max_frames_per_char: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            reward: RewardConfig::default(),
            window: 5,
            max_frames_per_char: 8,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.reward.validate()?;
        if self.window == 0 || self.max_frames_per_char == 0 {
            return Err(Error::Config(
                "env: window and max_frames_per_char must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub context: Vec<f64>,
    pub window: Vec<f64>,
    pub last_frame: Vec<f64>,
}

impl Observation {
    pub fn dim(hidden: usize, window: usize, frame: usize) -> usize {
        hidden + window + frame
    }

    /// `[context, window, last_frame]`.
    pub fn features(&self) -> Vec<f64> {
        let mut v =
            Vec::with_capacity(self.context.len() + self.window.len() + self.last_frame.len());
        v.extend_from_slice(&self.context);
        v.extend_from_slice(&self.window);
        v.extend_from_slice(&self.last_frame);
        v
    }

    /// FNV-1a over the bit patterns of every feature.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.features() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Reward components of one step, keyed as in the trace schema.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    pub r_cr: f64,
    pub r_ap: f64,
    pub r_q: f64,
    pub unread_penalty: f64,
    /// The environment emitted the remaining frames itself.
    pub forced_tail: bool,
    pub tail_frames: usize,
}

impl StepInfo {
    pub fn total(&self) -> f64 {
        self.r_cr + self.r_ap + self.r_q + self.unread_penalty
    }

    /// `(name, value)` pairs with the fixed component names.
    pub fn components(&self) -> [(&'static str, f64); 4] {
        [
            ("r_cr", self.r_cr),
            ("r_ap", self.r_ap),
            ("r_q", self.r_q),
            ("unread_penalty", self.unread_penalty),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminal: bool,
    pub info: StepInfo,
}

pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `ω · (sgn(c_j − c*) + 1)`.
pub fn reward_consecutive_read(consecutive_reads: usize, cfg: &RewardConfig) -> f64 {
    cfg.omega * (sign(consecutive_reads as f64 - cfg.c_star as f64) + 1.0)
}

/// `β · max(0, d_T − d*)`.
pub fn reward_area_penalty(d_t: f64, cfg: &RewardConfig) -> f64 {
    cfg.beta * (d_t - cfg.d_star).max(0.0)
}

/// `λ · MSE(y, ŷ)` for a SPEAK, zero for a READ.
pub fn reward_quality(y: &[f64], y_hat: &[f64], action: Action, cfg: &RewardConfig) -> Result<f64> {
    let err = mse(y, y_hat)?;
    Ok(match action {
        Action::Read => 0.0,
        Action::Speak => cfg.lambda * err,
    })
}

/// Weights for the `k` most recent source positions `R−k+1..R`, zero-padded
/// at the front.
pub fn attention_window(alpha: &[f64], k: usize) -> Vec<f64> {
    let mut w = vec![0.0; k];
    let take = alpha.len().min(k);
    w[k - take..].copy_from_slice(&alpha[alpha.len() - take..]);
    w
}

/// One episode over one sentence.
pub struct Env<'a> {
    backend: &'a dyn SynthesisBackend,
    cfg: EnvConfig,
    state: BackendState,
    counters: EpisodeCounters,
    /// Frame shown in the observation: `y_S` or `ŷ_S`.
    last_frame: Vec<f64>,
    /// Last decoded frame, fed back when free-running.
    last_decoded: Vec<f64>,
    /// Attention for frame `S+1` over the current buffer.
    next_alpha: Vec<f64>,
    actions: Vec<Action>,
    records: Vec<StepRecord>,
    total_mse: f64,
    scored_frames: usize,
    frames: Vec<Vec<f64>>,
    terminal: bool,
}

impl<'a> Env<'a> {
    /// Start an episode: the backend encodes the first character.
    pub fn reset(
        sentence: &Sentence,
        backend: &'a dyn SynthesisBackend,
        cfg: &EnvConfig,
        mode: Mode,
    ) -> Result<(Self, Observation)> {
        cfg.validate()?;
        let state = backend.reset(sentence, mode)?;
        let t = match mode {
            Mode::Train => Some(sentence.t()),
            Mode::Eval => None,
        };
        let counters = EpisodeCounters::start(sentence.n(), t)?;
        let d = backend.frame_dim();
        let mut env = Self {
            backend,
            cfg: cfg.clone(),
            state,
            counters,
            last_frame: vec![0.0; d],
            last_decoded: vec![0.0; d],
            next_alpha: Vec::new(),
            actions: Vec::new(),
            records: Vec::new(),
            total_mse: 0.0,
            scored_frames: 0,
            frames: Vec::new(),
            terminal: false,
        };
        env.next_alpha = backend.attention(&env.state)?;
        let obs = env.observation()?;
        Ok((env, obs))
    }

    pub fn counters(&self) -> EpisodeCounters {
        self.counters
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn mode(&self) -> Mode {
        self.state.mode
    }

    pub fn sentence(&self) -> &Sentence {
        &self.state.sentence
    }

    pub fn backend_state(&self) -> &BackendState {
        &self.state
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    /// Actions so far, including environment-forced frames.
    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    fn observation(&self) -> Result<Observation> {
        Ok(Observation {
            context: context_vector(&self.state.encoder_outputs, &self.next_alpha)?,
            window: attention_window(&self.next_alpha, self.cfg.window),
            last_frame: self.last_frame.clone(),
        })
    }

    fn padded(&self, alpha: &[f64]) -> Vec<f64> {
        let mut row = vec![0.0; self.counters.n];
        row[..alpha.len()].copy_from_slice(alpha);
        row
    }

    /// Decode frame `S+1`; returns `(r_q, attention row)`.
    fn emit_frame(&mut self) -> Result<(f64, Vec<f64>)> {
        let alpha = std::mem::take(&mut self.next_alpha);
        let context = context_vector(&self.state.encoder_outputs, &alpha)?;
        let s = self.counters.spoken + 1;
        let sentence_t = self.state.sentence.t();
        let prev = match self.state.mode {
            Mode::Train if s > 1 => self.state.sentence.frame(s - 1).to_vec(),
            Mode::Train => vec![0.0; self.backend.frame_dim()],
            Mode::Eval => self.last_decoded.clone(),
        };
        let frame = self
            .backend
            .decode_frame(&mut self.state, &alpha, &context, &prev)?;
        let r_q = if s <= sentence_t {
            let truth = self.state.sentence.frame(s);
            let err = mse(truth, &frame)?;
            self.total_mse += err;
            self.scored_frames += 1;
            self.cfg.reward.lambda * err
        } else {
            0.0
        };
        self.last_frame = match self.state.mode {
            Mode::Train => self.state.sentence.frame(s).to_vec(),
            Mode::Eval => frame.clone(),
        };
        self.frames.push(frame.clone());
        self.last_decoded = frame;
        self.counters = apply_action(self.counters, Action::Speak)?;
        self.actions.push(Action::Speak);
        self.next_alpha = self.backend.attention(&self.state)?;
        let row = self.padded(&alpha);
        Ok((r_q, row))
    }

    fn latency(&self) -> Result<f64> {
        let path = crate::episode::policy_path(&self.actions, self.counters.n, None)?;
        crate::metrics::latency_d_t(&path)
    }

    fn frame_cap(&self) -> usize {
        self.cfg.max_frames_per_char * self.counters.n
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.terminal {
            return Err(Error::domain("action after the episode has terminated"));
        }
        let j = self.records.len();
        let mut info = StepInfo::default();
        let alpha_row;
        match action {
            Action::Read => {
                let next = apply_action(self.counters, Action::Read)?;
                self.backend.read(&mut self.state)?;
                self.counters = next;
                self.actions.push(Action::Read);
                info.r_cr = reward_consecutive_read(next.consecutive_reads, &self.cfg.reward);
                self.next_alpha = self.backend.attention(&self.state)?;
                alpha_row = self.padded(&self.next_alpha);
            }
            Action::Speak => {
                let (r_q, row) = self.emit_frame()?;
                info.r_q = r_q;
                alpha_row = row;
            }
        }
        let mut record = StepRecord {
            j,
            action,
            r: info.total(),
            r_cr: info.r_cr,
            r_ap: 0.0,
            r_q: info.r_q,
            unread_penalty: 0.0,
            read: self.counters.read,
            spoken: self.counters.spoken,
            terminal: false,
            alpha: alpha_row,
            obs_digest: 0,
        };

        let cfg = self.cfg.reward.clone();
        let unread = (self.counters.n - self.counters.read) as f64;
        match self.state.mode {
            Mode::Train if self.counters.target_exhausted() => {
                info.unread_penalty = -cfg.unread_scale * unread;
                info.r_ap = reward_area_penalty(self.latency()?, &cfg);
                record.unread_penalty = info.unread_penalty;
                record.r_ap = info.r_ap;
                record.terminal = true;
                self.terminal = true;
            }
            Mode::Train if self.counters.source_exhausted() => {
                let obs_before = self.records.len();
                self.records.push(record.clone());
                let mut tail = Vec::new();
                while !self.counters.target_exhausted() {
                    let (r_q, row) = self.emit_frame()?;
                    tail.push(r_q);
                    self.records.push(StepRecord {
                        j: self.records.len(),
                        action: Action::Speak,
                        r: r_q,
                        r_cr: 0.0,
                        r_ap: 0.0,
                        r_q,
                        unread_penalty: 0.0,
                        read: self.counters.read,
                        spoken: self.counters.spoken,
                        terminal: false,
                        alpha: row,
                        obs_digest: 0,
                    });
                }
                let r_ap = reward_area_penalty(self.latency()?, &cfg);
                let last = self.records.last_mut().expect("at least the forcing step");
                last.r_ap += r_ap;
                last.r += r_ap;
                last.terminal = true;
                // the tail frames sit 1..=m steps after the forcing step
                let m = tail.len();
                info.r_q += cfg.gamma * discounted_sum(tail.into_iter(), cfg.gamma);
                info.r_ap = cfg.gamma.powi(m as i32) * r_ap;
                info.forced_tail = m > 0;
                info.tail_frames = m;
                self.terminal = true;
                let obs = self.observation()?;
                self.records[obs_before].obs_digest = obs.digest();
                return Ok(StepResult {
                    observation: obs,
                    reward: info.total(),
                    terminal: true,
                    info,
                });
            }
            Mode::Eval
                if action == Action::Speak
                    && (self.backend.finished(&self.state)
                        || self.counters.spoken >= self.frame_cap()) =>
            {
                info.unread_penalty = -cfg.unread_scale * unread;
                info.r_ap = reward_area_penalty(self.latency()?, &cfg);
                record.unread_penalty = info.unread_penalty;
                record.r_ap = info.r_ap;
                record.terminal = true;
                self.terminal = true;
            }
            _ => {}
        }
        record.r = info.total();
        let obs = self.observation()?;
        record.obs_digest = obs.digest();
        self.records.push(record);
        Ok(StepResult {
            observation: obs,
            reward: info.total(),
            terminal: self.terminal,
            info,
        })
    }

    /// Finish the episode and package its trace.
    pub fn into_trace(self) -> Result<EpisodeTrace> {
        if !self.terminal {
            return Err(Error::domain("episode has not terminated"));
        }
        let gamma = self.cfg.reward.gamma;
        let d_t = self.latency()?;
        let discounted_return = discounted_sum(self.records.iter().map(|r| r.r), gamma);
        Ok(EpisodeTrace {
            sentence_id: self.state.sentence.id,
            mode: self.state.mode,
            n: self.counters.n,
            t: Some(self.state.sentence.t()),
            gamma,
            records: self.records,
            discounted_return,
            d_t,
            total_mse: self.total_mse,
            scored_frames: self.scored_frames,
            frames: self.frames,
        })
    }
}
