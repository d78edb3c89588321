//! Latency and quality measurement, policy evaluation and trade-off tables.
//!
//! Latency is the normalized area under the policy path,
//! `d_T = (1 / (N·T)) Σ_s R_before(s)`: 1 when every character is read
//! before the first frame, approaching 0 when frames run far ahead of reading.
//! Quality is the per-frame mean squared error against ground truth.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::backend::{Sentence, SynthesisBackend};
use crate::baselines::{EpisodePolicy, Policy};
use crate::env::{Env, EnvConfig};
use crate::episode::{Action, EpisodeTrace, Mode, PolicyPath};
use crate::numerics::ops::mse;
use crate::{Error, Result};

pub fn latency_d_t(path: &PolicyPath) -> Result<f64> {
    let t = path.frames();
    if t == 0 {
        return Err(Error::domain("latency of a path with no frames"));
    }
    let area: usize = path.reads_before.iter().sum();
    Ok(area as f64 / (path.n * t) as f64)
}

/// Mean per-frame MSE between the emitted frames and ground truth.
///
/// A teacher-forced trace must have emitted exactly `T` frames. For a
/// free-running trace frames are compared by index up to `min(T_emitted, T)`,
/// which is only an approximation since nothing aligns them.
pub fn quality_mse(trace: &EpisodeTrace, sentence: &Sentence) -> Result<f64> {
    let t = sentence.t();
    let m = match trace.mode {
        Mode::Train if trace.frames.len() != t => {
            return Err(Error::domain(format!(
                "trace emitted {} frames, ground truth has {t}",
                trace.frames.len()
            )))
        }
        Mode::Train => t,
        Mode::Eval => trace.frames.len().min(t),
    };
    if m == 0 {
        return Err(Error::domain("no frames to compare"));
    }
    let mut total = 0.0;
    for s in 1..=m {
        total += mse(sentence.frame(s), &trace.frames[s - 1])?;
    }
    Ok(total / m as f64)
}

/// Per-frame MSE recovered from the logged quality rewards: `Σ r_q / (λ·m)`.
pub fn mse_from_quality_rewards(trace: &EpisodeTrace, lambda: f64) -> Result<f64> {
    if lambda == 0.0 || trace.scored_frames == 0 {
        return Err(Error::domain("quality rewards carry no MSE information"));
    }
    let sum: f64 = trace.records.iter().map(|r| r.r_q).sum();
    Ok(sum / (lambda * trace.scored_frames as f64))
}

/// Run one episode of `policy` to termination.
pub fn run_episode(
    policy: &mut dyn EpisodePolicy,
    sentence: &Sentence,
    backend: &dyn SynthesisBackend,
    cfg: &EnvConfig,
    mode: Mode,
) -> Result<EpisodeTrace> {
    let (mut env, mut obs) = Env::reset(sentence, backend, cfg, mode)?;
    let mut j = 0;
    while !env.is_terminal() {
        let counters = env.counters();
        let mut action = policy.act(&obs, &counters, j)?;
        if action == Action::Read && counters.source_exhausted() {
            action = Action::Speak;
        }
        obs = env.step(action)?.observation;
        j += 1;
    }
    env.into_trace()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub policy: String,
    pub seed: u64,
    pub episodes: usize,
    #[serde(rename = "mean_d_T")]
    pub mean_d_t: f64,
    #[serde(rename = "median_d_T")]
    pub median_d_t: f64,
    /// Pooled over every scored frame of every episode.
    pub mean_mse: f64,
    pub mean_return: f64,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

impl EvalSummary {
    pub fn from_traces(policy: &str, seed: u64, traces: &[EpisodeTrace]) -> Result<Self> {
        if traces.is_empty() {
            return Err(Error::domain("no traces to summarize"));
        }
        let n = traces.len() as f64;
        let d: Vec<f64> = traces.iter().map(|t| t.d_t).collect();
        let frames: usize = traces.iter().map(|t| t.scored_frames).sum();
        let total_mse: f64 = traces.iter().map(|t| t.total_mse).sum();
        Ok(Self {
            policy: policy.to_string(),
            seed,
            episodes: traces.len(),
            mean_d_t: d.iter().sum::<f64>() / n,
            median_d_t: median(&d),
            mean_mse: if frames == 0 {
                0.0
            } else {
                total_mse / frames as f64
            },
            mean_return: traces.iter().map(|t| t.discounted_return).sum::<f64>() / n,
        })
    }
}

/// Evaluate `policy` on every sentence, one episode each, in parallel.
/// Traces come back in sentence order.
pub fn evaluate_policy(
    policy: &dyn Policy,
    sentences: &[Sentence],
    backend: &dyn SynthesisBackend,
    cfg: &EnvConfig,
    mode: Mode,
    seed: u64,
) -> Result<(EvalSummary, Vec<EpisodeTrace>)> {
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(sentences.len().max(1));
    let chunk = sentences.len().div_ceil(workers).max(1);
    let results: Vec<Result<Vec<EpisodeTrace>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = sentences
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|s| run_episode(policy.episode().as_mut(), s, backend, cfg, mode))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });
    let mut traces = Vec::with_capacity(sentences.len());
    for r in results {
        traces.extend(r?);
    }
    let summary = EvalSummary::from_traces(&policy.name(), seed, &traces)?;
    Ok((summary, traces))
}

/// Rows ordered by mean latency, most offline first.
pub fn tradeoff_table(summaries: &[EvalSummary]) -> Vec<EvalSummary> {
    let mut rows = summaries.to_vec();
    rows.sort_by(|a, b| {
        b.mean_d_t
            .total_cmp(&a.mean_d_t)
            .then(a.policy.cmp(&b.policy))
    });
    rows
}

pub fn write_summaries_csv<W: Write>(out: W, rows: &[EvalSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summaries_csv<R: Read>(input: R) -> Result<Vec<EvalSummary>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}
