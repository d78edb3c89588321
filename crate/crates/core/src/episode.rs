//! Episode bookkeeping shared by the environment, the baselines and the
//! metrics: actions, read/speak counters, policy paths and step traces.
//!
//! Counters start at `R = 1`: the first source character is ingested when
//! an episode is reset, so a `SPEAK` always has at least one character to
//! attend over.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One agent decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    /// Ingest one more source character into the attention buffer.
    #[serde(rename = "READ")]
    Read,
    /// Emit one output frame from the characters read so far.
    #[serde(rename = "SPEAK")]
    Speak,
}

impl Action {
    /// Index into a `[READ, SPEAK]` probability vector.
    pub fn index(self) -> usize {
        match self {
            Action::Read => 0,
            Action::Speak => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Action::Read
        } else {
            Action::Speak
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Read => "READ",
            Action::Speak => "SPEAK",
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Teacher-forced training episodes versus free-running evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Read/speak progress within one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeCounters {
    /// Characters read, `1..=n`.
    pub read: usize,
    /// Frames emitted.
    pub spoken: usize,
    /// Length of the current run of consecutive READs.
    pub consecutive_reads: usize,
    /// Source length.
    pub n: usize,
    /// Target frame count; known only for teacher-forced episodes.
    pub t: Option<usize>,
}

impl EpisodeCounters {
    /// Counters right after reset: one character read, nothing spoken.
    pub fn start(n: usize, t: Option<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("empty source sequence"));
        }
        Ok(Self {
            read: 1,
            spoken: 0,
            consecutive_reads: 0,
            n,
            t,
        })
    }

    pub fn source_exhausted(&self) -> bool {
        self.read >= self.n
    }

    pub fn target_exhausted(&self) -> bool {
        matches!(self.t, Some(t) if self.spoken >= t)
    }
}

/// Advance the counters by one action.
pub fn apply_action(counters: EpisodeCounters, action: Action) -> Result<EpisodeCounters> {
    let mut next = counters;
    match action {
        Action::Read => {
            if counters.read >= counters.n {
                return Err(Error::domain("source exhausted"));
            }
            next.read += 1;
            next.consecutive_reads += 1;
        }
        Action::Speak => {
            next.spoken += 1;
            next.consecutive_reads = 0;
        }
    }
    Ok(next)
}

/// The READ/SPEAK staircase of one episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyPath {
    pub actions: Vec<Action>,
    /// `reads_before[s - 1]` is the number of characters available when
    /// frame `s` was emitted.
    pub reads_before: Vec<usize>,
    pub n: usize,
}

impl PolicyPath {
    pub fn frames(&self) -> usize {
        self.reads_before.len()
    }
}

/// Build the staircase for an action list that starts right after reset.
///
/// `t` is the target frame count for teacher-forced episodes; once all `t`
/// frames are out, any further action is rejected.
pub fn policy_path(actions: &[Action], n: usize, t: Option<usize>) -> Result<PolicyPath> {
    let mut counters = EpisodeCounters::start(n, t)?;
    let mut reads_before = Vec::new();
    for (j, &action) in actions.iter().enumerate() {
        if counters.target_exhausted() {
            return Err(Error::domain(format!(
                "action {j} ({action}) follows the final target frame"
            )));
        }
        if action == Action::Speak {
            reads_before.push(counters.read);
        }
        counters = apply_action(counters, action)
            .map_err(|e| Error::domain(format!("action {j}: {e}")))?;
    }
    Ok(PolicyPath {
        actions: actions.to_vec(),
        reads_before,
        n,
    })
}

/// One logged environment step. Serializes to exactly the trace line schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub j: usize,
    pub action: Action,
    pub r: f64,
    pub r_cr: f64,
    pub r_ap: f64,
    pub r_q: f64,
    pub unread_penalty: f64,
    #[serde(rename = "R")]
    pub read: usize,
    #[serde(rename = "S")]
    pub spoken: usize,
    pub terminal: bool,
    /// Attention row over all `N` source positions, zero beyond `R`. For a
    /// SPEAK it is the row used to emit the frame; for a READ it is the row
    /// for the next frame given the enlarged buffer.
    pub alpha: Vec<f64>,
    /// Hash of the observation returned after this step; zero for records
    /// of environment-forced frames and for records read back from disk.
    #[serde(skip)]
    pub obs_digest: u64,
}

/// A full episode: every step record, plus aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub sentence_id: usize,
    pub mode: Mode,
    pub n: usize,
    /// Ground-truth frame count, when known.
    pub t: Option<usize>,
    pub gamma: f64,
    pub records: Vec<StepRecord>,
    /// `Σ_j γ^j r_j` over the records.
    pub discounted_return: f64,
    pub d_t: f64,
    /// Sum over emitted frames of the per-frame MSE against ground truth.
    pub total_mse: f64,
    /// Number of emitted frames that had a ground-truth counterpart.
    pub scored_frames: usize,
    /// Every emitted frame `ŷ_1..ŷ_S`, in order.
    pub frames: Vec<Vec<f64>>,
}

impl EpisodeTrace {
    pub fn actions(&self) -> Vec<Action> {
        self.records.iter().map(|r| r.action).collect()
    }

    pub fn frames_emitted(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.action == Action::Speak)
            .count()
    }

    pub fn path(&self) -> Result<PolicyPath> {
        policy_path(&self.actions(), self.n, self.t)
    }

    /// Recompute `Σ_j γ^j r_j` from the records.
    pub fn recompute_return(&self) -> f64 {
        discounted_sum(self.records.iter().map(|r| r.r), self.gamma)
    }

    pub fn mean_mse(&self) -> f64 {
        if self.scored_frames == 0 {
            0.0
        } else {
            self.total_mse / self.scored_frames as f64
        }
    }

    /// One JSON object per line, in step order.
    pub fn to_ndjson(&self) -> Result<String> {
        let mut out = String::new();
        for rec in &self.records {
            out.push_str(&serde_json::to_string(rec)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Parse trace lines, reporting the 1-based line number of the first bad line.
pub fn parse_trace_lines(text: &str) -> Result<Vec<StepRecord>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: StepRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(records)
}

pub(crate) fn discounted_sum(rewards: impl Iterator<Item = f64>, gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut weight = 1.0;
    for r in rewards {
        total += weight * r;
        weight *= gamma;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use Action::{Read, Speak};

    fn counters(read: usize, spoken: usize, c: usize, n: usize) -> EpisodeCounters {
        EpisodeCounters {
            read,
            spoken,
            consecutive_reads: c,
            n,
            t: None,
        }
    }

    #[test]
    fn read_advances_r_and_streak() {
        let next = apply_action(counters(1, 0, 0, 5), Read).unwrap();
        assert_eq!((next.read, next.spoken, next.consecutive_reads), (2, 0, 1));
    }

    #[test]
    fn speak_resets_streak() {
        let next = apply_action(counters(3, 2, 2, 5), Speak).unwrap();
        assert_eq!((next.read, next.spoken, next.consecutive_reads), (3, 3, 0));
    }

    #[test]
    fn read_past_source_is_rejected() {
        let err = apply_action(counters(4, 2, 0, 4), Read).unwrap_err();
        assert!(err.to_string().contains("source exhausted"));
    }

    #[test]
    fn path_examples() {
        let p = policy_path(&[Speak, Read, Speak], 2, Some(2)).unwrap();
        assert_eq!(p.reads_before, vec![1, 2]);
        let p = policy_path(&[Read, Read, Speak, Speak], 3, Some(2)).unwrap();
        assert_eq!(p.reads_before, vec![3, 3]);
        assert!(policy_path(&[Speak, Speak, Speak, Read], 2, Some(3)).is_err());
        assert!(policy_path(&[Read, Read], 2, None).is_err());
        assert!(policy_path(&[], 0, None).is_err());
    }

    #[test]
    fn action_serializes_uppercase() {
        assert_eq!(serde_json::to_string(&Read).unwrap(), "\"READ\"");
        assert_eq!(serde_json::to_string(&Speak).unwrap(), "\"SPEAK\"");
    }

    #[test]
    fn bad_trace_line_reports_line_number() {
        let good = r#"{"j":0,"action":"READ","r":0.0,"r_cr":0.0,"r_ap":0.0,"r_q":0.0,"unread_penalty":0.0,"R":2,"S":0,"terminal":false,"alpha":[1.0,0.0]}"#;
        let text = format!("{good}\n{{not json}}\n");
        match parse_trace_lines(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn staircase_is_monotone_and_bounded(
                n in 1usize..8,
                raw in proptest::collection::vec(any::<bool>(), 0..30),
            ) {
                // keep only actions that are legal for an unbounded target
                let mut read = 1;
                let mut actions = Vec::new();
                for b in raw {
                    if b && read < n {
                        read += 1;
                        actions.push(Read);
                    } else {
                        actions.push(Speak);
                    }
                }
                let path = policy_path(&actions, n, None).unwrap();
                prop_assert!(path.reads_before.windows(2).all(|w| w[0] <= w[1]));
                prop_assert!(path.reads_before.iter().all(|&r| (1..=n).contains(&r)));
                prop_assert_eq!(actions.len(), (read - 1) + path.frames());
            }
        }
    }
}
