//! Rule-based benchmark policies and the policy interface shared with the
//! learned agent.
//!
//! - WUE (wait until end): READ while `R < N`, then SPEAK.
//! - WkS (wait k steps): a cycle of one READ and `k − 1` SPEAKs. By default
//!   the character ingested at reset fills the first READ slot, so the
//!   agent-visible sequence is `SPEAK × (k−1), READ, SPEAK × (k−1), READ, ...`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::episode::{Action, EpisodeCounters};
use crate::{Error, Result};

/// Per-episode decision state.
pub trait EpisodePolicy {
    /// Choose the action for agent step `j` (0-based, after reset).
    fn act(&mut self, obs: &Observation, counters: &EpisodeCounters, j: usize) -> Result<Action>;
}

/// A policy that can run any number of independent episodes, possibly on
/// several threads at once.
pub trait Policy: Send + Sync {
    fn name(&self) -> String;
    fn episode(&self) -> Box<dyn EpisodePolicy + '_>;
}

pub fn wue_policy(counters: &EpisodeCounters) -> Action {
    if counters.read < counters.n {
        Action::Read
    } else {
        Action::Speak
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaitKPhase {
    /// The reset's implicit read occupies the cycle's READ slot.
    #[default]
    ResetRead,
    /// An explicit READ opens every cycle, starting at step 0.
    LeadingRead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaitKConfig {
    pub k: usize,
    #[serde(default)]
    pub phase: WaitKPhase,
}

impl WaitKConfig {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("wait-k needs k >= 2, got {k}")));
        }
        Ok(Self {
            k,
            phase: WaitKPhase::ResetRead,
        })
    }
}

pub fn wks_policy(counters: &EpisodeCounters, cfg: &WaitKConfig, j: usize) -> Action {
    let slot = match cfg.phase {
        WaitKPhase::ResetRead => (j + 1) % cfg.k,
        WaitKPhase::LeadingRead => j % cfg.k,
    };
    if slot == 0 && counters.read < counters.n {
        Action::Read
    } else {
        Action::Speak
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Wue;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaitK(pub WaitKConfig);

struct Stateless<F>(F);

impl<F: Fn(&EpisodeCounters, usize) -> Action> EpisodePolicy for Stateless<F> {
    fn act(&mut self, _obs: &Observation, counters: &EpisodeCounters, j: usize) -> Result<Action> {
        Ok((self.0)(counters, j))
    }
}

impl Policy for Wue {
    fn name(&self) -> String {
        "wue".into()
    }

    fn episode(&self) -> Box<dyn EpisodePolicy + '_> {
        Box::new(Stateless(|c: &EpisodeCounters, _| wue_policy(c)))
    }
}

impl Policy for WaitK {
    fn name(&self) -> String {
        format!("w{}s", self.0.k)
    }

    fn episode(&self) -> Box<dyn EpisodePolicy + '_> {
        let cfg = self.0;
        Box::new(Stateless(move |c: &EpisodeCounters, j| {
            wks_policy(c, &cfg, j)
        }))
    }
}

/// A rule-based policy named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineSpec {
    Wue,
    WaitK(usize),
}

impl FromStr for BaselineSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if lower == "wue" {
            return Ok(Self::Wue);
        }
        if let Some(k) = lower
            .strip_prefix('w')
            .and_then(|r| r.strip_suffix('s'))
            .and_then(|k| k.parse::<usize>().ok())
        {
            WaitKConfig::new(k)?;
            return Ok(Self::WaitK(k));
        }
        Err(Error::Config(format!(
            "unknown policy {s:?}; expected one of: wue, w<k>s (k >= 2), agent"
        )))
    }
}

impl BaselineSpec {
    pub fn build(self) -> Result<Box<dyn Policy>> {
        Ok(match self {
            Self::Wue => Box::new(Wue),
            Self::WaitK(k) => Box::new(WaitK(WaitKConfig::new(k)?)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{apply_action, policy_path};

    fn run(
        mut f: impl FnMut(&EpisodeCounters, usize) -> Action,
        n: usize,
        t: usize,
    ) -> Vec<Action> {
        let mut c = EpisodeCounters::start(n, Some(t)).unwrap();
        let mut out = Vec::new();
        let mut j = 0;
        while !c.target_exhausted() {
            let a = f(&c, j);
            c = apply_action(c, a).unwrap();
            out.push(a);
            j += 1;
        }
        out
    }

    #[test]
    fn wue_reads_everything_first() {
        use Action::*;
        let a = run(|c, _| wue_policy(c), 3, 4);
        assert_eq!(a, vec![Read, Read, Speak, Speak, Speak, Speak]);
    }

    #[test]
    fn w2s_cycle_on_two_symbols() {
        use Action::*;
        let cfg = WaitKConfig::new(2).unwrap();
        let a = run(|c, j| wks_policy(c, &cfg, j), 2, 4);
        assert_eq!(a, vec![Speak, Read, Speak, Speak, Speak]);
    }

    #[test]
    fn w3s_cycle() {
        use Action::*;
        let cfg = WaitKConfig::new(3).unwrap();
        let a = run(|c, j| wks_policy(c, &cfg, j), 3, 6);
        assert_eq!(
            a,
            vec![Speak, Speak, Read, Speak, Speak, Read, Speak, Speak]
        );
        let leading = WaitKConfig {
            phase: WaitKPhase::LeadingRead,
            ..cfg
        };
        let a = run(|c, j| wks_policy(c, &leading, j), 3, 4);
        assert_eq!(a, vec![Read, Speak, Speak, Read, Speak, Speak]);
    }

    #[test]
    fn no_read_after_exhaustion() {
        let cfg = WaitKConfig::new(2).unwrap();
        let a = run(|c, j| wks_policy(c, &cfg, j), 3, 20);
        let path = policy_path(&a, 3, Some(20)).unwrap();
        assert_eq!(path.reads_before.last(), Some(&3));
        let reads = a.iter().filter(|&&x| x == Action::Read).count();
        assert_eq!(reads, 2);
    }

    #[test]
    fn parse_policy_names() {
        assert_eq!("wue".parse::<BaselineSpec>().unwrap(), BaselineSpec::Wue);
        assert_eq!(
            "W3S".parse::<BaselineSpec>().unwrap(),
            BaselineSpec::WaitK(3)
        );
        assert!("w1s".parse::<BaselineSpec>().is_err());
        let err = "bogus".parse::<BaselineSpec>().unwrap_err().to_string();
        assert!(err.contains("wue") && err.contains("w<k>s"));
        assert_eq!(BaselineSpec::WaitK(2).build().unwrap().name(), "w2s");
    }
}
