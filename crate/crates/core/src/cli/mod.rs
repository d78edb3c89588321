//! Command-line surface: `gen-data`, `train-backend`, `train-agent`, `eval`
//! and `plot`, plus the config, checkpoint and figure formats they use.
//!
//! Default file layout under `--out-dir`:
//!
//! ```text
//! corpus/corpus.ndjson, corpus/manifest.json
//! backend.json, backend_loss.csv
//! agent.json, agent_curve.csv
//! eval/summary.csv, eval/<policy>/sentence_<id>.ndjson
//! ```

pub mod checkpoint;
pub mod config;
pub mod plot;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, Component, FORMAT_VERSION};
pub use config::{EvalConfig, RunConfig, Split};

use crate::agent::{train_agent, Agent, AgentConfig};
use crate::backend::learned::LearnedArch;
use crate::backend::{
    generate_corpus, Corpus, LearnedBackend, LearnedBackendConfig, OracleBackend, Sentence,
    SynthesisBackend,
};
use crate::baselines::{BaselineSpec, Policy};
use crate::env::Observation;
use crate::episode::parse_trace_lines;
use crate::metrics::{
    evaluate_policy, read_summaries_csv, tradeoff_table, write_summaries_csv, EvalSummary,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "readspeak",
    version,
    about = "Learned READ/SPEAK scheduling for incremental synthesis"
)]
pub struct Cli {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed for every component.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Path,
    Tradeoff,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus.
    GenData {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the learned encoder/decoder backend.
    TrainBackend {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the READ/SPEAK agent with REINFORCE.
    TrainAgent {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// "oracle" or a backend checkpoint path.
        #[arg(long, default_value = "oracle")]
        backend: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate policies and write traces plus a summary table.
    Eval {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// "oracle" or a backend checkpoint path.
        #[arg(long, default_value = "oracle")]
        backend: String,
        /// Comma-separated: wue, w<k>s, agent.
        #[arg(long, value_delimiter = ',', default_value = "wue,w2s,w3s")]
        policy: Vec<String>,
        /// Agent checkpoint, required when evaluating "agent".
        #[arg(long)]
        agent: Option<PathBuf>,
    },
    /// Render a trace (path) or a summary CSV (tradeoff) as SVG.
    Plot {
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Backend checkpoint config snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSnapshot {
    pub arch: LearnedArch,
    pub train: LearnedBackendConfig,
}

/// Agent checkpoint config snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSnapshot {
    pub agent: AgentConfig,
    pub obs_dim: usize,
    pub window: usize,
    pub backend: String,
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn corpus_dir(cfg: &RunConfig, given: &Option<PathBuf>) -> PathBuf {
    given.clone().unwrap_or_else(|| cfg.out_dir.join("corpus"))
}

/// `<dir>/<stem>_<tag>.csv` next to a checkpoint.
fn sibling(checkpoint: &Path, tag: &str) -> PathBuf {
    let stem = checkpoint
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("run");
    checkpoint.with_file_name(format!("{stem}_{tag}.csv"))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_backend_checkpoint(path: &Path, corpus: &Corpus) -> Result<LearnedBackend> {
    let ck = Checkpoint::load(path)?;
    ck.expect(Component::Backend)?;
    let snap: BackendSnapshot = ck.config_as()?;
    if snap.arch.alphabet_size != corpus.alphabet.size()
        || snap.arch.frame_dim != corpus.alphabet.frame_dim()
    {
        return Err(Error::Checkpoint(format!(
            "backend checkpoint expects alphabet {} / frame dim {}, corpus has {} / {}",
            snap.arch.alphabet_size,
            snap.arch.frame_dim,
            corpus.alphabet.size(),
            corpus.alphabet.frame_dim()
        )));
    }
    let tensors = ck.tensors()?;
    LearnedBackend::from_tensors(snap.arch, tensors.iter().map(|(n, t)| (n.as_str(), t)))
}

/// `"oracle"` or a learned-backend checkpoint path.
pub fn load_backend(spec: &str, corpus: &Corpus) -> Result<Box<dyn SynthesisBackend>> {
    if spec == "oracle" {
        Ok(Box::new(OracleBackend::new(corpus.alphabet.clone())))
    } else {
        Ok(Box::new(load_backend_checkpoint(Path::new(spec), corpus)?))
    }
}

pub fn agent_checkpoint(
    agent: &Agent,
    cfg: &RunConfig,
    backend: &dyn SynthesisBackend,
) -> Result<Checkpoint> {
    let snap = AgentSnapshot {
        agent: agent.cfg.clone(),
        obs_dim: agent.obs_dim(),
        window: cfg.env.window,
        backend: backend.name().to_string(),
    };
    Checkpoint::new(Component::Agent, cfg.seed, &snap, agent.named_tensors())
}

pub fn load_agent_checkpoint(
    path: &Path,
    cfg: &RunConfig,
    backend: &dyn SynthesisBackend,
) -> Result<Agent> {
    let ck = Checkpoint::load(path)?;
    ck.expect(Component::Agent)?;
    let snap: AgentSnapshot = ck.config_as()?;
    let expected = Observation::dim(backend.hidden_dim(), cfg.env.window, backend.frame_dim());
    if snap.obs_dim != expected || snap.window != cfg.env.window {
        return Err(Error::Checkpoint(format!(
            "agent checkpoint was trained on {}-dim observations (window {}), \
             the {} backend with this config gives {expected} (window {})",
            snap.obs_dim,
            snap.window,
            backend.name(),
            cfg.env.window
        )));
    }
    let tensors = ck.tensors()?;
    Agent::from_tensors(
        snap.obs_dim,
        &snap.agent,
        tensors.iter().map(|(n, t)| (n.as_str(), t)),
    )
}

fn split_sentences(corpus: &Corpus, split: Split) -> Vec<Sentence> {
    match split {
        Split::Train => corpus.train().cloned().collect(),
        Split::Test => corpus.test().cloned().collect(),
        Split::All => corpus.sentences.clone(),
    }
}

/// Run one command; returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::GenData { out } => {
            let dir = out.clone().unwrap_or_else(|| cfg.out_dir.join("corpus"));
            let corpus = generate_corpus(&cfg.corpus)?;
            corpus.save(&dir)?;
            log::info!(
                "corpus: {} sentences ({} train / {} test)",
                corpus.sentences.len(),
                corpus.train_ids.len(),
                corpus.test_ids.len()
            );
            Ok(vec![
                dir.join(crate::backend::corpus::CORPUS_FILE),
                dir.join(crate::backend::corpus::MANIFEST_FILE),
            ])
        }
        Command::TrainBackend { corpus, out } => {
            let corpus = Corpus::load(&corpus_dir(&cfg, corpus))?;
            let (backend, report) = LearnedBackend::train(&corpus, &cfg.backend)?;
            let path = out
                .clone()
                .unwrap_or_else(|| cfg.out_dir.join("backend.json"));
            let snap = BackendSnapshot {
                arch: backend.arch(),
                train: cfg.backend.clone(),
            };
            Checkpoint::new(
                Component::Backend,
                cfg.seed,
                &snap,
                backend.store().named_values(),
            )?
            .save(&path)?;
            let loss = sibling(&path, "loss");
            write_csv(&loss, &report.epochs)?;
            log::info!(
                "backend: best validation mse {:.6} at epoch {}",
                report.best_val_mse,
                report.best_epoch
            );
            Ok(vec![path, loss])
        }
        Command::TrainAgent {
            corpus,
            backend,
            out,
        } => {
            let corpus = Corpus::load(&corpus_dir(&cfg, corpus))?;
            let backend = load_backend(backend, &corpus)?;
            let train: Vec<Sentence> = corpus.train().cloned().collect();
            let (agent, curve) = train_agent(backend.as_ref(), &train, &cfg.env, &cfg.agent)?;
            let path = out
                .clone()
                .unwrap_or_else(|| cfg.out_dir.join("agent.json"));
            agent_checkpoint(&agent, &cfg, backend.as_ref())?.save(&path)?;
            let curve_path = sibling(&path, "curve");
            write_csv(&curve_path, &curve)?;
            Ok(vec![path, curve_path])
        }
        Command::Eval {
            corpus,
            backend,
            policy,
            agent,
        } => {
            let corpus = Corpus::load(&corpus_dir(&cfg, corpus))?;
            let backend = load_backend(backend, &corpus)?;
            let sentences = split_sentences(&corpus, cfg.eval.split);
            let loaded_agent = match agent {
                Some(p) => Some(load_agent_checkpoint(p, &cfg, backend.as_ref())?),
                None => None,
            };
            let eval_dir = cfg.out_dir.join("eval");
            let mut written = Vec::new();
            let mut summaries = Vec::new();
            for name in policy {
                let greedy;
                let boxed;
                let pol: &dyn Policy = if name == "agent" {
                    let a = loaded_agent.as_ref().ok_or_else(|| {
                        Error::Config("policy \"agent\" needs --agent <checkpoint>".into())
                    })?;
                    greedy = a.greedy();
                    &greedy
                } else {
                    boxed = name.parse::<BaselineSpec>()?.build()?;
                    boxed.as_ref()
                };
                let (summary, traces) = evaluate_policy(
                    pol,
                    &sentences,
                    backend.as_ref(),
                    &cfg.env,
                    cfg.eval.mode,
                    cfg.seed,
                )?;
                let dir = eval_dir.join(pol.name());
                std::fs::create_dir_all(&dir)?;
                for t in &traces {
                    let p = dir.join(format!("sentence_{:04}.ndjson", t.sentence_id));
                    std::fs::write(&p, t.to_ndjson()?)?;
                    written.push(p);
                }
                log::info!(
                    "{}: d_T {:.4}, mse {:.6}, return {:.4}",
                    summary.policy,
                    summary.mean_d_t,
                    summary.mean_mse,
                    summary.mean_return
                );
                summaries.push(summary);
            }
            let path = eval_dir.join("summary.csv");
            std::fs::create_dir_all(&eval_dir)?;
            write_summaries_csv(std::fs::File::create(&path)?, &tradeoff_table(&summaries))?;
            written.push(path);
            Ok(written)
        }
        Command::Plot { kind, input, out } => {
            let text = std::fs::read_to_string(input)?;
            let svg = match kind {
                PlotKind::Path => plot::path_svg(&parse_trace_lines(&text)?)?,
                PlotKind::Tradeoff => {
                    let rows: Vec<EvalSummary> = read_summaries_csv(text.as_bytes())?;
                    plot::tradeoff_svg(&rows)?
                }
            };
            let path = out.clone().unwrap_or_else(|| input.with_extension("svg"));
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&path, svg)?;
            Ok(vec![path])
        }
    }
}
