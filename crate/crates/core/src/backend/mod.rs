//! Synthesis backends: the component that encodes the characters read so
//! far, attends over them, and decodes output frames.
//!
//! A backend only ever sees the prefix `x_1..x_R` that has been read: each
//! encoder output `h_i` is a function of `x_1..x_i` alone, and attention is
//! restricted to the first `R` columns.

pub mod corpus;
pub mod learned;
pub mod oracle;

pub use corpus::{generate_corpus, Alphabet, Corpus, Sentence, SyntheticCorpusSpec};
pub use learned::{LearnedBackend, LearnedBackendConfig, TrainReport};
pub use oracle::OracleBackend;

use crate::episode::Mode;
use crate::{Error, Result};

/// Incremental state of one synthesis run.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendState {
    pub sentence: Sentence,
    pub mode: Mode,
    /// `h_1..h_R`.
    pub encoder_outputs: Vec<Vec<f64>>,
    /// Recurrent decoder state; empty for stateless backends.
    pub decoder_state: Vec<f64>,
    /// Frames emitted so far.
    pub spoken: usize,
    /// One row per emitted frame, `N` wide, zero beyond the `R` at emission.
    pub alignments: Vec<Vec<f64>>,
    pub finished: bool,
    /// Stop-token probability after the last decoded frame (learned backend).
    pub stop_prob: f64,
}

impl BackendState {
    pub fn read(&self) -> usize {
        self.encoder_outputs.len()
    }

    pub fn n(&self) -> usize {
        self.sentence.n()
    }

    fn new(sentence: &Sentence, mode: Mode, first: Vec<f64>, decoder_state: Vec<f64>) -> Self {
        Self {
            sentence: sentence.clone(),
            mode,
            encoder_outputs: vec![first],
            decoder_state,
            spoken: 0,
            alignments: Vec::new(),
            finished: false,
            stop_prob: 0.0,
        }
    }

    fn check_can_read(&self) -> Result<()> {
        if self.read() >= self.n() {
            Err(Error::domain("source exhausted"))
        } else {
            Ok(())
        }
    }

    fn check_can_decode(&self, alpha: &[f64]) -> Result<()> {
        if self.mode == Mode::Train && self.spoken >= self.sentence.t() {
            return Err(Error::domain("decode past the final target frame"));
        }
        if alpha.len() != self.read() {
            return Err(Error::shape(format!(
                "attention row has {} entries, buffer holds {}",
                alpha.len(),
                self.read()
            )));
        }
        Ok(())
    }

    fn record_alignment(&mut self, alpha: &[f64]) {
        let mut row = vec![0.0; self.n()];
        row[..alpha.len()].copy_from_slice(alpha);
        self.alignments.push(row);
    }
}

/// The contract every synthesis backend implements.
pub trait SynthesisBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Width of each encoder output `h_i`.
    fn hidden_dim(&self) -> usize;

    fn frame_dim(&self) -> usize;

    /// Start a run with the first character already encoded (`R = 1`).
    fn reset(&self, sentence: &Sentence, mode: Mode) -> Result<BackendState>;

    /// Encode the next character, appending `h_{R+1}`.
    fn read(&self, state: &mut BackendState) -> Result<()>;

    /// Attention weights for the next frame over columns `1..=R`.
    fn attention(&self, state: &BackendState) -> Result<Vec<f64>>;

    /// Emit frame `S+1` from the attention row, its context vector and the
    /// previous frame (ground truth when teacher-forced).
    fn decode_frame(
        &self,
        state: &mut BackendState,
        alpha: &[f64],
        context: &[f64],
        prev_frame: &[f64],
    ) -> Result<Vec<f64>>;

    /// Free-running termination criterion.
    fn finished(&self, state: &BackendState) -> bool;
}

/// `c = Σ_{i=1}^{R} α_i h_i`.
pub fn context_vector(h: &[Vec<f64>], alpha: &[f64]) -> Result<Vec<f64>> {
    if h.len() != alpha.len() || h.is_empty() {
        return Err(Error::shape(format!(
            "{} encoder outputs but {} attention weights",
            h.len(),
            alpha.len()
        )));
    }
    let mut c = vec![0.0; h[0].len()];
    for (hi, &a) in h.iter().zip(alpha) {
        for (cj, &hij) in c.iter_mut().zip(hi) {
            *cj += a * hij;
        }
    }
    Ok(c)
}
