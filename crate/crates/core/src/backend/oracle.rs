//! Analytic backend whose every output is known in closed form.
//!
//! - `h_i = base(x_i)`.
//! - Attention for frame `s`: 0.8 on the owning symbol, 0.1 on each
//!   neighbour, restricted to columns `1..=R` and renormalized. If none of
//!   the three is available, all mass goes to column `R`.
//! - Decoding frame `s` with owner `o`:
//!   - `o > R` (owner not read yet): a zero frame;
//!   - `o` sensitive, not last, and `x_{o+1}` unread: `base(x_o)`;
//!   - otherwise the exact target `base(x_o) + coart(x_{o+1})`.
//!
//! With zero target noise the per-frame squared error is therefore `0`,
//! `δ²/D` (missing coarticulation) or `‖y_s‖²/D` (starved decoder).

use super::{Alphabet, BackendState, Sentence, SynthesisBackend};
use crate::episode::Mode;
use crate::{Error, Result};

pub const OWNER_WEIGHT: f64 = 0.8;
pub const NEIGHBOUR_WEIGHT: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct OracleBackend {
    alphabet: Alphabet,
}

impl OracleBackend {
    pub fn new(alphabet: Alphabet) -> Self {
        Self { alphabet }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// The frame this backend emits for frame `s` when `read` characters
    /// are available.
    pub fn predicted_frame(&self, sentence: &Sentence, s: usize, read: usize) -> Vec<f64> {
        let owner = sentence.owner(s);
        if owner > read {
            return vec![0.0; self.alphabet.frame_dim()];
        }
        let symbol = sentence.symbols[owner - 1];
        let next = sentence.symbols.get(owner).copied();
        if self.alphabet.sensitive[symbol] && next.is_some() && owner + 1 > read {
            self.alphabet.base[symbol].clone()
        } else {
            self.alphabet.frame(symbol, next)
        }
    }

    /// Attention over columns `1..=read` for frame `s`.
    pub fn attention_row(sentence: &Sentence, s: usize, read: usize) -> Vec<f64> {
        let owner = sentence.owner(s);
        let mut row = vec![0.0; read];
        for (col, w) in [
            (owner.wrapping_sub(1), NEIGHBOUR_WEIGHT),
            (owner, OWNER_WEIGHT),
            (owner + 1, NEIGHBOUR_WEIGHT),
        ] {
            if (1..=read).contains(&col) && col <= sentence.n() {
                row[col - 1] = w;
            }
        }
        let total: f64 = row.iter().sum();
        if total == 0.0 {
            row[read - 1] = 1.0;
        } else {
            row.iter_mut().for_each(|w| *w /= total);
        }
        row
    }
}

impl SynthesisBackend for OracleBackend {
    fn name(&self) -> &str {
        "oracle"
    }

    fn hidden_dim(&self) -> usize {
        self.alphabet.frame_dim()
    }

    fn frame_dim(&self) -> usize {
        self.alphabet.frame_dim()
    }

    fn reset(&self, sentence: &Sentence, mode: Mode) -> Result<BackendState> {
        if sentence.n() == 0 {
            return Err(Error::domain("empty sentence"));
        }
        if sentence.symbols.iter().any(|&x| x >= self.alphabet.size()) {
            return Err(Error::domain("sentence uses symbols outside the alphabet"));
        }
        let first = self.alphabet.base[sentence.symbols[0]].clone();
        Ok(BackendState::new(sentence, mode, first, Vec::new()))
    }

    fn read(&self, state: &mut BackendState) -> Result<()> {
        state.check_can_read()?;
        let x = state.sentence.symbols[state.read()];
        state.encoder_outputs.push(self.alphabet.base[x].clone());
        Ok(())
    }

    fn attention(&self, state: &BackendState) -> Result<Vec<f64>> {
        Ok(Self::attention_row(
            &state.sentence,
            state.spoken + 1,
            state.read(),
        ))
    }

    fn decode_frame(
        &self,
        state: &mut BackendState,
        alpha: &[f64],
        _context: &[f64],
        _prev_frame: &[f64],
    ) -> Result<Vec<f64>> {
        state.check_can_decode(alpha)?;
        let frame = self.predicted_frame(&state.sentence, state.spoken + 1, state.read());
        state.record_alignment(alpha);
        state.spoken += 1;
        state.finished = state.spoken >= state.sentence.t();
        Ok(frame)
    }

    fn finished(&self, state: &BackendState) -> bool {
        state.spoken >= state.sentence.t()
    }
}
