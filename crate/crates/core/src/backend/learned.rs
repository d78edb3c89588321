//! A small trainable encoder/decoder that obeys the incremental contract.
//!
//! - encoder: symbol embedding followed by a unidirectional GRU, so `h_i`
//!   depends on `x_1..x_i` only;
//! - attention: content-based, `score_i = h_i · (W_q d)` where `d` is the
//!   decoder state, softmaxed over the columns read so far;
//! - decoder: GRU over `[context, previous frame]`;
//! - heads: linear frame projection and a sigmoid stop predictor, both fed
//!   `[decoder state, context]`.
//!
//! Training is teacher-forced with every character read.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{context_vector, BackendState, Corpus, Sentence, SynthesisBackend};
use crate::episode::Mode;
use crate::numerics::ops::{matvec, matvec_t_acc, outer_acc, sigmoid};
use crate::numerics::{
    AdamConfig, GruCache, GruCell, GruSpec, Mlp, MlpCache, MlpSpec, ParamId, ParamStore, Tensor,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnedBackendConfig {
    pub embed_dim: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    pub lr: f64,
    pub batch_sentences: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Relative validation-MSE improvement that counts as progress.
    pub min_rel_improvement: f64,
    pub stop_weight: f64,
    /// Weight of the single positive stop target per sentence.
    pub stop_pos_weight: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for LearnedBackendConfig {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            encoder_hidden: 32,
            decoder_hidden: 32,
            lr: 1e-3,
            batch_sentences: 8,
            max_epochs: 60,
            patience: 5,
            min_rel_improvement: 1e-3,
            stop_weight: 1.0,
            stop_pos_weight: 10.0,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Everything needed to rebuild the parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnedArch {
    pub alphabet_size: usize,
    pub frame_dim: usize,
    pub embed_dim: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
}

#[derive(Debug, Clone)]
pub struct LearnedNet {
    arch: LearnedArch,
    embedding: ParamId,
    encoder: GruCell,
    query: ParamId,
    decoder: GruCell,
    frame_head: Mlp,
    stop_head: Mlp,
}

#[derive(Debug, Clone)]
struct FrameCache {
    d_prev: Vec<f64>,
    q: Vec<f64>,
    alpha: Vec<f64>,
    decoder: GruCache,
    frame_head: MlpCache,
    stop_head: MlpCache,
    frame: Vec<f64>,
    stop_logit: f64,
}

/// A teacher-forced full-buffer pass over one sentence.
#[derive(Debug, Clone)]
pub struct SentenceForward {
    h: Vec<Vec<f64>>,
    encoder: Vec<GruCache>,
    frames: Vec<FrameCache>,
}

impl SentenceForward {
    /// Number of decoded frames (`T`).
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Predicted frame `s` (1-based).
    pub fn frame(&self, s: usize) -> &[f64] {
        &self.frames[s - 1].frame
    }

    /// Attention row used for frame `s` (1-based), over all `N` characters.
    pub fn alpha(&self, s: usize) -> &[f64] {
        &self.frames[s - 1].alpha
    }
}

struct DecodeOut {
    d_new: Vec<f64>,
    frame: Vec<f64>,
    stop_logit: f64,
    decoder: GruCache,
    frame_head: MlpCache,
    stop_head: MlpCache,
}

impl LearnedNet {
    pub fn register(store: &mut ParamStore, arch: LearnedArch) -> Result<Self> {
        let LearnedArch {
            alphabet_size,
            frame_dim,
            embed_dim,
            encoder_hidden,
            decoder_hidden,
        } = arch;
        let embedding = store.add("backend.embedding", &[alphabet_size, embed_dim], 1)?;
        let encoder = GruCell::register(
            store,
            "backend.encoder",
            GruSpec {
                input: embed_dim,
                hidden: encoder_hidden,
            },
        )?;
        let query = store.add(
            "backend.attention.w_q",
            &[encoder_hidden, decoder_hidden],
            decoder_hidden,
        )?;
        let decoder = GruCell::register(
            store,
            "backend.decoder",
            GruSpec {
                input: encoder_hidden + frame_dim,
                hidden: decoder_hidden,
            },
        )?;
        let head_in = decoder_hidden + encoder_hidden;
        let frame_head = Mlp::register(
            store,
            "backend.frame_head",
            MlpSpec::relu_stack(head_in, &[], frame_dim),
        )?;
        let stop_head = Mlp::register(
            store,
            "backend.stop_head",
            MlpSpec::relu_stack(head_in, &[], 1),
        )?;
        Ok(Self {
            arch,
            embedding,
            encoder,
            query,
            decoder,
            frame_head,
            stop_head,
        })
    }

    pub fn arch(&self) -> LearnedArch {
        self.arch
    }

    fn embed(&self, store: &ParamStore, symbol: usize) -> Result<Vec<f64>> {
        if symbol >= self.arch.alphabet_size {
            return Err(Error::domain(format!(
                "symbol {symbol} outside the alphabet"
            )));
        }
        let e = self.arch.embed_dim;
        Ok(store.value(self.embedding).data()[symbol * e..(symbol + 1) * e].to_vec())
    }

    fn encode(
        &self,
        store: &ParamStore,
        h_prev: &[f64],
        symbol: usize,
    ) -> Result<(Vec<f64>, GruCache)> {
        let x = self.embed(store, symbol)?;
        self.encoder.forward(store, &x, h_prev)
    }

    /// Returns `(alpha, q)`.
    fn attend(
        &self,
        store: &ParamStore,
        h: &[Vec<f64>],
        d: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let q = matvec(store.value(self.query), d);
        let scores: Vec<f64> = h
            .iter()
            .map(|hi| crate::numerics::ops::dot(hi, &q))
            .collect();
        Ok((crate::numerics::softmax(&scores)?, q))
    }

    fn decode(&self, store: &ParamStore, d: &[f64], c: &[f64], prev: &[f64]) -> Result<DecodeOut> {
        if prev.len() != self.arch.frame_dim {
            return Err(Error::shape(format!(
                "previous frame has {} values, expected {}",
                prev.len(),
                self.arch.frame_dim
            )));
        }
        let mut input = c.to_vec();
        input.extend_from_slice(prev);
        let (d_new, decoder) = self.decoder.forward(store, &input, d)?;
        let mut o = d_new.clone();
        o.extend_from_slice(c);
        let (frame, frame_head) = self.frame_head.forward(store, &o)?;
        let (stop, stop_head) = self.stop_head.forward(store, &o)?;
        Ok(DecodeOut {
            d_new,
            frame,
            stop_logit: stop[0],
            decoder,
            frame_head,
            stop_head,
        })
    }

    /// Teacher-forced pass with the whole sentence read.
    pub fn forward_sentence(
        &self,
        store: &ParamStore,
        sentence: &Sentence,
    ) -> Result<SentenceForward> {
        let mut h = Vec::with_capacity(sentence.n());
        let mut encoder = Vec::with_capacity(sentence.n());
        let mut state = vec![0.0; self.arch.encoder_hidden];
        for &x in &sentence.symbols {
            let (next, cache) = self.encode(store, &state, x)?;
            h.push(next.clone());
            encoder.push(cache);
            state = next;
        }
        let mut frames = Vec::with_capacity(sentence.t());
        let mut d = vec![0.0; self.arch.decoder_hidden];
        let zero = vec![0.0; self.arch.frame_dim];
        for s in 1..=sentence.t() {
            let (alpha, q) = self.attend(store, &h, &d)?;
            let c = context_vector(&h, &alpha)?;
            let prev = if s == 1 {
                &zero[..]
            } else {
                sentence.frame(s - 1)
            };
            let out = self.decode(store, &d, &c, prev)?;
            frames.push(FrameCache {
                d_prev: std::mem::replace(&mut d, out.d_new),
                q,
                alpha,
                decoder: out.decoder,
                frame_head: out.frame_head,
                stop_head: out.stop_head,
                frame: out.frame,
                stop_logit: out.stop_logit,
            });
        }
        Ok(SentenceForward { h, encoder, frames })
    }

    /// Frame MSE (per element) and stop-token cross-entropy of a forward pass.
    pub fn losses(
        &self,
        fwd: &SentenceForward,
        sentence: &Sentence,
        cfg: &LearnedBackendConfig,
    ) -> (f64, f64) {
        let t = sentence.t();
        let mut se = 0.0;
        let mut ce = 0.0;
        for (k, fc) in fwd.frames.iter().enumerate() {
            let y = sentence.frame(k + 1);
            se += fc
                .frame
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            let p = sigmoid(fc.stop_logit);
            ce += if k + 1 == t {
                -cfg.stop_pos_weight * p.max(1e-300).ln()
            } else {
                -(1.0 - p).max(1e-300).ln()
            };
        }
        (se / (t * self.arch.frame_dim) as f64, ce / t as f64)
    }

    pub fn loss(
        &self,
        store: &ParamStore,
        sentence: &Sentence,
        cfg: &LearnedBackendConfig,
    ) -> Result<f64> {
        let fwd = self.forward_sentence(store, sentence)?;
        let (mse, ce) = self.losses(&fwd, sentence, cfg);
        Ok(mse + cfg.stop_weight * ce)
    }

    /// Accumulate `scale · ∂loss/∂θ` into the store's gradients.
    pub fn backward_sentence(
        &self,
        store: &mut ParamStore,
        fwd: &SentenceForward,
        sentence: &Sentence,
        cfg: &LearnedBackendConfig,
        scale: f64,
    ) -> Result<()> {
        let t = sentence.t();
        let dd = self.arch.decoder_hidden;
        let he = self.arch.encoder_hidden;
        let frame_scale = scale * 2.0 / (t * self.arch.frame_dim) as f64;
        let mut g_h = vec![vec![0.0; he]; fwd.h.len()];
        let mut g_d_next = vec![0.0; dd];
        for (k, fc) in fwd.frames.iter().enumerate().rev() {
            let y = sentence.frame(k + 1);
            let gy: Vec<f64> = fc
                .frame
                .iter()
                .zip(y)
                .map(|(a, b)| frame_scale * (a - b))
                .collect();
            let p = sigmoid(fc.stop_logit);
            let g_logit = if k + 1 == t {
                cfg.stop_pos_weight * (p - 1.0)
            } else {
                p
            } * cfg.stop_weight
                * scale
                / t as f64;
            let mut g_o = self.frame_head.backward(store, &fc.frame_head, &gy)?;
            let g_o2 = self.stop_head.backward(store, &fc.stop_head, &[g_logit])?;
            crate::numerics::ops::add_acc(&mut g_o, &g_o2);

            let mut g_dnew = g_o[..dd].to_vec();
            crate::numerics::ops::add_acc(&mut g_dnew, &g_d_next);
            let mut g_c = g_o[dd..].to_vec();
            let (g_in, mut g_dprev) = self.decoder.backward(store, &fc.decoder, &g_dnew)?;
            crate::numerics::ops::add_acc(&mut g_c, &g_in[..he]);

            // c = Σ α_i h_i, α = softmax(h_i · q), q = W_q d_prev
            let g_alpha: Vec<f64> = fwd
                .h
                .iter()
                .map(|hi| crate::numerics::ops::dot(&g_c, hi))
                .collect();
            let weighted: f64 = fc.alpha.iter().zip(&g_alpha).map(|(a, g)| a * g).sum();
            let mut g_q = vec![0.0; he];
            for (i, hi) in fwd.h.iter().enumerate() {
                let a = fc.alpha[i];
                let g_score = a * (g_alpha[i] - weighted);
                for j in 0..he {
                    g_h[i][j] += a * g_c[j] + g_score * fc.q[j];
                    g_q[j] += g_score * hi[j];
                }
            }
            outer_acc(store.grad_mut(self.query), &g_q, &fc.d_prev);
            matvec_t_acc(store.value(self.query), &g_q, &mut g_dprev);
            g_d_next = g_dprev;
        }

        let e = self.arch.embed_dim;
        let mut carry = vec![0.0; he];
        for i in (0..fwd.h.len()).rev() {
            let mut g = g_h[i].clone();
            crate::numerics::ops::add_acc(&mut g, &carry);
            let (gx, gprev) = self.encoder.backward(store, &fwd.encoder[i], &g)?;
            let x = sentence.symbols[i];
            let row = &mut store.grad_mut(self.embedding).data_mut()[x * e..(x + 1) * e];
            crate::numerics::ops::add_acc(row, &gx);
            carry = gprev;
        }
        Ok(())
    }
}

/// Per-epoch training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

/// Offline (full-buffer) synthesis output.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub frames: Vec<Vec<f64>>,
    pub alignments: Vec<Vec<f64>>,
    pub stop_probs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LearnedBackend {
    net: LearnedNet,
    store: ParamStore,
}

impl LearnedBackend {
    /// Fresh, randomly initialized backend.
    pub fn new(arch: LearnedArch, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = LearnedNet::register(&mut store, arch)?;
        store.init_uniform(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self { net, store })
    }

    pub fn arch_for(corpus: &Corpus, cfg: &LearnedBackendConfig) -> LearnedArch {
        LearnedArch {
            alphabet_size: corpus.alphabet.size(),
            frame_dim: corpus.alphabet.frame_dim(),
            embed_dim: cfg.embed_dim,
            encoder_hidden: cfg.encoder_hidden,
            decoder_hidden: cfg.decoder_hidden,
        }
    }

    /// Rebuild from stored tensors; every expected name must be present
    /// with the expected shape.
    pub fn from_tensors<'a>(
        arch: LearnedArch,
        tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>,
    ) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = LearnedNet::register(&mut store, arch)?;
        load_into(&mut store, tensors)?;
        Ok(Self { net, store })
    }

    pub fn arch(&self) -> LearnedArch {
        self.net.arch
    }

    pub fn net(&self) -> &LearnedNet {
        &self.net
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn parts_mut(&mut self) -> (&LearnedNet, &mut ParamStore) {
        (&self.net, &mut self.store)
    }

    /// Teacher-forced full-buffer MSE per frame element, averaged over frames.
    pub fn full_buffer_mse<'a>(
        &self,
        sentences: impl IntoIterator<Item = &'a Sentence>,
    ) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for s in sentences {
            let fwd = self.net.forward_sentence(&self.store, s)?;
            for (k, fc) in fwd.frames.iter().enumerate() {
                total += crate::numerics::ops::mse(&fc.frame, s.frame(k + 1))?;
                count += 1;
            }
        }
        Ok(if count == 0 {
            0.0
        } else {
            total / count as f64
        })
    }

    /// Encode everything, then decode. Teacher-forced decoding emits exactly
    /// `T` frames; free-running decoding stops on the stop token or after
    /// `max_frames`.
    pub fn synthesize_full(
        &self,
        sentence: &Sentence,
        mode: Mode,
        max_frames: usize,
    ) -> Result<Synthesis> {
        let mut state = self.reset(sentence, mode)?;
        while state.read() < sentence.n() {
            self.read(&mut state)?;
        }
        let mut frames: Vec<Vec<f64>> = Vec::new();
        let mut stop_probs = Vec::new();
        let limit = match mode {
            Mode::Train => sentence.t(),
            Mode::Eval => max_frames,
        };
        while frames.len() < limit {
            let alpha = self.attention(&state)?;
            let c = context_vector(&state.encoder_outputs, &alpha)?;
            let prev = match (mode, frames.len()) {
                (_, 0) => vec![0.0; self.arch().frame_dim],
                (Mode::Train, k) => sentence.frame(k).to_vec(),
                (Mode::Eval, k) => frames[k - 1].clone(),
            };
            let frame = self.decode_frame(&mut state, &alpha, &c, &prev)?;
            frames.push(frame);
            stop_probs.push(state.stop_prob);
            if mode == Mode::Eval && state.finished {
                break;
            }
        }
        Ok(Synthesis {
            frames,
            alignments: state.alignments,
            stop_probs,
        })
    }

    /// Teacher-forced training on the corpus training split with early
    /// stopping on a held-out slice of it.
    pub fn train(corpus: &Corpus, cfg: &LearnedBackendConfig) -> Result<(Self, TrainReport)> {
        let train_all: Vec<&Sentence> = corpus.train().collect();
        if train_all.is_empty() {
            return Err(Error::domain("empty training corpus"));
        }
        let n_val = ((train_all.len() as f64 * cfg.validation_fraction).round() as usize)
            .min(train_all.len().saturating_sub(1));
        let (fit, val) = train_all.split_at(train_all.len() - n_val);
        let val: Vec<&Sentence> = if val.is_empty() {
            fit.to_vec()
        } else {
            val.to_vec()
        };

        let mut backend = Self::new(Self::arch_for(corpus, cfg), cfg.seed)?;
        let adam = AdamConfig::with_lr(cfg.lr);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
        let mut order: Vec<usize> = (0..fit.len()).collect();
        let mut best = (backend.store.clone(), f64::INFINITY, 0usize);
        let mut epochs = Vec::new();
        let mut stale = 0;
        for epoch in 1..=cfg.max_epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(cfg.batch_sentences.max(1)) {
                let (net, store) = backend.parts_mut();
                store.zero_grad();
                let scale = 1.0 / chunk.len() as f64;
                for &i in chunk {
                    let s = fit[i];
                    let fwd = net.forward_sentence(store, s)?;
                    let (mse, ce) = net.losses(&fwd, s, cfg);
                    let loss = mse + cfg.stop_weight * ce;
                    if !loss.is_finite() {
                        return Err(Error::NonFinite(format!(
                            "backend loss diverged in epoch {epoch} on sentence {}",
                            s.id
                        )));
                    }
                    epoch_loss += loss;
                    net.backward_sentence(store, &fwd, s, cfg, scale)?;
                }
                store.adam_step(&adam)?;
            }
            let val_mse = backend.full_buffer_mse(val.iter().copied())?;
            let train_loss = epoch_loss / fit.len() as f64;
            log::info!("backend epoch {epoch}: train loss {train_loss:.6}, val mse {val_mse:.6}");
            epochs.push(EpochLog {
                epoch,
                train_loss,
                val_mse,
            });
            if val_mse < best.1 * (1.0 - cfg.min_rel_improvement) {
                best = (backend.store.clone(), val_mse, epoch);
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
        backend.store = best.0;
        Ok((
            backend,
            TrainReport {
                epochs,
                best_epoch: best.2,
                best_val_mse: best.1,
            },
        ))
    }
}

pub(crate) fn load_into<'a>(
    store: &mut ParamStore,
    tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>,
) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for (name, t) in tensors {
        let id = store
            .id(name)
            .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name}")))?;
        store
            .set_value(id, t.clone())
            .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?;
        seen.insert(name.to_string());
    }
    if let Some(missing) = store
        .ids()
        .map(|id| store.name(id))
        .find(|n| !seen.contains(*n))
    {
        return Err(Error::Checkpoint(format!("missing tensor {missing}")));
    }
    Ok(())
}

impl SynthesisBackend for LearnedBackend {
    fn name(&self) -> &str {
        "learned"
    }

    fn hidden_dim(&self) -> usize {
        self.net.arch.encoder_hidden
    }

    fn frame_dim(&self) -> usize {
        self.net.arch.frame_dim
    }

    fn reset(&self, sentence: &Sentence, mode: Mode) -> Result<BackendState> {
        if sentence.n() == 0 {
            return Err(Error::domain("empty sentence"));
        }
        let zero = vec![0.0; self.net.arch.encoder_hidden];
        let (h1, _) = self.net.encode(&self.store, &zero, sentence.symbols[0])?;
        Ok(BackendState::new(
            sentence,
            mode,
            h1,
            vec![0.0; self.net.arch.decoder_hidden],
        ))
    }

    fn read(&self, state: &mut BackendState) -> Result<()> {
        state.check_can_read()?;
        let x = state.sentence.symbols[state.read()];
        let prev = state
            .encoder_outputs
            .last()
            .expect("reset encodes one character");
        let (h, _) = self.net.encode(&self.store, prev, x)?;
        state.encoder_outputs.push(h);
        Ok(())
    }

    fn attention(&self, state: &BackendState) -> Result<Vec<f64>> {
        Ok(self
            .net
            .attend(&self.store, &state.encoder_outputs, &state.decoder_state)?
            .0)
    }

    fn decode_frame(
        &self,
        state: &mut BackendState,
        alpha: &[f64],
        context: &[f64],
        prev_frame: &[f64],
    ) -> Result<Vec<f64>> {
        state.check_can_decode(alpha)?;
        let out = self
            .net
            .decode(&self.store, &state.decoder_state, context, prev_frame)?;
        let stop_prob = sigmoid(out.stop_logit);
        state.decoder_state = out.d_new;
        state.stop_prob = stop_prob;
        state.record_alignment(alpha);
        state.spoken += 1;
        state.finished = match state.mode {
            Mode::Train => state.spoken >= state.sentence.t(),
            Mode::Eval => stop_prob > 0.5,
        };
        Ok(out.frame)
    }

    fn finished(&self, state: &BackendState) -> bool {
        state.finished
    }
}
