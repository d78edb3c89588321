//! Synthetic source/target corpus with a built-in lookahead cost.
//!
//! Every symbol has a unit-norm base frame and a fixed duration. A fraction
//! of the alphabet is *lookahead-sensitive*: the frames of a sensitive
//! symbol are shifted by a coarticulation vector that depends on the next
//! symbol, so they cannot be reproduced exactly before that symbol is read.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticCorpusSpec {
    pub alphabet_size: usize,
    pub frame_dim: usize,
    /// Durations (in frames) a symbol may be assigned.
    pub durations: Vec<usize>,
    pub sensitive_fraction: f64,
    /// Norm of every coarticulation vector.
    pub coarticulation: f64,
    /// Standard deviation of Gaussian noise added to target frames.
    pub noise: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub size: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            alphabet_size: 12,
            frame_dim: 16,
            durations: vec![2, 3, 4],
            sensitive_fraction: 0.25,
            coarticulation: 0.5,
            noise: 0.0,
            min_len: 12,
            max_len: 24,
            size: 218,
            train_fraction: 0.916,
            seed: 0,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("corpus: {m}")));
        if self.alphabet_size < 2 {
            return bad("alphabet_size must be at least 2");
        }
        if self.frame_dim == 0 {
            return bad("frame_dim must be positive");
        }
        if self.durations.is_empty() || self.durations.contains(&0) {
            return bad("durations must be nonempty and positive");
        }
        if !(0.0..=1.0).contains(&self.sensitive_fraction) {
            return bad("sensitive_fraction must lie in [0, 1]");
        }
        if self.coarticulation <= 0.0 || !self.coarticulation.is_finite() {
            return bad("coarticulation must be positive");
        }
        if self.noise < 0.0 || !self.noise.is_finite() {
            return bad("noise must be nonnegative");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("need 1 <= min_len <= max_len");
        }
        if self.size == 0 {
            return bad("size must be positive");
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return bad("train_fraction must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Per-symbol tables shared by every sentence of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alphabet {
    pub base: Vec<Vec<f64>>,
    pub coart: Vec<Vec<f64>>,
    pub durations: Vec<usize>,
    pub sensitive: Vec<bool>,
}

impl Alphabet {
    pub fn size(&self) -> usize {
        self.base.len()
    }

    pub fn frame_dim(&self) -> usize {
        self.base.first().map_or(0, Vec::len)
    }

    /// Ground-truth frame of `symbol` when followed by `next`.
    pub fn frame(&self, symbol: usize, next: Option<usize>) -> Vec<f64> {
        let mut f = self.base[symbol].clone();
        if self.sensitive[symbol] {
            if let Some(b) = next {
                for (v, c) in f.iter_mut().zip(&self.coart[b]) {
                    *v += c;
                }
            }
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: usize,
    pub symbols: Vec<usize>,
    pub durations: Vec<usize>,
    pub sensitive: Vec<bool>,
    pub frame_dim: usize,
    /// Target frames, row-major `T × frame_dim`.
    pub frames: Vec<f64>,
}

impl Sentence {
    pub fn n(&self) -> usize {
        self.symbols.len()
    }

    pub fn t(&self) -> usize {
        self.durations.iter().sum()
    }

    /// Ground-truth frame `s` (1-based).
    pub fn frame(&self, s: usize) -> &[f64] {
        let d = self.frame_dim;
        &self.frames[(s - 1) * d..s * d]
    }

    /// 1-based index of the source symbol that owns frame `s` (1-based).
    /// Frames past the end belong to the last symbol.
    pub fn owner(&self, s: usize) -> usize {
        let mut end = 0;
        for (i, &d) in self.durations.iter().enumerate() {
            end += d;
            if s <= end {
                return i + 1;
            }
        }
        self.n()
    }

    /// Owner of every frame, 1-based.
    pub fn owners(&self) -> Vec<usize> {
        self.durations
            .iter()
            .enumerate()
            .flat_map(|(i, &d)| std::iter::repeat_n(i + 1, d))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub spec: SyntheticCorpusSpec,
    pub alphabet: Alphabet,
    pub sentences: Vec<Sentence>,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

/// Corpus metadata written next to the sentence file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub spec: SyntheticCorpusSpec,
    pub alphabet: Alphabet,
    pub sentence_count: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

pub const CORPUS_FILE: &str = "corpus.ndjson";
pub const MANIFEST_FILE: &str = "manifest.json";

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn generate_alphabet(spec: &SyntheticCorpusSpec, rng: &mut ChaCha8Rng) -> Alphabet {
    let a = spec.alphabet_size;
    let mut base: Vec<Vec<f64>> = Vec::with_capacity(a);
    while base.len() < a {
        let v = unit_gaussian(rng, spec.frame_dim);
        // distinctness; matters only for frame_dim == 1
        if base
            .iter()
            .all(|b| b.iter().zip(&v).any(|(x, y)| (x - y).abs() > 1e-3))
        {
            base.push(v);
        }
    }
    let coart = (0..a)
        .map(|_| {
            unit_gaussian(rng, spec.frame_dim)
                .into_iter()
                .map(|x| x * spec.coarticulation)
                .collect()
        })
        .collect();
    let durations = (0..a)
        .map(|_| spec.durations[rng.random_range(0..spec.durations.len())])
        .collect();
    let n_sensitive = (spec.sensitive_fraction * a as f64).round() as usize;
    let mut order: Vec<usize> = (0..a).collect();
    order.shuffle(rng);
    let mut sensitive = vec![false; a];
    for &s in &order[..n_sensitive] {
        sensitive[s] = true;
    }
    Alphabet {
        base,
        coart,
        durations,
        sensitive,
    }
}

/// Build the sentence for a given symbol sequence under `alphabet`.
pub fn build_sentence(
    id: usize,
    symbols: Vec<usize>,
    alphabet: &Alphabet,
    noise: f64,
    rng: &mut impl Rng,
) -> Sentence {
    let frame_dim = alphabet.frame_dim();
    let durations: Vec<usize> = symbols.iter().map(|&x| alphabet.durations[x]).collect();
    let sensitive = symbols.iter().map(|&x| alphabet.sensitive[x]).collect();
    let mut frames = Vec::with_capacity(durations.iter().sum::<usize>() * frame_dim);
    for (i, &x) in symbols.iter().enumerate() {
        let f = alphabet.frame(x, symbols.get(i + 1).copied());
        for _ in 0..durations[i] {
            if noise > 0.0 {
                frames.extend(
                    f.iter()
                        .map(|v| v + noise * rng.sample::<f64, _>(StandardNormal)),
                );
            } else {
                frames.extend_from_slice(&f);
            }
        }
    }
    Sentence {
        id,
        symbols,
        durations,
        sensitive,
        frame_dim,
        frames,
    }
}

/// Deterministic for a fixed spec (including its seed).
pub fn generate_corpus(spec: &SyntheticCorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let alphabet = generate_alphabet(spec, &mut rng);
    let sentences = (0..spec.size)
        .map(|id| {
            let n = rng.random_range(spec.min_len..=spec.max_len);
            let symbols = (0..n)
                .map(|_| rng.random_range(0..spec.alphabet_size))
                .collect();
            build_sentence(id, symbols, &alphabet, spec.noise, &mut rng)
        })
        .collect();
    let train = (spec.size as f64 * spec.train_fraction).round() as usize;
    Ok(Corpus {
        spec: spec.clone(),
        alphabet,
        sentences,
        train_ids: (0..train).collect(),
        test_ids: (train..spec.size).collect(),
    })
}

impl Corpus {
    pub fn train(&self) -> impl Iterator<Item = &Sentence> {
        self.train_ids.iter().map(|&i| &self.sentences[i])
    }

    pub fn test(&self) -> impl Iterator<Item = &Sentence> {
        self.test_ids.iter().map(|&i| &self.sentences[i])
    }

    pub fn manifest(&self) -> CorpusManifest {
        CorpusManifest {
            spec: self.spec.clone(),
            alphabet: self.alphabet.clone(),
            sentence_count: self.sentences.len(),
            train_count: self.train_ids.len(),
            test_count: self.test_ids.len(),
            train_ids: self.train_ids.clone(),
            test_ids: self.test_ids.clone(),
        }
    }

    /// Write `corpus.ndjson` (one sentence per line) and `manifest.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut out = fs::File::create(dir.join(CORPUS_FILE))?;
        for s in &self.sentences {
            writeln!(out, "{}", serde_json::to_string(s)?)?;
        }
        let manifest = serde_json::to_string_pretty(&self.manifest())?;
        fs::write(dir.join(MANIFEST_FILE), manifest + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: CorpusManifest =
            serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let text = fs::read_to_string(dir.join(CORPUS_FILE))?;
        let mut sentences = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let s: Sentence = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if s.frames.len() != s.t() * s.frame_dim || s.symbols.len() != s.durations.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "sentence fields are inconsistent".into(),
                });
            }
            sentences.push(s);
        }
        if sentences.len() != manifest.sentence_count {
            return Err(Error::domain(format!(
                "manifest lists {} sentences, file has {}",
                manifest.sentence_count,
                sentences.len()
            )));
        }
        Ok(Self {
            spec: manifest.spec,
            alphabet: manifest.alphabet,
            sentences,
            train_ids: manifest.train_ids,
            test_ids: manifest.test_ids,
        })
    }
}
