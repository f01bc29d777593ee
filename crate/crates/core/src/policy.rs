//! The toy autoregressive policy: a context-conditioned first-order Markov
//! softmax model over integer tokens.
//!
//! Each context owns an `(n + 1) x n` logit table: one row per previous-token
//! state (the `n` vocabulary tokens plus a dedicated BOS state), one column
//! per next token. Sequence likelihoods factor over steps, so log-likelihoods,
//! per-step entropies and log-likelihood gradients are all available in closed
//! form — which is what lets every loss in this crate be checked against
//! finite differences.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::TokenSeq;

/// Standard deviation for seeded logit initialization; small enough that a
/// fresh policy is close to uniform.
pub const INIT_STD: f64 = 0.1;

/// Previous-token state conditioning one generation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prev {
    Bos,
    Token(usize),
}

/// Flat gradient with the same row-major layout as [`PolicyModel`] logits:
/// `index(ctx, prev, next) = (ctx * (n + 1) + prev) * n + next`, with BOS as
/// previous-state index `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientVector {
    values: Vec<f64>,
}

impl GradientVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &GradientVector) {
        assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Context-conditioned first-order softmax sequence model.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    vocab: usize,
    contexts: usize,
    t_max: usize,
    /// `contexts * (vocab + 1) * vocab` logits, row-major.
    logits: Vec<f64>,
}

impl PolicyModel {
    pub fn new(vocab: usize, contexts: usize, t_max: usize, logits: Vec<f64>) -> Result<Self> {
        if vocab < 2 {
            return Err(Error::config(
                "vocabulary needs at least one token plus the stop token",
            ));
        }
        if contexts == 0 || t_max == 0 {
            return Err(Error::config("contexts and T_max must be positive"));
        }
        let expected = contexts * (vocab + 1) * vocab;
        if logits.len() != expected {
            return Err(Error::config(format!(
                "logit table has {} entries, expected {expected}",
                logits.len()
            )));
        }
        if !logits.iter().all(|v| v.is_finite()) {
            return Err(Error::config("logits must be finite"));
        }
        Ok(Self {
            vocab,
            contexts,
            t_max,
            logits,
        })
    }

    /// All-zero logits: every step distribution is uniform.
    pub fn uniform(vocab: usize, contexts: usize, t_max: usize) -> Result<Self> {
        let len = contexts * (vocab + 1) * vocab;
        Self::new(vocab, contexts, t_max, vec![0.0; len])
    }

    /// Seeded i.i.d. `Normal(0, INIT_STD)` logits.
    pub fn random_init(
        vocab: usize,
        contexts: usize,
        t_max: usize,
        stream: RngStream,
    ) -> Result<Self> {
        let len = contexts * (vocab + 1) * vocab;
        let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
        let mut rng = stream.rng();
        let logits = (0..len).map(|_| normal.sample(&mut rng)).collect();
        Self::new(vocab, contexts, t_max, logits)
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn contexts(&self) -> usize {
        self.contexts
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    /// The dedicated stop token id, always `n - 1`.
    pub fn stop_token(&self) -> usize {
        self.vocab - 1
    }

    pub fn param_count(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn same_shape(&self, other: &PolicyModel) -> bool {
        self.vocab == other.vocab && self.contexts == other.contexts && self.t_max == other.t_max
    }

    fn prev_index(&self, prev: Prev) -> usize {
        match prev {
            Prev::Bos => self.vocab,
            Prev::Token(t) => {
                assert!(t < self.vocab, "previous token {t} out of range");
                t
            }
        }
    }

    fn row_start(&self, ctx: usize, prev: Prev) -> usize {
        assert!(ctx < self.contexts, "context {ctx} out of range");
        (ctx * (self.vocab + 1) + self.prev_index(prev)) * self.vocab
    }

    /// Logit row conditioning on `(ctx, prev)`.
    pub fn row(&self, ctx: usize, prev: Prev) -> &[f64] {
        let start = self.row_start(ctx, prev);
        &self.logits[start..start + self.vocab]
    }

    /// Flat parameter index of `logits[ctx][prev][next]`.
    pub fn param_index(&self, ctx: usize, prev: Prev, next: usize) -> usize {
        assert!(next < self.vocab);
        self.row_start(ctx, prev) + next
    }

    fn check_input(&self, ctx: usize, y: &TokenSeq) -> Result<()> {
        if ctx >= self.contexts {
            return Err(Error::input(format!(
                "context {ctx} out of range ({} contexts)",
                self.contexts
            )));
        }
        y.validate_for(self.vocab, self.t_max)
    }

    /// `log pi(y | ctx) = sum_i log softmax(row(ctx, prev_i))[y_i]` with
    /// `prev_0 = BOS`.
    pub fn log_prob(&self, ctx: usize, y: &TokenSeq) -> Result<f64> {
        self.check_input(ctx, y)?;
        let mut total = 0.0;
        let mut prev = Prev::Bos;
        for &token in y.tokens() {
            let row = self.row(ctx, prev);
            total += row[token] - log_sum_exp(row);
            prev = Prev::Token(token);
        }
        Ok(total)
    }

    /// Exact gradient of [`Self::log_prob`]: each step contributes
    /// `one_hot(y_i) - softmax(row)` to its `(ctx, prev_i)` row; repeated rows
    /// accumulate, every other entry is zero.
    pub fn grad_log_prob(&self, ctx: usize, y: &TokenSeq) -> Result<GradientVector> {
        let mut grad = GradientVector::zeros(self.param_count());
        self.accumulate_grad_log_prob(ctx, y, 1.0, &mut grad)?;
        Ok(grad)
    }

    /// `buf += scale * grad log pi(y | ctx)`; shared by the loss layer so a
    /// batch gradient never allocates per-pair vectors.
    pub fn accumulate_grad_log_prob(
        &self,
        ctx: usize,
        y: &TokenSeq,
        scale: f64,
        buf: &mut GradientVector,
    ) -> Result<()> {
        self.check_input(ctx, y)?;
        assert_eq!(buf.len(), self.param_count(), "gradient layout mismatch");
        let mut probs = vec![0.0; self.vocab];
        let mut prev = Prev::Bos;
        for &token in y.tokens() {
            let start = self.row_start(ctx, prev);
            softmax_into(&self.logits[start..start + self.vocab], &mut probs);
            let out = &mut buf.as_mut_slice()[start..start + self.vocab];
            for (o, p) in out.iter_mut().zip(&probs) {
                *o -= scale * p;
            }
            out[token] += scale;
            prev = Prev::Token(token);
        }
        Ok(())
    }

    /// Autoregressive categorical sampling from BOS. Stops at the stop token;
    /// if `t_max - 1` free draws pass without one, the stop token is forced as
    /// the final step so the sequence always terminates within `t_max`.
    pub fn sample(&self, ctx: usize, stream: RngStream) -> TokenSeq {
        assert!(ctx < self.contexts, "context {ctx} out of range");
        let stop = self.stop_token();
        let mut rng = stream.rng();
        let mut probs = vec![0.0; self.vocab];
        let mut tokens = Vec::new();
        let mut prev = Prev::Bos;
        for step in 0..self.t_max {
            if step == self.t_max - 1 {
                tokens.push(stop);
                break;
            }
            softmax_into(self.row(ctx, prev), &mut probs);
            let token = draw_categorical(&probs, rng.random::<f64>());
            tokens.push(token);
            if token == stop {
                break;
            }
            prev = Prev::Token(token);
        }
        TokenSeq::new(tokens).expect("sampled sequence is non-empty")
    }

    /// Shannon entropy (natural log) of the step distribution at `(ctx,
    /// prev)`; lies in `[0, log n]`. Written as `lse - E[logit]` so a
    /// constant row gives exactly `log n`.
    pub fn conditional_entropy(&self, ctx: usize, prev: Prev) -> f64 {
        let row = self.row(ctx, prev);
        let lse = log_sum_exp(row);
        let mut mean_logit = 0.0;
        for &logit in row {
            mean_logit += (logit - lse).exp() * logit;
        }
        (lse - mean_logit).max(0.0)
    }

    /// Write the checkpoint: magic, layout version, dims, then little-endian
    /// f64 logits.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        for dim in [
            CHECKPOINT_VERSION,
            self.vocab as u32,
            self.contexts as u32,
            self.t_max as u32,
        ] {
            w.write_all(&dim.to_le_bytes())?;
        }
        for v in &self.logits {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn save_to_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save(&mut file)?;
        std::io::Write::flush(&mut file)?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::format("not a policy checkpoint"));
        }
        let mut word = [0u8; 4];
        let mut next_u32 = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut word)?;
            Ok(u32::from_le_bytes(word))
        };
        let version = next_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(format!(
                "unsupported checkpoint layout version {version}"
            )));
        }
        let vocab = next_u32(&mut r)? as usize;
        let contexts = next_u32(&mut r)? as usize;
        let t_max = next_u32(&mut r)? as usize;
        let len = contexts
            .checked_mul(vocab + 1)
            .and_then(|x| x.checked_mul(vocab))
            .ok_or_else(|| Error::format("checkpoint dimensions overflow"))?;
        let mut logits = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut buf)?;
            logits.push(f64::from_le_bytes(buf));
        }
        PolicyModel::new(vocab, contexts, t_max, logits)
    }

    pub fn load_from_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::load(file)
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"RNBW";
const CHECKPOINT_VERSION: u32 = 1;

/// Numerically stable `log sum exp` over a logit row.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let sum: f64 = row.iter().map(|&v| (v - m).exp()).sum();
    m + sum.ln()
}

fn softmax_into(row: &[f64], out: &mut [f64]) {
    let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - m).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn draw_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1 // rounding leftovers land on the last bucket
}
