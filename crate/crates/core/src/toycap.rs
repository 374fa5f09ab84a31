//! Tiny conditional caption generator: a single-layer tanh recurrence whose
//! initial hidden state is a projection of the image context vector.
//!
//! ```text
//! h_0     = tanh(ctx · W_ctx)
//! h_{t+1} = tanh([embed(x_t); h_t] · W_rec)
//! p_{t+1} = softmax(h_{t+1} · W_out)
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, Array3, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::batch::pad_batch;
use crate::error::{Error, Result};
use crate::floatrows::FloatRows;
use crate::loss::{position_loss, position_loss_grad, LossConfig};
use crate::manifest::{write_atomic, CorpusManifest, Split};
use crate::vocab::{TokenId, BOS, EOS};

/// Image id → context vector.
pub type ContextMap = HashMap<String, Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyCaptionerParams {
    /// K×E token embeddings.
    pub embed: Array2<f64>,
    /// C×H context projection.
    pub ctx_proj: Array2<f64>,
    /// (E+H)×H recurrence.
    pub recur: Array2<f64>,
    /// H×K output projection.
    pub out_proj: Array2<f64>,
}

impl ToyCaptionerParams {
    pub fn context_dim(&self) -> usize {
        self.ctx_proj.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.embed.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.ctx_proj.ncols()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed.ncols()
    }

    fn zeros_like(&self) -> Self {
        Self {
            embed: Array2::zeros(self.embed.raw_dim()),
            ctx_proj: Array2::zeros(self.ctx_proj.raw_dim()),
            recur: Array2::zeros(self.recur.raw_dim()),
            out_proj: Array2::zeros(self.out_proj.raw_dim()),
        }
    }

    fn tensors(&self) -> [&Array2<f64>; 4] {
        [&self.embed, &self.ctx_proj, &self.recur, &self.out_proj]
    }

    fn tensors_mut(&mut self) -> [&mut Array2<f64>; 4] {
        [
            &mut self.embed,
            &mut self.ctx_proj,
            &mut self.recur,
            &mut self.out_proj,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Flat view of every parameter in a fixed order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter().copied())
            .collect()
    }

    pub fn unflatten_into(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x = *it.next().expect("flat parameter vector too short");
            }
        }
    }

    /// Checkpoint bytes: `toycap <C> <K> <H> <E>` on the first line, then a
    /// one-row float container holding [`flatten`](Self::flatten) as f32.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = format!(
            "toycap {} {} {} {}\n",
            self.context_dim(),
            self.vocab_size(),
            self.hidden_dim(),
            self.embed_dim()
        )
        .into_bytes();
        let flat: Vec<f32> = self.flatten().iter().map(|&x| x as f32).collect();
        let n = flat.len();
        out.extend(FloatRows::new(n, flat).expect("one row").to_bytes());
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "missing shape header".into(),
            })?;
        let header = std::str::from_utf8(&bytes[..nl]).unwrap_or("");
        let parts: Vec<&str> = header.split_whitespace().collect();
        let dims: Vec<usize> = match parts.as_slice() {
            ["toycap", rest @ ..] if rest.len() == 4 => rest
                .iter()
                .map(|p| p.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse {
                    line: 1,
                    message: "bad shape header".into(),
                })?,
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: "expected \"toycap <C> <K> <H> <E>\"".into(),
                })
            }
        };
        let mut params = zero_params(dims[0], dims[1], dims[2], dims[3])?;
        let rows = FloatRows::from_bytes(&bytes[nl + 1..])?;
        if rows.count() != 1 || rows.dim() != params.num_params() {
            return Err(Error::Integrity(format!(
                "checkpoint holds {}x{} values, shape needs 1x{}",
                rows.count(),
                rows.dim(),
                params.num_params()
            )));
        }
        let flat: Vec<f64> = rows.values().iter().map(|&x| x as f64).collect();
        params.unflatten_into(&flat);
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_checkpoint_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}

fn zero_params(c: usize, k: usize, h: usize, e: usize) -> Result<ToyCaptionerParams> {
    for (name, v) in [
        ("context", c),
        ("vocabulary", k),
        ("hidden", h),
        ("embedding", e),
    ] {
        if v == 0 {
            return Err(Error::invalid(format!("{name} dimension must be positive")));
        }
    }
    Ok(ToyCaptionerParams {
        embed: Array2::zeros((k, e)),
        ctx_proj: Array2::zeros((c, h)),
        recur: Array2::zeros((e + h, h)),
        out_proj: Array2::zeros((h, k)),
    })
}

/// Gaussian init with standard deviation `1/sqrt(fan_in)`, deterministic in
/// `seed`.
pub fn init_params(
    seed: u64,
    c: usize,
    k: usize,
    h: usize,
    e: usize,
) -> Result<ToyCaptionerParams> {
    let mut params = zero_params(c, k, h, e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Embedding rows are looked up, not multiplied, so their fan-in is 1.
    let fan_ins = [1, c, e + h, h];
    for (t, fan_in) in params.tensors_mut().into_iter().zip(fan_ins) {
        let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
        t.iter_mut().for_each(|x| *x = normal.sample(&mut rng));
    }
    Ok(params)
}

fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut p = logits.mapv(|x| (x - max).exp());
    let z = p.sum();
    p /= z;
    p
}

fn check_context(params: &ToyCaptionerParams, context: &[f64]) -> Result<()> {
    if context.len() != params.context_dim() {
        return Err(Error::invalid(format!(
            "context has {} values, model expects {}",
            context.len(),
            params.context_dim()
        )));
    }
    Ok(())
}

fn initial_state(params: &ToyCaptionerParams, context: &[f64]) -> Array1<f64> {
    ArrayView1::from(context)
        .dot(&params.ctx_proj)
        .mapv(f64::tanh)
}

fn step(
    params: &ToyCaptionerParams,
    h: &Array1<f64>,
    token: TokenId,
) -> (Array1<f64>, Array1<f64>) {
    let e = params.embed_dim();
    let input = concat(params.embed.row(token as usize), h.view(), e);
    let h_next = input.dot(&params.recur).mapv(f64::tanh);
    let probs = softmax(h_next.dot(&params.out_proj).view());
    (h_next, probs)
}

fn concat(a: ArrayView1<f64>, b: ArrayView1<f64>, split: usize) -> Array1<f64> {
    let mut u = Array1::zeros(a.len() + b.len());
    u.slice_mut(s![..split]).assign(&a);
    u.slice_mut(s![split..]).assign(&b);
    u
}

/// Next-token distribution after `prefix`, which must start with BOS.
pub fn forward(
    params: &ToyCaptionerParams,
    context: &[f64],
    prefix: &[TokenId],
) -> Result<Array1<f64>> {
    check_context(params, context)?;
    if prefix.first() != Some(&BOS) {
        return Err(Error::invalid("prefix must begin with BOS"));
    }
    let k = params.vocab_size();
    if let Some(&bad) = prefix.iter().find(|&&t| t as usize >= k) {
        return Err(Error::invalid(format!(
            "token id {bad} exceeds vocabulary size {k}"
        )));
    }
    let mut h = initial_state(params, context);
    let mut probs = Array1::zeros(k);
    for &tok in prefix {
        let (hn, p) = step(params, &h, tok);
        h = hn;
        probs = p;
    }
    Ok(probs)
}

/// Activations of one teacher-forced sequence, kept for backprop.
struct Trace {
    /// h_0 ..= h_{L-1}
    hidden: Vec<Array1<f64>>,
    /// Row t+1 holds the distribution predicting token t+1.
    probs: Array2<f64>,
}

fn run_sequence(params: &ToyCaptionerParams, context: &[f64], tokens: &[TokenId]) -> Trace {
    let mut hidden = Vec::with_capacity(tokens.len());
    let mut probs = Array2::zeros((tokens.len(), params.vocab_size()));
    let mut h = initial_state(params, context);
    hidden.push(h.clone());
    for (t, &tok) in tokens[..tokens.len() - 1].iter().enumerate() {
        let (hn, p) = step(params, &h, tok);
        probs.row_mut(t + 1).assign(&p);
        h = hn;
        hidden.push(h.clone());
    }
    Trace { hidden, probs }
}

/// Accumulates parameter gradients for one sequence given the gradient of
/// the loss with respect to its output scores (rows aligned with tokens).
fn backprop(
    params: &ToyCaptionerParams,
    context: &[f64],
    tokens: &[TokenId],
    trace: &Trace,
    dlogits: ndarray::ArrayView2<f64>,
    grads: &mut ToyCaptionerParams,
) {
    let e = params.embed_dim();
    let mut dh = Array1::<f64>::zeros(params.hidden_dim());
    for t in (0..tokens.len() - 1).rev() {
        let h_next = &trace.hidden[t + 1];
        let dl = dlogits.row(t + 1);
        grads.out_proj.scaled_add(1.0, &outer(h_next.view(), dl));
        dh += &params.out_proj.dot(&dl);
        let da = &dh * &h_next.mapv(|v| 1.0 - v * v);
        let input = concat(
            params.embed.row(tokens[t] as usize),
            trace.hidden[t].view(),
            e,
        );
        grads.recur.scaled_add(1.0, &outer(input.view(), da.view()));
        let du = params.recur.dot(&da);
        let mut erow = grads.embed.row_mut(tokens[t] as usize);
        erow += &du.slice(s![..e]);
        dh = du.slice(s![e..]).to_owned();
    }
    let h0 = &trace.hidden[0];
    let da0 = &dh * &h0.mapv(|v| 1.0 - v * v);
    grads
        .ctx_proj
        .scaled_add(1.0, &outer(ArrayView1::from(context), da0.view()));
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}

/// Teacher-forced loss and parameter gradient over a set of
/// `(context, tokens)` examples treated as one batch.
pub fn loss_and_grad(
    params: &ToyCaptionerParams,
    examples: &[(&[f64], &[TokenId])],
    loss: &LossConfig,
) -> Result<(f64, ToyCaptionerParams)> {
    let (value, probs, batch, traces) = batch_forward(params, examples, loss)?;
    let dlogits = position_loss_grad(&probs, &batch, loss)?;
    let mut grads = params.zeros_like();
    for (i, ((ctx, tokens), trace)) in examples.iter().zip(&traces).enumerate() {
        backprop(
            params,
            ctx,
            tokens,
            trace,
            dlogits.slice(s![i, .., ..]),
            &mut grads,
        );
    }
    Ok((value, grads))
}

/// Teacher-forced batch loss.
pub fn batch_loss(
    params: &ToyCaptionerParams,
    examples: &[(&[f64], &[TokenId])],
    loss: &LossConfig,
) -> Result<f64> {
    batch_forward(params, examples, loss).map(|r| r.0)
}

type BatchForward = (f64, Array3<f64>, crate::batch::TokenBatch, Vec<Trace>);

fn batch_forward(
    params: &ToyCaptionerParams,
    examples: &[(&[f64], &[TokenId])],
    loss: &LossConfig,
) -> Result<BatchForward> {
    let k = params.vocab_size();
    for (ctx, tokens) in examples {
        check_context(params, ctx)?;
        if tokens.first() != Some(&BOS) {
            return Err(Error::invalid("training sequence must begin with BOS"));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= k) {
            return Err(Error::invalid(format!(
                "token id {bad} exceeds vocabulary size {k}"
            )));
        }
    }
    let seqs: Vec<&[TokenId]> = examples.iter().map(|e| e.1).collect();
    let batch = pad_batch(&seqs)?;
    let mut probs = Array3::<f64>::zeros((batch.rows(), batch.cols(), k));
    let mut traces = Vec::with_capacity(examples.len());
    for (i, (ctx, tokens)) in examples.iter().enumerate() {
        let trace = run_sequence(params, ctx, tokens);
        probs
            .slice_mut(s![i, ..tokens.len(), ..])
            .assign(&trace.probs);
        traces.push(trace);
    }
    let value = position_loss(&probs, &batch, loss)?;
    Ok((value, probs, batch, traces))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossConfig,
    /// Global L2 norm above which the gradient is rescaled.
    pub grad_clip: f64,
    pub hidden_dim: usize,
    pub embed_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 50,
            batch_size: 16,
            seed: 0,
            loss: LossConfig::default(),
            grad_clip: 5.0,
            hidden_dim: 32,
            embed_dim: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(
                "learning rate must be finite and non-negative",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return Err(Error::invalid("gradient clip threshold must be positive"));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ToyCaptionerParams,
    /// Full training-set loss before any update.
    pub initial_loss: f64,
    /// Full training-set loss after each epoch.
    pub history: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.history.last().copied().unwrap_or(self.initial_loss)
    }
}

/// Collects `(context, tokens)` pairs for the train split.
pub fn training_examples<'a>(
    manifest: &'a CorpusManifest,
    contexts: &'a ContextMap,
) -> Result<Vec<(&'a [f64], &'a [TokenId])>> {
    manifest
        .records_in(Split::Train)
        .map(|r| {
            contexts
                .get(&r.image_id)
                .map(|c| (c.as_slice(), r.tokens.as_slice()))
                .ok_or_else(|| {
                    Error::config(format!("no context vector for image_id {:?}", r.image_id))
                })
        })
        .collect()
}

/// Mini-batch gradient descent on the position loss over the train split.
pub fn train(
    manifest: &CorpusManifest,
    contexts: &ContextMap,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let examples = training_examples(manifest, contexts)?;
    if examples.is_empty() {
        return Err(Error::invalid("manifest has no train-split records"));
    }
    let c = examples[0].0.len();
    let params = init_params(
        config.seed,
        c,
        manifest.vocabulary.len(),
        config.hidden_dim,
        config.embed_dim,
    )?;
    train_from(params, &examples, config)
}

/// Training loop starting from given parameters.
pub fn train_from(
    mut params: ToyCaptionerParams,
    examples: &[(&[f64], &[TokenId])],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    // Shuffling draws from its own stream so init and order are independent.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let initial_loss = batch_loss(&params, examples, &config.loss)?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&[f64], &[TokenId])> = chunk.iter().map(|&i| examples[i]).collect();
            let (_, mut grads) = loss_and_grad(&params, &batch, &config.loss)?;
            let norm = grads
                .tensors()
                .iter()
                .map(|t| t.iter().map(|x| x * x).sum::<f64>())
                .sum::<f64>()
                .sqrt();
            let scale = if norm > config.grad_clip {
                config.grad_clip / norm
            } else {
                1.0
            };
            for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors_mut()) {
                g.mapv_inplace(|x| x * scale);
                p.scaled_add(-config.learning_rate, g);
            }
        }
        history.push(batch_loss(&params, examples, &config.loss)?);
    }
    if !params.is_finite() {
        return Err(Error::invalid("training diverged to non-finite parameters"));
    }
    Ok(TrainOutcome {
        params,
        initial_loss,
        history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodeMode {
    Greedy,
    Sample { temperature: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    /// Maximum number of tokens emitted after BOS.
    pub max_len: usize,
    pub mode: DecodeMode,
    pub seed: u64,
}

impl DecodeConfig {
    pub fn greedy(max_len: usize) -> Self {
        Self {
            max_len,
            mode: DecodeMode::Greedy,
            seed: 0,
        }
    }

    pub fn sample(max_len: usize, temperature: f64, seed: u64) -> Self {
        Self {
            max_len,
            mode: DecodeMode::Sample { temperature },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 {
            return Err(Error::invalid("max length must be >= 1"));
        }
        if let DecodeMode::Sample { temperature } = self.mode {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(Error::invalid("temperature must be positive"));
            }
        }
        Ok(())
    }
}

fn argmax(p: &Array1<f64>) -> usize {
    // First maximum wins on ties.
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn sample_index(p: &Array1<f64>, temperature: f64, rng: &mut ChaCha8Rng) -> usize {
    let weights: Vec<f64> = if temperature == 1.0 {
        p.to_vec()
    } else {
        let logw: Vec<f64> = p
            .iter()
            .map(|&x| x.max(1e-300).ln() / temperature)
            .collect();
        let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        logw.iter().map(|&l| (l - m).exp()).collect()
    };
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Decodes a caption: `[BOS, ...]`, stopping after EOS or `max_len` tokens.
pub fn generate(
    params: &ToyCaptionerParams,
    context: &[f64],
    decode: &DecodeConfig,
) -> Result<Vec<TokenId>> {
    check_context(params, context)?;
    decode.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(decode.seed);
    let mut out = vec![BOS];
    let mut h = initial_state(params, context);
    let mut last = BOS;
    while out.len() <= decode.max_len {
        let (hn, p) = step(params, &h, last);
        h = hn;
        let next = match decode.mode {
            DecodeMode::Greedy => argmax(&p),
            DecodeMode::Sample { temperature } => sample_index(&p, temperature, &mut rng),
        } as TokenId;
        out.push(next);
        if next == EOS {
            break;
        }
        last = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::KernelSpec;

    fn tiny() -> ToyCaptionerParams {
        init_params(7, 3, 9, 5, 4).unwrap()
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(
            init_params(1, 4, 6, 3, 2).unwrap(),
            init_params(1, 4, 6, 3, 2).unwrap()
        );
        assert_ne!(
            init_params(1, 4, 6, 3, 2).unwrap(),
            init_params(2, 4, 6, 3, 2).unwrap()
        );
        assert!(init_params(1, 0, 6, 3, 2).is_err());
        assert!(init_params(1, 4, 6, 0, 2).is_err());
    }

    #[test]
    fn forward_is_a_distribution() {
        let p = tiny();
        let probs = forward(&p, &[0.1, -0.3, 0.9], &[BOS, 5, 6]).unwrap();
        assert!(probs.iter().all(|&x| x >= 0.0));
        assert!((probs.sum() - 1.0).abs() < 1e-9);
        assert_eq!(probs, forward(&p, &[0.1, -0.3, 0.9], &[BOS, 5, 6]).unwrap());
    }

    #[test]
    fn forward_depends_on_context() {
        let p = tiny();
        let a = forward(&p, &[1.0, 0.0, 0.0], &[BOS]).unwrap();
        let b = forward(&p, &[0.0, 1.0, 0.0], &[BOS]).unwrap();
        assert!(a.iter().zip(b.iter()).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn forward_requires_bos() {
        assert!(forward(&tiny(), &[0.0; 3], &[5, 6]).is_err());
        assert!(forward(&tiny(), &[0.0; 3], &[]).is_err());
        assert!(forward(&tiny(), &[0.0; 2], &[BOS]).is_err());
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let params = tiny();
        let ctx_a = [0.3, -0.2, 0.5];
        let ctx_b = [-0.4, 0.1, 0.0];
        let seq_a = [BOS, 4, 7, 5, EOS];
        let seq_b = [BOS, 8, EOS];
        let ex: Vec<(&[f64], &[TokenId])> = vec![(&ctx_a, &seq_a), (&ctx_b, &seq_b)];
        let loss = LossConfig::new(KernelSpec::sigmoid(2.0).unwrap());
        let (_, grads) = loss_and_grad(&params, &ex, &loss).unwrap();
        let analytic = grads.flatten();
        let flat = params.flatten();
        let h = 1e-6;
        let mut probe = params.clone();
        for i in (0..flat.len()).step_by(7) {
            let mut f = flat.clone();
            f[i] += h;
            probe.unflatten_into(&f);
            let up = batch_loss(&probe, &ex, &loss).unwrap();
            f[i] -= 2.0 * h;
            probe.unflatten_into(&f);
            let down = batch_loss(&probe, &ex, &loss).unwrap();
            let numeric = (up - down) / (2.0 * h);
            let tol = 1e-6 + 1e-4 * numeric.abs().max(analytic[i].abs());
            assert!(
                (numeric - analytic[i]).abs() < tol,
                "param {i}: {numeric} vs {}",
                analytic[i]
            );
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_f32_exact() {
        let p = tiny();
        let bytes = p.to_checkpoint_bytes();
        assert!(bytes.starts_with(b"toycap 3 9 5 4\n"));
        let back = ToyCaptionerParams::from_checkpoint_bytes(&bytes).unwrap();
        assert_eq!(back.to_checkpoint_bytes(), bytes);
        assert!(ToyCaptionerParams::from_checkpoint_bytes(b"toycap 3 9\n").is_err());
        assert!(ToyCaptionerParams::from_checkpoint_bytes(&bytes[..bytes.len() - 4]).is_err());
    }

    #[test]
    fn generate_respects_length_cap() {
        let p = tiny();
        let seq = generate(&p, &[0.0; 3], &DecodeConfig::greedy(1)).unwrap();
        assert_eq!(seq[0], BOS);
        assert!(seq.len() <= 2);
        assert!(generate(&p, &[0.0; 3], &DecodeConfig::greedy(0)).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let p = tiny();
        let cfg = DecodeConfig::sample(12, 1.0, 99);
        let a = generate(&p, &[0.2, 0.1, 0.0], &cfg).unwrap();
        assert_eq!(a, generate(&p, &[0.2, 0.1, 0.0], &cfg).unwrap());
        assert!(a.len() <= 13);
        assert!(*a.last().unwrap() == EOS || a.len() == 13);
    }
}
