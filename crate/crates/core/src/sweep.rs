//! Kernel sweeps: train the caption generator under several weight kernels
//! and seeds, then measure the semantic diversity of sampled captions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::loss::{KernelSpec, LossConfig};
use crate::manifest::CorpusManifest;
use crate::metrics::diversity::diversity_score;
use crate::metrics::embedding::{EmbeddingProvider, HashEmbedder};
use crate::toycap::{generate, train, ContextMap, DecodeConfig, ToyCaptionerParams, TrainConfig};

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub kernels: Vec<KernelSpec>,
    pub seeds: Vec<u64>,
    /// Template for every run; `loss.kernel` and `seed` are overridden.
    pub train: TrainConfig,
    pub samples_per_context: usize,
    pub temperature: f64,
    pub max_len: usize,
    pub embed_dim: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kernels: [2.0, 4.0, 6.0, 8.0]
                .iter()
                .map(|&a| KernelSpec::sigmoid(a).expect("positive alpha"))
                .collect(),
            seeds: vec![0, 1, 2],
            train: TrainConfig {
                learning_rate: 0.5,
                epochs: 120,
                batch_size: 8,
                ..TrainConfig::default()
            },
            samples_per_context: 16,
            temperature: 1.0,
            max_len: 12,
            embed_dim: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub kernel: String,
    pub per_seed: Vec<f64>,
    pub final_loss: Vec<f64>,
    pub mean_diversity: f64,
}

/// Sample seed shared by every model for the same (training seed, context,
/// draw), so kernels are compared on common random numbers.
fn draw_seed(train_seed: u64, context: usize, draw: usize) -> u64 {
    train_seed
        .wrapping_mul(1_000_003)
        .wrapping_add(context as u64 * 1009)
        .wrapping_add(draw as u64)
}

/// Mean over contexts of the diversity among `samples` captions sampled for
/// that context. Context order follows `image_ids`.
#[allow(clippy::too_many_arguments)]
pub fn sampled_diversity(
    params: &ToyCaptionerParams,
    manifest: &CorpusManifest,
    contexts: &ContextMap,
    image_ids: &[&str],
    samples: usize,
    temperature: f64,
    max_len: usize,
    train_seed: u64,
    embedder: &dyn EmbeddingProvider,
) -> Result<f64> {
    if samples < 2 {
        return Err(Error::invalid(
            "diversity needs at least 2 samples per context",
        ));
    }
    if image_ids.is_empty() {
        return Err(Error::invalid("no contexts to sample from"));
    }
    let mut total = 0.0;
    for (c, id) in image_ids.iter().enumerate() {
        let ctx = contexts
            .get(*id)
            .ok_or_else(|| Error::config(format!("no context vector for image_id {id:?}")))?;
        let mut embs = Vec::with_capacity(samples);
        for s in 0..samples {
            let decode = DecodeConfig::sample(max_len, temperature, draw_seed(train_seed, c, s));
            let tokens = generate(params, ctx, &decode)?;
            embs.push(embedder.text_embed(&manifest.vocabulary.detokenize(&tokens))?);
        }
        total += diversity_score(&embs)?;
    }
    Ok(total / image_ids.len() as f64)
}

pub fn kernel_sweep(
    manifest: &CorpusManifest,
    contexts: &ContextMap,
    config: &SweepConfig,
) -> Result<Vec<SweepRow>> {
    let embedder = HashEmbedder::new(config.embed_dim, 0)?;
    let image_ids = manifest.image_ids();
    let mut rows = Vec::with_capacity(config.kernels.len());
    for kernel in &config.kernels {
        let mut per_seed = Vec::with_capacity(config.seeds.len());
        let mut final_loss = Vec::with_capacity(config.seeds.len());
        for &seed in &config.seeds {
            let cfg = TrainConfig {
                seed,
                loss: LossConfig {
                    kernel: *kernel,
                    ..config.train.loss
                },
                ..config.train.clone()
            };
            let out = train(manifest, contexts, &cfg)?;
            final_loss.push(out.final_loss());
            per_seed.push(sampled_diversity(
                &out.params,
                manifest,
                contexts,
                &image_ids,
                config.samples_per_context,
                config.temperature,
                config.max_len,
                seed,
                &embedder,
            )?);
        }
        let mean_diversity = per_seed.iter().sum::<f64>() / per_seed.len().max(1) as f64;
        rows.push(SweepRow {
            kernel: kernel.to_string(),
            per_seed,
            final_loss,
            mean_diversity,
        });
    }
    Ok(rows)
}
