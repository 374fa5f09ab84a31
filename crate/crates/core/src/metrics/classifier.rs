//! Humour classifier: logistic regression over the concatenation of an
//! image vector and a caption vector, trained with binary cross-entropy
//! against constructed negatives.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::embedding::EmbeddingProvider;
use super::negatives::{negative_samples, NegativeSamplingSpec};
use crate::error::{Error, Result};
use crate::floatrows::FloatRows;
use crate::manifest::{CaptionRecord, CorpusManifest};

#[derive(Debug, Clone, PartialEq)]
pub struct HumourClassifierParams {
    /// Image part first, then text part.
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl HumourClassifierParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn linear_score(&self, features: &[f64]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(features)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }

    /// One float row: weights followed by the bias.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut row = self.weights.clone();
        row.push(self.bias);
        FloatRows::from_rows(&[row])?.write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let rows = FloatRows::read(path)?;
        if rows.count() != 1 || rows.dim() < 1 {
            return Err(Error::Integrity(
                "classifier file must hold exactly one row".into(),
            ));
        }
        let mut w = rows.row_f64(0);
        let bias = w.pop().unwrap();
        Ok(Self { weights: w, bias })
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledPair {
    pub image_id: String,
    pub caption: String,
    pub humorous: bool,
}

fn features(provider: &dyn EmbeddingProvider, image_id: &str, caption: &str) -> Result<Vec<f64>> {
    let mut f = provider.image_embed(image_id).map_err(lookup_to_config)?;
    f.extend(provider.text_embed(caption).map_err(lookup_to_config)?);
    if f.len() != provider.image_dim() + provider.text_dim() {
        return Err(Error::config(format!(
            "provider returned {} features, expected {}",
            f.len(),
            provider.image_dim() + provider.text_dim()
        )));
    }
    Ok(f)
}

fn lookup_to_config(e: Error) -> Error {
    match e {
        Error::Lookup(key) => Error::config(format!("embedding provider has no entry for {key}")),
        other => other,
    }
}

/// Humour confidence in [0, 1] for an image-caption pair.
pub fn humour_score(
    params: &HumourClassifierParams,
    image_id: &str,
    caption: &str,
    provider: &dyn EmbeddingProvider,
) -> Result<f64> {
    let f = features(provider, image_id, caption)?;
    if f.len() != params.weights.len() {
        return Err(Error::config(format!(
            "classifier expects {} features, provider gives {}",
            params.weights.len(),
            f.len()
        )));
    }
    Ok(logistic(params.linear_score(&f)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Share of images held out entirely (out-of-domain evaluation).
    pub out_domain_fraction: f64,
    /// Share of each remaining image's captions held out (in-domain
    /// evaluation).
    pub in_domain_fraction: f64,
    pub l2: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 200,
            seed: 0,
            out_domain_fraction: 0.2,
            in_domain_fraction: 0.2,
            l2: 0.0,
        }
    }
}

impl ClassifierConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(
                "learning rate must be finite and non-negative",
            ));
        }
        for (name, f) in [
            ("out-domain", self.out_domain_fraction),
            ("in-domain", self.in_domain_fraction),
        ] {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::invalid(format!(
                    "{name} fraction {f} must lie in [0, 1)"
                )));
            }
        }
        if self.l2.is_nan() || self.l2 < 0.0 {
            return Err(Error::invalid("l2 penalty must be non-negative"));
        }
        Ok(())
    }
}

/// Train / evaluation partitions. Out-of-domain images never appear in
/// `train`.
#[derive(Debug, Clone, Default)]
pub struct ClassifierSplits {
    pub train: Vec<LabeledPair>,
    pub in_domain: Vec<LabeledPair>,
    pub out_domain: Vec<LabeledPair>,
    pub out_domain_images: BTreeSet<String>,
}

impl ClassifierSplits {
    /// Image ids of held-out images that nevertheless occur in training.
    pub fn leaked_images(&self) -> Vec<&str> {
        self.train
            .iter()
            .filter(|p| self.out_domain_images.contains(&p.image_id))
            .map(|p| p.image_id.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

fn positives(records: &[&CaptionRecord]) -> Vec<LabeledPair> {
    records
        .iter()
        .map(|r| LabeledPair {
            image_id: r.image_id.clone(),
            caption: r.caption.clone(),
            humorous: true,
        })
        .collect()
}

fn with_negatives(
    manifest: &CorpusManifest,
    records: &[&CaptionRecord],
    spec: &NegativeSamplingSpec,
) -> Result<Vec<LabeledPair>> {
    let mut pairs = positives(records);
    if records.is_empty() {
        return Ok(pairs);
    }
    let part = manifest.with_records(records.iter().map(|&r| r.clone()).collect());
    let negatives = negative_samples(&part, spec, records.len())?;
    pairs.extend(negatives.into_iter().map(|n| LabeledPair {
        image_id: n.image_id,
        caption: n.caption,
        humorous: false,
    }));
    Ok(pairs)
}

/// Partitions images and captions, then draws one negative per positive in
/// each partition from that partition's own images.
pub fn split_pairs(
    manifest: &CorpusManifest,
    spec: &NegativeSamplingSpec,
    config: &ClassifierConfig,
) -> Result<ClassifierSplits> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut images: Vec<&str> = manifest.image_ids();
    images.shuffle(&mut rng);
    let n_out = (images.len() as f64 * config.out_domain_fraction).round() as usize;
    let out_images: BTreeSet<String> = images[..n_out].iter().map(|s| s.to_string()).collect();

    let mut train_recs = Vec::new();
    let mut in_recs = Vec::new();
    let mut out_recs = Vec::new();
    for image in &images[n_out..] {
        let mut recs: Vec<&CaptionRecord> = manifest
            .records
            .iter()
            .filter(|r| r.image_id == *image)
            .collect();
        recs.shuffle(&mut rng);
        let hold =
            ((recs.len() as f64 * config.in_domain_fraction).round() as usize).min(recs.len() - 1);
        in_recs.extend_from_slice(&recs[..hold]);
        train_recs.extend_from_slice(&recs[hold..]);
    }
    out_recs.extend(
        manifest
            .records
            .iter()
            .filter(|r| out_images.contains(&r.image_id)),
    );

    let train = with_negatives(manifest, &train_recs, spec)?;
    let seen: HashSet<LabeledPair> = train.iter().cloned().collect();
    // In-domain negatives may use any seen image but must be unseen pairs.
    let seen_recs: Vec<&CaptionRecord> = train_recs.iter().chain(&in_recs).copied().collect();
    let mut in_domain = positives(&in_recs);
    if !in_recs.is_empty() {
        let part = manifest.with_records(seen_recs.iter().map(|&r| r.clone()).collect());
        let neg = negative_samples(
            &part,
            &spec.with_seed(spec.seed.wrapping_add(1)),
            in_recs.len(),
        )?;
        in_domain.extend(
            neg.into_iter()
                .map(|n| LabeledPair {
                    image_id: n.image_id,
                    caption: n.caption,
                    humorous: false,
                })
                .filter(|p| !seen.contains(p)),
        );
    }
    let out_domain = with_negatives(
        manifest,
        &out_recs,
        &spec.with_seed(spec.seed.wrapping_add(2)),
    )?;
    Ok(ClassifierSplits {
        train,
        in_domain,
        out_domain,
        out_domain_images: out_images,
    })
}

/// Full-batch gradient descent on mean binary cross-entropy, from zero
/// weights. Returns the parameters and the loss before each epoch plus the
/// final loss.
pub fn fit_logistic(
    pairs: &[LabeledPair],
    provider: &dyn EmbeddingProvider,
    config: &ClassifierConfig,
) -> Result<(HumourClassifierParams, Vec<f64>)> {
    config.validate()?;
    let dim = provider.image_dim() + provider.text_dim();
    let data: Vec<(Vec<f64>, f64)> = pairs
        .iter()
        .map(|p| {
            Ok((
                features(provider, &p.image_id, &p.caption)?,
                if p.humorous { 1.0 } else { 0.0 },
            ))
        })
        .collect::<Result<_>>()?;
    let mut params = HumourClassifierParams::zeros(dim);
    let mut history = Vec::with_capacity(config.epochs + 1);
    if data.is_empty() {
        return Ok((params, history));
    }
    let n = data.len() as f64;
    let bce = |params: &HumourClassifierParams| -> f64 {
        let mut total = 0.0;
        for (x, y) in &data {
            let z = params.linear_score(x);
            // log(1 + e^z) - y z, computed stably.
            total += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
        }
        total / n + 0.5 * config.l2 * params.weights.iter().map(|w| w * w).sum::<f64>()
    };
    for _ in 0..config.epochs {
        history.push(bce(&params));
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (x, y) in &data {
            let r = logistic(params.linear_score(x)) - y;
            for (g, xi) in gw.iter_mut().zip(x) {
                *g += r * xi;
            }
            gb += r;
        }
        for (w, g) in params.weights.iter_mut().zip(&gw) {
            *w -= config.learning_rate * (g / n + config.l2 * *w);
        }
        params.bias -= config.learning_rate * gb / n;
    }
    history.push(bce(&params));
    Ok((params, history))
}

/// Share of pairs whose humour score falls on the correct side of 0.5.
pub fn accuracy(
    params: &HumourClassifierParams,
    pairs: &[LabeledPair],
    provider: &dyn EmbeddingProvider,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("accuracy of an empty evaluation set"));
    }
    let mut correct = 0usize;
    for p in pairs {
        let s = humour_score(params, &p.image_id, &p.caption, provider)?;
        if (s >= 0.5) == p.humorous {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone)]
pub struct ClassifierOutcome {
    pub params: HumourClassifierParams,
    pub in_domain_accuracy: f64,
    pub out_domain_accuracy: f64,
    pub loss_history: Vec<f64>,
    pub splits: ClassifierSplits,
}

/// Splits, samples negatives, fits, and evaluates on both held-out sets.
pub fn train_humour_classifier(
    manifest: &CorpusManifest,
    spec: &NegativeSamplingSpec,
    provider: &dyn EmbeddingProvider,
    config: &ClassifierConfig,
) -> Result<ClassifierOutcome> {
    let splits = split_pairs(manifest, spec, config)?;
    train_on_splits(splits, provider, config)
}

/// Fits on `splits.train` and evaluates on the held-out partitions.
pub fn train_on_splits(
    splits: ClassifierSplits,
    provider: &dyn EmbeddingProvider,
    config: &ClassifierConfig,
) -> Result<ClassifierOutcome> {
    if let Some(leak) = splits.leaked_images().first() {
        return Err(Error::Integrity(format!(
            "held-out image {leak:?} occurs in training pairs"
        )));
    }
    let (params, loss_history) = fit_logistic(&splits.train, provider, config)?;
    let in_domain_accuracy = accuracy(&params, &splits.in_domain, provider)?;
    let out_domain_accuracy = accuracy(&params, &splits.out_domain, provider)?;
    Ok(ClassifierOutcome {
        params,
        in_domain_accuracy,
        out_domain_accuracy,
        loss_history,
        splits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::Split;
    use crate::metrics::embedding::HashEmbedder;

    #[test]
    fn zero_params_score_half() {
        let p = HumourClassifierParams::zeros(8);
        let h = HashEmbedder::new(4, 0).unwrap();
        assert_eq!(humour_score(&p, "img", "anything", &h).unwrap(), 0.5);
    }

    #[test]
    fn logistic_is_stable_and_monotone() {
        assert_eq!(logistic(0.0), 0.5);
        assert!(logistic(-800.0) >= 0.0 && logistic(800.0) <= 1.0);
        let xs = [-30.0, -2.0, -0.1, 0.0, 0.1, 2.0, 30.0];
        assert!(xs.windows(2).all(|w| logistic(w[0]) < logistic(w[1])));
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let p = HumourClassifierParams::zeros(3);
        let h = HashEmbedder::new(4, 0).unwrap();
        assert!(matches!(
            humour_score(&p, "i", "c", &h),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn params_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = HumourClassifierParams {
            weights: vec![0.5, -1.25, 2.0],
            bias: 0.75,
        };
        p.save(dir.path().join("clf.f32")).unwrap();
        assert_eq!(
            HumourClassifierParams::load(dir.path().join("clf.f32")).unwrap(),
            p
        );
    }

    #[test]
    fn zero_epochs_leaves_initialization() {
        let m = CorpusManifest::from_rows(
            [
                ("a", "x y", 1.0, Split::Train),
                ("b", "z w", 1.0, Split::Train),
                ("c", "q", 1.0, Split::Train),
            ],
            "en",
        )
        .unwrap();
        let h = HashEmbedder::new(4, 0).unwrap();
        let cfg = ClassifierConfig {
            epochs: 0,
            out_domain_fraction: 0.0,
            ..Default::default()
        };
        let splits = split_pairs(&m, &NegativeSamplingSpec::swap_only(1), &cfg).unwrap();
        let (params, hist) = fit_logistic(&splits.train, &h, &cfg).unwrap();
        assert_eq!(params, HumourClassifierParams::zeros(8));
        assert_eq!(hist.len(), 1);
    }

    #[test]
    fn lookup_miss_names_key() {
        let t = crate::metrics::TableEmbedder::from_maps(&Default::default(), &Default::default())
            .unwrap();
        let p = HumourClassifierParams::zeros(0);
        match humour_score(&p, "img42", "c", &t) {
            Err(Error::Config(m)) => assert!(m.contains("img42")),
            other => panic!("{other:?}"),
        }
    }
}
