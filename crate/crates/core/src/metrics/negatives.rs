//! Negative pairs for humour-classifier training: real captions moved to a
//! different image, plus text drawn from external line files.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::manifest::CorpusManifest;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSource {
    pub ratio: f64,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegativeSamplingSpec {
    pub cross_image_swap: f64,
    #[serde(default)]
    pub random_text: Option<FileSource>,
    #[serde(default)]
    pub external_captions: Option<FileSource>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NegativeStrategy {
    CrossImageSwap,
    RandomText,
    ExternalCaptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSample {
    pub image_id: String,
    pub caption: String,
    pub strategy: NegativeStrategy,
    /// Image the caption originally belonged to, for swaps.
    pub source_image_id: Option<String>,
}

impl NegativeSamplingSpec {
    /// Only cross-image swaps.
    pub fn swap_only(seed: u64) -> Self {
        Self {
            cross_image_swap: 1.0,
            random_text: None,
            external_captions: None,
            seed,
        }
    }

    /// Half swaps, a quarter each from the two text files.
    pub fn default_mix(random_text: PathBuf, external_captions: PathBuf, seed: u64) -> Self {
        Self {
            cross_image_swap: 0.5,
            random_text: Some(FileSource {
                ratio: 0.25,
                path: random_text,
            }),
            external_captions: Some(FileSource {
                ratio: 0.25,
                path: external_captions,
            }),
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    fn ratios(&self) -> [f64; 3] {
        [
            self.cross_image_swap,
            self.random_text.as_ref().map_or(0.0, |s| s.ratio),
            self.external_captions.as_ref().map_or(0.0, |s| s.ratio),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.ratios();
        if r.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::invalid(format!(
                "sampling ratios {r:?} must lie in [0, 1]"
            )));
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "sampling ratios sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut spec: Self =
            toml::from_str(text).map_err(|e| Error::config(format!("sampling spec: {e}")))?;
        for src in [&mut spec.random_text, &mut spec.external_captions]
            .into_iter()
            .flatten()
        {
            src.path = base_dir.join(&src.path);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

/// Splits `count` by `ratios` with largest-remainder rounding; ties go to the
/// earlier strategy.
fn allocate(count: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * count as f64).collect();
    let mut out = [0usize; 3];
    for i in 0..3 {
        out[i] = exact[i].floor() as usize;
    }
    let mut left = count - out.iter().sum::<usize>().min(count);
    let mut order: Vec<usize> = (0..3).filter(|&i| ratios[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

fn read_text_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Draws `count` negative pairs from the manifest and the spec's sources.
/// Output order: swaps, then random text, then external captions.
pub fn negative_samples(
    manifest: &CorpusManifest,
    spec: &NegativeSamplingSpec,
    count: usize,
) -> Result<Vec<NegativeSample>> {
    spec.validate()?;
    if count == 0 {
        return Ok(Vec::new());
    }
    let images = manifest.image_ids();
    if images.is_empty() {
        return Err(Error::invalid(
            "cannot sample negatives from an empty manifest",
        ));
    }
    let [n_swap, n_random, n_external] = allocate(count, spec.ratios());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(count);

    if n_swap > 0 {
        if images.len() < 2 {
            return Err(Error::invalid(
                "cross-image swap needs at least 2 distinct image ids",
            ));
        }
        let records = &manifest.records;
        for _ in 0..n_swap {
            let anchor = images[rng.gen_range(0..images.len())];
            let others = records.iter().filter(|r| r.image_id != anchor).count();
            let pick = rng.gen_range(0..others);
            let donor = records
                .iter()
                .filter(|r| r.image_id != anchor)
                .nth(pick)
                .expect("pick < others");
            out.push(NegativeSample {
                image_id: anchor.to_string(),
                caption: donor.caption.clone(),
                strategy: NegativeStrategy::CrossImageSwap,
                source_image_id: Some(donor.image_id.clone()),
            });
        }
    }

    let sources = [
        (
            n_random,
            spec.random_text.as_ref(),
            NegativeStrategy::RandomText,
        ),
        (
            n_external,
            spec.external_captions.as_ref(),
            NegativeStrategy::ExternalCaptions,
        ),
    ];
    for (n, source, strategy) in sources {
        if n == 0 {
            continue;
        }
        let source = source.expect("positive allocation implies a source");
        let lines = read_text_lines(&source.path)?;
        if lines.is_empty() {
            return Err(Error::invalid(format!(
                "{} has no usable lines",
                source.path.display()
            )));
        }
        for _ in 0..n {
            let image = images[rng.gen_range(0..images.len())];
            let line = &lines[rng.gen_range(0..lines.len())];
            out.push(NegativeSample {
                image_id: image.to_string(),
                caption: line.clone(),
                strategy,
                source_image_id: None,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::Split;

    fn two_images() -> CorpusManifest {
        CorpusManifest::from_rows(
            [
                ("a", "cat on a mat", 1.0, Split::Train),
                ("a", "the cat sat", 2.0, Split::Train),
                ("b", "dog in fog", 1.0, Split::Train),
            ],
            "en",
        )
        .unwrap()
    }

    #[test]
    fn swaps_are_derangements() {
        let neg = negative_samples(&two_images(), &NegativeSamplingSpec::swap_only(3), 50).unwrap();
        assert_eq!(neg.len(), 50);
        for n in &neg {
            assert_ne!(n.source_image_id.as_deref(), Some(n.image_id.as_str()));
        }
    }

    #[test]
    fn zero_count_and_determinism() {
        let m = two_images();
        let spec = NegativeSamplingSpec::swap_only(11);
        assert!(negative_samples(&m, &spec, 0).unwrap().is_empty());
        assert_eq!(
            negative_samples(&m, &spec, 20).unwrap(),
            negative_samples(&m, &spec, 20).unwrap()
        );
        assert_ne!(
            negative_samples(&m, &spec, 20).unwrap(),
            negative_samples(&m, &spec.with_seed(12), 20).unwrap()
        );
    }

    #[test]
    fn single_image_swap_rejected() {
        let m = CorpusManifest::from_rows([("a", "x y", 1.0, Split::Train)], "en").unwrap();
        assert!(matches!(
            negative_samples(&m, &NegativeSamplingSpec::swap_only(0), 3),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn mixed_sources_follow_ratios() {
        let dir = tempfile::tempdir().unwrap();
        let rt = dir.path().join("random.txt");
        let ext = dir.path().join("coco.txt");
        fs::write(&rt, "lorem ipsum\n\nquantum banana\n").unwrap();
        fs::write(&ext, "a man riding a horse\n").unwrap();
        let spec = NegativeSamplingSpec::default_mix(rt, ext, 5);
        let neg = negative_samples(&two_images(), &spec, 8).unwrap();
        let count = |s| neg.iter().filter(|n| n.strategy == s).count();
        assert_eq!(count(NegativeStrategy::CrossImageSwap), 4);
        assert_eq!(count(NegativeStrategy::RandomText), 2);
        assert_eq!(count(NegativeStrategy::ExternalCaptions), 2);
        assert!(neg
            .iter()
            .filter(|n| n.strategy == NegativeStrategy::ExternalCaptions)
            .all(|n| n.caption == "a man riding a horse"));
    }

    #[test]
    fn unreadable_source_is_io_error() {
        let spec = NegativeSamplingSpec {
            cross_image_swap: 0.0,
            random_text: Some(FileSource {
                ratio: 1.0,
                path: "/no/such/file".into(),
            }),
            external_captions: None,
            seed: 0,
        };
        assert!(matches!(
            negative_samples(&two_images(), &spec, 2),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn ratio_validation() {
        let mut spec = NegativeSamplingSpec::swap_only(0);
        spec.cross_image_swap = 0.7;
        assert!(spec.validate().is_err());
        assert!(NegativeSamplingSpec::from_toml(
            "cross_image_swap = 1.0\nseed = 4\n",
            Path::new(".")
        )
        .is_ok());
    }

    #[test]
    fn allocation_sums_to_count() {
        for count in 0..40 {
            for r in [
                [0.5, 0.25, 0.25],
                [1.0, 0.0, 0.0],
                [0.2, 0.3, 0.5],
                [0.0, 0.0, 1.0],
            ] {
                let a = allocate(count, r);
                assert_eq!(a.iter().sum::<usize>(), count);
                for i in 0..3 {
                    if r[i] == 0.0 {
                        assert_eq!(a[i], 0);
                    }
                }
            }
        }
    }
}
