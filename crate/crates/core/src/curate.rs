//! Ordered, auditable filter chain over manifests.
//!
//! A filter spec is a TOML file with one `[[stage]]` table per stage:
//!
//! ```toml
//! [[stage]]
//! kind = "wordlist"
//! path = "profane.txt"
//!
//! [[stage]]
//! kind = "length"
//! min = 2
//! max = 50
//!
//! [[stage]]
//! kind = "predicate"
//! scorer = "benign"
//! threshold = 0.5
//! image_level = false
//!
//! [[stage]]
//! kind = "dedup"
//! ```

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{CaptionRecord, CorpusManifest};
use crate::metrics::scorers::{read_wordlist, ScorerRegistry};
use crate::vocab::split_words;

pub const DEFAULT_PREDICATE_THRESHOLD: f64 = 0.5;

fn default_threshold() -> f64 {
    DEFAULT_PREDICATE_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FilterStage {
    /// Drop captions containing any listed word (token match, case-folded).
    Wordlist { path: PathBuf },
    /// Keep captions whose body token count lies in `min..=max`.
    Length { min: usize, max: usize },
    /// Drop pairs scoring below `threshold`. With `image_level`, one failing
    /// pair drops every record of that image.
    Predicate {
        scorer: String,
        #[serde(default = "default_threshold")]
        threshold: f64,
        #[serde(default)]
        image_level: bool,
    },
    /// Keep the first of captions that normalize equal within an image.
    Dedup,
}

impl fmt::Display for FilterStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterStage::Wordlist { path } => write!(f, "wordlist({})", path.display()),
            FilterStage::Length { min, max } => write!(f, "length({min}..={max})"),
            FilterStage::Predicate {
                scorer,
                threshold,
                image_level,
            } => write!(
                f,
                "predicate({scorer} < {threshold}{})",
                if *image_level { ", image-level" } else { "" }
            ),
            FilterStage::Dedup => f.write_str("dedup"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    #[serde(default, rename = "stage")]
    pub stages: Vec<FilterStage>,
}

impl FilterSpec {
    pub fn new(stages: Vec<FilterStage>) -> Self {
        Self { stages }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.stages.iter().enumerate() {
            match s {
                FilterStage::Length { min, max } if min > max => {
                    return Err(Error::invalid(format!(
                        "stage {i}: length min {min} exceeds max {max}"
                    )))
                }
                FilterStage::Predicate { threshold, .. } if !(0.0..=1.0).contains(threshold) => {
                    return Err(Error::invalid(format!(
                        "stage {i}: threshold {threshold} outside [0, 1]"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Parses TOML; relative wordlist paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut spec: Self =
            toml::from_str(text).map_err(|e| Error::config(format!("filter spec: {e}")))?;
        for s in &mut spec.stages {
            if let FilterStage::Wordlist { path } = s {
                *path = base_dir.join(&*path);
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub index: usize,
    pub stage: String,
    pub input: usize,
    pub dropped: usize,
    pub output: usize,
    /// Positions of dropped records in the original manifest.
    pub dropped_records: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CurationReport {
    pub stages: Vec<StageReport>,
}

impl CurationReport {
    pub fn total_dropped(&self) -> usize {
        self.stages.iter().map(|s| s.dropped).sum()
    }

    /// Checks per-stage and chain-wide count consistency.
    pub fn check_conservation(&self, total: usize, output: usize) -> bool {
        let per_stage = self
            .stages
            .iter()
            .all(|s| s.input - s.dropped == s.output && s.dropped == s.dropped_records.len());
        let chained = self.stages.windows(2).all(|w| w[0].output == w[1].input);
        let ends = self.stages.first().is_none_or(|s| s.input == total)
            && self
                .stages
                .last()
                .map_or(total == output, |s| s.output == output);
        per_stage && chained && ends && total == output + self.total_dropped()
    }

    /// One JSON object per stage.
    pub fn to_jsonl(&self) -> String {
        self.stages
            .iter()
            .map(|s| serde_json::to_string(s).expect("stage serializes") + "\n")
            .collect()
    }
}

fn normalize(caption: &str) -> String {
    caption
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Positions (into `records`) that duplicate an earlier caption of the same
/// image.
fn duplicate_positions(records: &[(usize, &CaptionRecord)]) -> BTreeSet<usize> {
    let mut seen: HashSet<(&str, String)> = HashSet::new();
    records
        .iter()
        .enumerate()
        .filter(|(_, (_, r))| !seen.insert((r.image_id.as_str(), normalize(&r.caption))))
        .map(|(pos, _)| pos)
        .collect()
}

pub fn dedup(manifest: &CorpusManifest) -> (CorpusManifest, usize) {
    let indexed: Vec<(usize, &CaptionRecord)> = manifest.records.iter().enumerate().collect();
    let dup = duplicate_positions(&indexed);
    let kept = indexed
        .iter()
        .enumerate()
        .filter(|(pos, _)| !dup.contains(pos))
        .map(|(_, (_, r))| (*r).clone())
        .collect();
    (manifest.with_records(kept), dup.len())
}

fn drop_positions(
    stage: &FilterStage,
    records: &[(usize, &CaptionRecord)],
    registry: &ScorerRegistry,
) -> Result<BTreeSet<usize>> {
    let by = |pred: &dyn Fn(&CaptionRecord) -> bool| -> BTreeSet<usize> {
        records
            .iter()
            .enumerate()
            .filter(|(_, (_, r))| pred(r))
            .map(|(p, _)| p)
            .collect()
    };
    Ok(match stage {
        FilterStage::Wordlist { path } => {
            let words: HashSet<String> = read_wordlist(path)?
                .iter()
                .flat_map(|w| split_words(w))
                .collect();
            by(&|r| split_words(&r.caption).iter().any(|w| words.contains(w)))
        }
        FilterStage::Length { min, max } => by(&|r| !(*min..=*max).contains(&r.body_len())),
        FilterStage::Predicate {
            scorer,
            threshold,
            image_level,
        } => {
            let scorer = registry.get(scorer)?;
            let failing = |r: &CaptionRecord| scorer.score(&r.image_id, &r.caption) < *threshold;
            if *image_level {
                let flagged: HashSet<&str> = records
                    .iter()
                    .filter(|(_, r)| failing(r))
                    .map(|(_, r)| r.image_id.as_str())
                    .collect();
                by(&|r| flagged.contains(r.image_id.as_str()))
            } else {
                by(&failing)
            }
        }
        FilterStage::Dedup => duplicate_positions(records),
    })
}

/// Runs the stages in order. Kept records are passed through unchanged.
pub fn apply_filters(
    manifest: &CorpusManifest,
    spec: &FilterSpec,
    registry: &ScorerRegistry,
) -> Result<(CorpusManifest, CurationReport)> {
    spec.validate()?;
    let mut current: Vec<(usize, &CaptionRecord)> = manifest.records.iter().enumerate().collect();
    let mut report = CurationReport::default();
    for (index, stage) in spec.stages.iter().enumerate() {
        let drop = drop_positions(stage, &current, registry)?;
        let input = current.len();
        let dropped_records: Vec<usize> = drop.iter().map(|&p| current[p].0).collect();
        current = current
            .into_iter()
            .enumerate()
            .filter(|(p, _)| !drop.contains(p))
            .map(|(_, r)| r)
            .collect();
        report.stages.push(StageReport {
            index,
            stage: stage.to_string(),
            input,
            dropped: dropped_records.len(),
            output: current.len(),
            dropped_records,
        });
    }
    let kept = current.into_iter().map(|(_, r)| r.clone()).collect();
    Ok((manifest.with_records(kept), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::Split;
    use crate::metrics::scorers::ConstantScorer;

    fn m(rows: &[(&str, &str)]) -> CorpusManifest {
        CorpusManifest::from_rows(rows.iter().map(|(i, c)| (*i, *c, 1.0, Split::Train)), "en")
            .unwrap()
    }

    #[test]
    fn wordlist_drops_marked_record() {
        let dir = tempfile::tempdir().unwrap();
        let wl = dir.path().join("w.txt");
        std::fs::write(&wl, "# profane\nbadword\n").unwrap();
        let man = m(&[
            ("a", "a fine caption"),
            ("b", "what a BADWORD thing"),
            ("c", "badwords are fine"),
        ]);
        let spec = FilterSpec::new(vec![FilterStage::Wordlist { path: wl }]);
        let (out, rep) = apply_filters(&man, &spec, &ScorerRegistry::new()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(rep.stages[0].dropped_records, vec![1]);
        assert!(rep.check_conservation(3, 2));
        assert_eq!(out.records[0], man.records[0]);
    }

    #[test]
    fn empty_spec_is_identity() {
        let man = m(&[("a", "x"), ("a", "y")]);
        let (out, rep) =
            apply_filters(&man, &FilterSpec::default(), &ScorerRegistry::new()).unwrap();
        assert_eq!(out, man);
        assert!(rep.stages.is_empty());
        assert!(rep.check_conservation(2, 2));
    }

    #[test]
    fn length_stage() {
        let man = m(&[("a", "short"), ("a", "long enough caption")]);
        let spec = FilterSpec::new(vec![FilterStage::Length { min: 2, max: 50 }]);
        let (out, rep) = apply_filters(&man, &spec, &ScorerRegistry::new()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(rep.stages[0].dropped_records, vec![0]);
        assert!(
            FilterSpec::new(vec![FilterStage::Length { min: 5, max: 2 }])
                .validate()
                .is_err()
        );
    }

    #[test]
    fn dedup_rules() {
        let (out, n) = dedup(&m(&[("a", "same"), ("a", "same")]));
        assert_eq!((out.len(), n), (1, 1));
        let (out, n) = dedup(&m(&[("a", "same"), ("b", "same")]));
        assert_eq!((out.len(), n), (2, 0));
        let (out, n) = dedup(&m(&[("a", "A  Dog"), ("a", "a dog")]));
        assert_eq!((out.len(), n), (1, 1));
        assert_eq!(out.records[0].caption, "A  Dog");
    }

    #[test]
    fn predicate_stage_and_image_level() {
        let mut reg = ScorerRegistry::new();
        reg.register("low", ConstantScorer::new(0.2).unwrap());
        reg.register("high", ConstantScorer::new(0.9).unwrap());
        let man = m(&[("a", "x y"), ("b", "z w")]);
        let pred = |s: &str, image_level| FilterStage::Predicate {
            scorer: s.into(),
            threshold: 0.5,
            image_level,
        };
        let (out, _) =
            apply_filters(&man, &FilterSpec::new(vec![pred("low", false)]), &reg).unwrap();
        assert!(out.is_empty());
        let (out, _) =
            apply_filters(&man, &FilterSpec::new(vec![pred("high", true)]), &reg).unwrap();
        assert_eq!(out.len(), 2);
        assert!(matches!(
            apply_filters(&man, &FilterSpec::new(vec![pred("villo", false)]), &reg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn image_level_drops_whole_image() {
        let dir = tempfile::tempdir().unwrap();
        let wl = dir.path().join("nsfw.txt");
        std::fs::write(&wl, "nsfw\n").unwrap();
        let mut reg = ScorerRegistry::new();
        reg.register(
            "nsfw",
            crate::metrics::scorers::WordlistPenalty::from_file(&wl).unwrap(),
        );
        let man = m(&[("a", "clean one"), ("a", "nsfw stuff"), ("b", "clean two")]);
        let spec = FilterSpec::new(vec![FilterStage::Predicate {
            scorer: "nsfw".into(),
            threshold: 0.9,
            image_level: true,
        }]);
        let (out, rep) = apply_filters(&man, &spec, &reg).unwrap();
        assert_eq!(out.image_ids(), vec!["b"]);
        assert_eq!(rep.stages[0].dropped_records, vec![0, 1]);
    }

    #[test]
    fn missing_wordlist_is_io_error() {
        let spec = FilterSpec::new(vec![FilterStage::Wordlist {
            path: "/no/such/list".into(),
        }]);
        assert!(matches!(
            apply_filters(&m(&[("a", "x")]), &spec, &ScorerRegistry::new()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn toml_spec() {
        let spec = FilterSpec::from_toml(
            "[[stage]]\nkind = \"wordlist\"\npath = \"w.txt\"\n\n[[stage]]\nkind = \"length\"\nmin = 1\nmax = 3\n\n[[stage]]\nkind = \"predicate\"\nscorer = \"benign\"\n\n[[stage]]\nkind = \"dedup\"\n",
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(spec.stages.len(), 4);
        assert_eq!(
            spec.stages[0],
            FilterStage::Wordlist {
                path: "/base/w.txt".into()
            }
        );
        assert!(
            matches!(&spec.stages[2], FilterStage::Predicate { threshold, .. } if *threshold == 0.5)
        );
        assert!(FilterSpec::from_toml("[[stage]]\nkind = \"regex\"\n", Path::new(".")).is_err());
    }
}
