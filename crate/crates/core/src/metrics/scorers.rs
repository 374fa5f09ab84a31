//! Pluggable pair scorers (benign-ness, fluency, content predicates).
//!
//! Scorers are registered under user-chosen names; the built-in kinds are a
//! constant mock and a wordlist penalty. A registry can be loaded from a TOML
//! file:
//!
//! ```toml
//! [scorer.benign]
//! kind = "constant-mock"
//! value = 0.9
//!
//! [scorer.profanity]
//! kind = "wordlist-penalty"
//! wordlist = "words.txt"
//! ```

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::vocab::split_words;

pub trait Scorer: Send + Sync {
    /// A value in [0, 1]; higher is better (more benign, more fluent).
    fn score(&self, image_id: &str, caption: &str) -> f64;
}

#[derive(Debug, Clone)]
pub struct ConstantScorer {
    value: f64,
}

impl ConstantScorer {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::config(format!(
                "constant score {value} outside [0, 1]"
            )));
        }
        Ok(Self { value })
    }
}

impl Scorer for ConstantScorer {
    fn score(&self, _image_id: &str, _caption: &str) -> f64 {
        self.value
    }
}

/// `1 - hits / words`, where hits counts caption words found in the list.
#[derive(Debug, Clone, Default)]
pub struct WordlistPenalty {
    words: HashSet<String>,
}

impl WordlistPenalty {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            words: words
                .into_iter()
                .flat_map(|w| split_words(w.as_ref()))
                .collect(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::new(read_wordlist(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn hits(&self, caption: &str) -> usize {
        split_words(caption)
            .iter()
            .filter(|w| self.words.contains(*w))
            .count()
    }
}

impl Scorer for WordlistPenalty {
    fn score(&self, _image_id: &str, caption: &str) -> f64 {
        let words = split_words(caption);
        if words.is_empty() || self.words.is_empty() {
            return 1.0;
        }
        let hits = words.iter().filter(|w| self.words.contains(*w)).count();
        1.0 - hits as f64 / words.len() as f64
    }
}

/// Wordlist file: one token per line, `#` starts a comment line.
pub fn read_wordlist(path: &Path) -> Result<Vec<String>> {
    crate::manifest::read_lines(path)
}

#[derive(Clone, Default)]
pub struct ScorerRegistry {
    scorers: BTreeMap<String, Arc<dyn Scorer>>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum ScorerEntry {
    ConstantMock { value: f64 },
    WordlistPenalty { wordlist: PathBuf },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    #[serde(default)]
    scorer: BTreeMap<String, ScorerEntry>,
}

impl ScorerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// `benign` and `fluency` as constant mocks returning 1.0.
    pub fn with_defaults() -> Self {
        let mut r = Self::new();
        r.register("benign", ConstantScorer { value: 1.0 });
        r.register("fluency", ConstantScorer { value: 1.0 });
        r
    }

    pub fn register(&mut self, name: impl Into<String>, scorer: impl Scorer + 'static) {
        self.scorers.insert(name.into(), Arc::new(scorer));
    }

    pub fn get(&self, name: &str) -> Result<&Arc<dyn Scorer>> {
        self.scorers
            .get(name)
            .ok_or_else(|| Error::config(format!("no scorer registered under {name:?}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.scorers.keys().map(String::as_str)
    }

    /// Parses a TOML registry. Relative wordlist paths resolve against
    /// `base_dir`. Entries are added on top of the defaults.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let file: RegistryFile =
            toml::from_str(text).map_err(|e| Error::config(format!("scorer registry: {e}")))?;
        let mut r = Self::with_defaults();
        for (name, entry) in file.scorer {
            match entry {
                ScorerEntry::ConstantMock { value } => {
                    r.register(name, ConstantScorer::new(value)?)
                }
                ScorerEntry::WordlistPenalty { wordlist } => {
                    r.register(name, WordlistPenalty::from_file(&base_dir.join(wordlist))?)
                }
            }
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

/// Scores a pair with the scorer registered as `name`.
pub fn external_score(
    registry: &ScorerRegistry,
    name: &str,
    image_id: &str,
    caption: &str,
) -> Result<f64> {
    let s = registry.get(name)?.score(image_id, caption);
    Ok(s.clamp(0.0, 1.0))
}
