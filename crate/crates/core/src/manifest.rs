//! Line-delimited corpus manifest: a header object on line 1 followed by one
//! caption record per line.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{tokenize, TokenId, Vocabulary, BOS, EOS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

/// One image-caption pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionRecord {
    pub image_id: String,
    pub caption: String,
    /// BOS-prefixed, EOS-terminated.
    pub tokens: Vec<TokenId>,
    /// Raw vote-derived score; only its ordering is meaningful.
    pub funny_score: f64,
    pub split: Split,
    pub lang: String,
}

impl CaptionRecord {
    /// Tokenizes `caption` against `vocab` and checks the record invariants.
    pub fn new(
        image_id: impl Into<String>,
        caption: impl Into<String>,
        funny_score: f64,
        split: Split,
        lang: impl Into<String>,
        vocab: &Vocabulary,
    ) -> Result<Self> {
        let caption = caption.into();
        let tokens = tokenize(&caption, vocab)?;
        let rec = Self {
            image_id: image_id.into(),
            caption,
            tokens,
            funny_score,
            split,
            lang: lang.into(),
        };
        rec.validate(vocab.len()).map_err(Error::invalid)?;
        Ok(rec)
    }

    /// Number of tokens between BOS and EOS.
    pub fn body_len(&self) -> usize {
        self.tokens.len().saturating_sub(2)
    }

    fn validate(&self, k: usize) -> std::result::Result<(), String> {
        if self.caption.trim().is_empty() {
            return Err("caption is empty".into());
        }
        if !self.funny_score.is_finite() || self.funny_score < 0.0 {
            return Err(format!(
                "funny_score {} must be a finite value >= 0",
                self.funny_score
            ));
        }
        if self.tokens.len() < 2 || self.tokens[0] != BOS || *self.tokens.last().unwrap() != EOS {
            return Err("tokens must start with BOS and end with EOS".into());
        }
        if let Some(&bad) = self.tokens.iter().find(|&&t| t as usize >= k) {
            return Err(format!(
                "token id {bad} out of range for vocabulary size {k}"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub records: Vec<CaptionRecord>,
    pub vocabulary: Vocabulary,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    vocabulary: Vec<String>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

// Field order here is the canonical on-disk order.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    image_id: String,
    caption: String,
    funny_score: f64,
    split: Split,
    lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<TokenId>>,
}

impl CorpusManifest {
    pub fn new(vocabulary: Vocabulary) -> Self {
        Self {
            records: Vec::new(),
            vocabulary,
            metadata: BTreeMap::new(),
        }
    }

    /// Builds a manifest from raw `(image_id, caption, funny_score, split)`
    /// rows, deriving the vocabulary from the captions.
    pub fn from_rows<'a, I>(rows: I, lang: &str) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str, f64, Split)> + Clone,
    {
        let vocab = Vocabulary::build(rows.clone().into_iter().map(|r| r.1));
        let mut m = Self::new(vocab);
        for (image_id, caption, score, split) in rows {
            let rec = CaptionRecord::new(image_id, caption, score, split, lang, &m.vocabulary)?;
            m.records.push(rec);
        }
        Ok(m)
    }

    /// Same vocabulary and metadata, different records.
    pub fn with_records(&self, records: Vec<CaptionRecord>) -> Self {
        Self {
            records,
            vocabulary: self.vocabulary.clone(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct image ids in first-appearance order.
    pub fn image_ids(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        self.records
            .iter()
            .map(|r| r.image_id.as_str())
            .filter(|id| seen.insert(*id))
            .collect()
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &CaptionRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Checks every record against the vocabulary.
    pub fn validate(&self) -> Result<()> {
        let k = self.vocabulary.len();
        for (i, r) in self.records.iter().enumerate() {
            r.validate(k)
                .map_err(|m| Error::Integrity(format!("record {i}: {m}")))?;
        }
        Ok(())
    }

    /// Canonical serialization: header line, then one record per line.
    pub fn to_canonical_string(&self) -> String {
        let header = HeaderLine {
            vocabulary: self.vocabulary.tokens().to_vec(),
            metadata: self.metadata.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            let line = RecordLine {
                image_id: r.image_id.clone(),
                caption: r.caption.clone(),
                funny_score: r.funny_score,
                split: r.split,
                lang: r.lang.clone(),
                tokens: Some(r.tokens.clone()),
            };
            out.push_str(&serde_json::to_string(&line).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses manifest text. The header line is optional; without one the
    /// vocabulary is built from the captions. Record lines without a
    /// `tokens` field are tokenized against the vocabulary.
    pub fn parse(text: &str) -> Result<Self> {
        let mut header: Option<HeaderLine> = None;
        let mut lines: Vec<(usize, RecordLine)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(raw).map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            if value.get("vocabulary").is_some() {
                if lineno != 1 {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "header object is only allowed on line 1".into(),
                    });
                }
                header = Some(serde_json::from_value(value).map_err(|e| Error::Parse {
                    line: lineno,
                    message: e.to_string(),
                })?);
                continue;
            }
            let rec: RecordLine = serde_json::from_value(value).map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            if rec.funny_score.is_nan() || rec.funny_score < 0.0 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("funny_score {} is negative", rec.funny_score),
                });
            }
            if rec.caption.trim().is_empty() {
                return Err(Error::Parse {
                    line: lineno,
                    message: "caption is empty".into(),
                });
            }
            lines.push((lineno, rec));
        }

        let (vocabulary, metadata) = match header {
            Some(h) => (Vocabulary::from_full_list(h.vocabulary)?, h.metadata),
            None => (
                Vocabulary::build(lines.iter().map(|(_, r)| r.caption.as_str())),
                BTreeMap::new(),
            ),
        };
        let k = vocabulary.len();
        let mut records = Vec::with_capacity(lines.len());
        for (lineno, line) in lines {
            let tokens = match line.tokens {
                Some(t) => t,
                None => tokenize(&line.caption, &vocabulary).map_err(|e| Error::Parse {
                    line: lineno,
                    message: e.to_string(),
                })?,
            };
            let rec = CaptionRecord {
                image_id: line.image_id,
                caption: line.caption,
                tokens,
                funny_score: line.funny_score,
                split: line.split,
                lang: line.lang,
            };
            rec.validate(k)
                .map_err(|m| Error::Integrity(format!("line {lineno}: {m}")))?;
            records.push(rec);
        }
        Ok(Self {
            records,
            vocabulary,
            metadata,
        })
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<CorpusManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CorpusManifest::parse(&text)
}

pub fn save_manifest(manifest: &CorpusManifest, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), manifest.to_canonical_string().as_bytes())
}

/// Writes `bytes` to a sibling temp file and renames it over `path`, holding
/// an exclusive lock on a `.lock` sidecar for the duration.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let lock_path = sidecar(path, "lock");
    let lock = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&lock_path)
        .map_err(|e| Error::io(&lock_path, e))?;
    lock.lock().map_err(|e| Error::io(&lock_path, e))?;

    let tmp = sidecar(path, "tmp");
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    let _ = lock.unlock();
    let _ = fs::remove_file(&lock_path);
    result.map_err(|e| Error::io(path, e))
}

/// `path` with `.ext` appended to its file name.
pub fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Reads a line-oriented text file, dropping blank lines and `#` comments.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            out.push(t.to_string());
        }
    }
    Ok(out)
}
