//! Corpus statistics: captions per image, grammar-pattern diversity and the
//! emotion distribution of captions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::manifest::CorpusManifest;
use crate::vocab::split_words;

// ---------------------------------------------------------------------------
// Captions per image

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaptionsPerImage {
    pub images: usize,
    pub records: usize,
    pub mean: f64,
    pub median: f64,
    pub min: usize,
    pub max: usize,
    /// Image counts in the buckets [1,10), [10,100), [100,1000), [1000,∞).
    pub histogram: [usize; 4],
}

pub const HISTOGRAM_LABELS: [&str; 4] = ["1-9", "10-99", "100-999", "1000+"];

fn bucket(n: usize) -> usize {
    match n {
        0..=9 => 0,
        10..=99 => 1,
        100..=999 => 2,
        _ => 3,
    }
}

pub fn captions_per_image_stats(manifest: &CorpusManifest) -> Result<CaptionsPerImage> {
    if manifest.is_empty() {
        return Err(Error::invalid(
            "captions-per-image statistics need a non-empty manifest",
        ));
    }
    let mut per_image: HashMap<&str, usize> = HashMap::new();
    for r in &manifest.records {
        *per_image.entry(r.image_id.as_str()).or_default() += 1;
    }
    let mut counts: Vec<usize> = per_image.into_values().collect();
    counts.sort_unstable();
    let n = counts.len();
    let median = if n % 2 == 1 {
        counts[n / 2] as f64
    } else {
        (counts[n / 2 - 1] + counts[n / 2]) as f64 / 2.0
    };
    let mut histogram = [0usize; 4];
    for &c in &counts {
        histogram[bucket(c)] += 1;
    }
    Ok(CaptionsPerImage {
        images: n,
        records: manifest.len(),
        mean: manifest.len() as f64 / n as f64,
        median,
        min: counts[0],
        max: counts[n - 1],
        histogram,
    })
}

// ---------------------------------------------------------------------------
// Grammar patterns

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Noun,
    Verb,
    Adj,
    Conj,
    Other,
}

impl PosTag {
    pub const ALL: [PosTag; 5] = [
        PosTag::Noun,
        PosTag::Verb,
        PosTag::Adj,
        PosTag::Conj,
        PosTag::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Verb => "VERB",
            PosTag::Adj => "ADJ",
            PosTag::Conj => "CONJ",
            PosTag::Other => "OTHER",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PosTag::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown POS tag {s:?}")))
    }
}

/// Parses a comma-separated tag list such as `NOUN,VERB,ADJ`.
pub fn parse_tag_subset(s: &str) -> Result<BTreeSet<PosTag>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Word → tag map; unknown words are OTHER.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PosLexicon {
    tags: HashMap<String, PosTag>,
}

const DEMO_LEXICON: &str = include_str!("../data/demo_lexicon.tsv");

impl PosLexicon {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, PosTag)>,
        S: AsRef<str>,
    {
        Self {
            tags: entries
                .into_iter()
                .map(|(w, t)| (w.as_ref().to_lowercase(), t))
                .collect(),
        }
    }

    /// Parses `token<TAB>TAG` lines; blank lines and `#` comments skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tags = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim_end_matches(['\r', '\n']);
            if t.trim().is_empty() || t.trim_start().starts_with('#') {
                continue;
            }
            let (word, tag) = t.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected token<TAB>TAG".into(),
            })?;
            let tag: PosTag = tag.parse().map_err(|e: Error| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            tags.insert(word.trim().to_lowercase(), tag);
        }
        Ok(Self { tags })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The bundled demo lexicon of common caption words.
    pub fn demo() -> Self {
        Self::parse(DEMO_LEXICON).expect("bundled lexicon parses")
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tag(&self, word: &str) -> PosTag {
        self.tags.get(word).copied().unwrap_or(PosTag::Other)
    }
}

/// Order-preserving sequence of a caption's tags, restricted to a subset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct GrammarPattern(pub Vec<PosTag>);

impl fmt::Display for GrammarPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("(empty)");
        }
        let parts: Vec<&str> = self.0.iter().map(|t| t.as_str()).collect();
        f.write_str(&parts.join("-"))
    }
}

pub fn caption_pattern(
    caption: &str,
    lexicon: &PosLexicon,
    subset: &BTreeSet<PosTag>,
) -> GrammarPattern {
    GrammarPattern(
        split_words(caption)
            .iter()
            .map(|w| lexicon.tag(w))
            .filter(|t| subset.contains(t))
            .collect(),
    )
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatternStats {
    pub frequencies: BTreeMap<GrammarPattern, usize>,
}

impl PatternStats {
    pub fn distinct(&self) -> usize {
        self.frequencies.len()
    }

    /// Multiset union, for combining shards.
    pub fn merge(&mut self, other: &PatternStats) {
        for (p, n) in &other.frequencies {
            *self.frequencies.entry(p.clone()).or_default() += n;
        }
    }
}

pub fn grammar_patterns(
    manifest: &CorpusManifest,
    lexicon: &PosLexicon,
    subset: &BTreeSet<PosTag>,
) -> Result<PatternStats> {
    if subset.is_empty() {
        return Err(Error::invalid(
            "grammar patterns need a non-empty tag subset",
        ));
    }
    let mut stats = PatternStats::default();
    for r in &manifest.records {
        *stats
            .frequencies
            .entry(caption_pattern(&r.caption, lexicon, subset))
            .or_default() += 1;
    }
    Ok(stats)
}

// ---------------------------------------------------------------------------
// Emotions

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Disgust,
    Fear,
    Joy,
    Neutral,
    Sad,
    Surprise,
}

impl Emotion {
    pub const ALL: [Emotion; 7] = [
        Emotion::Anger,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Joy,
        Emotion::Neutral,
        Emotion::Sad,
        Emotion::Surprise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Joy => "joy",
            Emotion::Neutral => "neutral",
            Emotion::Sad => "sad",
            Emotion::Surprise => "surprise",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Seven-class emotion scorer; the highest score wins, earlier classes on
/// ties.
pub trait EmotionClassifier {
    fn scores(&self, caption: &str) -> [f64; 7];

    fn classify(&self, caption: &str) -> Emotion {
        let s = self.scores(caption);
        let mut best = 0;
        for i in 1..7 {
            if s[i] > s[best] {
                best = i;
            }
        }
        Emotion::ALL[best]
    }
}

/// Counts keyword hits per class; captions without any hit are neutral.
#[derive(Debug, Clone)]
pub struct KeywordEmotionClassifier {
    keywords: HashMap<String, Emotion>,
}

impl KeywordEmotionClassifier {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, Emotion)>,
        S: AsRef<str>,
    {
        Self {
            keywords: entries
                .into_iter()
                .map(|(w, e)| (w.as_ref().to_lowercase(), e))
                .collect(),
        }
    }

    /// Small built-in keyword lists.
    pub fn builtin() -> Self {
        let lists: [(Emotion, &str); 6] = [
            (
                Emotion::Anger,
                "angry mad furious hate rage annoyed shut yell",
            ),
            (
                Emotion::Disgust,
                "gross disgusting ew yuck nasty smell smells vomit",
            ),
            (
                Emotion::Fear,
                "scared afraid fear fears terrified scary help panic",
            ),
            (
                Emotion::Joy,
                "happy love loves fun yay great awesome party laugh",
            ),
            (Emotion::Sad, "sad cry cries crying lonely miss tears sorry"),
            (
                Emotion::Surprise,
                "wow what omg suddenly surprise unexpected whoa really",
            ),
        ];
        Self::new(
            lists
                .iter()
                .flat_map(|(e, words)| words.split_whitespace().map(move |w| (w, *e))),
        )
    }
}

impl EmotionClassifier for KeywordEmotionClassifier {
    fn scores(&self, caption: &str) -> [f64; 7] {
        let mut s = [0.0; 7];
        s[Emotion::Neutral.index()] = 0.5;
        for w in split_words(caption) {
            if let Some(e) = self.keywords.get(&w) {
                s[e.index()] += 1.0;
            }
        }
        s
    }
}

/// Resolves a registered emotion classifier by name.
pub fn emotion_classifier(name: &str) -> Result<Box<dyn EmotionClassifier>> {
    match name {
        "keyword-lexicon" => Ok(Box::new(KeywordEmotionClassifier::builtin())),
        other => Err(Error::config(format!(
            "no emotion classifier registered under {other:?}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmotionDistribution(pub [f64; 7]);

impl EmotionDistribution {
    pub fn share(&self, e: Emotion) -> f64 {
        self.0[e.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmotionReport {
    pub counts: [usize; 7],
    pub distribution: EmotionDistribution,
    /// 1 - neutral share.
    pub emotional_fraction: f64,
}

pub fn emotion_distribution(
    manifest: &CorpusManifest,
    classifier: &dyn EmotionClassifier,
) -> Result<EmotionReport> {
    if manifest.is_empty() {
        return Err(Error::invalid(
            "emotion distribution needs a non-empty manifest",
        ));
    }
    let mut counts = [0usize; 7];
    for r in &manifest.records {
        counts[classifier.classify(&r.caption).index()] += 1;
    }
    let n = manifest.len() as f64;
    let mut dist = [0.0; 7];
    for (d, &c) in dist.iter_mut().zip(&counts) {
        *d = c as f64 / n;
    }
    let neutral = counts[Emotion::Neutral.index()] as f64 / n;
    Ok(EmotionReport {
        counts,
        distribution: EmotionDistribution(dist),
        emotional_fraction: (1.0 - neutral).clamp(0.0, 1.0),
    })
}
