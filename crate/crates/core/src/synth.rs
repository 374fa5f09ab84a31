//! Synthetic multi-reference caption corpus: every context (a one-hot image
//! vector) has several ground-truth captions that share no words with each
//! other, so the first token is genuinely ambiguous while later tokens are
//! determined by the earlier ones.

use crate::error::Result;
use crate::manifest::{CorpusManifest, Split};
use crate::toycap::ContextMap;

const OPENERS: [&str; 8] = [
    "behold",
    "apparently",
    "meanwhile",
    "sadly",
    "clearly",
    "suddenly",
    "honestly",
    "somehow",
];
const SUBJECTS: [&str; 16] = [
    "cat", "duck", "uncle", "chef", "robot", "mayor", "grandma", "penguin", "dentist", "wizard",
    "goat", "boss", "pirate", "ghost", "toddler", "judge",
];
const VERBS: [&str; 12] = [
    "juggles",
    "paints",
    "eats",
    "ignores",
    "sells",
    "hugs",
    "chases",
    "fears",
    "steals",
    "builds",
    "blesses",
    "questions",
];
const OBJECTS: [&str; 16] = [
    "spaghetti",
    "taxes",
    "tulips",
    "lasers",
    "socks",
    "pancakes",
    "thunder",
    "bananas",
    "homework",
    "cheese",
    "pickles",
    "trombones",
    "glitter",
    "mondays",
    "wifi",
    "umbrellas",
];

#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    pub contexts: usize,
    pub templates_per_context: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            contexts: 8,
            templates_per_context: 4,
        }
    }
}

/// Caption template `t` of context `c`. Within a context, templates never
/// share a word.
pub fn template(c: usize, t: usize) -> String {
    format!(
        "{} {} {} {} .",
        OPENERS[(c + t) % OPENERS.len()],
        SUBJECTS[(4 * c + t) % SUBJECTS.len()],
        VERBS[(c + 3 * t) % VERBS.len()],
        OBJECTS[(2 * c + t) % OBJECTS.len()],
    )
}

pub fn image_id(c: usize) -> String {
    format!("synth{c:02}")
}

/// Manifest (all records in the train split) and one-hot context vectors.
pub fn synthetic_corpus(spec: &SynthSpec) -> Result<(CorpusManifest, ContextMap)> {
    let rows: Vec<(String, String)> = (0..spec.contexts)
        .flat_map(|c| (0..spec.templates_per_context).map(move |t| (image_id(c), template(c, t))))
        .collect();
    let mut manifest = CorpusManifest::from_rows(
        rows.iter()
            .map(|(i, cap)| (i.as_str(), cap.as_str(), 1.0, Split::Train)),
        "en",
    )?;
    manifest
        .metadata
        .insert("source".into(), "synthetic multi-reference corpus".into());
    let contexts = (0..spec.contexts)
        .map(|c| {
            let mut v = vec![0.0; spec.contexts];
            v[c] = 1.0;
            (image_id(c), v)
        })
        .collect();
    Ok((manifest, contexts))
}
