//! Token vocabulary and the rule-based caption tokenizer.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;

/// Surface strings of the reserved ids, in id order.
pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Ordered set of distinct token strings. Ids 0..4 are always the reserved
/// PAD/BOS/EOS/UNK entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Vocabulary holding only the reserved tokens.
    pub fn reserved_only() -> Self {
        Self::from_body(std::iter::empty::<String>())
    }

    /// Builds a vocabulary from non-reserved tokens. Duplicates and strings
    /// that collide with reserved entries are skipped; first occurrence wins.
    pub fn from_body<I, S>(body: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, TokenId> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        for tok in body {
            let tok = tok.into();
            if !index.contains_key(&tok) {
                index.insert(tok.clone(), tokens.len() as TokenId);
                tokens.push(tok);
            }
        }
        Self { tokens, index }
    }

    /// Rebuilds a vocabulary from a full ordered token list (reserved
    /// entries included), as stored in a manifest header.
    pub fn from_full_list(list: Vec<String>) -> Result<Self> {
        if list.len() < RESERVED.len() {
            return Err(Error::Integrity(format!(
                "vocabulary has {} entries, need at least {}",
                list.len(),
                RESERVED.len()
            )));
        }
        for (i, r) in RESERVED.iter().enumerate() {
            if list[i] != *r {
                return Err(Error::Integrity(format!(
                    "vocabulary id {i} must be {r:?}, found {:?}",
                    list[i]
                )));
            }
        }
        let mut index = HashMap::with_capacity(list.len());
        for (i, t) in list.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Integrity(format!(
                    "duplicate vocabulary token {t:?}"
                )));
            }
        }
        Ok(Self {
            tokens: list,
            index,
        })
    }

    /// Collects the tokenizer output of every caption, sorted for a stable
    /// id assignment.
    pub fn build<'a, I>(captions: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut words: Vec<String> = captions.into_iter().flat_map(split_words).collect();
        words.sort();
        words.dedup();
        Self::from_body(words)
    }

    /// K, the number of entries including the reserved ones.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Body token strings of an id sequence (reserved framing tokens removed).
    pub fn body_strings(&self, ids: &[TokenId]) -> Vec<&str> {
        ids.iter()
            .filter(|&&id| id != BOS && id != EOS && id != PAD)
            .map(|&id| self.token(id).unwrap_or(RESERVED[UNK as usize]))
            .collect()
    }

    /// Space-joined body text of an id sequence.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        self.body_strings(ids).join(" ")
    }
}

fn is_connector(c: char) -> bool {
    c == '-' || c == '\'' || c == '\u{2019}'
}

/// Lowercases and splits text into word and punctuation strings.
///
/// A word is a run of alphanumerics, where a single `-` or `'` between two
/// alphanumerics stays inside the word ("well-known", "don't"). Every other
/// non-whitespace character is a token of its own.
pub fn split_words(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut out = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let joins = is_connector(c)
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if c.is_alphanumeric() || joins {
            current.push(c);
        } else {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Maps text to `[BOS, body.., EOS]`, with out-of-vocabulary words as UNK.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> Result<Vec<TokenId>> {
    if text.trim().is_empty() {
        return Err(Error::invalid("cannot tokenize empty text"));
    }
    let mut ids = vec![BOS];
    ids.extend(split_words(text).iter().map(|w| vocab.id(w).unwrap_or(UNK)));
    ids.push(EOS);
    Ok(ids)
}
