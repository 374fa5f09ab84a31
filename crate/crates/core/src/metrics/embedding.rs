//! Sources of fixed-dimension image and text vectors.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::floatrows::KeyedRows;
use crate::vocab::split_words;

pub trait EmbeddingProvider {
    fn text_dim(&self) -> usize;
    fn image_dim(&self) -> usize;
    fn text_embed(&self, text: &str) -> Result<Vec<f64>>;
    fn image_embed(&self, image_id: &str) -> Result<Vec<f64>>;
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic provider: every word (and every image id) hashes to a
/// fixed Gaussian vector; a text embeds as the sum of its word vectors.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        Ok(Self { dim, seed })
    }

    fn keyed_vector(&self, domain: &str, key: &str) -> Vec<f64> {
        let mut bytes = domain.as_bytes().to_vec();
        bytes.push(0);
        bytes.extend_from_slice(key.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(&bytes) ^ self.seed);
        (0..self.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn text_dim(&self) -> usize {
        self.dim
    }

    fn image_dim(&self) -> usize {
        self.dim
    }

    /// Texts without any word map to a dedicated empty-text vector.
    fn text_embed(&self, text: &str) -> Result<Vec<f64>> {
        let words = split_words(text);
        if words.is_empty() {
            return Ok(self.keyed_vector("text-empty", ""));
        }
        let mut out = vec![0.0; self.dim];
        for w in &words {
            for (o, x) in out.iter_mut().zip(self.keyed_vector("word", w)) {
                *o += x;
            }
        }
        Ok(out)
    }

    fn image_embed(&self, image_id: &str) -> Result<Vec<f64>> {
        Ok(self.keyed_vector("image", image_id))
    }
}

/// Precomputed vectors: images keyed by image id, texts keyed by the exact
/// caption string. Unknown keys are lookup errors.
#[derive(Debug, Clone)]
pub struct TableEmbedder {
    images: KeyedRows,
    texts: KeyedRows,
}

impl TableEmbedder {
    pub fn new(images: KeyedRows, texts: KeyedRows) -> Self {
        Self { images, texts }
    }

    pub fn from_maps(
        images: &HashMap<String, Vec<f64>>,
        texts: &HashMap<String, Vec<f64>>,
    ) -> Result<Self> {
        let sorted = |m: &HashMap<String, Vec<f64>>| {
            let mut v: Vec<(&String, &Vec<f64>)> = m.iter().collect();
            v.sort_by(|a, b| a.0.cmp(b.0));
            KeyedRows::from_map(v.into_iter().map(|(k, x)| (k.as_str(), x.as_slice())))
        };
        Ok(Self::new(sorted(images)?, sorted(texts)?))
    }

    pub fn read(image_path: impl AsRef<Path>, text_path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(
            KeyedRows::read(image_path)?,
            KeyedRows::read(text_path)?,
        ))
    }
}

impl EmbeddingProvider for TableEmbedder {
    fn text_dim(&self) -> usize {
        self.texts.dim()
    }

    fn image_dim(&self) -> usize {
        self.images.dim()
    }

    fn text_embed(&self, text: &str) -> Result<Vec<f64>> {
        self.texts
            .get_f64(text)
            .ok_or_else(|| Error::Lookup(format!("text {text}")))
    }

    fn image_embed(&self, image_id: &str) -> Result<Vec<f64>> {
        self.images
            .get_f64(image_id)
            .ok_or_else(|| Error::Lookup(format!("image {image_id}")))
    }
}

/// Image vectors from one provider, text vectors from another.
pub struct SplitProvider<I, T> {
    pub images: I,
    pub texts: T,
}

impl<I: EmbeddingProvider, T: EmbeddingProvider> EmbeddingProvider for SplitProvider<I, T> {
    fn text_dim(&self) -> usize {
        self.texts.text_dim()
    }

    fn image_dim(&self) -> usize {
        self.images.image_dim()
    }

    fn text_embed(&self, text: &str) -> Result<Vec<f64>> {
        self.texts.text_embed(text)
    }

    fn image_embed(&self, image_id: &str) -> Result<Vec<f64>> {
        self.images.image_embed(image_id)
    }
}

/// File-backed image vectors, keyed by image id.
pub struct ImageTable(pub KeyedRows);

impl EmbeddingProvider for ImageTable {
    fn text_dim(&self) -> usize {
        0
    }

    fn image_dim(&self) -> usize {
        self.0.dim()
    }

    fn text_embed(&self, text: &str) -> Result<Vec<f64>> {
        Err(Error::Lookup(format!("text {text}")))
    }

    fn image_embed(&self, image_id: &str) -> Result<Vec<f64>> {
        self.0
            .get_f64(image_id)
            .ok_or_else(|| Error::Lookup(format!("image {image_id}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_embedder_is_deterministic_and_bag_of_words() {
        let h = HashEmbedder::new(16, 3).unwrap();
        let a = h.text_embed("A dog runs").unwrap();
        assert_eq!(a, h.text_embed("a dog runs").unwrap());
        let b = h.text_embed("runs dog a").unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_ne!(a, h.text_embed("a cat runs").unwrap());
        assert_eq!(h.image_embed("img1").unwrap().len(), 16);
        assert!(h.text_embed("").unwrap().iter().any(|&x| x != 0.0));
        assert!(HashEmbedder::new(0, 0).is_err());
    }

    #[test]
    fn table_lookup_miss_names_key() {
        let t = TableEmbedder::from_maps(
            &HashMap::from([("img1".to_string(), vec![1.0, 0.0])]),
            &HashMap::from([("hello".to_string(), vec![0.0, 1.0, 2.0])]),
        )
        .unwrap();
        assert_eq!(t.image_dim(), 2);
        assert_eq!(t.text_dim(), 3);
        assert_eq!(t.text_embed("hello").unwrap(), vec![0.0, 1.0, 2.0]);
        match t.image_embed("img9") {
            Err(Error::Lookup(k)) => assert!(k.contains("img9")),
            other => panic!("{other:?}"),
        }
    }
}
