use crate::error::{Error, Result};

/// Semantic diversity of a set of embeddings.
///
/// With `s` the mean over items of the highest cosine similarity to any
/// other item, returns `sqrt(1 - s^2)`: 0 when every item has an identical
/// neighbour, 1 when all items are mutually orthogonal.
pub fn diversity_score<V: AsRef<[f64]>>(embeddings: &[V]) -> Result<f64> {
    let n = embeddings.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "diversity needs at least 2 embeddings, got {n}"
        )));
    }
    let dim = embeddings[0].as_ref().len();
    let mut sq_norms = Vec::with_capacity(n);
    for (i, v) in embeddings.iter().enumerate() {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::invalid(format!(
                "embedding {i} has dimension {}, expected {dim}",
                v.len()
            )));
        }
        let sq: f64 = v.iter().map(|x| x * x).sum();
        if !sq.is_finite() || sq <= 0.0 {
            return Err(Error::invalid(format!(
                "embedding {i} has zero or non-finite norm"
            )));
        }
        sq_norms.push(sq);
    }

    let mut nearest = vec![f64::NEG_INFINITY; n];
    for m in 0..n {
        for q in (m + 1)..n {
            let (a, b) = (embeddings[m].as_ref(), embeddings[q].as_ref());
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            // sqrt of the product keeps cos(v, v) exactly 1.
            let cos = (dot / (sq_norms[m] * sq_norms[q]).sqrt()).clamp(-1.0, 1.0);
            nearest[m] = nearest[m].max(cos);
            nearest[q] = nearest[q].max(cos);
        }
    }
    let s = (nearest.iter().sum::<f64>() / n as f64).clamp(-1.0, 1.0);
    Ok(((1.0 - s) * (1.0 + s)).max(0.0).sqrt())
}
