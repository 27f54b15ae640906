use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::{Error, Result};

pub const MOCK_EMBEDDING_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

impl EmbeddingVector {
    /// Fails on zero or non-finite norm.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::BackendFailure("embedding has zero or non-finite norm".into()));
        }
        Ok(Self { values, norm })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    (dot / (a.norm * b.norm)).clamp(-1.0, 1.0)
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>>;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(self.embed(&[text])?.remove(0))
    }
}

impl<T: Embedder + ?Sized> Embedder for Arc<T> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed(texts)
    }
}

pub(crate) fn check_inputs(texts: &[&str]) -> Result<()> {
    if texts.is_empty() || texts.iter().any(|t| t.is_empty()) {
        return Err(Error::InvalidRequest("embed needs non-empty texts".into()));
    }
    Ok(())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Offline embedder: counts of hashed character n-grams of the lowercased,
/// space-padded text, L2-normalized.
#[derive(Debug, Clone)]
pub struct HashedNgramEmbedder {
    dim: usize,
    n: usize,
}

impl Default for HashedNgramEmbedder {
    fn default() -> Self {
        Self { dim: MOCK_EMBEDDING_DIM, n: 3 }
    }
}

impl HashedNgramEmbedder {
    pub fn new(dim: usize, n: usize) -> Self {
        assert!(dim > 0 && n > 0);
        Self { dim, n }
    }

    fn vector(&self, text: &str) -> Result<EmbeddingVector> {
        let padded: Vec<char> = format!(" {} ", text.to_lowercase()).chars().collect();
        let mut v = vec![0.0; self.dim];
        let mut buf = String::new();
        for w in padded.windows(self.n.min(padded.len())) {
            buf.clear();
            buf.extend(w);
            v[(fnv1a(buf.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        EmbeddingVector::new(v)
    }
}

impl Embedder for HashedNgramEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        check_inputs(texts)?;
        texts.iter().map(|t| self.vector(t)).collect()
    }
}

/// Memoizes another embedder by exact text.
pub struct CachedEmbedder<E> {
    inner: E,
    cache: Mutex<HashMap<String, EmbeddingVector>>,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        check_inputs(texts)?;
        let missing: Vec<&str> = {
            let cache = self.cache.lock().unwrap();
            let mut m: Vec<&str> = texts.iter().copied().filter(|t| !cache.contains_key(*t)).collect();
            m.sort_unstable();
            m.dedup();
            m
        };
        if !missing.is_empty() {
            let fresh = self.inner.embed(&missing)?;
            let mut cache = self.cache.lock().unwrap();
            for (t, v) in missing.into_iter().zip(fresh) {
                cache.insert(t.to_string(), v);
            }
        }
        let cache = self.cache.lock().unwrap();
        Ok(texts.iter().map(|t| cache[*t].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_inputs_identical_vectors() {
        let e = HashedNgramEmbedder::default();
        let v = e.embed(&["abc", "abc"]).unwrap();
        assert_eq!(v[0], v[1]);
        assert!((cosine(&v[0], &v[1]) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shapes_and_bounds() {
        let e = HashedNgramEmbedder::default();
        let v = e.embed(&["abc", "xyz", "a longer phrase"]).unwrap();
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|x| x.len() == MOCK_EMBEDDING_DIM));
        let c = cosine(&v[0], &v[1]);
        assert!((-1.0..=1.0).contains(&c));
        assert!((v[2].norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_empty_input() {
        let e = HashedNgramEmbedder::default();
        assert!(e.embed(&[]).is_err());
        assert!(e.embed(&["a", ""]).is_err());
    }

    #[test]
    fn zero_vector_rejected() {
        assert!(EmbeddingVector::new(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn cache_returns_same_vectors() {
        let e = CachedEmbedder::new(HashedNgramEmbedder::default());
        let a = e.embed(&["tax", "rate", "tax"]).unwrap();
        let b = HashedNgramEmbedder::default().embed(&["tax", "rate", "tax"]).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn self_cosine_is_one(s in "[a-zA-Z0-9 ]{1,40}") {
            let e = HashedNgramEmbedder::default();
            let v = e.embed_one(&s).unwrap();
            prop_assert!((cosine(&v, &v) - 1.0).abs() < 1e-9);
            prop_assert!((v.norm() - v.values().iter().map(|x| x * x).sum::<f64>().sqrt()).abs() < 1e-9);
        }
    }
}
