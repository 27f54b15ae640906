//! Subword tokenization and banded MinHash LSH.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub trait SubwordTokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Character n-grams of each lowercased, space-padded word.
#[derive(Debug, Clone)]
pub struct CharNgramTokenizer {
    pub n: usize,
}

impl Default for CharNgramTokenizer {
    fn default() -> Self {
        Self { n: 3 }
    }
}

impl CharNgramTokenizer {
    fn word_grams(&self, word: &str, out: &mut Vec<String>) {
        let chars: Vec<char> = format!(" {word} ").chars().collect();
        if chars.len() <= self.n {
            out.push(chars.iter().collect());
            return;
        }
        out.extend(chars.windows(self.n).map(|w| w.iter().collect::<String>()));
    }
}

impl SubwordTokenizer for CharNgramTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for w in text.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            self.word_grams(w, &mut out);
        }
        out
    }
}

/// Greedy longest-match over a fixed vocabulary; spans with no vocabulary
/// match fall back to character n-grams.
#[derive(Debug, Clone)]
pub struct VocabTokenizer {
    vocab: HashSet<String>,
    max_piece: usize,
    fallback: CharNgramTokenizer,
}

impl VocabTokenizer {
    pub fn new<I, S>(vocab: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let vocab: HashSet<String> = vocab.into_iter().map(|s| s.into().to_lowercase()).collect();
        let max_piece = vocab.iter().map(|v| v.chars().count()).max().unwrap_or(1);
        Self {
            vocab,
            max_piece,
            fallback: CharNgramTokenizer::default(),
        }
    }
}

impl SubwordTokenizer for VocabTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for w in text.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            let chars: Vec<char> = w.chars().collect();
            let mut i = 0;
            let mut unmatched = String::new();
            while i < chars.len() {
                let longest = (1..=self.max_piece.min(chars.len() - i))
                    .rev()
                    .map(|len| chars[i..i + len].iter().collect::<String>())
                    .find(|piece| self.vocab.contains(piece));
                match longest {
                    Some(piece) => {
                        if !unmatched.is_empty() {
                            self.fallback.word_grams(&unmatched, &mut out);
                            unmatched.clear();
                        }
                        i += piece.chars().count();
                        out.push(piece);
                    }
                    None => {
                        unmatched.push(chars[i]);
                        i += 1;
                    }
                }
            }
            if !unmatched.is_empty() {
                self.fallback.word_grams(&unmatched, &mut out);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LshParams {
    pub bands: usize,
    pub rows: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for LshParams {
    fn default() -> Self {
        Self { bands: 16, rows: 4, seed: 0 }
    }
}

impl LshParams {
    pub fn permutations(&self) -> usize {
        self.bands * self.rows
    }
}

const MERSENNE_61: u64 = (1 << 61) - 1;

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// MinHash over universal hashes `(a*x + b) mod (2^61 - 1)`.
#[derive(Debug, Clone)]
pub struct MinHasher {
    coeffs: Vec<(u64, u64)>,
}

impl MinHasher {
    pub fn new(num_perm: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..num_perm)
            .map(|_| (rng.gen_range(1..MERSENNE_61), rng.gen_range(0..MERSENNE_61)))
            .collect();
        Self { coeffs }
    }

    /// Signature of a token set; an empty set yields all-`u64::MAX`.
    pub fn signature<'a, I>(&self, tokens: I) -> Vec<u64>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let hashes: BTreeSet<u64> = tokens.into_iter().map(|t| fnv1a(t) % MERSENNE_61).collect();
        self.coeffs
            .iter()
            .map(|&(a, b)| {
                hashes
                    .iter()
                    .map(|&x| ((u128::from(a) * u128::from(x) + u128::from(b)) % u128::from(MERSENNE_61)) as u64)
                    .min()
                    .unwrap_or(u64::MAX)
            })
            .collect()
    }
}

/// Banded index: two signatures are candidates if any band matches exactly.
#[derive(Debug, Clone)]
pub struct LshIndex {
    params: LshParams,
    buckets: Vec<HashMap<Vec<u64>, Vec<usize>>>,
}

impl LshIndex {
    pub fn new(params: LshParams) -> Self {
        Self {
            params,
            buckets: vec![HashMap::new(); params.bands],
        }
    }

    fn bands<'s>(&self, sig: &'s [u64]) -> impl Iterator<Item = &'s [u64]> {
        sig.chunks(self.params.rows).take(self.params.bands)
    }

    pub fn insert(&mut self, id: usize, sig: &[u64]) {
        assert_eq!(sig.len(), self.params.permutations());
        let bands: Vec<Vec<u64>> = self.bands(sig).map(<[u64]>::to_vec).collect();
        for (b, key) in bands.into_iter().enumerate() {
            self.buckets[b].entry(key).or_default().push(id);
        }
    }

    pub fn query(&self, sig: &[u64]) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for (b, key) in self.bands(sig).enumerate() {
            if let Some(ids) = self.buckets[b].get(key) {
                out.extend(ids.iter().copied());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jaccard(a: &[String], b: &[String]) -> f64 {
        let a: BTreeSet<&String> = a.iter().collect();
        let b: BTreeSet<&String> = b.iter().collect();
        a.intersection(&b).count() as f64 / a.union(&b).count() as f64
    }

    #[test]
    fn ngram_tokens() {
        let t = CharNgramTokenizer::default();
        assert_eq!(t.tokenize("Ab"), vec![" ab", "ab "]);
        assert_eq!(t.tokenize("a"), vec![" a "]);
        assert!(t.tokenize("  ").is_empty());
    }

    #[test]
    fn vocab_tokenizer_prefers_longest_pieces() {
        let t = VocabTokenizer::new(["ala", "alame", "da", "county"]);
        assert_eq!(t.tokenize("Alameda County"), vec!["alame", "da", "county"]);
        let toks = t.tokenize("zzq");
        assert_eq!(toks, CharNgramTokenizer::default().tokenize("zzq"));
    }

    #[test]
    fn identical_sets_always_collide() {
        let p = LshParams::default();
        let mh = MinHasher::new(p.permutations(), 7);
        let toks = CharNgramTokenizer::default().tokenize("Alameda");
        let s1 = mh.signature(toks.iter().map(String::as_str));
        let s2 = mh.signature(toks.iter().map(String::as_str));
        let mut idx = LshIndex::new(p);
        idx.insert(3, &s1);
        assert_eq!(idx.query(&s2), BTreeSet::from([3]));
    }

    #[test]
    fn signature_agreement_tracks_jaccard() {
        let t = CharNgramTokenizer::default();
        let mh = MinHasher::new(512, 1);
        let a = t.tokenize("san francisco unified");
        let b = t.tokenize("san francisco county");
        let sa = mh.signature(a.iter().map(String::as_str));
        let sb = mh.signature(b.iter().map(String::as_str));
        let agree = sa.iter().zip(&sb).filter(|(x, y)| x == y).count() as f64 / 512.0;
        assert!((agree - jaccard(&a, &b)).abs() < 0.08, "{agree} vs {}", jaccard(&a, &b));
    }

    #[test]
    fn disjoint_sets_rarely_collide() {
        let t = CharNgramTokenizer::default();
        let p = LshParams::default();
        let mh = MinHasher::new(p.permutations(), 3);
        let a = t.tokenize("qwxz");
        let mut idx = LshIndex::new(p);
        idx.insert(0, &mh.signature(a.iter().map(String::as_str)));
        let b = t.tokenize("mnop");
        assert!(idx.query(&mh.signature(b.iter().map(String::as_str))).is_empty());
    }
}
