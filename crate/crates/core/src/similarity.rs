//! Lexical similarity: character trigrams, Jaccard, and TF-IDF cosine.

use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Pairwise text similarity in `[0, 1]`.
///
/// Implementations must be symmetric and score any non-empty text as 1.0
/// against itself.
pub trait SimilarityScorer: Send + Sync {
    fn score(&self, a: &str, b: &str) -> f64;
}

/// Character trigrams of the lowercased text. Texts shorter than three
/// characters yield themselves as a single gram.
pub fn trigrams(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    if chars.is_empty() {
        return Vec::new();
    }
    if chars.len() < 3 {
        return vec![chars.into_iter().collect()];
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Jaccard index of the trigram sets of two identifiers.
pub fn trigram_jaccard(a: &str, b: &str) -> f64 {
    let sa: BTreeSet<String> = trigrams(a).into_iter().collect();
    let sb: BTreeSet<String> = trigrams(b).into_iter().collect();
    if sa.is_empty() && sb.is_empty() {
        return 0.0;
    }
    let inter = sa.intersection(&sb).count() as f64;
    let union = sa.union(&sb).count() as f64;
    inter / union
}

/// Sparse L2-normalized vector keyed by gram.
pub type SparseVector = BTreeMap<String, f64>;

/// Cosine similarity over trigram TF-IDF vectors.
///
/// IDF is smoothed as `ln((1 + n) / (1 + df)) + 1`, so grams never seen in
/// the fitted corpus get the largest weight and an unfitted scorer reduces
/// to plain term-frequency cosine.
#[derive(Debug, Clone, Default)]
pub struct TfIdfScorer {
    idf: HashMap<String, f64>,
    default_idf: f64,
}

impl TfIdfScorer {
    /// A scorer with uniform weights.
    pub fn unfitted() -> Self {
        Self {
            idf: HashMap::new(),
            default_idf: 1.0,
        }
    }

    /// Fits document frequencies on `corpus`.
    pub fn fit<'a>(corpus: impl IntoIterator<Item = &'a str>) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut n = 0usize;
        for doc in corpus {
            n += 1;
            let grams: BTreeSet<String> = trigrams(doc).into_iter().collect();
            for g in grams {
                *df.entry(g).or_default() += 1;
            }
        }
        let nf = n as f64;
        let idf = df
            .into_iter()
            .map(|(g, d)| (g, ((1.0 + nf) / (1.0 + d as f64)).ln() + 1.0))
            .collect();
        Self {
            idf,
            default_idf: (1.0 + nf).ln() + 1.0,
        }
    }

    pub fn vectorize(&self, text: &str) -> SparseVector {
        let mut tf: SparseVector = BTreeMap::new();
        for g in trigrams(text) {
            *tf.entry(g).or_default() += 1.0;
        }
        for (g, w) in tf.iter_mut() {
            *w *= self.idf.get(g).copied().unwrap_or(self.default_idf);
        }
        let norm = tf.values().map(|w| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for w in tf.values_mut() {
                *w /= norm;
            }
        }
        tf
    }
}

/// Dot product of two normalized sparse vectors, clamped to `[0, 1]`.
pub fn cosine(a: &SparseVector, b: &SparseVector) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let dot: f64 = small
        .iter()
        .filter_map(|(g, w)| large.get(g).map(|v| w * v))
        .sum();
    dot.clamp(0.0, 1.0)
}

impl SimilarityScorer for TfIdfScorer {
    fn score(&self, a: &str, b: &str) -> f64 {
        if a == b {
            return if a.is_empty() { 0.0 } else { 1.0 };
        }
        cosine(&self.vectorize(a), &self.vectorize(b))
    }
}
