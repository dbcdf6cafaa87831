//! Passage retrieval inside one document with features taken from the
//! passage's ancestor chain and sibling index.

use std::collections::{BTreeSet, HashMap, HashSet};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{Document, HierarchyTree};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // kana
        | 0x3400..=0x4DBF    // ext A
        | 0x4E00..=0x9FFF    // unified ideographs
        | 0xAC00..=0xD7AF    // hangul syllables
        | 0xF900..=0xFAFF    // compatibility ideographs
        | 0x20000..=0x2FFFF) // ext B and later
}

/// Lowercases, splits on non-alphanumeric characters, and emits each CJK
/// character as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(c.to_string());
        } else if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub doc_id: String,
    pub terms: Vec<String>,
}

impl Query {
    /// Builds a query from free text; errors when no token survives.
    pub fn new(query_id: impl Into<String>, doc_id: impl Into<String>, text: &str) -> Result<Self> {
        let q = Query {
            query_id: query_id.into(),
            doc_id: doc_id.into(),
            terms: tokenize(text),
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::InvalidDocument {
                doc_id: self.doc_id.clone(),
                message: format!("query {} has no terms", self.query_id),
            });
        }
        Ok(())
    }
}

/// One relevance judgement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Qrel {
    pub query_id: String,
    pub doc_id: String,
    pub passage_id: usize,
}

/// Term statistics over every object of one document.
#[derive(Debug, Clone)]
pub struct DocStats {
    term_freqs: Vec<HashMap<String, u32>>,
    lengths: Vec<usize>,
    doc_freq: HashMap<String, usize>,
    avg_len: f64,
}

impl DocStats {
    pub fn new(doc: &Document) -> Self {
        let mut term_freqs = Vec::with_capacity(doc.len());
        let mut lengths = Vec::with_capacity(doc.len());
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for o in &doc.objects {
            let toks = tokenize(&o.text);
            lengths.push(toks.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in toks {
                *tf.entry(t).or_default() += 1;
            }
            for t in tf.keys() {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
            term_freqs.push(tf);
        }
        let avg_len = lengths.iter().sum::<usize>() as f64 / lengths.len().max(1) as f64;
        DocStats {
            term_freqs,
            lengths,
            doc_freq,
            avg_len,
        }
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        ((n - df + 0.5) / (df + 0.5)).ln().max(0.0)
    }

    /// Distinct tokens of object `i`.
    pub fn words(&self, i: usize) -> impl Iterator<Item = &str> {
        self.term_freqs[i].keys().map(String::as_str)
    }
}

/// Okapi BM25 of object `passage` for `terms`. Repeated query terms count once each time.
pub fn bm25(terms: &[String], passage: usize, stats: &DocStats) -> f64 {
    let len = stats.lengths[passage] as f64;
    if len == 0.0 || stats.avg_len == 0.0 {
        return 0.0;
    }
    let tfs = &stats.term_freqs[passage];
    let norm = BM25_K1 * (1.0 - BM25_B + BM25_B * len / stats.avg_len);
    terms
        .iter()
        .map(|t| match tfs.get(t) {
            None => 0.0,
            Some(&tf) => {
                let tf = tf as f64;
                stats.idf(t) * tf * (BM25_K1 + 1.0) / (tf + norm)
            }
        })
        .sum()
}

fn ancestors(tree: &HierarchyTree, passage: usize) -> Result<Vec<usize>> {
    Ok(tree.path_to_root(passage)?.ancestors().collect())
}

/// Largest BM25 among the passage's ancestors; 0 directly under the root.
pub fn bm25_anc_max(terms: &[String], passage: usize, tree: &HierarchyTree, stats: &DocStats) -> Result<f64> {
    Ok(ancestors(tree, passage)?
        .into_iter()
        .map(|a| bm25(terms, a, stats))
        .fold(0.0, f64::max))
}

/// Number of the passage's distinct words that occur in any ancestor.
pub fn same_word_anc(passage: usize, tree: &HierarchyTree, stats: &DocStats) -> Result<usize> {
    let mut anc_words: HashSet<&str> = HashSet::new();
    for a in ancestors(tree, passage)? {
        anc_words.extend(stats.words(a));
    }
    Ok(stats.words(passage).filter(|w| anc_words.contains(w)).count())
}

/// 1-based index among the parent's children and that index over the child count.
pub fn pos_features(passage: usize, tree: &HierarchyTree) -> Result<(usize, f64)> {
    let parent = tree.parent(passage)?;
    let mut pos = 1;
    let mut cur = passage;
    while let Some(prev) = tree.prev_sibling(cur) {
        pos += 1;
        cur = prev;
    }
    Ok((pos, pos as f64 / tree.child_count(parent) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassageFeatures {
    pub bm25: f64,
    pub bm25_anc_max: f64,
    pub same_word_anc: usize,
    pub pos: usize,
    pub pos_ratio: f64,
}

pub const RANK_FEATURE_NAMES: [&str; 5] = ["bm25", "bm25_anc_max", "same_word_anc", "pos", "pos_ratio"];

impl PassageFeatures {
    pub fn compute(terms: &[String], passage: usize, tree: &HierarchyTree, stats: &DocStats) -> Result<Self> {
        let (pos, pos_ratio) = pos_features(passage, tree)?;
        Ok(PassageFeatures {
            bm25: bm25(terms, passage, stats),
            bm25_anc_max: bm25_anc_max(terms, passage, tree, stats)?,
            same_word_anc: same_word_anc(passage, tree, stats)?,
            pos,
            pos_ratio,
        })
    }

    pub fn to_vec(&self) -> [f64; 5] {
        [
            self.bm25,
            self.bm25_anc_max,
            self.same_word_anc as f64,
            self.pos as f64,
            self.pos_ratio,
        ]
    }
}

/// Objects eligible for retrieval: everything not annotated as a heading.
pub fn passages(doc: &Document) -> Vec<usize> {
    doc.objects
        .iter()
        .filter(|o| o.is_heading != Some(true))
        .map(|o| o.id)
        .collect()
}

/// Features for every passage of `doc`, in passage-id order.
pub fn passage_features(
    query: &Query,
    doc: &Document,
    tree: &HierarchyTree,
    stats: &DocStats,
) -> Result<Vec<(usize, PassageFeatures)>> {
    if tree.len() != doc.len() {
        return Err(Error::Mismatch(format!(
            "tree for {} has {} nodes, document has {} objects",
            doc.doc_id,
            tree.len(),
            doc.len()
        )));
    }
    passages(doc)
        .into_par_iter()
        .map(|p| Ok((p, PassageFeatures::compute(&query.terms, p, tree, stats)?)))
        .collect()
}

/// Pointwise linear scorer over the five passage features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRanker {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_names: Vec<String>,
}

impl LinearRanker {
    /// Ranker that orders by BM25 alone.
    pub fn bm25_only() -> Self {
        let mut weights = vec![0.0; 5];
        weights[0] = 1.0;
        Self::with_weights(weights, 0.0)
    }

    fn with_weights(weights: Vec<f64>, bias: f64) -> Self {
        LinearRanker {
            weights,
            bias,
            feature_names: RANK_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != RANK_FEATURE_NAMES.len()
            || self.feature_names.iter().map(String::as_str).ne(RANK_FEATURE_NAMES.iter().copied())
        {
            return Err(Error::Model("ranker weights do not match the five passage features".into()));
        }
        if self.weights.iter().chain([&self.bias]).any(|w| !w.is_finite()) {
            return Err(Error::Model("ranker has non-finite weights".into()));
        }
        Ok(())
    }

    pub fn score(&self, f: &PassageFeatures) -> f64 {
        self.bias + self.weights.iter().zip(f.to_vec()).map(|(w, x)| w * x).sum::<f64>()
    }

    /// Least-squares fit of 0/1 relevance on the features selected by `mask`;
    /// unselected features get weight 0.
    pub fn fit(samples: &[(PassageFeatures, bool)], mask: [bool; 5]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Training("no ranking samples".into()));
        }
        let cols: Vec<usize> = (0..5).filter(|&j| mask[j]).collect();
        let x = DMatrix::from_fn(samples.len(), cols.len() + 1, |r, c| {
            if c == cols.len() {
                1.0
            } else {
                samples[r].0.to_vec()[cols[c]]
            }
        });
        let y = DVector::from_iterator(samples.len(), samples.iter().map(|(_, l)| *l as u8 as f64));
        let beta = x
            .svd(true, true)
            .solve(&y, 1e-10)
            .map_err(|e| Error::Training(format!("least squares failed: {e}")))?;
        let mut weights = vec![0.0; 5];
        for (k, &j) in cols.iter().enumerate() {
            weights[j] = beta[k];
        }
        let r = Self::with_weights(weights, beta[cols.len()]);
        r.validate()?;
        Ok(r)
    }
}

/// Passages ranked by descending score, ties broken by ascending id.
pub fn rank_passages(
    query: &Query,
    doc: &Document,
    tree: &HierarchyTree,
    stats: &DocStats,
    ranker: &LinearRanker,
) -> Result<Vec<(usize, f64)>> {
    ranker.validate()?;
    let mut scored: Vec<(usize, f64)> = passage_features(query, doc, tree, stats)?
        .into_iter()
        .map(|(p, f)| (p, ranker.score(&f)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored)
}

/// Average precision of a ranking; `None` when nothing is relevant.
pub fn average_precision(ranking: &[usize], relevant: &BTreeSet<usize>) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut hits = 0;
    let mut sum = 0.0;
    for (k, id) in ranking.iter().enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Some(sum / relevant.len() as f64)
}

/// Fraction of relevant passages in the top `k`; `None` when nothing is relevant.
pub fn recall_at_k(ranking: &[usize], relevant: &BTreeSet<usize>, k: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let hits = ranking.iter().take(k).filter(|id| relevant.contains(id)).count();
    Some(hits as f64 / relevant.len() as f64)
}

/// mAP and mean recall@k over queries that have at least one relevant passage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub map: f64,
    pub recall_at_1: f64,
    pub recall_at_5: f64,
    pub n_queries: usize,
}

pub fn ranking_metrics<'a, I>(runs: I) -> RankingMetrics
where
    I: IntoIterator<Item = (&'a [usize], &'a BTreeSet<usize>)>,
{
    let (mut ap, mut r1, mut r5, mut n) = (0.0, 0.0, 0.0, 0);
    for (ranking, rel) in runs {
        if let Some(a) = average_precision(ranking, rel) {
            ap += a;
            r1 += recall_at_k(ranking, rel, 1).unwrap_or(0.0);
            r5 += recall_at_k(ranking, rel, 5).unwrap_or(0.0);
            n += 1;
        }
    }
    let d = n.max(1) as f64;
    RankingMetrics {
        map: ap / d,
        recall_at_1: r1 / d,
        recall_at_5: r5 / d,
        n_queries: n,
    }
}

/// Relevance sets keyed by (query_id, doc_id).
pub fn group_qrels(qrels: &[Qrel]) -> HashMap<(String, String), BTreeSet<usize>> {
    let mut out: HashMap<(String, String), BTreeSet<usize>> = HashMap::new();
    for q in qrels {
        out.entry((q.query_id.clone(), q.doc_id.clone()))
            .or_default()
            .insert(q.passage_id);
    }
    out
}

/// Pointwise training rows for the given queries.
pub fn training_samples(
    queries: &[Query],
    docs: &HashMap<String, (&Document, &HierarchyTree, &DocStats)>,
    qrels: &HashMap<(String, String), BTreeSet<usize>>,
) -> Result<Vec<(PassageFeatures, bool)>> {
    let mut out = Vec::new();
    let empty = BTreeSet::new();
    for q in queries {
        let (doc, tree, stats) = docs
            .get(&q.doc_id)
            .ok_or_else(|| Error::Mismatch(format!("query {} names unknown document {}", q.query_id, q.doc_id)))?;
        let rel = qrels.get(&(q.query_id.clone(), q.doc_id.clone())).unwrap_or(&empty);
        for (p, f) in passage_features(q, doc, tree, stats)? {
            out.push((f, rel.contains(&p)));
        }
    }
    Ok(out)
}
