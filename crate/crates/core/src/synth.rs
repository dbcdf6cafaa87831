//! Synthetic annotated corpora: documents, gold trees, heading flags and
//! retrieval relevance labels.
//!
//! Each document gets a style ladder, one numbering pattern and one format
//! per heading level. Heading levels follow a bounded random walk, every
//! heading receives at least one child, and body text is drawn from a common
//! pool mixed with keywords of the enclosing headings.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{Document, FormatAttrs, HierarchyTree, NodeRef, ObjectKind, PhysicalObject};
use crate::patterns::PatternLibrary;
use crate::retrieval::{passages, tokenize, Qrel, Query};

/// Hard limit on tree depth.
pub const MAX_DEPTH_CAP: usize = 11;

pub const BODY_FONT_SIZE: f64 = 10.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_docs: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Deepest level any object may occupy; headings stop one level above.
    pub max_depth: usize,
    /// Every document must reach at least this heading level.
    pub min_heading_depth: usize,
    pub heading_ratio: f64,
    /// Probability that the next heading opens a deeper level.
    pub descend_prob: f64,
    /// Probability that the next heading closes one or more levels.
    pub ascend_prob: f64,
    /// Probability that a document reuses one numbering pattern at two levels.
    pub pattern_reuse_prob: f64,
    /// Per-heading probability of a perturbed format attribute.
    pub format_noise: f64,
    /// Fraction of body objects that are tables, figures or charts.
    pub non_paragraph_ratio: f64,
    /// Probability that a heading borrows a keyword from an earlier heading.
    pub keyword_reuse_prob: f64,
    pub min_body_words: usize,
    pub max_body_words: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_docs: 100,
            min_objects: 300,
            max_objects: 800,
            max_depth: 8,
            min_heading_depth: 3,
            heading_ratio: 0.25,
            descend_prob: 0.4,
            ascend_prob: 0.3,
            pattern_reuse_prob: 0.3,
            format_noise: 0.02,
            non_paragraph_ratio: 0.06,
            keyword_reuse_prob: 0.3,
            min_body_words: 12,
            max_body_words: 48,
            seed: 17,
        }
    }
}

impl CorpusConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: CorpusConfig = toml::from_str(text).map_err(|e| Error::Config(format!("corpus config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        let prob = |name: &str, p: f64| -> Result<()> {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")))
            }
        };
        if self.min_objects < 2 || self.min_objects > self.max_objects {
            return fail(format!(
                "objects range {}..={} is empty or too small",
                self.min_objects, self.max_objects
            ));
        }
        if !(2..=MAX_DEPTH_CAP).contains(&self.max_depth) {
            return fail(format!("max_depth must be in 2..={MAX_DEPTH_CAP}, got {}", self.max_depth));
        }
        if self.min_heading_depth == 0 || self.min_heading_depth >= self.max_depth {
            return fail(format!(
                "min_heading_depth {} cannot be reached with max_depth {}",
                self.min_heading_depth, self.max_depth
            ));
        }
        if !(self.heading_ratio > 0.0 && self.heading_ratio <= 0.5) {
            return fail(format!("heading_ratio must lie in (0, 0.5], got {}", self.heading_ratio));
        }
        let min_headings = (self.min_objects as f64 * self.heading_ratio).round() as usize;
        if min_headings < self.min_heading_depth {
            return fail(format!(
                "{} headings cannot span {} levels",
                min_headings, self.min_heading_depth
            ));
        }
        prob("descend_prob", self.descend_prob)?;
        prob("ascend_prob", self.ascend_prob)?;
        if self.descend_prob + self.ascend_prob > 1.0 {
            return fail("descend_prob + ascend_prob exceeds 1".into());
        }
        if self.descend_prob == 0.0 && self.min_heading_depth > 1 {
            return fail("descend_prob 0 cannot reach min_heading_depth".into());
        }
        prob("pattern_reuse_prob", self.pattern_reuse_prob)?;
        prob("format_noise", self.format_noise)?;
        prob("non_paragraph_ratio", self.non_paragraph_ratio)?;
        prob("keyword_reuse_prob", self.keyword_reuse_prob)?;
        if self.min_body_words == 0 || self.min_body_words > self.max_body_words {
            return fail("body word range is empty".into());
        }
        Ok(())
    }
}

/// Per-document derived seed.
pub fn doc_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

// Patterns a ladder may use: these never collide with each other's regexes.
const LEVEL_PATTERNS: &[&str] = &[
    "chinese_chapter",
    "chinese_section",
    "chinese_comma",
    "chinese_paren",
    "arabic_dot",
    "decimal_2",
    "decimal_3",
    "arabic_paren",
    "arabic_half_paren",
    "arabic_bracket",
    "arabic_comma",
    "circled",
    "roman_upper_dot",
    "roman_lower_paren",
    "alpha_upper_paren",
    "alpha_lower_half_paren",
    "section_word",
    "chapter_word",
];

// Patterns without a small counter cap, allowed at the top level.
const TOP_PATTERNS: &[&str] = &[
    "chinese_chapter",
    "chinese_section",
    "chinese_comma",
    "arabic_dot",
    "roman_upper_dot",
    "section_word",
    "chapter_word",
];

#[derive(Debug, Clone)]
struct LevelStyle {
    pattern: usize,
    format: FormatAttrs,
}

struct Generator<'a> {
    cfg: &'a CorpusConfig,
    lib: &'a PatternLibrary,
    rng: ChaCha8Rng,
    common: Vec<String>,
}

fn pseudo_word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "st", "pl", "gr", "sh"];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou", "ea"];
    const CODAS: &[&str] = &["", "", "n", "r", "s", "l", "x", "m"];
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(rng).unwrap());
        w.push_str(VOWELS.choose(rng).unwrap());
    }
    w.push_str(CODAS.choose(rng).unwrap());
    w
}

fn distinct_words(rng: &mut ChaCha8Rng, n: usize, syllables: std::ops::RangeInclusive<usize>, taken: &mut HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let s = rng.gen_range(syllables.clone());
        let w = pseudo_word(rng, s);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

impl<'a> Generator<'a> {
    fn new(cfg: &'a CorpusConfig, lib: &'a PatternLibrary, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut taken = HashSet::new();
        let common = distinct_words(&mut rng, 400, 1..=2, &mut taken);
        Generator { cfg, lib, rng, common }
    }

    fn ladder(&mut self, levels: usize) -> Vec<LevelStyle> {
        let rng = &mut self.rng;
        let top = *TOP_PATTERNS.choose(rng).unwrap();
        let mut names: Vec<&str> = LEVEL_PATTERNS.iter().copied().filter(|&n| n != top).collect();
        names.shuffle(rng);
        names.insert(0, top);
        names.truncate(levels);
        while names.len() < levels {
            names.push("arabic_paren");
        }
        if levels >= 3 && rng.gen_bool(self.cfg.pattern_reuse_prob) {
            let hi = rng.gen_range(0..levels - 2);
            let lo = rng.gen_range(hi + 2..levels);
            names[lo] = names[hi];
        }
        let top_size = [14.0, 15.0, 16.0, 18.0][rng.gen_range(0..4)];
        let step = [0.5, 1.0, 1.5][rng.gen_range(0..3)];
        let bold_levels = rng.gen_range(2..=levels.max(2));
        let indent_step = [0.0, 1.0, 2.0][rng.gen_range(0..3)];
        let heading_family = rng.gen_range(0..3);
        let top_centered = rng.gen_bool(0.5);
        let italic_level = rng.gen_bool(0.3).then(|| rng.gen_range(1..=levels));
        (0..levels)
            .map(|l| LevelStyle {
                pattern: self.lib.id_of(names[l]).expect("ladder pattern exists"),
                format: FormatAttrs {
                    font_family_id: if l < 2 { heading_family } else { 0 },
                    font_size: (top_size - step * l as f64).max(BODY_FONT_SIZE),
                    font_color_id: if l == 0 { 1 } else { 0 },
                    bold: l < bold_levels,
                    italic: italic_level == Some(l + 1),
                    centered: l == 0 && top_centered,
                    indent: indent_step * l as f64,
                },
            })
            .collect()
    }

    fn noisy(&mut self, mut f: FormatAttrs) -> FormatAttrs {
        if self.rng.gen_bool(self.cfg.format_noise) {
            match self.rng.gen_range(0..3) {
                0 => f.bold = !f.bold,
                1 => f.font_size += [-0.5, 0.5][self.rng.gen_range(0..2)],
                _ => f.indent += 1.0,
            }
            f.font_size = f.font_size.max(1.0);
        }
        f
    }

    /// Heading levels (1-based) in reading order.
    fn heading_levels(
        &mut self,
        n_headings: usize,
        max_level: usize,
        counters_ok: &dyn Fn(usize, u32) -> bool,
    ) -> Result<Vec<usize>> {
        let cfg = self.cfg;
        let mut levels = Vec::with_capacity(n_headings);
        let mut counters = vec![0u32; max_level + 1];
        let mut cur = 0usize;
        let mut reached = 0usize;
        for k in 0..n_headings {
            let remaining = n_headings - k;
            let r: f64 = self.rng.gen();
            let mut next = if cur == 0 {
                1
            } else if remaining <= cfg.min_heading_depth.saturating_sub(reached) && cur < max_level {
                cur + 1
            } else if r < cfg.descend_prob && cur < max_level {
                cur + 1
            } else if r < cfg.descend_prob + cfg.ascend_prob && cur > 1 {
                let mut up = 1;
                while up < cur - 1 && self.rng.gen_bool(0.35) {
                    up += 1;
                }
                cur - up
            } else {
                cur
            };
            // counter caps: go deeper instead, or climb until a level has room
            if !counters_ok(next, counters[next] + 1) {
                let deeper = (cur < max_level).then_some(cur + 1);
                next = deeper
                    .into_iter()
                    .chain((1..=cur.max(1)).rev())
                    .find(|&l| counters_ok(l, counters[l] + 1))
                    .ok_or_else(|| Error::Config("numbering patterns ran out of counters".into()))?;
            }
            counters[next] += 1;
            for c in counters.iter_mut().skip(next + 1) {
                *c = 0;
            }
            levels.push(next);
            reached = reached.max(next);
            cur = next;
        }
        Ok(levels)
    }

    fn body_text(&mut self, topics: &[&[String]]) -> String {
        let n = self.rng.gen_range(self.cfg.min_body_words..=self.cfg.max_body_words);
        let mut words = Vec::with_capacity(n);
        for _ in 0..n {
            let r: f64 = self.rng.gen();
            let w = match topics.split_last() {
                Some((parent, _)) if r < 0.12 => parent.choose(&mut self.rng).unwrap(),
                Some((_, outer)) if r < 0.17 && !outer.is_empty() => {
                    outer.choose(&mut self.rng).unwrap().choose(&mut self.rng).unwrap()
                }
                _ => {
                    // skewed toward the front of the common pool
                    let i = (self.rng.gen::<f64>().powi(2) * self.common.len() as f64) as usize;
                    &self.common[i.min(self.common.len() - 1)]
                }
            };
            words.push(w.clone());
        }
        let mut s = words.join(" ");
        if let Some(first) = s.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
        s.push('.');
        s
    }

    fn body_object(&mut self, id: usize, topics: &[&[String]], body_indent: f64) -> PhysicalObject {
        let r: f64 = self.rng.gen();
        let kind = if r < self.cfg.non_paragraph_ratio * 0.6 {
            ObjectKind::Table
        } else if r < self.cfg.non_paragraph_ratio * 0.85 {
            ObjectKind::Figure
        } else if r < self.cfg.non_paragraph_ratio {
            ObjectKind::Chart
        } else {
            ObjectKind::Paragraph
        };
        let mut text = self.body_text(topics);
        if kind != ObjectKind::Paragraph {
            text.truncate(text.find(' ').map_or(text.len(), |i| (i + 40).min(text.len())));
            while !text.is_char_boundary(text.len()) {
                text.pop();
            }
        }
        PhysicalObject {
            id,
            kind,
            text,
            format: FormatAttrs {
                indent: body_indent,
                ..FormatAttrs::default()
            },
            is_heading: Some(false),
        }
    }

    fn prefix(&self, style: &LevelStyle, counters: &[u32], level: usize) -> String {
        let name = &self.lib.def(style.pattern).unwrap().name;
        let c = counters[level];
        match name.as_str() {
            "decimal_2" => format!("{}.{}", counters[level - 1].max(1), c),
            "decimal_3" => format!(
                "{}.{}.{}",
                counters[level.saturating_sub(2)].max(1),
                counters[level - 1].max(1),
                c
            ),
            _ => self.lib.render(style.pattern, c).expect("counter within pattern range"),
        }
    }

    fn document(&mut self, doc_id: String) -> Result<(Document, HierarchyTree)> {
        let cfg = self.cfg;
        let n = self.rng.gen_range(cfg.min_objects..=cfg.max_objects);
        let jitter = self.rng.gen_range(0.85..1.15);
        let n_headings = ((n as f64 * cfg.heading_ratio * jitter).round() as usize).clamp(cfg.min_heading_depth, n / 2);
        let max_level = cfg.max_depth - 1;
        let ladder = self.ladder(max_level);
        let lib = self.lib;
        let caps: Vec<usize> = ladder.iter().map(|s| s.pattern).collect();
        let ok = |level: usize, c: u32| level >= 1 && lib.render(caps[level - 1], c).is_some();
        let levels = self.heading_levels(n_headings, max_level, &ok)?;

        // body objects per heading: leaves of the heading tree need at least one
        let has_sub: Vec<bool> = (0..n_headings)
            .map(|k| levels.get(k + 1).is_some_and(|&next| next > levels[k]))
            .collect();
        let preamble = self.rng.gen_range(0..=3).min(n - n_headings);
        let mut body = vec![0usize; n_headings];
        let mut left = n - n_headings - preamble;
        for k in 0..n_headings {
            if !has_sub[k] && left > 0 {
                body[k] = 1;
                left -= 1;
            }
        }
        let leaf_heads: Vec<usize> = (0..n_headings).filter(|&k| !has_sub[k]).collect();
        while left > 0 {
            let k = if self.rng.gen_bool(0.85) && !leaf_heads.is_empty() {
                *leaf_heads.choose(&mut self.rng).unwrap()
            } else {
                self.rng.gen_range(0..n_headings)
            };
            body[k] += 1;
            left -= 1;
        }

        let mut taken: HashSet<String> = self.common.iter().cloned().collect();
        let body_indent = [0.0, 2.0][self.rng.gen_range(0..2)];
        let mut objects = Vec::with_capacity(n);
        let mut parents = Vec::with_capacity(n);
        for _ in 0..preamble {
            let o = self.body_object(objects.len(), &[], body_indent);
            objects.push(o);
            parents.push(NodeRef::Root);
        }
        // stack of (object id, keywords) for open headings, index = level - 1
        let mut stack: Vec<(usize, Vec<String>)> = Vec::new();
        let mut counters = vec![0u32; max_level + 1];
        let mut used_keywords: Vec<String> = Vec::new();
        for k in 0..n_headings {
            let level = levels[k];
            stack.truncate(level - 1);
            counters[level] += 1;
            for c in counters.iter_mut().skip(level + 1) {
                *c = 0;
            }
            let style = ladder[level - 1].clone();
            let n_kw = self.rng.gen_range(2..=3);
            let mut keywords = distinct_words(&mut self.rng, n_kw, 2..=3, &mut taken);
            if !used_keywords.is_empty() && self.rng.gen_bool(cfg.keyword_reuse_prob) {
                let k = self.rng.gen_range(0..used_keywords.len());
                keywords[n_kw - 1] = used_keywords[k].clone();
            }
            used_keywords.extend(keywords.iter().cloned());
            let mut title = keywords.clone();
            if let Some(first) = title.first_mut() {
                if let Some(c) = first.get_mut(0..1) {
                    c.make_ascii_uppercase();
                }
            }
            let text = format!("{} {}", self.prefix(&style, &counters, level), title.join(" "));
            let id = objects.len();
            let format = self.noisy(style.format);
            objects.push(PhysicalObject {
                id,
                kind: ObjectKind::Paragraph,
                text,
                format,
                is_heading: Some(true),
            });
            parents.push(stack.last().map_or(NodeRef::Root, |(p, _)| NodeRef::Obj(*p)));
            stack.push((id, keywords));
            let topics: Vec<&[String]> = stack.iter().map(|(_, kw)| kw.as_slice()).collect();
            for _ in 0..body[k] {
                let o = self.body_object(objects.len(), &topics, body_indent);
                objects.push(o);
                parents.push(NodeRef::Obj(id));
            }
        }
        let doc = Document::new(doc_id, objects)?;
        let tree = HierarchyTree::from_parents(&parents)?;
        Ok((doc, tree))
    }
}

/// Generates `cfg.n_docs` documents with gold trees; deterministic under `cfg.seed`.
pub fn generate(cfg: &CorpusConfig) -> Result<Vec<(Document, HierarchyTree)>> {
    cfg.validate()?;
    let lib = PatternLibrary::default();
    (0..cfg.n_docs)
        .into_par_iter()
        .map(|i| Generator::new(cfg, &lib, doc_seed(cfg.seed, i)).document(format!("doc{i:04}")))
        .collect()
}

/// Heading text with its numbering prefix removed, tokenized.
pub fn heading_keywords(text: &str, patterns: &PatternLibrary) -> Vec<String> {
    tokenize(patterns.strip_prefix(text))
}

/// Queries drawn from heading keywords; the relevant passages of a query are
/// the passages under its source heading. Deterministic under `seed`.
pub fn generate_retrieval_labels(
    corpus: &[(Document, HierarchyTree)],
    n_queries: usize,
    seed: u64,
) -> (Vec<Query>, Vec<Qrel>) {
    let lib = PatternLibrary::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queries = Vec::with_capacity(n_queries);
    let mut qrels = Vec::new();
    let candidates: Vec<(usize, usize)> = corpus
        .iter()
        .enumerate()
        .flat_map(|(d, (doc, tree))| {
            doc.objects
                .iter()
                .filter(move |o| o.is_heading == Some(true) && !tree.is_leaf(NodeRef::Obj(o.id)))
                .map(move |o| (d, o.id))
        })
        .collect();
    if candidates.is_empty() {
        return (queries, qrels);
    }
    let mut used = BTreeSet::new();
    while queries.len() < n_queries && used.len() < candidates.len() {
        let (d, h) = candidates[rng.gen_range(0..candidates.len())];
        if !used.insert((d, h)) {
            continue;
        }
        let (doc, tree) = &corpus[d];
        let mut kw = heading_keywords(&doc.objects[h].text, &lib);
        if kw.is_empty() {
            continue;
        }
        kw.shuffle(&mut rng);
        kw.truncate(rng.gen_range(1..=2));
        let query_id = format!("q{:04}", queries.len());
        for p in passages(doc) {
            if tree.is_ancestor(NodeRef::Obj(h), p) {
                qrels.push(Qrel {
                    query_id: query_id.clone(),
                    doc_id: doc.doc_id.clone(),
                    passage_id: p,
                });
            }
        }
        queries.push(Query {
            query_id,
            doc_id: doc.doc_id.clone(),
            terms: kw,
        });
    }
    (queries, qrels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusConfig {
        CorpusConfig {
            n_docs: 6,
            min_objects: 60,
            max_objects: 120,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn headings_are_internal_nodes() {
        for (doc, tree) in generate(&small()).unwrap() {
            tree.validate().unwrap();
            for o in &doc.objects {
                let internal = !tree.is_leaf(NodeRef::Obj(o.id));
                assert_eq!(o.is_heading == Some(true), internal, "{} object {}", doc.doc_id, o.id);
            }
        }
    }

    #[test]
    fn heading_prefixes_classify_with_counters() {
        let lib = PatternLibrary::default();
        for (doc, _) in generate(&small()).unwrap() {
            for o in doc.objects.iter().filter(|o| o.is_heading == Some(true)) {
                let m = lib.classify(&o.text).unwrap_or_else(|| panic!("{}", o.text));
                assert!(m.counter.is_some(), "{}", o.text);
            }
        }
    }

    #[test]
    fn infeasible_configs() {
        let bad = [
            CorpusConfig { max_depth: 1, ..small() },
            CorpusConfig { max_depth: 12, ..small() },
            CorpusConfig { min_heading_depth: 8, max_depth: 8, ..small() },
            CorpusConfig { min_objects: 10, max_objects: 5, ..small() },
            CorpusConfig { heading_ratio: 0.0, ..small() },
            CorpusConfig { descend_prob: 0.8, ascend_prob: 0.5, ..small() },
        ];
        for cfg in bad {
            assert!(generate(&cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn toml_round_trip() {
        let cfg = CorpusConfig::from_toml("n_docs = 3\nseed = 5\n").unwrap();
        assert_eq!(cfg.n_docs, 3);
        assert_eq!(cfg.max_depth, 8);
        assert!(CorpusConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn keywords_strip_prefix() {
        let lib = PatternLibrary::default();
        assert_eq!(heading_keywords("2.3 Brado tuma", &lib), vec!["brado", "tuma"]);
        assert_eq!(heading_keywords("第十二章 Brado", &lib), vec!["brado"]);
        assert_eq!(heading_keywords("(iv) Brado", &lib), vec!["brado"]);
        assert_eq!(heading_keywords("Section 4 Brado", &lib), vec!["brado"]);
        assert_eq!(heading_keywords("Plain words", &lib), vec!["plain", "words"]);
    }

    #[test]
    fn labels_sit_under_source_heading() {
        let corpus = generate(&small()).unwrap();
        let (queries, qrels) = generate_retrieval_labels(&corpus, 20, 3);
        assert_eq!(queries.len(), 20);
        assert!(!qrels.is_empty());
        let (q0, _) = generate_retrieval_labels(&corpus, 0, 3);
        assert!(q0.is_empty());
    }
}
