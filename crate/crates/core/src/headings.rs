//! Heading / non-heading classification for two-step construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::text_len_bucket;
use crate::hierarchy::{Document, ObjectKind, PhysicalObject};
use crate::linear::{train_logistic, LogisticConfig, LogisticModel, TrainReport};
use crate::patterns::PatternLibrary;

pub trait HeadingClassifier: Send + Sync {
    /// One flag per object of `doc`.
    fn classify(&self, doc: &Document) -> Vec<bool>;
}

/// Uses the document's own `is_heading` annotations.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnnotatedHeadings;

impl HeadingClassifier for AnnotatedHeadings {
    fn classify(&self, doc: &Document) -> Vec<bool> {
        doc.heading_flags()
    }
}

/// Median font size of the document's paragraphs; the body-text size.
pub fn body_font_size(doc: &Document) -> f64 {
    let mut sizes: Vec<f64> = doc
        .objects
        .iter()
        .filter(|o| o.kind == ObjectKind::Paragraph)
        .map(|o| o.format.font_size)
        .collect();
    if sizes.is_empty() {
        return doc.objects[0].format.font_size;
    }
    sizes.sort_by(f64::total_cmp);
    sizes[sizes.len() / 2]
}

/// Hand-written rules: only paragraphs can be headings; a numbered bold
/// paragraph, or a short paragraph set noticeably larger than body text, is one.
#[derive(Debug, Clone, Default)]
pub struct RuleHeadingClassifier {
    pub patterns: PatternLibrary,
}

impl RuleHeadingClassifier {
    fn is_heading(&self, obj: &PhysicalObject, body: f64) -> bool {
        if obj.kind != ObjectKind::Paragraph {
            return false;
        }
        let numbered = self
            .patterns
            .classify(&obj.text)
            .is_some_and(|m| m.counter.is_some());
        let large = obj.format.font_size >= body * 1.15 && obj.text.chars().count() <= 80;
        (numbered && obj.format.bold) || large
    }
}

impl HeadingClassifier for RuleHeadingClassifier {
    fn classify(&self, doc: &Document) -> Vec<bool> {
        let body = body_font_size(doc);
        doc.objects.iter().map(|o| self.is_heading(o, body)).collect()
    }
}

pub const HEADING_FEATURE_NAMES: &[&str] = &[
    "size_vs_body",
    "bold",
    "italic",
    "centered",
    "indent",
    "has_pattern",
    "has_counter",
    "counter_is_one",
    "text_len_bucket",
    "ends_with_period",
    "kind_paragraph",
    "kind_table",
    "kind_figure",
    "kind_chart",
    "has_prev",
    "prev_size_ratio",
    "prev_bold",
    "prev_same_format",
    "has_next",
    "next_size_ratio",
    "next_bold",
    "next_same_format",
    "next_indent_delta",
];

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Features of object `i` together with its two neighbours.
pub fn heading_features(doc: &Document, i: usize, body: f64, patterns: &PatternLibrary) -> Vec<f64> {
    let o = &doc.objects[i];
    let f = &o.format;
    let pat = patterns.classify(&o.text);
    let counter = pat.and_then(|m| m.counter);
    let mut v = vec![
        (f.font_size / body).ln().clamp(-3.0, 3.0),
        flag(f.bold),
        flag(f.italic),
        flag(f.centered),
        f.indent.min(20.0),
        flag(pat.is_some()),
        flag(counter.is_some()),
        flag(counter == Some(1)),
        text_len_bucket(&o.text),
        flag(o.text.trim_end().ends_with(['.', '。'])),
    ];
    v.extend(ObjectKind::ALL.iter().map(|k| flag(o.kind == *k)));
    let neighbour = |n: Option<&PhysicalObject>, indent: bool| -> Vec<f64> {
        match n {
            None => vec![0.0; if indent { 5 } else { 4 }],
            Some(n) => {
                let mut out = vec![
                    1.0,
                    (n.format.font_size / f.font_size).ln().clamp(-3.0, 3.0),
                    flag(n.format.bold),
                    flag(n.format.same_as(f)),
                ];
                if indent {
                    out.push((n.format.indent - f.indent).clamp(-8.0, 8.0));
                }
                out
            }
        }
    };
    v.extend(neighbour(i.checked_sub(1).map(|p| &doc.objects[p]), false));
    v.extend(neighbour(doc.objects.get(i + 1), true));
    v
}

/// Logistic heading classifier; non-paragraph objects are never headings.
#[derive(Debug, Clone)]
pub struct LogisticHeadingClassifier {
    pub model: LogisticModel,
    pub patterns: PatternLibrary,
}

impl LogisticHeadingClassifier {
    pub fn probabilities(&self, doc: &Document) -> Vec<f64> {
        let body = body_font_size(doc);
        (0..doc.len())
            .map(|i| {
                if doc.objects[i].kind != ObjectKind::Paragraph {
                    0.0
                } else {
                    self.model.predict(&heading_features(doc, i, body, &self.patterns))
                }
            })
            .collect()
    }

    pub fn train(
        docs: &[&Document],
        patterns: PatternLibrary,
        cfg: &LogisticConfig,
    ) -> Result<(Self, TrainReport)> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for doc in docs {
            if !doc.has_heading_annotations() {
                return Err(Error::Training(format!(
                    "document {} lacks heading annotations",
                    doc.doc_id
                )));
            }
            let body = body_font_size(doc);
            for (i, o) in doc.objects.iter().enumerate() {
                if o.kind != ObjectKind::Paragraph {
                    continue;
                }
                x.push(heading_features(doc, i, body, &patterns));
                y.push(o.is_heading == Some(true));
            }
        }
        let (model, report) = train_logistic(&x, &y, cfg)?;
        Ok((LogisticHeadingClassifier { model, patterns }, report))
    }

    pub fn to_file(&self) -> HeadingModelFile {
        HeadingModelFile {
            weights: self.model.weights.clone(),
            bias: self.model.bias,
            feature_names: HEADING_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn from_file(file: &HeadingModelFile, patterns: PatternLibrary) -> Result<Self> {
        if file.feature_names.iter().map(String::as_str).ne(HEADING_FEATURE_NAMES.iter().copied())
            || file.weights.len() != HEADING_FEATURE_NAMES.len()
        {
            return Err(Error::Model("heading model features do not match this build".into()));
        }
        Ok(LogisticHeadingClassifier {
            model: LogisticModel {
                weights: file.weights.clone(),
                bias: file.bias,
            },
            patterns,
        })
    }
}

impl HeadingClassifier for LogisticHeadingClassifier {
    fn classify(&self, doc: &Document) -> Vec<bool> {
        self.probabilities(doc).into_iter().map(|p| p > 0.5).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadingModelFile {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_names: Vec<String>,
}

/// Wraps a classifier and flips each output flag with probability `flip_rate`.
/// The flips are seeded per document id, so results are reproducible.
#[derive(Debug, Clone)]
pub struct NoisyHeadings<C> {
    pub inner: C,
    pub flip_rate: f64,
    pub seed: u64,
}

impl<C: HeadingClassifier> HeadingClassifier for NoisyHeadings<C> {
    fn classify(&self, doc: &Document) -> Vec<bool> {
        let doc_hash = doc
            .doc_id
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ doc_hash);
        self.inner
            .classify(doc)
            .into_iter()
            .map(|f| if rng.gen_bool(self.flip_rate) { !f } else { f })
            .collect()
    }
}

/// Precision, recall and F1 of predicted flags against annotations.
pub fn heading_f1(pred: &[bool], gold: &[bool]) -> (f64, f64, f64) {
    let tp = pred.iter().zip(gold).filter(|(p, g)| **p && **g).count() as f64;
    let fp = pred.iter().zip(gold).filter(|(p, g)| **p && !**g).count() as f64;
    let fn_ = pred.iter().zip(gold).filter(|(p, g)| !**p && **g).count() as f64;
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f1)
}
