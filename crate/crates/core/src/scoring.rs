//! Put-or-skip scoring: the scorer contract, training tuples, and the two
//! reference scorers (gold oracle and feature-based logistic model).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construction::{Mode, StepView, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::features::{extract_features, FEATURE_NAMES};
use crate::hierarchy::{Document, HierarchyTree, InsertionPosition, NodeRef, PhysicalObject};
use crate::linear::{roc_auc, train_logistic, LogisticConfig, LogisticModel, TrainReport};
use crate::patterns::PatternLibrary;

/// Everything the scorer sees when asked whether `candidate` belongs at a position.
#[derive(Debug, Clone)]
pub struct ScoreContext<'a> {
    pub candidate: &'a PhysicalObject,
    /// `None` when the position is under the virtual root.
    pub parent: Option<&'a PhysicalObject>,
    pub parent_ref: NodeRef,
    /// Up to K preceding children of the parent, most recent last.
    pub siblings: Vec<&'a PhysicalObject>,
    pub position_depth: usize,
    /// Parents of all candidate positions for this step, root first.
    pub branch: &'a [NodeRef],
}

/// Estimates the probability that a candidate belongs at a position.
pub trait Scorer: Send + Sync {
    fn score(&self, ctx: &ScoreContext<'_>) -> Result<f64>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score(&self, ctx: &ScoreContext<'_>) -> Result<f64> {
        (**self).score(ctx)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn score(&self, ctx: &ScoreContext<'_>) -> Result<f64> {
        (**self).score(ctx)
    }
}

/// One training instance: a snapshot of a context by node id, plus its label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledTuple {
    pub candidate: usize,
    pub position: InsertionPosition,
    pub siblings: Vec<usize>,
    pub branch: Vec<NodeRef>,
    pub label: bool,
}

impl LabeledTuple {
    pub fn context<'a>(&'a self, doc: &'a Document) -> ScoreContext<'a> {
        ScoreContext {
            candidate: &doc.objects[self.candidate],
            parent: self.position.parent.obj().map(|p| &doc.objects[p]),
            parent_ref: self.position.parent,
            siblings: self.siblings.iter().map(|&s| &doc.objects[s]).collect(),
            position_depth: self.position.depth,
            branch: &self.branch,
        }
    }
}

/// Output of a (possibly corrupted) gold replay.
#[derive(Debug, Clone, Default)]
pub struct TupleReplay {
    pub tuples: Vec<LabeledTuple>,
    /// Objects deliberately placed at a wrong position.
    pub corrupted: Vec<usize>,
    /// Scored events that had more than one position.
    pub multi_choice_events: usize,
    /// The tree the replay ended with.
    pub tree: HierarchyTree,
}

/// Index of the position an ideal scorer picks: the gold parent when it is on
/// the branch, otherwise the deepest branch node that is a gold ancestor.
fn target_index(gold: &HierarchyTree, branch: &[NodeRef], candidate: usize) -> usize {
    let gold_parent = gold.parents()[candidate];
    if let Some(i) = branch.iter().position(|&b| b == gold_parent) {
        return i;
    }
    branch
        .iter()
        .rposition(|&b| gold.is_ancestor(b, candidate))
        .unwrap_or(0)
}

fn replay(
    view: StepView<'_>,
    gold: &HierarchyTree,
    error_rate: f64,
    seed: u64,
    strict: bool,
) -> Result<TupleReplay> {
    let doc = view.doc;
    if gold.len() != doc.len() {
        return Err(Error::Mismatch(format!(
            "document {} has {} objects, gold tree has {} nodes",
            doc.doc_id,
            doc.len(),
            gold.len()
        )));
    }
    if !(0.0..1.0).contains(&error_rate) {
        return Err(Error::Config(format!("error rate {error_rate} outside [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = TupleReplay::default();
    let mut tree = HierarchyTree::new();
    for i in 0..doc.len() {
        let gold_parent = gold.parents()[i];
        if !view.is_scored(i) {
            let parent = view.rule_parent(&tree);
            if strict && parent != gold_parent {
                return Err(Error::Mismatch(format!(
                    "document {}: heading flags put object {i} under {parent}, gold parent is {gold_parent}",
                    doc.doc_id
                )));
            }
            tree.attach(parent, i)?;
            continue;
        }
        let positions = view.positions(&tree);
        let branch: Vec<NodeRef> = positions.iter().map(|p| p.parent).collect();
        let gold_idx = branch.iter().position(|&b| b == gold_parent);
        if strict && gold_idx.is_none() {
            return Err(Error::Mismatch(format!(
                "document {}: gold parent {gold_parent} of object {i} is not an eligible position",
                doc.doc_id
            )));
        }
        for (j, pos) in positions.iter().enumerate() {
            let ctx = view.context(&tree, &branch, pos, i);
            out.tuples.push(LabeledTuple {
                candidate: i,
                position: *pos,
                siblings: ctx.siblings.iter().map(|s| s.id).collect(),
                branch: branch.clone(),
                label: Some(j) == gold_idx,
            });
        }
        let target = target_index(gold, &branch, i);
        let mut chosen = target;
        if positions.len() > 1 {
            out.multi_choice_events += 1;
            if error_rate > 0.0 && rng.gen_bool(error_rate) {
                let k = rng.gen_range(0..positions.len() - 1);
                chosen = if k >= target { k + 1 } else { k };
                out.corrupted.push(i);
            }
        }
        tree.insert(positions[chosen], i)?;
    }
    out.tree = tree;
    Ok(out)
}

/// Replays the gold tree in reading order and emits one tuple per
/// (object, candidate position), labelled 1 exactly at the gold parent.
pub fn generate_tuples(view: StepView<'_>, gold: &HierarchyTree) -> Result<Vec<LabeledTuple>> {
    replay(view, gold, 0.0, 0, true).map(|r| r.tuples)
}

/// Like [`generate_tuples`], but each scored object is, with probability
/// `error_rate`, placed uniformly at one of the wrong positions. Later tuples
/// are generated against the corrupted tree.
pub fn generate_error_tolerant_tuples(
    view: StepView<'_>,
    gold: &HierarchyTree,
    error_rate: f64,
    seed: u64,
) -> Result<TupleReplay> {
    replay(view, gold, error_rate, seed, false)
}

/// Scores 1.0 exactly at the position an ideal model would choose.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    gold: HierarchyTree,
}

impl OracleScorer {
    pub fn new(gold: &HierarchyTree) -> Self {
        OracleScorer { gold: gold.clone() }
    }
}

impl Scorer for OracleScorer {
    fn score(&self, ctx: &ScoreContext<'_>) -> Result<f64> {
        let cand = ctx.candidate.id;
        if cand >= self.gold.len() {
            return Err(Error::Scorer(format!("object {cand} not in gold tree")));
        }
        let target = ctx.branch[target_index(&self.gold, ctx.branch, cand)];
        Ok(if ctx.parent_ref == target { 1.0 } else { 0.0 })
    }
}

/// Logistic put-or-skip model over [`extract_features`].
#[derive(Debug, Clone)]
pub struct LinearScorer {
    pub model: LogisticModel,
    pub patterns: PatternLibrary,
    pub window: usize,
}

impl Scorer for LinearScorer {
    fn score(&self, ctx: &ScoreContext<'_>) -> Result<f64> {
        let v = extract_features(ctx, &self.patterns);
        Ok(self.model.predict(v.as_slice()))
    }
}

/// On-disk model: weights over named features, tied to a pattern library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_names: Vec<String>,
    pub pattern_library_hash: String,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading_model: Option<crate::headings::HeadingModelFile>,
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

impl LinearScorer {
    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            weights: self.model.weights.clone(),
            bias: self.model.bias,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            pattern_library_hash: self.patterns.hash(),
            window: self.window,
            heading_model: None,
        }
    }

    pub fn from_file(file: &ModelFile, patterns: PatternLibrary) -> Result<Self> {
        if file.feature_names.iter().map(String::as_str).ne(FEATURE_NAMES.iter().copied()) {
            return Err(Error::Model("feature names do not match this build".into()));
        }
        if file.weights.len() != FEATURE_NAMES.len() {
            return Err(Error::Model(format!(
                "expected {} weights, found {}",
                FEATURE_NAMES.len(),
                file.weights.len()
            )));
        }
        if file.pattern_library_hash != patterns.hash() {
            return Err(Error::Model(
                "model was trained with a different pattern library".into(),
            ));
        }
        Ok(LinearScorer {
            model: LogisticModel {
                weights: file.weights.clone(),
                bias: file.bias,
            },
            patterns,
            window: file.window,
        })
    }
}

/// Settings for building tuples and training the logistic scorer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScorerTraining {
    pub mode: TrainingMode,
    pub window: usize,
    pub error_rate: f64,
    pub seed: u64,
    pub logistic: LogisticConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingMode {
    OneStep,
    TwoStep,
}

impl From<TrainingMode> for Mode {
    fn from(m: TrainingMode) -> Mode {
        match m {
            TrainingMode::OneStep => Mode::OneStep,
            TrainingMode::TwoStep => Mode::TwoStep,
        }
    }
}

impl Default for ScorerTraining {
    fn default() -> Self {
        ScorerTraining {
            mode: TrainingMode::TwoStep,
            window: DEFAULT_WINDOW,
            error_rate: 0.0,
            seed: 7,
            logistic: LogisticConfig::default(),
        }
    }
}

/// Tuples for one document under the given training settings. Two-step
/// tuples use the document's heading annotations.
pub fn document_tuples(
    doc: &Document,
    gold: &HierarchyTree,
    cfg: &ScorerTraining,
    doc_seed: u64,
) -> Result<Vec<LabeledTuple>> {
    let flags = doc.heading_flags();
    let view = match cfg.mode {
        TrainingMode::OneStep => StepView::one_step(doc, cfg.window),
        TrainingMode::TwoStep => StepView::two_step(doc, &flags, cfg.window),
    };
    if cfg.error_rate > 0.0 {
        Ok(generate_error_tolerant_tuples(view, gold, cfg.error_rate, doc_seed)?.tuples)
    } else {
        generate_tuples(view, gold)
    }
}

/// Feature rows and labels for a set of tuples.
pub fn featurize(
    doc: &Document,
    tuples: &[LabeledTuple],
    patterns: &PatternLibrary,
) -> (Vec<Vec<f64>>, Vec<bool>) {
    tuples
        .iter()
        .map(|t| (extract_features(&t.context(doc), patterns).0, t.label))
        .unzip()
}

/// Fits the logistic scorer on pre-built tuples.
pub fn train_linear_scorer(
    data: &[(&Document, Vec<LabeledTuple>)],
    patterns: PatternLibrary,
    window: usize,
    cfg: &LogisticConfig,
) -> Result<(LinearScorer, TrainReport)> {
    let per_doc: Vec<(Vec<Vec<f64>>, Vec<bool>)> = data
        .par_iter()
        .map(|(doc, tuples)| featurize(doc, tuples, &patterns))
        .collect();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (xs, ys) in per_doc {
        x.extend(xs);
        y.extend(ys);
    }
    let (model, report) = train_logistic(&x, &y, cfg)?;
    Ok((
        LinearScorer {
            model,
            patterns,
            window,
        },
        report,
    ))
}

/// Builds tuples for every (document, gold) pair and trains the scorer.
/// Per-document seeds derive from `cfg.seed` and the document index.
pub fn train_from_corpus(
    corpus: &[(Document, HierarchyTree)],
    patterns: PatternLibrary,
    cfg: &ScorerTraining,
) -> Result<(LinearScorer, TrainReport)> {
    let data = corpus
        .par_iter()
        .enumerate()
        .map(|(k, (doc, gold))| {
            let seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64);
            document_tuples(doc, gold, cfg, seed).map(|t| (doc, t))
        })
        .collect::<Result<Vec<_>>>()?;
    train_linear_scorer(&data, patterns, cfg.window, &cfg.logistic)
}

/// Tuple-level ROC AUC of a scorer.
pub fn tuple_auc<S: Scorer>(scorer: &S, data: &[(&Document, Vec<LabeledTuple>)]) -> Result<Option<f64>> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (doc, tuples) in data {
        for t in tuples {
            scores.push(scorer.score(&t.context(doc))?);
            labels.push(t.label);
        }
    }
    Ok(roc_auc(&scores, &labels))
}

/// One line of the tuple audit dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TupleRecord {
    pub doc_id: String,
    pub event_index: usize,
    pub position_depth: usize,
    pub label: u8,
    pub features: Vec<f64>,
}

pub fn tuple_records(doc: &Document, tuples: &[LabeledTuple], patterns: &PatternLibrary) -> Vec<TupleRecord> {
    tuples
        .iter()
        .map(|t| TupleRecord {
            doc_id: doc.doc_id.clone(),
            event_index: t.candidate,
            position_depth: t.position.depth,
            label: t.label as u8,
            features: extract_features(&t.context(doc), patterns).0,
        })
        .collect()
}
