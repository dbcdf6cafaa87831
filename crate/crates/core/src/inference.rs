//! Tree construction for new documents.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::construction::{Mode, StepView};
use crate::error::{Error, Result};
use crate::hierarchy::{Document, HierarchyTree, InsertionPosition, NodeRef};
use crate::scoring::Scorer;

/// Scores are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const SCORE_EPS: f64 = 1e-9;

/// Order in which insertion positions are inquired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TraversalOrder {
    TraversalAll,
    RootToLeaf,
    LeafToRoot,
}

impl TraversalOrder {
    pub const ALL: [TraversalOrder; 3] = [
        TraversalOrder::TraversalAll,
        TraversalOrder::RootToLeaf,
        TraversalOrder::LeafToRoot,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            TraversalOrder::TraversalAll => "all",
            TraversalOrder::RootToLeaf => "r2l",
            TraversalOrder::LeafToRoot => "l2r",
        }
    }
}

impl fmt::Display for TraversalOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for TraversalOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(TraversalOrder::TraversalAll),
            "r2l" => Ok(TraversalOrder::RootToLeaf),
            "l2r" => Ok(TraversalOrder::LeafToRoot),
            other => Err(Error::Config(format!("unknown traversal order {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    /// Index into the position list.
    pub index: usize,
    pub score: f64,
    pub inquiries: usize,
}

fn checked(score: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&score) {
        Ok(score)
    } else {
        Err(Error::Scorer(format!("score {score} outside [0, 1]")))
    }
}

/// Highest score, ties going to the deepest position.
fn argmax(scores: &[(usize, f64)]) -> (usize, f64) {
    let mut best = scores[0];
    for &(i, s) in &scores[1..] {
        if s > best.1 || (s == best.1 && i > best.0) {
            best = (i, s);
        }
    }
    best
}

/// Picks one of `n` positions (index 0 = root) by inquiring `score` in the
/// given order. Early-stopping orders return the first score above 0.5 and
/// fall back to the overall argmax when nothing clears it.
pub fn select_position<F>(n: usize, order: TraversalOrder, mut score: F) -> Result<Selection>
where
    F: FnMut(usize) -> Result<f64>,
{
    if n == 0 {
        return Err(Error::Config("no insertion positions".into()));
    }
    let scan: Box<dyn Iterator<Item = usize>> = match order {
        TraversalOrder::TraversalAll | TraversalOrder::RootToLeaf => Box::new(0..n),
        TraversalOrder::LeafToRoot => Box::new((0..n).rev()),
    };
    let early = order != TraversalOrder::TraversalAll;
    let mut seen = Vec::with_capacity(n);
    for i in scan {
        let s = checked(score(i)?)?;
        seen.push((i, s));
        if early && s > 0.5 {
            return Ok(Selection {
                index: i,
                score: s,
                inquiries: seen.len(),
            });
        }
    }
    let (index, score) = argmax(&seen);
    Ok(Selection {
        index,
        score,
        inquiries: seen.len(),
    })
}

/// How one object was placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeChoice {
    pub node: usize,
    pub parent: NodeRef,
    /// Depth of the chosen position (root = 0).
    pub depth: usize,
    /// Scorer output at the chosen position; `None` for rule-attached objects.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceResult {
    #[serde(serialize_with = "ser_tree")]
    pub tree: HierarchyTree,
    /// Number of scorer calls.
    pub inquiries: usize,
    pub per_node_choice: Vec<NodeChoice>,
    pub joint_log_prob: f64,
}

fn ser_tree<S: serde::Serializer>(t: &HierarchyTree, s: S) -> std::result::Result<S::Ok, S::Error> {
    t.parents().serialize(s)
}

fn log_score(s: f64) -> f64 {
    s.clamp(SCORE_EPS, 1.0 - SCORE_EPS).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub order: TraversalOrder,
    pub mode: Mode,
    /// Beam size; 1 is greedy decoding.
    pub beam: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            order: TraversalOrder::RootToLeaf,
            mode: Mode::TwoStep,
            beam: 1,
        }
    }
}

fn rule_choice(view: &StepView<'_>, tree: &mut HierarchyTree, i: usize) -> Result<NodeChoice> {
    let parent = view.rule_parent(tree);
    tree.attach(parent, i)?;
    let depth = tree.rightmost_branch().len() - 2;
    Ok(NodeChoice {
        node: i,
        parent,
        depth,
        score: None,
    })
}

/// Greedy construction over an arbitrary step view.
pub fn run_greedy<S: Scorer + ?Sized>(
    view: StepView<'_>,
    scorer: &S,
    order: TraversalOrder,
) -> Result<InferenceResult> {
    let doc = view.doc;
    let mut tree = HierarchyTree::new();
    let mut choices = Vec::with_capacity(doc.len());
    let mut inquiries = 0;
    let mut joint = 0.0;
    for i in 0..doc.len() {
        if !view.is_scored(i) {
            choices.push(rule_choice(&view, &mut tree, i)?);
            continue;
        }
        let positions = view.positions(&tree);
        let branch: Vec<NodeRef> = positions.iter().map(|p| p.parent).collect();
        let sel = select_position(positions.len(), order, |j| {
            scorer.score(&view.context(&tree, &branch, &positions[j], i))
        })?;
        inquiries += sel.inquiries;
        joint += log_score(sel.score);
        let pos = positions[sel.index];
        tree.insert(pos, i)?;
        choices.push(NodeChoice {
            node: i,
            parent: pos.parent,
            depth: pos.depth,
            score: Some(sel.score),
        });
    }
    Ok(InferenceResult {
        tree,
        inquiries,
        per_node_choice: choices,
        joint_log_prob: joint,
    })
}

/// Greedy construction. Two-step mode takes heading flags from the document's
/// annotations; use [`build_two_step`] to supply classifier output instead.
pub fn infer_greedy<S: Scorer + ?Sized>(
    doc: &Document,
    scorer: &S,
    order: TraversalOrder,
    mode: Mode,
    window: usize,
) -> Result<InferenceResult> {
    match mode {
        Mode::OneStep => run_greedy(StepView::one_step(doc, window), scorer, order),
        Mode::TwoStep => build_two_step(doc, &doc.heading_flags(), scorer, order, window),
    }
}

/// Two-step construction: the scorer places headings only, every other object
/// becomes the last child of the nearest preceding heading (or the root).
pub fn build_two_step<S: Scorer + ?Sized>(
    doc: &Document,
    heading_flags: &[bool],
    scorer: &S,
    order: TraversalOrder,
    window: usize,
) -> Result<InferenceResult> {
    if heading_flags.len() != doc.len() {
        return Err(Error::Mismatch(format!(
            "{} heading flags for {} objects",
            heading_flags.len(),
            doc.len()
        )));
    }
    run_greedy(StepView::two_step(doc, heading_flags, window), scorer, order)
}

#[derive(Debug, Clone)]
struct BeamCandidate {
    tree: HierarchyTree,
    joint_log_prob: f64,
    choices: Vec<NodeChoice>,
}

/// Beam search over insertion sequences. Positions are scored exhaustively,
/// each candidate expands into its `beam` best positions, and the pool is cut
/// back to the `beam` highest joint log-probabilities (stable on ties).
pub fn run_beam<S: Scorer + ?Sized>(view: StepView<'_>, scorer: &S, beam: usize) -> Result<InferenceResult> {
    if beam == 0 {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    let doc = view.doc;
    let mut inquiries = 0;
    let mut pool = vec![BeamCandidate {
        tree: HierarchyTree::new(),
        joint_log_prob: 0.0,
        choices: Vec::with_capacity(doc.len()),
    }];
    for i in 0..doc.len() {
        if !view.is_scored(i) {
            for cand in &mut pool {
                let choice = rule_choice(&view, &mut cand.tree, i)?;
                cand.choices.push(choice);
            }
            continue;
        }
        let mut next = Vec::with_capacity(pool.len() * beam);
        for cand in &pool {
            let positions = view.positions(&cand.tree);
            let branch: Vec<NodeRef> = positions.iter().map(|p| p.parent).collect();
            let mut scored: Vec<(usize, f64)> = Vec::with_capacity(positions.len());
            for (j, pos) in positions.iter().enumerate() {
                let s = checked(scorer.score(&view.context(&cand.tree, &branch, pos, i))?)?;
                scored.push((j, s));
            }
            inquiries += positions.len();
            // best first; equal scores prefer the deeper position
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.0.cmp(&a.0)));
            for &(j, s) in scored.iter().take(beam) {
                next.push(expand(cand, positions[j], i, s)?);
            }
        }
        next.sort_by(|a, b| b.joint_log_prob.total_cmp(&a.joint_log_prob));
        next.truncate(beam);
        pool = next;
    }
    let best = pool.into_iter().next().expect("beam is never empty");
    Ok(InferenceResult {
        tree: best.tree,
        inquiries,
        per_node_choice: best.choices,
        joint_log_prob: best.joint_log_prob,
    })
}

fn expand(cand: &BeamCandidate, pos: InsertionPosition, i: usize, score: f64) -> Result<BeamCandidate> {
    let tree = cand.tree.insert_at(pos, i)?;
    let mut choices = cand.choices.clone();
    choices.push(NodeChoice {
        node: i,
        parent: pos.parent,
        depth: pos.depth,
        score: Some(score),
    });
    Ok(BeamCandidate {
        tree,
        joint_log_prob: cand.joint_log_prob + log_score(score),
        choices,
    })
}

/// One-step beam search.
pub fn infer_beam<S: Scorer + ?Sized>(doc: &Document, scorer: &S, beam: usize, window: usize) -> Result<InferenceResult> {
    run_beam(StepView::one_step(doc, window), scorer, beam)
}

/// Runs the configured decoder. `heading_flags` is required in two-step mode.
/// With `beam > 1` positions are always scored exhaustively and `order` is unused.
pub fn infer<S: Scorer + ?Sized>(
    doc: &Document,
    scorer: &S,
    cfg: &InferenceConfig,
    heading_flags: Option<&[bool]>,
    window: usize,
) -> Result<InferenceResult> {
    let view = match cfg.mode {
        Mode::OneStep => StepView::one_step(doc, window),
        Mode::TwoStep => {
            let flags = heading_flags
                .ok_or_else(|| Error::Config("two-step inference needs heading flags".into()))?;
            if flags.len() != doc.len() {
                return Err(Error::Mismatch(format!(
                    "{} heading flags for {} objects",
                    flags.len(),
                    doc.len()
                )));
            }
            StepView::two_step(doc, flags, window)
        }
    };
    if cfg.beam > 1 {
        run_beam(view, scorer, cfg.beam)
    } else {
        run_greedy(view, scorer, cfg.order)
    }
}
