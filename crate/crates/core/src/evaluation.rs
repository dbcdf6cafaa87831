//! Path-based and depth-based correctness, per-level scores, and inquiry counts.
//!
//! A node is correct under the path metric only when its whole ancestor chain
//! matches the gold chain; the legacy metric only compares depths.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::construction::{Mode, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::hierarchy::{Document, HierarchyTree, NodeRef};
use crate::inference::{infer_greedy, TraversalOrder};
use crate::scoring::OracleScorer;

fn check_cover(pred: &HierarchyTree, gold: &HierarchyTree) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::Mismatch(format!(
            "predicted tree has {} nodes, gold has {}",
            pred.len(),
            gold.len()
        )));
    }
    Ok(())
}

/// True when the predicted path of `node` equals its gold path element-wise.
pub fn node_correct(pred: &HierarchyTree, gold: &HierarchyTree, node: usize) -> Result<bool> {
    check_cover(pred, gold)?;
    Ok(pred.path_to_root(node)? == gold.path_to_root(node)?)
}

/// True when `node` sits at the same depth in both trees.
pub fn legacy_depth_correct(pred: &HierarchyTree, gold: &HierarchyTree, node: usize) -> Result<bool> {
    check_cover(pred, gold)?;
    Ok(pred.depth(node)? == gold.depth(node)?)
}

/// Path correctness for every node in one pass. Because parents precede
/// children, a node is correct iff its parent matches and the parent is correct.
pub fn path_correct_all(pred: &HierarchyTree, gold: &HierarchyTree) -> Result<Vec<bool>> {
    check_cover(pred, gold)?;
    let mut out: Vec<bool> = Vec::with_capacity(gold.len());
    for (p, g) in pred.parents().iter().zip(gold.parents()) {
        let ok = p == g
            && match g {
                NodeRef::Root => true,
                NodeRef::Obj(j) => out[*j],
            };
        out.push(ok);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelCounts {
    pub tp: usize,
    /// Nodes predicted at this level.
    pub predicted: usize,
    /// Nodes at this level in the gold tree.
    pub gold: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl LevelCounts {
    pub fn scores(&self) -> LevelScores {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(self.tp, self.predicted);
        let recall = ratio(self.tp, self.gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        LevelScores {
            precision,
            recall,
            f1,
        }
    }
}

/// Raw tallies; add documents with [`EvalCounts::add`], then call [`EvalCounts::report`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub n_nodes: usize,
    pub path_correct: usize,
    pub depth_correct: usize,
    pub levels: BTreeMap<usize, LevelCounts>,
}

impl EvalCounts {
    pub fn add(&mut self, pred: &HierarchyTree, gold: &HierarchyTree) -> Result<()> {
        let correct = path_correct_all(pred, gold)?;
        let pd = pred.depths();
        let gd = gold.depths();
        for i in 0..gold.len() {
            self.n_nodes += 1;
            self.path_correct += correct[i] as usize;
            self.depth_correct += (pd[i] == gd[i]) as usize;
            self.levels.entry(pd[i]).or_default().predicted += 1;
            let g = self.levels.entry(gd[i]).or_default();
            g.gold += 1;
            g.tp += correct[i] as usize;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &EvalCounts) {
        self.n_nodes += other.n_nodes;
        self.path_correct += other.path_correct;
        self.depth_correct += other.depth_correct;
        for (k, c) in &other.levels {
            let e = self.levels.entry(*k).or_default();
            e.tp += c.tp;
            e.predicted += c.predicted;
            e.gold += c.gold;
        }
    }

    pub fn report(&self) -> EvalReport {
        let ratio = |a: usize| if self.n_nodes == 0 { 0.0 } else { a as f64 / self.n_nodes as f64 };
        EvalReport {
            node_accuracy: ratio(self.path_correct),
            legacy_depth_accuracy: ratio(self.depth_correct),
            per_level: self.levels.iter().map(|(k, c)| (*k, c.scores())).collect(),
            n_nodes: self.n_nodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub node_accuracy: f64,
    pub per_level: BTreeMap<usize, LevelScores>,
    pub legacy_depth_accuracy: f64,
    pub n_nodes: usize,
}

/// Micro-averaged report over matching (predicted, gold) pairs.
pub fn evaluate<'a, I>(pairs: I) -> Result<EvalReport>
where
    I: IntoIterator<Item = (&'a HierarchyTree, &'a HierarchyTree)>,
{
    let mut counts = EvalCounts::default();
    for (pred, gold) in pairs {
        counts.add(pred, gold)?;
    }
    Ok(counts.report())
}

/// Empirical inquiry counts and the closed-form counts derived from the gold tree.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraversalStats {
    pub empirical: BTreeMap<TraversalOrder, usize>,
    pub formula_all: usize,
    pub formula_r2l: usize,
    pub formula_l2r: usize,
    /// Nodes with at least one child, the root included.
    pub internal_count: usize,
    pub leaf_count: usize,
    /// Payload nodes on the rightmost branch (the root is not counted).
    pub rightmost_branch_length: usize,
}

/// Closed-form inquiry counts of an ideal scorer, summed over all nodes
/// including the root (whose descendant count is N).
pub fn inquiry_formulas(gold: &HierarchyTree) -> TraversalStats {
    let n = gold.len();
    // descendants and internal descendants, slot 0 = root
    let mut desc = vec![0usize; n + 1];
    let mut internal_desc = vec![0usize; n + 1];
    let slot = |r: NodeRef| r.obj().map_or(0, |i| i + 1);
    for i in (0..n).rev() {
        let p = slot(gold.parents()[i]);
        let own_internal = (gold.child_count(NodeRef::Obj(i)) > 0) as usize;
        desc[p] += desc[i + 1] + 1;
        internal_desc[p] += internal_desc[i + 1] + own_internal;
    }
    let branch = gold.rightmost_branch();
    let mut on_branch = vec![false; n + 1];
    for &b in branch {
        on_branch[slot(b)] = true;
    }
    let mut has_next = vec![false; n + 1];
    for i in 0..n {
        if let Some(prev) = gold.prev_sibling(i) {
            has_next[prev + 1] = true;
        }
    }
    let (mut all, mut r2l, mut l2r) = (0, 0, 0);
    for s in 0..=n {
        let off = (!on_branch[s]) as usize;
        all += desc[s] + off;
        r2l += desc[s] + has_next[s] as usize;
        l2r += internal_desc[s] + off;
    }
    let internal_count = (gold.child_count(NodeRef::Root) > 0) as usize
        + (0..n).filter(|&i| gold.child_count(NodeRef::Obj(i)) > 0).count();
    TraversalStats {
        empirical: BTreeMap::new(),
        formula_all: all,
        formula_r2l: r2l,
        formula_l2r: l2r,
        internal_count,
        leaf_count: (0..n).filter(|&i| gold.is_leaf(NodeRef::Obj(i))).count(),
        rightmost_branch_length: branch.len() - 1,
    }
}

/// Scorer calls made by greedy one-step inference with the gold oracle.
pub fn empirical_inquiries(doc: &Document, gold: &HierarchyTree, order: TraversalOrder) -> Result<usize> {
    empirical_inquiries_mode(doc, gold, order, Mode::OneStep)
}

pub fn empirical_inquiries_mode(
    doc: &Document,
    gold: &HierarchyTree,
    order: TraversalOrder,
    mode: Mode,
) -> Result<usize> {
    let oracle = OracleScorer::new(gold);
    Ok(infer_greedy(doc, &oracle, order, mode, DEFAULT_WINDOW)?.inquiries)
}

/// Formula values plus empirical counts for all three orders.
pub fn traversal_stats(doc: &Document, gold: &HierarchyTree) -> Result<TraversalStats> {
    let mut stats = inquiry_formulas(gold);
    for order in TraversalOrder::ALL {
        stats.empirical.insert(order, empirical_inquiries(doc, gold, order)?);
    }
    Ok(stats)
}
