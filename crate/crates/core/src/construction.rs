//! Shared step logic for building a tree in reading order.
//!
//! Both training-tuple generation and inference walk a document object by
//! object. In one-step mode every object is placed by the scorer over the full
//! rightmost branch. In two-step mode only heading objects are placed by the
//! scorer, over branch nodes that are headings (or the root); every other
//! object is attached as the last child of the nearest preceding heading.

use serde::{Deserialize, Serialize};

use crate::hierarchy::{Document, HierarchyTree, InsertionPosition, NodeRef, PhysicalObject};
use crate::scoring::ScoreContext;

/// Default number of preceding siblings shown to the scorer.
pub const DEFAULT_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OneStep,
    TwoStep,
}

/// Read-only view of a document plus the step rules for one mode.
#[derive(Debug, Clone, Copy)]
pub struct StepView<'a> {
    pub doc: &'a Document,
    headings: Option<&'a [bool]>,
    window: usize,
}

impl<'a> StepView<'a> {
    pub fn one_step(doc: &'a Document, window: usize) -> Self {
        StepView {
            doc,
            headings: None,
            window,
        }
    }

    /// Two-step view; `headings` must have one flag per object.
    pub fn two_step(doc: &'a Document, headings: &'a [bool], window: usize) -> Self {
        debug_assert_eq!(headings.len(), doc.len());
        StepView {
            doc,
            headings: Some(headings),
            window,
        }
    }

    pub fn mode(&self) -> Mode {
        if self.headings.is_some() {
            Mode::TwoStep
        } else {
            Mode::OneStep
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    fn is_heading(&self, node: NodeRef) -> bool {
        match (node, self.headings) {
            (NodeRef::Root, _) | (_, None) => true,
            (NodeRef::Obj(i), Some(h)) => h[i],
        }
    }

    /// True when object `i` is placed by the scorer rather than by rule.
    pub fn is_scored(&self, i: usize) -> bool {
        self.headings.is_none_or(|h| h[i])
    }

    /// Parent for a rule-attached object: deepest heading on the branch, or the root.
    pub fn rule_parent(&self, tree: &HierarchyTree) -> NodeRef {
        tree.rightmost_branch()
            .iter()
            .rev()
            .copied()
            .find(|&n| self.is_heading(n))
            .unwrap_or(NodeRef::Root)
    }

    /// Positions the scorer chooses from, root first.
    pub fn positions(&self, tree: &HierarchyTree) -> Vec<InsertionPosition> {
        let mut positions = tree.insertion_positions();
        if self.headings.is_some() {
            positions.retain(|p| self.is_heading(p.parent));
        }
        positions
    }

    fn object(&self, node: usize) -> &'a PhysicalObject {
        &self.doc.objects[node]
    }

    /// Put-or-skip context for placing `candidate` at `pos`.
    ///
    /// `branch` should be the parents of the positions returned by
    /// [`StepView::positions`] for this step.
    pub fn context<'t>(
        &self,
        tree: &HierarchyTree,
        branch: &'t [NodeRef],
        pos: &InsertionPosition,
        candidate: usize,
    ) -> ScoreContext<'t>
    where
        'a: 't,
    {
        let mut siblings = Vec::with_capacity(self.window);
        let mut cur = tree.last_child(pos.parent);
        while let Some(s) = cur {
            if siblings.len() == self.window {
                break;
            }
            if self.is_heading(NodeRef::Obj(s)) {
                siblings.push(self.object(s));
            }
            cur = tree.prev_sibling(s);
        }
        siblings.reverse();
        ScoreContext {
            candidate: self.object(candidate),
            parent: pos.parent.obj().map(|p| self.object(p)),
            parent_ref: pos.parent,
            siblings,
            position_depth: pos.depth,
            branch,
        }
    }
}
