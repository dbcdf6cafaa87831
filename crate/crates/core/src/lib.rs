//! Logical document hierarchy extraction by sequential insertion on the
//! rightmost branch of a growing tree.
//!
//! Objects arrive in reading order. Each one becomes the last child of a node
//! on the rightmost branch, chosen with a put-or-skip [`scoring::Scorer`], so
//! the pre-order of the finished tree always equals the reading order.

pub mod cli;
pub mod construction;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod headings;
pub mod hierarchy;
pub mod inference;
pub mod io;
pub mod linear;
pub mod patterns;
pub mod retrieval;
pub mod scoring;
pub mod synth;

pub use construction::{Mode, StepView, DEFAULT_WINDOW};
pub use error::{Error, ErrorKind, Result};
pub use evaluation::{evaluate, inquiry_formulas, node_correct, EvalReport, TraversalStats};
pub use hierarchy::{
    Document, FormatAttrs, HierarchyTree, InsertionPosition, NodePath, NodeRef, ObjectKind, PhysicalObject,
};
pub use inference::{infer, infer_beam, infer_greedy, InferenceConfig, InferenceResult, TraversalOrder};
pub use patterns::PatternLibrary;
pub use scoring::{LinearScorer, OracleScorer, ScoreContext, Scorer};
