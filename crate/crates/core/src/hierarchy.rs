//! Documents, logical trees and the rightmost-branch insertion machinery.
//!
//! A [`HierarchyTree`] is built by appending objects in reading order. Each new
//! object becomes the last child of some node on the current rightmost branch,
//! which is exactly the set of attachments that keeps the pre-order traversal
//! equal to the reading order.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Kind of a physical object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Paragraph,
    Table,
    Figure,
    Chart,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 4] = [
        ObjectKind::Paragraph,
        ObjectKind::Table,
        ObjectKind::Figure,
        ObjectKind::Chart,
    ];
}

/// Visual format of a physical object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormatAttrs {
    pub font_family_id: u32,
    pub font_size: f64,
    pub font_color_id: u32,
    pub bold: bool,
    pub italic: bool,
    pub centered: bool,
    pub indent: f64,
}

impl FormatAttrs {
    /// True when every attribute matches.
    pub fn same_as(&self, other: &FormatAttrs) -> bool {
        self.font_family_id == other.font_family_id
            && self.font_size == other.font_size
            && self.font_color_id == other.font_color_id
            && self.bold == other.bold
            && self.italic == other.italic
            && self.centered == other.centered
            && self.indent == other.indent
    }
}

impl Default for FormatAttrs {
    fn default() -> Self {
        FormatAttrs {
            font_family_id: 0,
            font_size: 10.5,
            font_color_id: 0,
            bold: false,
            italic: false,
            centered: false,
            indent: 0.0,
        }
    }
}

/// One reading-order unit of a document.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalObject {
    pub id: usize,
    pub kind: ObjectKind,
    pub text: String,
    pub format: FormatAttrs,
    /// Annotation or classifier output, when known.
    pub is_heading: Option<bool>,
}

impl PhysicalObject {
    pub fn paragraph(id: usize, text: impl Into<String>, format: FormatAttrs) -> Self {
        PhysicalObject {
            id,
            kind: ObjectKind::Paragraph,
            text: text.into(),
            format,
            is_heading: None,
        }
    }
}

/// An ordered list of physical objects with ids `0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub objects: Vec<PhysicalObject>,
}

impl Document {
    /// Builds a document, checking ids, non-emptiness and format ranges.
    pub fn new(doc_id: impl Into<String>, objects: Vec<PhysicalObject>) -> Result<Self> {
        let doc = Document {
            doc_id: doc_id.into(),
            objects,
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() {
            return Err(Error::EmptyDocument);
        }
        for (position, obj) in self.objects.iter().enumerate() {
            if obj.id != position {
                return Err(Error::NonContiguousIds {
                    doc_id: self.doc_id.clone(),
                    position,
                    found: obj.id,
                });
            }
            let invalid = |message: String| Error::InvalidDocument {
                doc_id: self.doc_id.clone(),
                message,
            };
            if obj.kind == ObjectKind::Paragraph && obj.text.is_empty() {
                return Err(invalid(format!("paragraph {} has empty text", obj.id)));
            }
            if !(obj.format.font_size > 0.0) || !obj.format.font_size.is_finite() {
                return Err(invalid(format!("object {} has font size {}", obj.id, obj.format.font_size)));
            }
            if !(obj.format.indent >= 0.0) || !obj.format.indent.is_finite() {
                return Err(invalid(format!("object {} has indent {}", obj.id, obj.format.indent)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Heading flags from the annotations; missing flags read as non-heading.
    pub fn heading_flags(&self) -> Vec<bool> {
        self.objects
            .iter()
            .map(|o| o.is_heading.unwrap_or(false))
            .collect()
    }

    pub fn has_heading_annotations(&self) -> bool {
        self.objects.iter().all(|o| o.is_heading.is_some())
    }
}

/// A node reference: the virtual root or a payload object id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeRef {
    Root,
    Obj(usize),
}

impl NodeRef {
    /// Serialized form: `-1` for the root, the object id otherwise.
    pub fn to_raw(self) -> i64 {
        match self {
            NodeRef::Root => -1,
            NodeRef::Obj(i) => i as i64,
        }
    }

    pub fn from_raw(raw: i64) -> Result<Self> {
        match raw {
            -1 => Ok(NodeRef::Root),
            i if i >= 0 => Ok(NodeRef::Obj(i as usize)),
            other => Err(Error::UnknownNode(other)),
        }
    }

    pub fn obj(self) -> Option<usize> {
        match self {
            NodeRef::Root => None,
            NodeRef::Obj(i) => Some(i),
        }
    }

    pub fn is_root(self) -> bool {
        self == NodeRef::Root
    }

    fn slot(self) -> usize {
        match self {
            NodeRef::Root => 0,
            NodeRef::Obj(i) => i + 1,
        }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeRef::Root => f.write_str("φ"),
            NodeRef::Obj(i) => write!(f, "{i}"),
        }
    }
}

impl Serialize for NodeRef {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i64(self.to_raw())
    }
}

impl<'de> Deserialize<'de> for NodeRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = i64::deserialize(d)?;
        NodeRef::from_raw(raw).map_err(serde::de::Error::custom)
    }
}

/// A node followed by all of its ancestors, ending with the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodePath(pub Vec<NodeRef>);

impl NodePath {
    pub fn nodes(&self) -> &[NodeRef] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Ancestors of the node, nearest first, excluding the root.
    pub fn ancestors(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().skip(1).filter_map(|n| n.obj())
    }
}

/// A "become the last child of `parent`" slot on the rightmost branch.
///
/// `slot` is the parent's child count when the position was taken, so a
/// position computed against one tree is rejected by a tree that has moved on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InsertionPosition {
    pub parent: NodeRef,
    pub depth: usize,
    pub slot: usize,
}

/// Rooted ordered tree over the objects of a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyTree {
    parents: Vec<NodeRef>,
    prev_sibling: Vec<Option<usize>>,
    // Indexed by slot: 0 is the root, i + 1 is object i.
    last_child: Vec<Option<usize>>,
    child_count: Vec<usize>,
    branch: Vec<NodeRef>,
}

impl Default for HierarchyTree {
    fn default() -> Self {
        Self::new()
    }
}

impl HierarchyTree {
    /// A tree holding only the virtual root.
    pub fn new() -> Self {
        HierarchyTree {
            parents: Vec::new(),
            prev_sibling: Vec::new(),
            last_child: vec![None],
            child_count: vec![0],
            branch: vec![NodeRef::Root],
        }
    }

    /// Rebuilds a tree from a parent array by replaying the insertions.
    pub fn from_parents(parents: &[NodeRef]) -> Result<Self> {
        let mut tree = HierarchyTree::new();
        for (node, &parent) in parents.iter().enumerate() {
            let depth = tree
                .branch
                .iter()
                .position(|&b| b == parent)
                .ok_or(Error::PreorderViolation { node, parent })?;
            let pos = InsertionPosition {
                parent,
                depth,
                slot: tree.child_count(parent),
            };
            tree.insert(pos, node)?;
        }
        Ok(tree)
    }

    pub fn from_raw_parents(raw: &[i64]) -> Result<Self> {
        let parents = raw
            .iter()
            .map(|&r| NodeRef::from_raw(r))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parents(&parents)
    }

    /// Number of payload nodes.
    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn parents(&self) -> &[NodeRef] {
        &self.parents
    }

    pub fn raw_parents(&self) -> Vec<i64> {
        self.parents.iter().map(|p| p.to_raw()).collect()
    }

    pub fn contains(&self, node: NodeRef) -> bool {
        match node {
            NodeRef::Root => true,
            NodeRef::Obj(i) => i < self.len(),
        }
    }

    fn check(&self, node: usize) -> Result<()> {
        if node < self.len() {
            Ok(())
        } else {
            Err(Error::UnknownNode(node as i64))
        }
    }

    pub fn parent(&self, node: usize) -> Result<NodeRef> {
        self.check(node)?;
        Ok(self.parents[node])
    }

    pub fn child_count(&self, node: NodeRef) -> usize {
        self.child_count.get(node.slot()).copied().unwrap_or(0)
    }

    pub fn last_child(&self, node: NodeRef) -> Option<usize> {
        self.last_child.get(node.slot()).copied().flatten()
    }

    pub fn prev_sibling(&self, node: usize) -> Option<usize> {
        self.prev_sibling.get(node).copied().flatten()
    }

    pub fn is_leaf(&self, node: NodeRef) -> bool {
        self.child_count(node) == 0
    }

    /// Children of `node` in document order.
    pub fn children(&self, node: NodeRef) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.child_count(node));
        let mut cur = self.last_child(node);
        while let Some(c) = cur {
            out.push(c);
            cur = self.prev_sibling[c];
        }
        out.reverse();
        out
    }

    /// The root followed by successive last children.
    pub fn rightmost_branch(&self) -> &[NodeRef] {
        &self.branch
    }

    /// One position per rightmost-branch node, root first.
    pub fn insertion_positions(&self) -> Vec<InsertionPosition> {
        self.branch
            .iter()
            .enumerate()
            .map(|(depth, &parent)| InsertionPosition {
                parent,
                depth,
                slot: self.child_count(parent),
            })
            .collect()
    }

    /// Appends `obj_id` as the last child of `pos.parent`, in place.
    pub fn insert(&mut self, pos: InsertionPosition, obj_id: usize) -> Result<()> {
        if obj_id != self.len() {
            return Err(Error::OutOfOrderInsert {
                expected: self.len(),
                found: obj_id,
            });
        }
        let stale = self.branch.get(pos.depth) != Some(&pos.parent)
            || self.child_count(pos.parent) != pos.slot;
        if stale {
            return Err(Error::StalePosition {
                parent: pos.parent,
                slot: pos.slot,
            });
        }
        let pslot = pos.parent.slot();
        self.parents.push(pos.parent);
        self.prev_sibling.push(self.last_child[pslot]);
        self.last_child[pslot] = Some(obj_id);
        self.child_count[pslot] += 1;
        self.last_child.push(None);
        self.child_count.push(0);
        self.branch.truncate(pos.depth + 1);
        self.branch.push(NodeRef::Obj(obj_id));
        Ok(())
    }

    /// Returns a new tree with `obj_id` inserted at `pos`.
    pub fn insert_at(&self, pos: InsertionPosition, obj_id: usize) -> Result<Self> {
        let mut next = self.clone();
        next.insert(pos, obj_id)?;
        Ok(next)
    }

    /// Appends `obj_id` under `parent`, which must lie on the rightmost branch.
    pub fn attach(&mut self, parent: NodeRef, obj_id: usize) -> Result<()> {
        let depth = self
            .branch
            .iter()
            .position(|&b| b == parent)
            .ok_or(Error::PreorderViolation {
                node: obj_id,
                parent,
            })?;
        let slot = self.child_count(parent);
        self.insert(InsertionPosition { parent, depth, slot }, obj_id)
    }

    /// Payload ids in pre-order; the root is omitted.
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack: Vec<usize> = self.children(NodeRef::Root).into_iter().rev().collect();
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.children(NodeRef::Obj(n)).into_iter().rev());
        }
        out
    }

    pub fn path_to_root(&self, node: usize) -> Result<NodePath> {
        self.check(node)?;
        let mut path = vec![NodeRef::Obj(node)];
        let mut cur = self.parents[node];
        loop {
            path.push(cur);
            match cur {
                NodeRef::Root => break,
                NodeRef::Obj(i) => cur = self.parents[i],
            }
        }
        Ok(NodePath(path))
    }

    /// Level of a node: children of the root are at level 1.
    pub fn depth(&self, node: usize) -> Result<usize> {
        self.check(node)?;
        let mut depth = 1;
        let mut cur = self.parents[node];
        while let NodeRef::Obj(i) = cur {
            depth += 1;
            cur = self.parents[i];
        }
        Ok(depth)
    }

    /// Levels of every node, computed in one pass.
    pub fn depths(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        for &p in &self.parents {
            let d = match p {
                NodeRef::Root => 1,
                NodeRef::Obj(i) => out[i] + 1,
            };
            out.push(d);
        }
        out
    }

    /// True when `ancestor` lies on the path from `node` to the root (exclusive of `node`).
    pub fn is_ancestor(&self, ancestor: NodeRef, node: usize) -> bool {
        if ancestor == NodeRef::Root {
            return node < self.len();
        }
        let mut cur = self.parents.get(node).copied();
        while let Some(NodeRef::Obj(i)) = cur {
            if NodeRef::Obj(i) == ancestor {
                return true;
            }
            cur = Some(self.parents[i]);
        }
        false
    }

    /// Checks the structural invariants: every parent precedes its child, and
    /// the pre-order equals `0..N`.
    pub fn validate(&self) -> Result<()> {
        Self::from_parents(&self.parents).map(|_| ())
    }
}
