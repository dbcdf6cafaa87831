#![allow(dead_code)]

use held_core::scoring::{ScoreContext, Scorer};
use held_core::{Document, FormatAttrs, HierarchyTree, NodeRef, PhysicalObject, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniformly random insertion sequence of `n` nodes.
pub fn random_tree(n: usize, rng: &mut ChaCha8Rng) -> HierarchyTree {
    let mut t = HierarchyTree::new();
    for i in 0..n {
        let pos = t.insertion_positions();
        let p = pos[rng.gen_range(0..pos.len())];
        t.insert(p, i).unwrap();
    }
    t
}

/// Random tree biased toward deeper insertions, which gives longer branches.
pub fn random_deep_tree(n: usize, rng: &mut ChaCha8Rng) -> HierarchyTree {
    let mut t = HierarchyTree::new();
    for i in 0..n {
        let pos = t.insertion_positions();
        let k = pos.len();
        let j = if rng.gen_bool(0.5) { k - 1 } else { rng.gen_range(0..k) };
        t.insert(pos[j], i).unwrap();
    }
    t
}

/// Every tree with exactly `n` payload nodes, as parent vectors.
pub fn all_trees(n: usize) -> Vec<HierarchyTree> {
    fn go(t: HierarchyTree, n: usize, out: &mut Vec<HierarchyTree>) {
        if t.len() == n {
            out.push(t);
            return;
        }
        for p in t.insertion_positions() {
            go(t.insert_at(p, t.len()).unwrap(), n, out);
        }
    }
    let mut out = Vec::new();
    go(HierarchyTree::new(), n, &mut out);
    out
}

pub fn plain_doc(id: &str, n: usize) -> Document {
    let objects = (0..n)
        .map(|i| PhysicalObject::paragraph(i, format!("object {i}"), FormatAttrs::default()))
        .collect();
    Document::new(id, objects).unwrap()
}

/// Deterministic pseudo-random scores keyed by (candidate, parent, depth).
pub struct HashScorer(pub u64);

impl Scorer for HashScorer {
    fn score(&self, ctx: &ScoreContext<'_>) -> Result<f64> {
        let mut h = self.0 ^ 0x9E37_79B9_7F4A_7C15;
        for v in [ctx.candidate.id as i64, ctx.parent_ref.to_raw(), ctx.position_depth as i64] {
            h ^= v as u64;
            h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
            h ^= h >> 31;
        }
        Ok((h >> 11) as f64 / (1u64 << 53) as f64)
    }
}

/// Parent-chasing depth (children of the root have depth 1).
pub fn chase_depth(parents: &[NodeRef], mut i: usize) -> usize {
    let mut d = 1;
    while let NodeRef::Obj(p) = parents[i] {
        d += 1;
        i = p;
    }
    d
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
