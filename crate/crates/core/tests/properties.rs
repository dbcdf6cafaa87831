mod common;

use std::collections::BTreeSet;

use held_core::evaluation::{inquiry_formulas, legacy_depth_correct, node_correct};
use held_core::retrieval::{bm25, bm25_anc_max, pos_features, recall_at_k, same_word_anc, tokenize, DocStats};
use held_core::{Document, Error, FormatAttrs, HierarchyTree, NodeRef, PhysicalObject};
use proptest::prelude::*;

use common::{all_trees, chase_depth};

fn build(choices: &[u32]) -> HierarchyTree {
    let mut t = HierarchyTree::new();
    for (i, &c) in choices.iter().enumerate() {
        let pos = t.insertion_positions();
        t.insert(pos[c as usize % pos.len()], i).unwrap();
    }
    t
}

fn choices() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(any::<u32>(), 0..80)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn insertion_keeps_reading_order(c in choices()) {
        let t = build(&c);
        prop_assert_eq!(t.preorder(), (0..c.len()).collect::<Vec<_>>());
        t.validate().unwrap();
    }

    #[test]
    fn positions_match_branch(c in choices()) {
        let t = build(&c);
        let pos = t.insertion_positions();
        prop_assert_eq!(pos.len(), t.rightmost_branch().len());
        for (d, p) in pos.iter().enumerate() {
            prop_assert_eq!(p.depth, d);
            prop_assert_eq!(p.parent, t.rightmost_branch()[d]);
            prop_assert_eq!(p.slot, t.child_count(p.parent));
        }
    }

    #[test]
    fn paths_are_consistent(c in choices()) {
        let t = build(&c);
        let depths = t.depths();
        for i in 0..t.len() {
            let path = t.path_to_root(i).unwrap();
            prop_assert_eq!(path.len(), depths[i] + 1);
            prop_assert_eq!(depths[i], chase_depth(t.parents(), i));
            prop_assert_eq!(path.nodes()[1], t.parents()[i]);
            prop_assert_eq!(*path.nodes().last().unwrap(), NodeRef::Root);
        }
    }

    #[test]
    fn formula_identity(c in choices()) {
        let t = build(&c);
        let s = inquiry_formulas(&t);
        prop_assert_eq!(
            s.formula_all as i64 - s.formula_r2l as i64,
            s.internal_count as i64 - s.rightmost_branch_length as i64
        );
        prop_assert!(s.formula_l2r <= s.formula_all);
    }

    #[test]
    fn raw_parents_round_trip(c in choices()) {
        let t = build(&c);
        prop_assert_eq!(HierarchyTree::from_raw_parents(&t.raw_parents()).unwrap(), t);
    }

    #[test]
    fn path_correct_implies_depth_correct(a in choices(), b in choices()) {
        let n = a.len().min(b.len());
        let (p, g) = (build(&a[..n]), build(&b[..n]));
        for i in 0..n {
            if node_correct(&p, &g, i).unwrap() {
                prop_assert!(legacy_depth_correct(&p, &g, i).unwrap());
            }
        }
    }

    #[test]
    fn recall_is_monotone_in_k(perm in Just((0..20usize).collect::<Vec<_>>()).prop_shuffle(),
                               rel in prop::collection::btree_set(0..20usize, 1..6)) {
        let mut prev = 0.0;
        for k in 1..=20 {
            let r = recall_at_k(&perm, &rel, k).unwrap();
            prop_assert!(r >= prev);
            prev = r;
        }
        prop_assert_eq!(prev, 1.0);
    }
}

#[test]
fn off_branch_parents_are_rejected() {
    // every parent array over <= 5 nodes that no insertion sequence produces
    for n in 1..=5 {
        let valid: BTreeSet<Vec<i64>> = all_trees(n).iter().map(|t| t.raw_parents()).collect();
        let mut raw = vec![-1i64; n];
        loop {
            let parsed = HierarchyTree::from_raw_parents(&raw);
            if valid.contains(&raw) {
                assert!(parsed.is_ok(), "{raw:?}");
            } else {
                assert!(
                    matches!(parsed, Err(Error::PreorderViolation { .. }) | Err(Error::UnknownNode(_))),
                    "{raw:?}"
                );
            }
            // odometer over parents in -1..n
            let mut i = 0;
            while i < n {
                raw[i] += 1;
                if raw[i] < n as i64 {
                    break;
                }
                raw[i] = -1;
                i += 1;
            }
            if i == n {
                break;
            }
        }
    }
}

const WORDS: [&str; 8] = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"];

fn toy_doc() -> Document {
    let objects = (0..20)
        .map(|i| {
            let text: Vec<&str> = (0..(3 + i % 7)).map(|k| WORDS[(i * 3 + k * k) % WORDS.len()]).collect();
            PhysicalObject::paragraph(i, text.join(" "), FormatAttrs::default())
        })
        .collect();
    Document::new("toy", objects).unwrap()
}

fn reference_bm25(query: &[&str], docs: &[Vec<String>], i: usize) -> f64 {
    let (k1, b) = (1.2, 0.75);
    let n = docs.len() as f64;
    let avg = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    query
        .iter()
        .map(|q| {
            let f = docs[i].iter().filter(|w| w == q).count() as f64;
            let df = docs.iter().filter(|d| d.iter().any(|w| w == q)).count() as f64;
            let idf = (((n - df + 0.5) / (df + 0.5)) as f64).ln().max(0.0);
            idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * docs[i].len() as f64 / avg))
        })
        .sum()
}

#[test]
fn bm25_matches_reference() {
    let doc = toy_doc();
    let stats = DocStats::new(&doc);
    let toks: Vec<Vec<String>> = doc.objects.iter().map(|o| tokenize(&o.text)).collect();
    for q in [vec!["alpha"], vec!["beta", "theta"], vec!["zeta", "eta", "missing"]] {
        let terms: Vec<String> = q.iter().map(|s| s.to_string()).collect();
        for i in 0..doc.len() {
            let got = bm25(&terms, i, &stats);
            let want = reference_bm25(&q, &toks, i);
            assert!((got - want).abs() < 1e-9, "{q:?} {i}: {got} vs {want}");
        }
    }
}

#[test]
fn hierarchy_features_match_brute_force() {
    let doc = toy_doc();
    let stats = DocStats::new(&doc);
    let toks: Vec<BTreeSet<String>> = doc.objects.iter().map(|o| tokenize(&o.text).into_iter().collect()).collect();
    let mut r = common::rng(7);
    for _ in 0..30 {
        let t = common::random_tree(doc.len(), &mut r);
        for i in 0..doc.len() {
            let anc: Vec<usize> = t.path_to_root(i).unwrap().nodes()[1..].iter().filter_map(|n| n.obj()).collect();
            let anc_words: BTreeSet<&String> = anc.iter().flat_map(|&a| toks[a].iter()).collect();
            assert_eq!(same_word_anc(i, &t, &stats).unwrap(), toks[i].iter().filter(|w| anc_words.contains(w)).count());
            let sibs: Vec<usize> = (0..doc.len()).filter(|&j| t.parents()[j] == t.parents()[i]).collect();
            let k = sibs.iter().position(|&j| j == i).unwrap() + 1;
            assert_eq!(pos_features(i, &t).unwrap(), (k, k as f64 / sibs.len() as f64));
        }
    }
}

#[test]
fn corrupting_the_path_changes_ancestor_features() {
    let doc = toy_doc();
    let stats = DocStats::new(&doc);
    let terms = vec!["alpha".to_string()];
    // chain 0 <- 1 <- 2 ... versus a flat tree
    let chain = HierarchyTree::from_parents(
        &(0..doc.len()).map(|i| if i == 0 { NodeRef::Root } else { NodeRef::Obj(i - 1) }).collect::<Vec<_>>(),
    )
    .unwrap();
    let flat = HierarchyTree::from_parents(&vec![NodeRef::Root; doc.len()]).unwrap();
    let last = doc.len() - 1;
    assert!(bm25_anc_max(&terms, last, &chain, &stats).unwrap() > 0.0);
    assert_eq!(bm25_anc_max(&terms, last, &flat, &stats).unwrap(), 0.0);
    assert!(same_word_anc(last, &chain, &stats).unwrap() > 0);
    assert_eq!(same_word_anc(last, &flat, &stats).unwrap(), 0);
}
