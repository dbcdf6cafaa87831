"""Smoke test for the held extension module.

Build and install first:
    pip install --no-build-isolation ./crates/python
"""

import held


def main():
    corpus = held.generate_corpus(n_docs=12, seed=5)
    assert len(corpus) == 12
    doc, gold = corpus[0]
    assert len(doc) == len(gold)
    assert gold.preorder() == list(range(len(gold)))

    # documents survive a JSON Lines round trip
    again = held.Document.from_jsonl(doc.to_jsonl(), doc.doc_id)
    assert again.texts == doc.texts

    # the oracle rebuilds the gold tree, and its call count matches the formula
    tree, calls = held.oracle_infer(doc, gold, order="all", mode="1step")
    assert tree == gold
    stats = held.inquiry_formulas(gold)
    assert calls == stats["formula_all"]
    assert stats["formula_all"] - stats["formula_r2l"] == stats["internal_count"] - stats["rightmost_branch_length"]

    # manual insertion along the rightmost branch
    t = held.Tree()
    for depth in [0, 1, 2, 1, 0]:
        t.insert(depth)
    assert t.parents == [-1, 0, 1, 0, -1]
    assert t.depths() == [1, 2, 3, 2, 1]

    model = held.Model.train([d for d, _ in corpus[:10]], [g for _, g in corpus[:10]])
    pairs = []
    for d, g in corpus[10:]:
        pred, _ = model.infer(d, order="r2l", mode="2step")
        pairs.append((pred, g))
    report = held.evaluate(pairs)
    print(f"held-out path accuracy: {report['node_accuracy']:.4f}")
    assert 0.0 <= report["node_accuracy"] <= 1.0
    assert report["node_accuracy"] <= report["legacy_depth_accuracy"]

    leaf = next(i for i, h in enumerate(doc.heading_flags) if not h)
    feats = held.passage_features(doc, gold, doc.texts[leaf], leaf)
    assert len(feats) == 5 and feats[0] > 0.0

    try:
        held.Tree([-1, 5])
    except ValueError:
        pass
    else:
        raise AssertionError("invalid parent array accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
