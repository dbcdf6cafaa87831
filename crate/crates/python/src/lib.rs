//! Python bindings. Documents cross the boundary as JSON Lines text, trees
//! as parent lists with -1 for the virtual root, reports as dicts.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

use held_core::evaluation::{evaluate as eval_pairs, inquiry_formulas as formulas};
use held_core::headings::{HeadingClassifier, LogisticHeadingClassifier};
use held_core::io::ObjectLine;
use held_core::retrieval::{DocStats, PassageFeatures, Query};
use held_core::scoring::{train_from_corpus, LinearScorer, ScorerTraining, TrainingMode};
use held_core::synth::{generate, CorpusConfig};
use held_core::{
    infer as run_infer, Document, HierarchyTree, InferenceConfig, Mode, OracleScorer, PatternLibrary, TraversalOrder,
};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_order(s: &str) -> PyResult<TraversalOrder> {
    s.parse().map_err(err)
}

fn parse_mode(s: &str) -> PyResult<Mode> {
    match s {
        "1step" => Ok(Mode::OneStep),
        "2step" => Ok(Mode::TwoStep),
        other => Err(err(format!("unknown mode {other:?}, expected 1step or 2step"))),
    }
}

/// A logical tree over objects `0..n`.
#[pyclass(name = "Tree", module = "held", from_py_object)]
#[derive(Clone)]
struct PyTree(HierarchyTree);

#[pymethods]
impl PyTree {
    #[new]
    #[pyo3(signature = (parents=None))]
    fn new(parents: Option<Vec<i64>>) -> PyResult<Self> {
        match parents {
            Some(p) => HierarchyTree::from_raw_parents(&p).map(PyTree).map_err(err),
            None => Ok(PyTree(HierarchyTree::new())),
        }
    }

    #[getter]
    fn parents(&self) -> Vec<i64> {
        self.0.raw_parents()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn depths(&self) -> Vec<usize> {
        self.0.depths()
    }

    fn preorder(&self) -> Vec<usize> {
        self.0.preorder()
    }

    /// Candidate positions as (parent, depth, slot) tuples, root first.
    fn insertion_positions(&self) -> Vec<(i64, usize, usize)> {
        self.0
            .insertion_positions()
            .iter()
            .map(|p| (p.parent.to_raw(), p.depth, p.slot))
            .collect()
    }

    /// Appends the next object under the branch node at `depth`.
    fn insert(&mut self, depth: usize) -> PyResult<()> {
        let pos = *self
            .0
            .insertion_positions()
            .get(depth)
            .ok_or_else(|| err(format!("depth {depth} is not on the rightmost branch")))?;
        let id = self.0.len();
        self.0.insert(pos, id).map_err(err)
    }

    fn __eq__(&self, other: &PyTree) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Tree({:?})", self.0.raw_parents())
    }
}

/// An ordered list of physical objects.
#[pyclass(name = "Document", module = "held", from_py_object)]
#[derive(Clone)]
struct PyDocument(Document);

#[pymethods]
impl PyDocument {
    /// Parses one document from JSON Lines text.
    #[staticmethod]
    #[pyo3(signature = (text, doc_id="doc"))]
    fn from_jsonl(text: &str, doc_id: &str) -> PyResult<Self> {
        let mut objects = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let o: ObjectLine =
                serde_json::from_str(line).map_err(|e| err(format!("line {}: {e}", i + 1)))?;
            objects.push(o.into_object());
        }
        Document::new(doc_id, objects).map(PyDocument).map_err(err)
    }

    fn to_jsonl(&self) -> PyResult<String> {
        let mut out = String::new();
        for o in &self.0.objects {
            out.push_str(&serde_json::to_string(&ObjectLine::from_object(None, o)).map_err(err)?);
            out.push('\n');
        }
        Ok(out)
    }

    #[getter]
    fn doc_id(&self) -> String {
        self.0.doc_id.clone()
    }

    #[getter]
    fn texts(&self) -> Vec<String> {
        self.0.objects.iter().map(|o| o.text.clone()).collect()
    }

    #[getter]
    fn heading_flags(&self) -> Vec<bool> {
        self.0.heading_flags()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Trained placement scorer plus heading classifier.
#[pyclass(name = "Model", module = "held")]
struct PyModel {
    scorer: LinearScorer,
    headings: LogisticHeadingClassifier,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (docs, trees, error_rate=0.0, one_step=false, seed=7))]
    fn train(docs: Vec<PyDocument>, trees: Vec<PyTree>, error_rate: f64, one_step: bool, seed: u64) -> PyResult<Self> {
        if docs.len() != trees.len() {
            return Err(err("docs and trees differ in length"));
        }
        let corpus: Vec<(Document, HierarchyTree)> = docs.into_iter().map(|d| d.0).zip(trees.into_iter().map(|t| t.0)).collect();
        let cfg = ScorerTraining {
            error_rate,
            seed,
            mode: if one_step { TrainingMode::OneStep } else { TrainingMode::TwoStep },
            ..ScorerTraining::default()
        };
        let (scorer, _) = train_from_corpus(&corpus, PatternLibrary::default(), &cfg).map_err(err)?;
        let refs: Vec<&Document> = corpus.iter().map(|(d, _)| d).collect();
        let (headings, _) =
            LogisticHeadingClassifier::train(&refs, PatternLibrary::default(), &cfg.logistic).map_err(err)?;
        Ok(PyModel { scorer, headings })
    }

    /// Builds a tree; two-step mode uses the trained heading classifier
    /// unless `annotated` is set.
    #[pyo3(signature = (doc, order="r2l", mode="2step", beam=1, annotated=false))]
    fn infer(&self, doc: &PyDocument, order: &str, mode: &str, beam: usize, annotated: bool) -> PyResult<(PyTree, usize)> {
        let cfg = InferenceConfig { order: parse_order(order)?, mode: parse_mode(mode)?, beam };
        let flags = if annotated { doc.0.heading_flags() } else { self.headings.classify(&doc.0) };
        let r = run_infer(&doc.0, &self.scorer, &cfg, Some(&flags), self.scorer.window).map_err(err)?;
        Ok((PyTree(r.tree), r.inquiries))
    }

    fn model_json(&self) -> PyResult<String> {
        let mut file = self.scorer.to_file();
        file.heading_model = Some(self.headings.to_file());
        serde_json::to_string(&file).map_err(err)
    }
}

/// Rebuilds `gold` with a scorer that is 1 exactly at the correct position.
/// Returns the tree and the number of scorer calls.
#[pyfunction]
#[pyo3(signature = (doc, gold, order="all", mode="1step", beam=1))]
fn oracle_infer(doc: &PyDocument, gold: &PyTree, order: &str, mode: &str, beam: usize) -> PyResult<(PyTree, usize)> {
    let cfg = InferenceConfig { order: parse_order(order)?, mode: parse_mode(mode)?, beam };
    let flags = doc.0.heading_flags();
    let r = run_infer(&doc.0, &OracleScorer::new(&gold.0), &cfg, Some(&flags), held_core::DEFAULT_WINDOW)
        .map_err(err)?;
    Ok((PyTree(r.tree), r.inquiries))
}

/// Closed-form inquiry counts and tree statistics.
#[pyfunction]
fn inquiry_formulas(py: Python<'_>, tree: &PyTree) -> PyResult<Py<PyAny>> {
    to_py(py, &formulas(&tree.0))
}

/// Path-based accuracy, per-level scores and depth-only accuracy.
#[pyfunction]
fn evaluate(py: Python<'_>, pairs: Vec<(PyTree, PyTree)>) -> PyResult<Py<PyAny>> {
    let report = eval_pairs(pairs.iter().map(|(p, g)| (&p.0, &g.0))).map_err(err)?;
    to_py(py, &report)
}

/// Synthetic corpus as (document, gold tree) pairs.
#[pyfunction]
#[pyo3(signature = (n_docs=None, seed=None, config_toml=None))]
fn generate_corpus(n_docs: Option<usize>, seed: Option<u64>, config_toml: Option<&str>) -> PyResult<Vec<(PyDocument, PyTree)>> {
    let mut cfg = match config_toml {
        Some(t) => CorpusConfig::from_toml(t).map_err(err)?,
        None => CorpusConfig::default(),
    };
    if let Some(n) = n_docs {
        cfg.n_docs = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let corpus = generate(&cfg).map_err(err)?;
    Ok(corpus.into_iter().map(|(d, t)| (PyDocument(d), PyTree(t))).collect())
}

/// Ranking features for one passage: bm25, bm25_anc_max, same_word_anc, pos, pos_ratio.
#[pyfunction]
fn passage_features(doc: &PyDocument, tree: &PyTree, query: &str, passage: usize) -> PyResult<[f64; 5]> {
    if tree.0.len() != doc.0.len() {
        return Err(err("tree does not cover the document"));
    }
    let q = Query::new("q", doc.0.doc_id.clone(), query).map_err(err)?;
    let stats = DocStats::new(&doc.0);
    let f = PassageFeatures::compute(&q.terms, passage, &tree.0, &stats).map_err(err)?;
    Ok(f.to_vec())
}

#[pymodule]
fn held(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTree>()?;
    m.add_class::<PyDocument>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(oracle_infer, m)?)?;
    m.add_function(wrap_pyfunction!(inquiry_formulas, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(passage_features, m)?)?;
    Ok(())
}
