//! File formats: JSON Lines documents, tree arrays, queries, relevance labels.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{Document, FormatAttrs, HierarchyTree, ObjectKind, PhysicalObject};
use crate::retrieval::{Qrel, Query};

fn default_font_size() -> f64 {
    FormatAttrs::default().font_size
}

/// One line of a document file. `doc_id` groups lines of multi-document files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    pub id: usize,
    pub kind: ObjectKind,
    pub text: String,
    #[serde(default)]
    pub font_family: u32,
    #[serde(default = "default_font_size")]
    pub font_size: f64,
    #[serde(default)]
    pub font_color: u32,
    #[serde(default)]
    pub bold: bool,
    #[serde(default)]
    pub italic: bool,
    #[serde(default)]
    pub centered: bool,
    #[serde(default)]
    pub indent: f64,
    #[serde(default)]
    pub is_heading: Option<bool>,
}

impl ObjectLine {
    pub fn from_object(doc_id: Option<&str>, o: &PhysicalObject) -> Self {
        ObjectLine {
            doc_id: doc_id.map(str::to_string),
            id: o.id,
            kind: o.kind,
            text: o.text.clone(),
            font_family: o.format.font_family_id,
            font_size: o.format.font_size,
            font_color: o.format.font_color_id,
            bold: o.format.bold,
            italic: o.format.italic,
            centered: o.format.centered,
            indent: o.format.indent,
            is_heading: o.is_heading,
        }
    }

    pub fn into_object(self) -> PhysicalObject {
        PhysicalObject {
            id: self.id,
            kind: self.kind,
            text: self.text,
            format: FormatAttrs {
                font_family_id: self.font_family,
                font_size: self.font_size,
                font_color_id: self.font_color,
                bold: self.bold,
                italic: self.italic,
                centered: self.centered,
                indent: self.indent,
            },
            is_heading: self.is_heading,
        }
    }
}

/// Non-empty lines of a JSON Lines file, each parsed as `T`, with 1-based line numbers.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, value));
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, &row).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads documents from a JSON Lines file. Lines without `doc_id` belong to
/// one document named after the file stem; otherwise consecutive lines with
/// the same `doc_id` form a document.
pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "doc".into());
    let lines: Vec<(usize, ObjectLine)> = read_jsonl(path)?;
    let mut docs: Vec<Document> = Vec::new();
    let mut current: Option<(String, Vec<PhysicalObject>)> = None;
    let mut seen = std::collections::HashSet::new();
    let finish = |cur: Option<(String, Vec<PhysicalObject>)>, docs: &mut Vec<Document>| -> Result<()> {
        if let Some((id, objects)) = cur {
            docs.push(Document::new(id, objects)?);
        }
        Ok(())
    };
    for (line_no, line) in lines {
        let doc_id = line.doc_id.clone().unwrap_or_else(|| stem.clone());
        let same = current.as_ref().is_some_and(|(id, _)| *id == doc_id);
        if !same {
            finish(current.take(), &mut docs)?;
            if !seen.insert(doc_id.clone()) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("lines of document {doc_id} are not contiguous"),
                });
            }
            current = Some((doc_id, Vec::new()));
        }
        current.as_mut().unwrap().1.push(line.into_object());
    }
    finish(current, &mut docs)?;
    if docs.is_empty() {
        return Err(Error::EmptyDocument);
    }
    Ok(docs)
}

pub fn write_documents(path: &Path, docs: &[Document]) -> Result<()> {
    write_jsonl(
        path,
        docs.iter()
            .flat_map(|d| d.objects.iter().map(move |o| ObjectLine::from_object(Some(&d.doc_id), o))),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub doc_id: String,
    pub parents: Vec<i64>,
}

impl TreeRecord {
    pub fn new(doc_id: &str, tree: &HierarchyTree) -> Self {
        TreeRecord {
            doc_id: doc_id.to_string(),
            parents: tree.raw_parents(),
        }
    }

    pub fn tree(&self) -> Result<HierarchyTree> {
        HierarchyTree::from_raw_parents(&self.parents).map_err(|e| match e {
            Error::PreorderViolation { .. } | Error::UnknownNode(_) => Error::InvalidDocument {
                doc_id: self.doc_id.clone(),
                message: e.to_string(),
            },
            other => other,
        })
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TreeFile {
    Many(Vec<TreeRecord>),
    One(TreeRecord),
}

/// Reads a tree file: a JSON array of `{doc_id, parents}` or a single such object.
pub fn read_trees(path: &Path) -> Result<Vec<(String, HierarchyTree)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed: TreeFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let records = match parsed {
        TreeFile::Many(v) => v,
        TreeFile::One(r) => vec![r],
    };
    records.iter().map(|r| Ok((r.doc_id.clone(), r.tree()?))).collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_trees<'a>(path: &Path, trees: impl IntoIterator<Item = (&'a str, &'a HierarchyTree)>) -> Result<()> {
    let records: Vec<TreeRecord> = trees.into_iter().map(|(id, t)| TreeRecord::new(id, t)).collect();
    write_json(path, &records)
}

pub fn read_queries(path: &Path) -> Result<Vec<Query>> {
    read_jsonl::<Query>(path)?
        .into_iter()
        .map(|(line, q)| {
            q.validate().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            })?;
            Ok(q)
        })
        .collect()
}

pub fn read_qrels(path: &Path) -> Result<Vec<Qrel>> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, q)| q).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::NodeRef;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn documents_round_trip() {
        let dir = tmp();
        let a = Document::new(
            "a",
            vec![PhysicalObject::paragraph(0, "1. Intro", FormatAttrs::default())],
        )
        .unwrap();
        let b = Document::new(
            "b",
            vec![
                PhysicalObject::paragraph(0, "x", FormatAttrs::default()),
                PhysicalObject::paragraph(1, "y", FormatAttrs::default()),
            ],
        )
        .unwrap();
        let p = dir.path().join("docs.jsonl");
        write_documents(&p, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(read_documents(&p).unwrap(), vec![a, b]);
    }

    #[test]
    fn single_document_uses_stem() {
        let dir = tmp();
        let p = dir.path().join("report.jsonl");
        std::fs::write(&p, "{\"id\":0,\"kind\":\"paragraph\",\"text\":\"hi\"}\n\n").unwrap();
        let docs = read_documents(&p).unwrap();
        assert_eq!(docs[0].doc_id, "report");
        assert_eq!(docs[0].objects[0].format.font_size, 10.5);
    }

    #[test]
    fn parse_error_names_line() {
        let dir = tmp();
        let p = dir.path().join("bad.jsonl");
        let mut text = String::new();
        for i in 0..16 {
            text.push_str(&format!("{{\"id\":{i},\"kind\":\"paragraph\",\"text\":\"t\"}}\n"));
        }
        text.push_str("{\"id\": 16, \"kind\": \n");
        std::fs::write(&p, text).unwrap();
        match read_documents(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 17),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_contiguous_documents_rejected() {
        let dir = tmp();
        let p = dir.path().join("d.jsonl");
        let line = |d: &str, i: usize| format!("{{\"doc_id\":\"{d}\",\"id\":{i},\"kind\":\"paragraph\",\"text\":\"t\"}}\n");
        std::fs::write(&p, line("a", 0) + &line("b", 0) + &line("a", 1)).unwrap();
        assert!(matches!(read_documents(&p), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn trees_round_trip() {
        let dir = tmp();
        let t = HierarchyTree::from_parents(&[NodeRef::Root, NodeRef::Obj(0)]).unwrap();
        let p = dir.path().join("trees.json");
        write_trees(&p, [("d", &t)]).unwrap();
        assert_eq!(read_trees(&p).unwrap(), vec![("d".to_string(), t.clone())]);
        std::fs::write(&p, r#"{"doc_id":"x","parents":[-1,0]}"#).unwrap();
        assert_eq!(read_trees(&p).unwrap()[0].1, t);
        std::fs::write(&p, r#"{"doc_id":"x","parents":[-1,1]}"#).unwrap();
        assert!(read_trees(&p).is_err());
    }
}
