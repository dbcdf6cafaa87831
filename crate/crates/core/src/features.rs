//! Fixed-length feature vectors for put-or-skip contexts.

use crate::hierarchy::{ObjectKind, PhysicalObject};
use crate::patterns::{PatternLibrary, PatternMatch};
use crate::scoring::ScoreContext;

pub const FEATURE_NAMES: &[&str] = &[
    "parent_is_root",
    "has_sibling",
    "sib_font_family_eq",
    "sib_font_size_eq",
    "sib_font_color_eq",
    "sib_bold_eq",
    "sib_italic_eq",
    "sib_centered_eq",
    "sib_indent_delta",
    "sib_font_size_log_ratio",
    "sib_format_match_frac",
    "parent_font_size_log_ratio",
    "parent_bold_over_nonbold",
    "parent_indent_delta",
    "parent_format_eq",
    "parent_more_prominent",
    "cand_pattern_id",
    "cand_has_pattern",
    "continues_counter",
    "restarts_counter",
    "same_pattern_as_siblings",
    "same_pattern_as_parent",
    "first_child_restart",
    "continue_same_format",
    "position_depth",
    "text_len_bucket",
    "kind_paragraph",
    "kind_table",
    "kind_figure",
    "kind_chart",
    "cand_bold",
];

pub const FEATURE_LEN: usize = FEATURE_NAMES.len();

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn log_ratio(a: f64, b: f64) -> f64 {
    (a / b).ln().clamp(-3.0, 3.0)
}

fn indent_delta(a: f64, b: f64) -> f64 {
    (a - b).clamp(-8.0, 8.0)
}

fn more_prominent(a: &PhysicalObject, b: &PhysicalObject) -> bool {
    a.format.font_size > b.format.font_size || (a.format.bold && !b.format.bold)
}

/// Bucketed character length: `floor(log2(chars + 1))`, capped at 10.
pub fn text_len_bucket(text: &str) -> f64 {
    let n = text.chars().count() as f64;
    (n + 1.0).log2().floor().min(10.0)
}

pub fn extract_features(ctx: &ScoreContext<'_>, patterns: &PatternLibrary) -> FeatureVector {
    let cand = ctx.candidate;
    let cf = &cand.format;
    let cand_pat = patterns.classify(&cand.text);
    let cand_pid = cand_pat.map_or(0, |m| m.id);
    let mut v = vec![0.0; FEATURE_LEN];

    v[0] = flag(ctx.parent.is_none());

    let mut continues = false;
    let mut same_sib_pattern = false;
    if let Some(last) = ctx.siblings.last() {
        let sf = &last.format;
        v[1] = 1.0;
        v[2] = flag(cf.font_family_id == sf.font_family_id);
        v[3] = flag(cf.font_size == sf.font_size);
        v[4] = flag(cf.font_color_id == sf.font_color_id);
        v[5] = flag(cf.bold == sf.bold);
        v[6] = flag(cf.italic == sf.italic);
        v[7] = flag(cf.centered == sf.centered);
        v[8] = indent_delta(cf.indent, sf.indent);
        v[9] = log_ratio(cf.font_size, sf.font_size);
        let matching = ctx.siblings.iter().filter(|s| s.format.same_as(cf)).count();
        v[10] = matching as f64 / ctx.siblings.len() as f64;

        let sib_pat = patterns.classify(&last.text);
        if cand_pid != 0 {
            same_sib_pattern = sib_pat.map(|m| m.id) == Some(cand_pid);
            continues = same_sib_pattern && counter_continues(cand_pat, sib_pat);
        }
    }

    if let Some(parent) = ctx.parent {
        let pf = &parent.format;
        v[11] = log_ratio(pf.font_size, cf.font_size);
        v[12] = flag(pf.bold && !cf.bold);
        v[13] = indent_delta(cf.indent, pf.indent);
        v[14] = flag(pf.same_as(cf));
        v[15] = flag(more_prominent(parent, cand));
        if cand_pid != 0 {
            v[21] = flag(patterns.pattern_id(&parent.text) == cand_pid);
        }
    }

    let restarts = cand_pat.and_then(|m| m.counter) == Some(1);
    v[16] = cand_pid as f64;
    v[17] = flag(cand_pid != 0);
    v[18] = flag(continues);
    v[19] = flag(restarts);
    v[20] = flag(same_sib_pattern);
    v[22] = flag(restarts && ctx.siblings.is_empty());
    v[23] = flag(continues && v[10] > 0.0 && v[3] == 1.0);
    v[24] = (ctx.position_depth as f64).min(12.0);
    v[25] = text_len_bucket(&cand.text);
    for (i, kind) in ObjectKind::ALL.iter().enumerate() {
        v[26 + i] = flag(cand.kind == *kind);
    }
    v[30] = flag(cf.bold);
    FeatureVector(v)
}

fn counter_continues(cand: Option<PatternMatch>, sib: Option<PatternMatch>) -> bool {
    match (cand.and_then(|m| m.counter), sib.and_then(|m| m.counter)) {
        (Some(c), Some(s)) => c == s + 1,
        _ => false,
    }
}
