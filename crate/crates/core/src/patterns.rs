//! Numbering-pattern library for heading prefixes such as `1.`, `(一)` or `第三节`.
//!
//! Patterns are tried in priority order and the first match wins, so the
//! library assigns at most one pattern id to a text. Id 0 means no match.

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How the counter captured by a pattern is turned into an integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterKind {
    Arabic,
    RomanUpper,
    RomanLower,
    AlphaUpper,
    AlphaLower,
    Chinese,
    Circled,
    None,
}

/// Serializable definition of one pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternDef {
    pub name: String,
    /// Regex anchored at the start of the text; capture group 1 holds the counter.
    pub regex: String,
    pub counter: CounterKind,
    /// Example rendering template with `{}` standing for the counter.
    #[serde(default)]
    pub template: String,
}

#[derive(Debug, Clone)]
struct Compiled {
    def: PatternDef,
    re: Regex,
}

/// A pattern match: 1-based pattern id and the extracted counter, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatternMatch {
    pub id: usize,
    pub counter: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct PatternLibrary {
    patterns: Vec<Compiled>,
}

macro_rules! def {
    ($name:expr, $re:expr, $kind:ident, $tpl:expr) => {
        PatternDef {
            name: $name.to_string(),
            regex: $re.to_string(),
            counter: CounterKind::$kind,
            template: $tpl.to_string(),
        }
    };
}

const CN_DIGITS: &str = "[一二三四五六七八九十百零]+";

/// The 24 built-in numbering conventions, in priority order.
pub fn builtin_defs() -> Vec<PatternDef> {
    vec![
        def!("chinese_section", format!(r"^第({CN_DIGITS})节"), Chinese, "第{}节"),
        def!("chinese_chapter", format!(r"^第({CN_DIGITS})章"), Chinese, "第{}章"),
        def!("chinese_article", r"^第(\d+)条", Arabic, "第{}条"),
        def!("chinese_comma", format!(r"^({CN_DIGITS})、"), Chinese, "{}、"),
        def!("chinese_paren", format!(r"^[（(]({CN_DIGITS})[)）]"), Chinese, "({})"),
        def!("decimal_3", r"^\d+\.\d+\.(\d+)(?:\s|$)", Arabic, "1.1.{}"),
        def!("decimal_2", r"^\d+\.(\d+)(?:\s|$)", Arabic, "1.{}"),
        def!("arabic_dot", r"^(\d+)\.(?:\s|$)", Arabic, "{}."),
        def!("arabic_comma", r"^(\d+)、", Arabic, "{}、"),
        def!("arabic_paren", r"^[（(](\d+)[)）]", Arabic, "({})"),
        def!("arabic_half_paren", r"^(\d+)\)", Arabic, "{})"),
        def!("arabic_bracket", r"^\[(\d+)\]", Arabic, "[{}]"),
        def!("circled", r"^([①-⑳])", Circled, "{}"),
        def!("roman_upper_dot", r"^([IVXLC]+)\.(?:\s|$)", RomanUpper, "{}."),
        def!("roman_lower_paren", r"^\(([ivxlc]+)\)", RomanLower, "({})"),
        def!("roman_lower_dot", r"^([ivxlc]+)\.(?:\s|$)", RomanLower, "{}."),
        def!("alpha_upper_dot", r"^([A-Z])\.(?:\s|$)", AlphaUpper, "{}."),
        def!("alpha_upper_paren", r"^\(([A-Z])\)", AlphaUpper, "({})"),
        def!("alpha_lower_half_paren", r"^([a-z])\)", AlphaLower, "{})"),
        def!("alpha_lower_paren", r"^\(([a-z])\)", AlphaLower, "({})"),
        def!("alpha_lower_dot", r"^([a-z])\.(?:\s|$)", AlphaLower, "{}."),
        def!("section_word", r"^(?i:section)\s+(\d+)", Arabic, "Section {}"),
        def!("chapter_word", r"^(?i:chapter)\s+(\d+)", Arabic, "Chapter {}"),
        def!("bullet", r"^([•●▪◦])", None, "•"),
    ]
}

impl Default for PatternLibrary {
    fn default() -> Self {
        Self::from_defs(builtin_defs()).expect("built-in patterns compile")
    }
}

impl PatternLibrary {
    pub fn from_defs(defs: Vec<PatternDef>) -> Result<Self> {
        let patterns = defs
            .into_iter()
            .map(|def| {
                let re = Regex::new(&def.regex)
                    .map_err(|e| Error::Config(format!("pattern {}: {e}", def.name)))?;
                Ok(Compiled { def, re })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PatternLibrary { patterns })
    }

    /// Built-ins followed by user-supplied definitions (JSON array of [`PatternDef`]).
    pub fn with_extensions_json(json: &str) -> Result<Self> {
        let extra: Vec<PatternDef> =
            serde_json::from_str(json).map_err(|e| Error::Config(format!("pattern library: {e}")))?;
        let mut defs = builtin_defs();
        defs.extend(extra);
        Self::from_defs(defs)
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn defs(&self) -> impl Iterator<Item = &PatternDef> {
        self.patterns.iter().map(|c| &c.def)
    }

    pub fn def(&self, id: usize) -> Option<&PatternDef> {
        id.checked_sub(1)
            .and_then(|i| self.patterns.get(i))
            .map(|c| &c.def)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.patterns
            .iter()
            .position(|c| c.def.name == name)
            .map(|i| i + 1)
    }

    /// First matching pattern, or `None` (pattern id 0).
    pub fn classify(&self, text: &str) -> Option<PatternMatch> {
        let text = text.trim_start();
        self.patterns.iter().enumerate().find_map(|(i, c)| {
            c.re.captures(text).map(|caps| PatternMatch {
                id: i + 1,
                counter: caps
                    .get(1)
                    .and_then(|m| parse_counter(c.def.counter, m.as_str())),
            })
        })
    }

    /// Text after the numbering prefix matched by [`PatternLibrary::classify`].
    pub fn strip_prefix<'t>(&self, text: &'t str) -> &'t str {
        let text = text.trim_start();
        self.patterns
            .iter()
            .find_map(|c| c.re.find(text))
            .map_or(text, |m| &text[m.end()..])
    }

    pub fn pattern_id(&self, text: &str) -> usize {
        self.classify(text).map_or(0, |m| m.id)
    }

    /// Renders the numbering prefix of pattern `id` for `counter`.
    pub fn render(&self, id: usize, counter: u32) -> Option<String> {
        let def = self.def(id)?;
        let value = match def.counter {
            CounterKind::Arabic => counter.to_string(),
            CounterKind::RomanUpper => to_roman(counter),
            CounterKind::RomanLower => to_roman(counter).to_lowercase(),
            CounterKind::AlphaUpper => alpha(counter, b'A')?,
            CounterKind::AlphaLower => alpha(counter, b'a')?,
            CounterKind::Chinese => to_chinese(counter)?,
            CounterKind::Circled => char::from_u32(0x245F + counter.clamp(1, 20)).map(String::from)?,
            CounterKind::None => String::new(),
        };
        Some(def.template.replace("{}", &value))
    }

    /// Hex SHA-256 over the serialized definitions; stored in model files.
    pub fn hash(&self) -> String {
        let defs: Vec<&PatternDef> = self.defs().collect();
        let bytes = serde_json::to_vec(&defs).expect("pattern defs serialize");
        hex::encode(Sha256::digest(bytes))
    }
}

fn alpha(counter: u32, base: u8) -> Option<String> {
    (1..=26)
        .contains(&counter)
        .then(|| ((base + (counter - 1) as u8) as char).to_string())
}

fn parse_counter(kind: CounterKind, s: &str) -> Option<u32> {
    let n = match kind {
        CounterKind::Arabic => s.parse().ok()?,
        CounterKind::RomanUpper | CounterKind::RomanLower => from_roman(s)?,
        CounterKind::AlphaUpper | CounterKind::AlphaLower => {
            let c = s.chars().next()?.to_ascii_lowercase();
            c as u32 - 'a' as u32 + 1
        }
        CounterKind::Chinese => from_chinese(s)?,
        CounterKind::Circled => s.chars().next()? as u32 - 0x245F,
        CounterKind::None => return None,
    };
    (n > 0).then_some(n)
}

fn from_roman(s: &str) -> Option<u32> {
    let value = |c: char| match c.to_ascii_uppercase() {
        'I' => Some(1),
        'V' => Some(5),
        'X' => Some(10),
        'L' => Some(50),
        'C' => Some(100),
        _ => None,
    };
    let digits = s.chars().map(value).collect::<Option<Vec<u32>>>()?;
    let mut total = 0i64;
    for (i, &d) in digits.iter().enumerate() {
        if digits.get(i + 1).is_some_and(|&next| next > d) {
            total -= d as i64;
        } else {
            total += d as i64;
        }
    }
    u32::try_from(total).ok()
}

fn to_roman(mut n: u32) -> String {
    const TABLE: [(u32, &str); 9] = [
        (100, "C"),
        (90, "XC"),
        (50, "L"),
        (40, "XL"),
        (10, "X"),
        (9, "IX"),
        (5, "V"),
        (4, "IV"),
        (1, "I"),
    ];
    let mut out = String::new();
    for &(v, s) in &TABLE {
        while n >= v {
            out.push_str(s);
            n -= v;
        }
    }
    out
}

const CN: [char; 10] = ['零', '一', '二', '三', '四', '五', '六', '七', '八', '九'];

fn from_chinese(s: &str) -> Option<u32> {
    let digit = |c: char| CN.iter().position(|&d| d == c).map(|p| p as u32);
    let mut total = 0;
    let mut current = 0;
    for c in s.chars() {
        match c {
            '十' => {
                total += current.max(1) * 10;
                current = 0;
            }
            '百' => {
                total += current.max(1) * 100;
                current = 0;
            }
            _ => current = digit(c)?,
        }
    }
    Some(total + current)
}

fn to_chinese(n: u32) -> Option<String> {
    if n == 0 || n >= 100 {
        return None;
    }
    let (tens, ones) = (n / 10, n % 10);
    let mut out = String::new();
    if tens > 1 {
        out.push(CN[tens as usize]);
    }
    if tens >= 1 {
        out.push('十');
    }
    if ones > 0 {
        out.push(CN[ones as usize]);
    }
    Some(out)
}
