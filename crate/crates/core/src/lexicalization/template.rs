//! Delexicalized templates: words mixed with `ENTITY-n`, `VP[...]` and
//! `DT[...]` tags.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const VP_KEYS: [&str; 5] = ["aspect", "tense", "voice", "person", "number"];

/// Verb-phrase features. `None` is written `null` and acts as a wildcard
/// when matching realization rules.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VpTag {
    pub aspect: Option<String>,
    pub tense: Option<String>,
    pub voice: Option<String>,
    pub person: Option<String>,
    pub number: Option<String>,
}

impl VpTag {
    pub fn new(aspect: &str, tense: &str, voice: &str, person: &str, number: &str) -> Self {
        let f = |v: &str| (v != "null").then(|| v.to_owned());
        VpTag {
            aspect: f(aspect),
            tense: f(tense),
            voice: f(voice),
            person: f(person),
            number: f(number),
        }
    }

    fn fields(&self) -> [&Option<String>; 5] {
        [&self.aspect, &self.tense, &self.voice, &self.person, &self.number]
    }

    fn field_mut(&mut self, key: &str) -> &mut Option<String> {
        match key {
            "aspect" => &mut self.aspect,
            "tense" => &mut self.tense,
            "voice" => &mut self.voice,
            "person" => &mut self.person,
            _ => &mut self.number,
        }
    }

    /// True when every non-null feature of `self` equals the corresponding
    /// feature of `other`.
    pub fn subsumes(&self, other: &VpTag) -> bool {
        self.fields()
            .iter()
            .zip(other.fields())
            .all(|(a, b)| a.is_none() || *a == b)
    }

    fn parse_body(body: &str, position: usize) -> Result<Self> {
        let err = |message: String| Error::Template { position, message };
        if body.is_empty() {
            return Err(err("empty VP attribute list".into()));
        }
        let mut tag = VpTag::default();
        let mut seen = [false; 5];
        for pair in body.split(',') {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| err(format!("attribute `{pair}` lacks `=`")))?;
            let k = VP_KEYS
                .iter()
                .position(|x| *x == key)
                .ok_or_else(|| err(format!("unknown VP attribute `{key}`")))?;
            if value.is_empty() {
                return Err(err(format!("empty value for VP attribute `{key}`")));
            }
            if std::mem::replace(&mut seen[k], true) {
                return Err(err(format!("duplicate VP attribute `{key}`")));
            }
            *tag.field_mut(key) = (value != "null").then(|| value.to_owned());
        }
        Ok(tag)
    }
}

impl fmt::Display for VpTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("VP[")?;
        for (i, (k, v)) in VP_KEYS.iter().zip(self.fields()).enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}={}", v.as_deref().unwrap_or("null"))?;
        }
        f.write_str("]")
    }
}

/// One template position. `E` is the entity slot payload: a 1-based index
/// before binding, an entity identifier after.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Token<E> {
    Word(String),
    Entity(E),
    Vp(VpTag),
    Dt(String),
}

impl<E> Token<E> {
    pub fn is_tag(&self) -> bool {
        !matches!(self, Token::Word(_))
    }

    pub fn as_word(&self) -> Option<&str> {
        match self {
            Token::Word(w) => Some(w),
            _ => None,
        }
    }

    /// Maps the entity payload, leaving other tokens as they are.
    pub fn map_entity<F, T>(self, f: F) -> Result<Token<T>>
    where
        F: FnOnce(E) -> Result<T>,
    {
        Ok(match self {
            Token::Word(w) => Token::Word(w),
            Token::Entity(e) => Token::Entity(f(e)?),
            Token::Vp(v) => Token::Vp(v),
            Token::Dt(d) => Token::Dt(d),
        })
    }
}

impl fmt::Display for Token<usize> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Word(w) => f.write_str(w),
            Token::Entity(i) => write!(f, "ENTITY-{i}"),
            Token::Vp(v) => v.fmt(f),
            Token::Dt(form) => write!(f, "DT[form={form}]"),
        }
    }
}

impl fmt::Display for Token<String> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Word(w) | Token::Entity(w) => f.write_str(w),
            Token::Vp(v) => v.fmt(f),
            Token::Dt(form) => write!(f, "DT[form={form}]"),
        }
    }
}

/// A parsed template with entity slots numbered by first occurrence in the
/// ordered triple set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Template {
    pub tokens: Vec<Token<usize>>,
}

/// A template whose slots carry entity identifiers.
pub type BoundTemplate = Vec<Token<String>>;

/// Removes whitespace inside `[...]` so every tag is a single token.
pub fn normalize_brackets(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut depth = 0usize;
    for c in s.chars() {
        match c {
            '[' => depth += 1,
            ']' => depth = depth.saturating_sub(1),
            _ => {}
        }
        if depth > 0 && c.is_whitespace() {
            continue;
        }
        out.push(c);
    }
    out
}

fn is_bracketed_tag(tok: &str) -> bool {
    match tok.find('[') {
        Some(i) if i > 0 => tok[..i].chars().all(|c| c.is_ascii_uppercase()),
        _ => false,
    }
}

pub fn parse_token(tok: &str, position: usize) -> Result<Token<usize>> {
    let err = |message: String| Error::Template { position, message };
    if let Some(n) = tok.strip_prefix("ENTITY-") {
        if !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) {
            let index: usize = n.parse().map_err(|_| err(format!("bad entity index `{n}`")))?;
            if index == 0 {
                return Err(err("entity indices start at 1".into()));
            }
            return Ok(Token::Entity(index));
        }
    }
    if !is_bracketed_tag(tok) {
        return Ok(Token::Word(tok.to_owned()));
    }
    let body = tok
        .find('[')
        .and_then(|i| tok[i + 1..].strip_suffix(']'))
        .ok_or_else(|| err(format!("unterminated tag `{tok}`")))?;
    if tok.starts_with("VP[") {
        Ok(Token::Vp(VpTag::parse_body(body, position)?))
    } else if tok.starts_with("DT[") {
        match body.split_once('=') {
            Some(("form", v)) if !v.is_empty() && !v.contains([',', '=']) => Ok(Token::Dt(v.to_owned())),
            _ => Err(err(format!("malformed DT attributes `{body}`"))),
        }
    } else {
        Err(err(format!("unknown tag `{tok}`")))
    }
}

impl Template {
    pub fn parse<S: AsRef<str>>(tokens: &[S]) -> Result<Self> {
        let tokens = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| parse_token(t.as_ref(), i))
            .collect::<Result<_>>()?;
        Ok(Template { tokens })
    }

    /// Parses free text, normalizing whitespace inside tag brackets first.
    pub fn parse_str(s: &str) -> Result<Self> {
        let norm = normalize_brackets(s);
        let toks: Vec<&str> = norm.split_whitespace().collect();
        Self::parse(&toks)
    }

    pub fn to_tokens(&self) -> Vec<String> {
        self.tokens.iter().map(ToString::to_string).collect()
    }

    pub fn serialize(&self) -> String {
        self.to_tokens().join(" ")
    }

    /// Lowercases every word; tags are left as they are.
    pub fn uncased(&self) -> Template {
        Template {
            tokens: self
                .tokens
                .iter()
                .map(|t| match t {
                    Token::Word(w) => Token::Word(w.to_lowercase()),
                    other => other.clone(),
                })
                .collect(),
        }
    }

    pub fn entity_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.tokens.iter().filter_map(|t| match t {
            Token::Entity(i) => Some(*i),
            _ => None,
        })
    }

    pub fn max_entity(&self) -> usize {
        self.entity_slots().max().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl TryFrom<String> for Template {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Template::parse_str(&s)
    }
}

impl From<Template> for String {
    fn from(t: Template) -> Self {
        t.serialize()
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

/// Uncased normalized token form of a raw template string: brackets
/// normalized, words lowercased, tags kept. Tokens that fail to parse are
/// kept verbatim (lowercased) so extraction never drops data.
pub fn normalize_template_tokens(s: &str) -> Vec<String> {
    normalize_brackets(s)
        .split_whitespace()
        .enumerate()
        .map(|(i, t)| match parse_token(t, i) {
            Ok(Token::Word(w)) => w.to_lowercase(),
            Ok(tag) => tag.to_string(),
            Err(_) => t.to_lowercase(),
        })
        .collect()
}
