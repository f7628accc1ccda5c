//! Textual realization: verb inflection, determiner choice and
//! detokenization.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split};
use crate::error::Result;
use crate::lexicalization::{Template, Token, VpTag};
use crate::records::{read_records, write_records, Tally};
use crate::reg::ReferencedTemplate;
use crate::text::{detokenize, uncased_tokens};

/// Longest surface span a single verb tag may align to.
pub const MAX_VERB_SPAN: usize = 3;

const VOWEL_SOUND_EXCEPTIONS: [&str; 4] = ["hour", "honest", "honor", "heir"];
const CONSONANT_SOUND_EXCEPTIONS: [&str; 6] = ["uni", "one", "once", "euro", "use", "usu"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LetterClass {
    Vowel,
    Consonant,
}

/// Sound class of a word's first letter, with a few spelling exceptions.
pub fn letter_class(word: &str) -> LetterClass {
    let w = word.to_lowercase();
    if VOWEL_SOUND_EXCEPTIONS.iter().any(|p| w.starts_with(p)) {
        return LetterClass::Vowel;
    }
    if CONSONANT_SOUND_EXCEPTIONS.iter().any(|p| w.starts_with(p)) {
        return LetterClass::Consonant;
    }
    match w.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => LetterClass::Vowel,
        _ => LetterClass::Consonant,
    }
}

/// Past tense and past participle of common irregular verbs.
fn irregular(lemma: &str) -> Option<(&'static str, &'static str)> {
    Some(match lemma {
        "be" => ("was", "been"),
        "have" => ("had", "had"),
        "do" => ("did", "done"),
        "bear" => ("bore", "born"),
        "become" => ("became", "become"),
        "begin" => ("began", "begun"),
        "build" => ("built", "built"),
        "buy" => ("bought", "bought"),
        "choose" => ("chose", "chosen"),
        "come" => ("came", "come"),
        "find" => ("found", "found"),
        "get" => ("got", "got"),
        "give" => ("gave", "given"),
        "go" => ("went", "gone"),
        "grow" => ("grew", "grown"),
        "hold" => ("held", "held"),
        "know" => ("knew", "known"),
        "lead" => ("led", "led"),
        "leave" => ("left", "left"),
        "make" => ("made", "made"),
        "meet" => ("met", "met"),
        "run" => ("ran", "run"),
        "say" => ("said", "said"),
        "see" => ("saw", "seen"),
        "sell" => ("sold", "sold"),
        "send" => ("sent", "sent"),
        "set" => ("set", "set"),
        "speak" => ("spoke", "spoken"),
        "spend" => ("spent", "spent"),
        "stand" => ("stood", "stood"),
        "take" => ("took", "taken"),
        "teach" => ("taught", "taught"),
        "tell" => ("told", "told"),
        "think" => ("thought", "thought"),
        "win" => ("won", "won"),
        "write" => ("wrote", "written"),
        _ => return None,
    })
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

fn ends_consonant_y(w: &str) -> bool {
    let mut rev = w.chars().rev();
    matches!((rev.next(), rev.next()), (Some('y'), Some(c)) if !is_vowel(c))
}

pub fn third_singular(lemma: &str) -> String {
    match lemma {
        "be" => "is".into(),
        "have" => "has".into(),
        "do" => "does".into(),
        w if ends_consonant_y(w) => format!("{}ies", &w[..w.len() - 1]),
        w if ["s", "sh", "ch", "x", "z", "o"].iter().any(|s| w.ends_with(s)) => format!("{w}es"),
        w => format!("{w}s"),
    }
}

/// Short consonant-vowel-consonant stems double their final letter: run,
/// stop, plan.
fn doubles_final(w: &str) -> bool {
    let c: Vec<char> = w.chars().collect();
    let vowel_groups = c.windows(2).filter(|p| !is_vowel(p[0]) && is_vowel(p[1])).count()
        + usize::from(c.first().is_some_and(|&x| is_vowel(x)));
    matches!(c[..], [.., a, b, z] if !is_vowel(a) && is_vowel(b) && !is_vowel(z) && !"wxy".contains(z))
        && vowel_groups == 1
}

fn regular_ed(w: &str) -> String {
    if doubles_final(w) {
        format!("{w}{}ed", &w[w.len() - 1..])
    } else if w.ends_with('e') {
        format!("{w}d")
    } else if ends_consonant_y(w) {
        format!("{}ied", &w[..w.len() - 1])
    } else {
        format!("{w}ed")
    }
}

pub fn past(lemma: &str) -> String {
    irregular(lemma).map_or_else(|| regular_ed(lemma), |(p, _)| p.to_owned())
}

pub fn participle(lemma: &str) -> String {
    irregular(lemma).map_or_else(|| regular_ed(lemma), |(_, p)| p.to_owned())
}

pub fn gerund(lemma: &str) -> String {
    if let Some(stem) = lemma.strip_suffix("ie") {
        format!("{stem}ying")
    } else if lemma.ends_with('e') && !["ee", "ye", "oe"].iter().any(|s| lemma.ends_with(s)) && lemma != "be" {
        format!("{}ing", &lemma[..lemma.len() - 1])
    } else if doubles_final(lemma) {
        format!("{lemma}{}ing", &lemma[lemma.len() - 1..])
    } else {
        format!("{lemma}ing")
    }
}

fn is_plural(tag: &VpTag) -> bool {
    tag.number.as_deref() == Some("plural")
}

fn finite_be(tag: &VpTag) -> String {
    let first = tag.person.as_deref() == Some("1st");
    let second = tag.person.as_deref() == Some("2nd");
    match tag.tense.as_deref() {
        Some("past") => if is_plural(tag) || second { "were" } else { "was" }.into(),
        Some("future") => "will be".into(),
        _ if is_plural(tag) || second => "are".into(),
        _ if first => "am".into(),
        _ => "is".into(),
    }
}

fn finite_have(tag: &VpTag) -> String {
    match tag.tense.as_deref() {
        Some("past") => "had".into(),
        Some("future") => "will have".into(),
        _ if is_plural(tag) || matches!(tag.person.as_deref(), Some("1st" | "2nd")) => "have".into(),
        _ => "has".into(),
    }
}

fn finite(tag: &VpTag, lemma: &str) -> String {
    if lemma == "be" {
        return finite_be(tag);
    }
    match tag.tense.as_deref() {
        Some("past") => past(lemma),
        Some("future") => format!("will {lemma}"),
        _ if tag.person.as_deref() == Some("3rd") && !is_plural(tag) => third_singular(lemma),
        _ if tag.person.is_none() && tag.number.as_deref() == Some("singular") => third_singular(lemma),
        _ => lemma.to_owned(),
    }
}

/// Regular inflection of `lemma` under `tag`, used when no extracted rule
/// applies.
pub fn inflect(tag: &VpTag, lemma: &str) -> Vec<String> {
    let passive = tag.voice.as_deref() == Some("passive");
    let surface = match (tag.aspect.as_deref(), passive) {
        (Some("progressive"), false) => gerund(lemma),
        (Some("progressive"), true) => format!("being {}", participle(lemma)),
        (Some("perfect"), false) => format!("{} {}", finite_have(tag), participle(lemma)),
        (Some("perfect"), true) => format!("{} been {}", finite_have(tag), participle(lemma)),
        (_, true) => format!("{} {}", finite_be(tag), participle(lemma)),
        (_, false) => finite(tag, lemma),
    };
    surface.split_whitespace().map(str::to_owned).collect()
}

/// True when every feature is null on one side or equal on both.
pub fn compatible(a: &VpTag, b: &VpTag) -> bool {
    a.subsumes(b) || b.subsumes(a) || {
        let f = |x: &Option<String>, y: &Option<String>| x.is_none() || y.is_none() || x == y;
        f(&a.aspect, &b.aspect)
            && f(&a.tense, &b.tense)
            && f(&a.voice, &b.voice)
            && f(&a.person, &b.person)
            && f(&a.number, &b.number)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RuleRecord {
    Verb {
        tag: VpTag,
        lemma: String,
        values: Vec<(Vec<String>, usize)>,
    },
    Det {
        form: String,
        class: LetterClass,
        values: Vec<(String, usize)>,
    },
}

/// Verb and determiner surfaces observed in training texts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleTable {
    pub verb_rules: BTreeMap<(VpTag, String), Tally<Vec<String>>>,
    pub det_rules: BTreeMap<(String, LetterClass), Tally<String>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionStats {
    pub aligned: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Item {
    Exact(String),
    Verb(VpTag, String),
    Det(String, String),
}

fn alignment_items(template: &Template, refexes: &[String]) -> Option<Vec<Item>> {
    let mut items = Vec::new();
    let mut refs = refexes.iter();
    let mut toks = template.tokens.iter().peekable();
    while let Some(t) = toks.next() {
        match t {
            Token::Word(w) => items.push(Item::Exact(w.to_lowercase())),
            Token::Entity(_) => items.extend(uncased_tokens(refs.next()?).into_iter().map(Item::Exact)),
            Token::Vp(tag) => match toks.next() {
                Some(Token::Word(lemma)) => items.push(Item::Verb(tag.clone(), lemma.to_lowercase())),
                _ => return None,
            },
            Token::Dt(form) => match toks.next() {
                Some(Token::Word(det)) => items.push(Item::Det(form.clone(), det.to_lowercase())),
                _ => return None,
            },
        }
    }
    refs.next().is_none().then_some(items)
}

fn span_range(item: &Item) -> std::ops::RangeInclusive<usize> {
    match item {
        Item::Verb(..) => 1..=MAX_VERB_SPAN,
        _ => 1..=1,
    }
}

/// Aligns items to text tokens; returns the span length chosen per item.
fn align(items: &[Item], text: &[String]) -> Option<Vec<usize>> {
    let (n, m) = (items.len(), text.len());
    let mut ok = vec![vec![false; m + 1]; n + 1];
    ok[n][m] = true;
    for i in (0..n).rev() {
        for j in (0..=m).rev() {
            ok[i][j] = span_range(&items[i]).any(|len| {
                j + len <= m
                    && ok[i + 1][j + len]
                    && match &items[i] {
                        Item::Exact(w) => text[j] == *w,
                        _ => true,
                    }
            });
        }
    }
    if !ok[0][0] {
        return None;
    }
    let mut spans = Vec::with_capacity(n);
    let mut j = 0;
    for (i, item) in items.iter().enumerate() {
        let len = span_range(item).find(|&len| {
            j + len <= m
                && ok[i + 1][j + len]
                && match item {
                    Item::Exact(w) => text[j] == *w,
                    _ => true,
                }
        })?;
        spans.push(len);
        j += len;
    }
    Some(spans)
}

impl RuleTable {
    fn learn(&mut self, template: &Template, refexes: &[String], text: &str) -> bool {
        let Some(items) = alignment_items(template, refexes) else { return false };
        let tokens = uncased_tokens(text);
        let Some(spans) = align(&items, &tokens) else { return false };
        let mut j = 0;
        for (item, len) in items.iter().zip(spans) {
            match item {
                Item::Verb(tag, lemma) => self
                    .verb_rules
                    .entry((tag.clone(), lemma.clone()))
                    .or_default()
                    .add(tokens[j..j + len].to_vec()),
                Item::Det(form, _) => {
                    let class = tokens.get(j + 1).map_or(LetterClass::Consonant, |w| letter_class(w));
                    self.det_rules.entry((form.clone(), class)).or_default().add(tokens[j].clone());
                }
                Item::Exact(_) => {}
            }
            j += len;
        }
        true
    }

    /// Surface words for a verb tag and lemma.
    pub fn verb(&self, tag: &VpTag, lemma: &str) -> Vec<String> {
        let lemma = lemma.to_lowercase();
        let tie = |a: &Vec<String>, b: &Vec<String>| a.cmp(b);
        if let Some(s) = self.verb_rules.get(&(tag.clone(), lemma.clone())).and_then(|t| t.best_by(tie)) {
            return s.clone();
        }
        let mut merged: Tally<Vec<String>> = Tally::default();
        for ((stored, l), t) in &self.verb_rules {
            if *l == lemma && compatible(tag, stored) {
                for (v, c) in &t.entries {
                    merged.add_n(v.clone(), *c);
                }
            }
        }
        merged.best_by(tie).cloned().unwrap_or_else(|| inflect(tag, &lemma))
    }

    /// Surface determiner for a form before `next`.
    pub fn determiner(&self, form: &str, lemma: &str, next: &str) -> String {
        let class = letter_class(next);
        if let Some(s) = self.det_rules.get(&(form.to_owned(), class)).and_then(|t| t.best_by(|a, b| a.cmp(b))) {
            return s.clone();
        }
        match form {
            "undefined" if class == LetterClass::Vowel => "an".into(),
            "undefined" => "a".into(),
            "defined" => "the".into(),
            _ => lemma.to_owned(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut records: Vec<RuleRecord> = self
            .verb_rules
            .iter()
            .map(|((tag, lemma), t)| RuleRecord::Verb {
                tag: tag.clone(),
                lemma: lemma.clone(),
                values: t.entries.clone(),
            })
            .collect();
        records.extend(self.det_rules.iter().map(|((form, class), t)| RuleRecord::Det {
            form: form.clone(),
            class: *class,
            values: t.entries.clone(),
        }));
        write_records(path, &records)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut table = RuleTable::default();
        for r in read_records::<RuleRecord>(path)? {
            match r {
                RuleRecord::Verb { tag, lemma, values } => {
                    table.verb_rules.insert((tag, lemma), Tally { entries: values });
                }
                RuleRecord::Det { form, class, values } => {
                    table.det_rules.insert((form, class), Tally { entries: values });
                }
            }
        }
        Ok(table)
    }
}

/// Extracts rules from the training split by aligning each gold template,
/// with its gold references substituted, against the gold text.
pub fn rules_extract(c: &Corpus) -> (RuleTable, ExtractionStats) {
    let mut table = RuleTable::default();
    let mut stats = ExtractionStats::default();
    for entry in c.split(Split::Train) {
        for lex in &entry.lexes {
            let learned = Template::parse_str(&lex.template).is_ok_and(|t| {
                let refexes: Vec<String> = lex.references.iter().map(|r| r.refex.clone()).collect();
                table.learn(&t, &refexes, &lex.text)
            });
            if learned {
                stats.aligned += 1;
            } else {
                stats.skipped += 1;
            }
        }
    }
    (table, stats)
}

/// Replaces every tag and the lemma after it by its surface form.
pub fn realize_tokens(rt: &ReferencedTemplate, rules: &RuleTable) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(rt.len());
    let mut i = 0;
    while i < rt.len() {
        match &rt[i] {
            Token::Word(w) | Token::Entity(w) => out.push(w.clone()),
            Token::Vp(tag) => match rt.get(i + 1) {
                Some(Token::Word(lemma)) => {
                    out.extend(rules.verb(tag, lemma));
                    i += 1;
                }
                _ => warn!("dropping dangling {tag}"),
            },
            Token::Dt(form) => match rt.get(i + 1) {
                Some(Token::Word(lemma)) => {
                    let next = rt.get(i + 2).map(|t| t.to_string()).unwrap_or_default();
                    out.push(rules.determiner(form, lemma, &next));
                    i += 1;
                }
                _ => warn!("dropping dangling DT[form={form}]"),
            },
        }
        i += 1;
    }
    out
}

pub fn realize(rt: &ReferencedTemplate, rules: &RuleTable) -> String {
    detokenize(&realize_tokens(rt, rules))
}
