//! Reader for the augmented WebNLG XML release.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use log::warn;
use roxmltree::{Document, Node};

use super::{entity_order, Entry, ImportStats, LexEntry, Partition, Reference, Split, Triple};
use crate::error::{Error, Result};
use crate::lexicalization::template::normalize_brackets;
use crate::text::tokenize;

fn split_of(path: &Path) -> Option<Split> {
    path.components().rev().find_map(|c| {
        let s = c.as_os_str().to_string_lossy().to_lowercase();
        if s == "train" || s.starts_with("train.") {
            Some(Split::Train)
        } else if s == "dev" || s.starts_with("dev.") {
            Some(Split::Dev)
        } else if s == "test" || s.starts_with("test.") {
            Some(Split::Test)
        } else {
            None
        }
    })
}

fn children<'a, 'i>(node: Node<'a, 'i>, name: &'a str) -> impl Iterator<Item = Node<'a, 'i>> + 'a {
    node.children().filter(move |c| c.has_tag_name(name))
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn text_of(node: Node) -> String {
    node.descendants()
        .filter(|n| n.is_text())
        .filter_map(|n| n.text())
        .collect::<String>()
        .trim()
        .to_owned()
}

fn normalize_id(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join("_")
}

fn is_delex_tag(tok: &str) -> bool {
    ["AGENT-", "PATIENT-", "BRIDGE-"]
        .iter()
        .any(|p| tok.strip_prefix(p).is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit())))
}

/// Reads one XML file. Lexicalizations lacking an annotation layer are
/// dropped here and counted in `stats`.
pub(super) fn read_file(path: &Path, stats: &mut ImportStats) -> Result<Vec<Entry>> {
    let src = fs::read_to_string(path)?;
    let doc = Document::parse(&src).map_err(|e| Error::Parse {
        path: path.to_owned(),
        line: e.pos().row as usize,
        message: e.to_string(),
    })?;
    let split = split_of(path).ok_or_else(|| Error::Parse {
        path: path.to_owned(),
        line: 1,
        message: "cannot infer train/dev/test split from the path".into(),
    })?;
    let mut out = Vec::new();
    for entry in doc.descendants().filter(|n| n.has_tag_name("entry")) {
        let line = doc.text_pos_at(entry.range().start).row as usize;
        let parse_err = |message: String| Error::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        let domain = entry.attribute("category").unwrap_or("unknown").to_owned();
        let eid = entry.attribute("eid").ok_or_else(|| parse_err("entry without eid".into()))?;
        let size = entry.attribute("size").unwrap_or("0");
        let tripleset = child(entry, "modifiedtripleset").ok_or_else(|| parse_err("missing modifiedtripleset".into()))?;
        let triples = children(tripleset, "mtriple")
            .map(|t| Triple::parse(&text_of(t)).map_err(|e| parse_err(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let mut lexes = Vec::new();
        for lex in children(entry, "lex") {
            match read_lex(lex, &triples) {
                Ok(l) => lexes.push(l),
                Err(reason) => {
                    warn!("{}:{line}: skipping lexicalization of {eid}: {reason}", path.display());
                    stats.skipped_lexes += 1;
                }
            }
        }
        out.push(Entry {
            eid: format!("{split}/{size}/{domain}/{eid}"),
            domain,
            split,
            triples,
            lexes,
        });
    }
    Ok(out)
}

fn read_lex(lex: Node, triples: &[Triple]) -> std::result::Result<LexEntry, String> {
    let text = child(lex, "text").map(text_of).filter(|t| !t.is_empty()).ok_or("missing text")?;
    let sorted = child(lex, "sortedtripleset").ok_or("missing sortedtripleset")?;
    let mut used = vec![false; triples.len()];
    let mut order = Vec::new();
    let mut sizes = Vec::new();
    for sentence in children(sorted, "sentence") {
        let mut n = 0;
        for st in children(sentence, "striple") {
            let t = Triple::parse(&text_of(st)).map_err(|e| e.to_string())?;
            let i = (0..triples.len())
                .find(|&i| !used[i] && triples[i] == t)
                .ok_or_else(|| format!("sorted triple `{t}` not in the triple set"))?;
            used[i] = true;
            order.push(i);
            n += 1;
        }
        if n > 0 {
            sizes.push(n);
        }
    }
    if order.len() != triples.len() {
        return Err(format!("sorted triple set covers {} of {} triples", order.len(), triples.len()));
    }
    let ordered: Vec<Triple> = order.iter().map(|&i| triples[i].clone()).collect();
    let entities = entity_order(&ordered);

    let refs_node = child(lex, "references").ok_or("missing references")?;
    let mut refs: Vec<(usize, String, String, String)> = children(refs_node, "reference")
        .enumerate()
        .map(|(k, r)| {
            let number = r.attribute("number").and_then(|n| n.parse().ok()).unwrap_or(k + 1);
            (
                number,
                r.attribute("tag").unwrap_or_default().to_owned(),
                normalize_id(r.attribute("entity").unwrap_or_default()),
                text_of(r),
            )
        })
        .collect();
    refs.sort_by_key(|r| r.0);
    let mut tag_entity: HashMap<String, String> = refs.iter().map(|r| (r.1.clone(), r.2.clone())).collect();
    if let Some(map) = child(lex, "entitymap").or_else(|| lex.parent().and_then(|p| child(p, "entitymap"))) {
        for e in children(map, "entity") {
            if let Some((tag, id)) = text_of(e).split_once(" | ") {
                tag_entity.entry(tag.trim().to_owned()).or_insert_with(|| normalize_id(id));
            }
        }
    }

    let raw = child(lex, "lexicalization")
        .map(text_of)
        .filter(|t| !t.is_empty())
        .ok_or("missing lexicalization")?;
    let mut template = Vec::new();
    let mut slots = Vec::new();
    for tok in normalize_brackets(&raw).split_whitespace() {
        if is_delex_tag(tok) {
            let entity = tag_entity.get(tok).ok_or_else(|| format!("tag {tok} has no entity"))?;
            let k = entities
                .iter()
                .position(|e| e == entity)
                .ok_or_else(|| format!("entity {entity} is not in the triple set"))?;
            template.push(format!("ENTITY-{}", k + 1));
            slots.push(entity.clone());
        } else {
            template.push(tok.to_owned());
        }
    }
    if slots.len() != refs.len() {
        return Err(format!("{} entity slots but {} references", slots.len(), refs.len()));
    }
    let references = slots
        .into_iter()
        .zip(refs)
        .map(|(entity, (_, _, ref_entity, refex))| {
            if entity != ref_entity {
                return Err(format!("slot entity {entity} does not match reference {ref_entity}"));
            }
            let refex = tokenize(&refex).join(" ");
            if refex.is_empty() {
                return Err(format!("empty reference for {entity}"));
            }
            Ok(Reference { entity, refex })
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(LexEntry {
        text,
        order,
        breaks: Partition::from_sizes(&sizes),
        template: template.join(" "),
        references,
    })
}
