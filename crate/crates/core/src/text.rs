//! Word tokenization and its inverse.

const OPENING: &[char] = &['(', '[', '{', '"', '\'', '`'];
const CLOSING: &[char] = &[',', ';', ':', '!', '?', ')', ']', '}', '"', '\''];
const CLITICS: &[&str] = &["'s", "n't", "'re", "'ve", "'ll", "'d", "'m"];

/// Splits on whitespace and peels punctuation off word edges. Periods stay
/// attached inside abbreviations such as `S.S.D.`; commas stay inside
/// numbers such as `1,000`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        split_chunk(chunk, &mut out);
    }
    out
}

/// Lowercased tokenization, the form used for every comparison.
pub fn uncased_tokens(text: &str) -> Vec<String> {
    tokenize(&text.to_lowercase())
}

pub fn lowercase_all<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens.iter().map(|t| t.as_ref().to_lowercase()).collect()
}

fn split_chunk(chunk: &str, out: &mut Vec<String>) {
    let mut word = chunk;
    while let Some(c) = word.chars().next() {
        if OPENING.contains(&c) && word.len() > c.len_utf8() {
            out.push(c.to_string());
            word = &word[c.len_utf8()..];
        } else {
            break;
        }
    }
    let mut tail = Vec::new();
    loop {
        let Some(c) = word.chars().last() else { break };
        if word.len() == c.len_utf8() {
            break;
        }
        let stem = &word[..word.len() - c.len_utf8()];
        if CLOSING.contains(&c) {
            tail.push(c.to_string());
            word = stem;
        } else if c == '.' && !stem.contains('.') {
            tail.push(".".to_owned());
            word = stem;
        } else {
            break;
        }
    }
    if !word.is_empty() {
        let lower = word.to_lowercase();
        match CLITICS
            .iter()
            .find(|cl| lower.ends_with(**cl) && lower.len() > cl.len())
        {
            Some(cl) => {
                let cut = word.len() - cl.len();
                out.push(word[..cut].to_owned());
                out.push(word[cut..].to_owned());
            }
            None => out.push(word.to_owned()),
        }
    }
    out.extend(tail.into_iter().rev());
}

fn attaches_left(tok: &str) -> bool {
    matches!(tok, "." | "," | ";" | ":" | "!" | "?" | ")" | "]" | "}" | "%")
        || CLITICS.iter().any(|c| tok.eq_ignore_ascii_case(c))
}

fn attaches_right(tok: &str) -> bool {
    matches!(tok, "(" | "[" | "{" | "$")
}

fn capitalize(tok: &str) -> String {
    let mut chars = tok.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Joins tokens into text: punctuation attaches to its neighbour and every
/// sentence starts with a capital letter.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut sentence_start = true;
    let mut glue_next = false;
    let mut open_quote = false;
    for t in tokens {
        let t = t.as_ref();
        if t.is_empty() {
            continue;
        }
        let quote = t == "\"";
        let left = attaches_left(t) || (quote && open_quote);
        if !out.is_empty() && !left && !glue_next {
            out.push(' ');
        }
        let word = if sentence_start && t.chars().next().is_some_and(char::is_alphabetic) {
            sentence_start = false;
            capitalize(t)
        } else {
            if t.chars().next().is_some_and(char::is_alphanumeric) {
                sentence_start = false;
            }
            t.to_owned()
        };
        out.push_str(&word);
        glue_next = attaches_right(t) || (quote && !open_quote);
        if quote {
            open_quote = !open_quote;
        }
        if matches!(t, "." | "!" | "?") {
            sentence_start = true;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_final_period_but_keeps_abbreviations() {
        assert_eq!(
            tokenize("He manages S.S.D. Potenza Calcio."),
            ["He", "manages", "S.S.D.", "Potenza", "Calcio", "."]
        );
        assert_eq!(tokenize("in the U.S."), ["in", "the", "U.S."]);
    }

    #[test]
    fn peels_commas_quotes_and_clitics() {
        assert_eq!(
            tokenize("Aarhus, Denmark's \"big\" airport (AAR)"),
            ["Aarhus", ",", "Denmark", "'s", "\"", "big", "\"", "airport", "(", "AAR", ")"]
        );
        assert_eq!(tokenize("1,000 people"), ["1,000", "people"]);
    }

    #[test]
    fn detokenize_inverts_common_cases() {
        let text = "Massimo Drago played for the club SSD Potenza Calcio and his own club was Calcio Catania. He is currently managing AC Cesena.";
        let toks = uncased_tokens(text);
        assert_eq!(toks.len(), 24);
        assert_eq!(
            detokenize(&toks),
            "Massimo drago played for the club ssd potenza calcio and his own club was calcio catania. He is currently managing ac cesena."
        );
        assert_eq!(uncased_tokens(&detokenize(&toks)), toks);
    }

    #[test]
    fn detokenize_handles_brackets_and_quotes() {
        let toks = ["it", "is", "(", "roughly", ")", "\"", "big", "\"", "."];
        assert_eq!(detokenize(&toks), "It is (roughly) \"big\".");
    }
}
