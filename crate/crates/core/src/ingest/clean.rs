//! Removal of hyperlinks, citation markers and footnote markers.
//!
//! Marker grammar, applied in this order:
//!
//! 1. URLs: `http://`, `https://`, `ftp://` or `www.` followed by non-space
//!    characters. Trailing sentence punctuation (`.,;:!?)]}'"`) is left in
//!    place. Whitespace before the URL goes with it.
//! 2. Bracketed numeric citations: `[` integer (optionally suffixed by one
//!    lowercase letter) followed by any number of `,` / `;` / `-` / en dash /
//!    em dash separated integers, then `]`. Examples: `[3]`, `[3,4]`,
//!    `[1-5]`, `[2, 7–9]`, `[12a]`. Whitespace before the bracket goes with it.
//! 3. Superscript markers: runs of Unicode superscript digits, optionally
//!    joined by `,`, `-`, `⁻` or en dash (`¹`, `²³`, `¹,⁴`, `¹⁻³`), and the
//!    footnote symbols `†`, `‡`, `§`, `¶`.
//!
//! Whitespace runs then collapse to one space and the ends are trimmed. The
//! passes repeat until the text stops changing, which makes the function
//! idempotent even when removing one marker exposes another.

use std::sync::LazyLock;

use regex::Regex;

use super::RawArticle;

static URL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)\s*(?:(?:https?|ftp)://|\bwww\.)\S*[^\s.,;:!?)\]}'"]"#).unwrap()
});

static CITATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\s*\[\s*\d+[a-z]?(?:\s*[,;\-–—]\s*\d+[a-z]?)*\s*\]").unwrap()
});

static SUPERSCRIPT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"[⁰¹²³⁴⁵⁶⁷⁸⁹]+(?:[,\-⁻–][⁰¹²³⁴⁵⁶⁷⁸⁹]+)*|[†‡§¶]+").unwrap()
});

static WHITESPACE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());

fn clean_once(raw: &str) -> String {
    let s = URL.replace_all(raw, "");
    let s = CITATION.replace_all(&s, "");
    let s = SUPERSCRIPT.replace_all(&s, "");
    WHITESPACE.replace_all(&s, " ").trim().to_string()
}

pub fn clean_text(raw: &str) -> String {
    let mut current = clean_once(raw);
    // Each changing pass shortens the text or only rewrites whitespace, so
    // this converges quickly; the cap is a backstop.
    for _ in 0..32 {
        let next = clean_once(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

/// Cleans every text-bearing field of an article in place.
pub fn clean_article(article: &mut RawArticle) {
    article.title = clean_text(&article.title);
    article.abstract_text = clean_text(&article.abstract_text);
    for section in &mut article.sections {
        section.title = clean_text(&section.title);
        section.body = clean_text(&section.body);
    }
    for table in &mut article.tables {
        table.caption = clean_text(&table.caption);
        for row in &mut table.rows {
            for cell in row.iter_mut() {
                *cell = clean_text(cell);
            }
        }
    }
    for figure in &mut article.figures {
        figure.caption = clean_text(&figure.caption);
    }
}
