//! Parsing of efetch record sets.
//!
//! A set may contain PubMed citations (`<PubmedArticle>`, abstract only) and
//! PMC full-text records (JATS `<article>` with `<body>` sections, tables and
//! figures). Records are located textually and parsed one at a time, so a
//! malformed record only costs itself.

use std::sync::LazyLock;

use base64::Engine;
use regex::Regex;
use roxmltree::Node;

use super::{ArticleError, Figure, ImageRef, RawArticle, Section, Table};

const XLINK_NS: &str = "http://www.w3.org/1999/xlink";

/// Namespaces commonly used inside JATS records but declared on ancestors.
const RECORD_WRAPPER_OPEN: &str = concat!(
    "<records xmlns:xlink=\"http://www.w3.org/1999/xlink\" ",
    "xmlns:mml=\"http://www.w3.org/1998/Math/MathML\" ",
    "xmlns:ali=\"http://www.niso.org/schemas/ali/1.0/\">"
);

static RECORD_START: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"<(PubmedArticle|article)[\s>]").unwrap());
static PMID_HINT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"<PMID[^>]*>\s*(\d+)\s*</PMID>|<article-id[^>]*pub-id-type="pmid"[^>]*>\s*(\d+)\s*</article-id>"#)
        .unwrap()
});

#[derive(Debug, Default)]
pub struct ParsedSet {
    pub articles: Vec<RawArticle>,
    pub errors: Vec<ArticleError>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RecordKind {
    Pubmed,
    Jats,
}

impl RecordKind {
    fn close_tag(self) -> &'static str {
        match self {
            RecordKind::Pubmed => "</PubmedArticle>",
            RecordKind::Jats => "</article>",
        }
    }
}

pub fn parse_article_set(xml: &str) -> ParsedSet {
    let mut out = ParsedSet::default();
    let starts: Vec<(usize, RecordKind)> = RECORD_START
        .captures_iter(xml)
        .map(|c| {
            let kind = if &c[1] == "PubmedArticle" {
                RecordKind::Pubmed
            } else {
                RecordKind::Jats
            };
            (c.get(0).unwrap().start(), kind)
        })
        .collect();

    if starts.is_empty() {
        if let Err(e) = roxmltree::Document::parse(xml) {
            out.errors.push(ArticleError {
                pmid: "unknown".into(),
                message: format!("record set is not well-formed: {e}"),
            });
        }
        return out;
    }

    for (i, &(start, kind)) in starts.iter().enumerate() {
        let limit = starts.get(i + 1).map_or(xml.len(), |s| s.0);
        let window = &xml[start..limit];
        let segment = match window.find(kind.close_tag()) {
            Some(end) => &window[..end + kind.close_tag().len()],
            None => window,
        };
        let pmid_hint = PMID_HINT
            .captures(segment)
            .and_then(|c| c.get(1).or_else(|| c.get(2)))
            .map_or_else(|| "unknown".to_string(), |m| m.as_str().to_string());

        let wrapped = format!("{RECORD_WRAPPER_OPEN}{segment}</records>");
        let doc = match roxmltree::Document::parse(&wrapped) {
            Ok(doc) => doc,
            Err(e) => {
                out.errors.push(ArticleError {
                    pmid: pmid_hint,
                    message: format!("malformed record: {e}"),
                });
                continue;
            }
        };
        let Some(record) = doc.root_element().first_element_child() else {
            continue;
        };
        let parsed = match kind {
            RecordKind::Pubmed => parse_pubmed(record),
            RecordKind::Jats => parse_jats(record),
        };
        match parsed {
            Ok(article) => {
                if article.abstract_text.is_empty() {
                    out.warnings
                        .push(format!("pmid {}: record has no abstract", article.pmid));
                }
                out.articles.push(article);
            }
            Err(message) => out.errors.push(ArticleError {
                pmid: pmid_hint,
                message,
            }),
        }
    }
    out
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|n| n.has_tag_name(name))
}

fn descendant<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.descendants().find(|n| n.has_tag_name(name))
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn checked_pmid(pmid: String) -> Result<String, String> {
    super::validate_pmid(&pmid).map_err(|e| e.to_string())?;
    Ok(pmid)
}

fn parse_pubmed(record: Node) -> Result<RawArticle, String> {
    let citation = child(record, "MedlineCitation").ok_or("missing MedlineCitation")?;
    let pmid = child(citation, "PMID")
        .and_then(|n| n.text())
        .map(|t| t.trim().to_string())
        .ok_or("missing PMID")?;
    let pmid = checked_pmid(pmid)?;
    let article = child(citation, "Article").ok_or("missing Article")?;
    let title = child(article, "ArticleTitle")
        .map(|n| TextWalker::default().text_of(n))
        .unwrap_or_default();
    let abstract_text = child(article, "Abstract")
        .map(|abs| {
            abs.children()
                .filter(|n| n.has_tag_name("AbstractText"))
                .map(|n| {
                    let text = TextWalker::default().text_of(n);
                    match n.attribute("Label") {
                        Some(label) if !label.is_empty() => format!("{label}: {text}"),
                        _ => text,
                    }
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .unwrap_or_default();
    Ok(RawArticle {
        pmid,
        title,
        abstract_text,
        sections: Vec::new(),
        tables: Vec::new(),
        figures: Vec::new(),
    })
}

fn parse_jats(record: Node) -> Result<RawArticle, String> {
    let meta = descendant(record, "article-meta").ok_or("missing article-meta")?;
    let pmid = meta
        .children()
        .find(|n| n.has_tag_name("article-id") && n.attribute("pub-id-type") == Some("pmid"))
        .and_then(|n| n.text())
        .map(|t| t.trim().to_string())
        .ok_or("missing article-id with pub-id-type=\"pmid\"")?;
    let pmid = checked_pmid(pmid)?;
    let title = descendant(meta, "article-title")
        .map(|n| TextWalker::default().text_of(n))
        .unwrap_or_default();

    let mut floats = Floats::default();
    let abstract_text = child(meta, "abstract")
        .map(|abs| {
            let mut walker = TextWalker {
                skip_titles: true,
                floats: Some(&mut floats),
            };
            walker.text_of(abs)
        })
        .unwrap_or_default();

    let mut sections = Vec::new();
    if let Some(body) = child(record, "body") {
        let mut loose = String::new();
        for node in body.children().filter(|n| n.is_element()) {
            if node.has_tag_name("sec") {
                let title = child(node, "title")
                    .map(|t| TextWalker::default().text_of(t))
                    .unwrap_or_default();
                let mut walker = TextWalker {
                    skip_titles: true,
                    floats: Some(&mut floats),
                };
                let body = walker.text_of(node);
                sections.push(Section { title, body });
            } else {
                let mut walker = TextWalker {
                    skip_titles: true,
                    floats: Some(&mut floats),
                };
                let text = walker.text_of(node);
                if !text.is_empty() {
                    if !loose.is_empty() {
                        loose.push(' ');
                    }
                    loose.push_str(&text);
                }
            }
        }
        if !loose.is_empty() {
            sections.insert(
                0,
                Section {
                    title: "Body".into(),
                    body: loose,
                },
            );
        }
    }
    if let Some(group) = child(record, "floats-group") {
        let mut walker = TextWalker {
            skip_titles: true,
            floats: Some(&mut floats),
        };
        walker.text_of(group);
    }

    Ok(RawArticle {
        pmid,
        title,
        abstract_text,
        sections,
        tables: floats.tables,
        figures: floats.figures,
    })
}

#[derive(Default)]
struct Floats {
    tables: Vec<Table>,
    figures: Vec<Figure>,
}

/// Flattens mixed content to text.
///
/// Footnotes, footnote references, labels and reference lists are dropped;
/// tables and figures are diverted into `floats` when collecting is on;
/// numeric `<sup>` content becomes Unicode superscript so the cleaner can
/// recognise it as a citation marker.
#[derive(Default)]
struct TextWalker<'f> {
    skip_titles: bool,
    floats: Option<&'f mut Floats>,
}

impl TextWalker<'_> {
    fn text_of(&mut self, node: Node) -> String {
        let mut out = String::new();
        self.walk(node, &mut out);
        collapse(&out)
    }

    fn walk(&mut self, node: Node, out: &mut String) {
        for c in node.children() {
            if c.is_text() {
                out.push_str(c.text().unwrap_or_default());
                continue;
            }
            if !c.is_element() {
                continue;
            }
            match c.tag_name().name() {
                "fn" | "fn-group" | "ref-list" | "label" | "object-id" => out.push(' '),
                "xref" if c.attribute("ref-type") == Some("fn") => {}
                "title" if self.skip_titles => out.push(' '),
                "table-wrap" => {
                    if let Some(floats) = self.floats.as_deref_mut() {
                        floats.tables.push(parse_table(c));
                    }
                    out.push(' ');
                }
                "fig" => {
                    if let Some(floats) = self.floats.as_deref_mut() {
                        floats.figures.push(parse_figure(c));
                    }
                    out.push(' ');
                }
                "sup" => {
                    let raw: String = c.descendants().filter_map(|n| n.text()).collect();
                    if is_marker_like(&raw) {
                        out.push_str(&to_superscript(&raw));
                    } else {
                        self.walk(c, out);
                    }
                }
                "p" | "sec" | "list" | "list-item" | "disp-quote" | "boxed-text" | "caption"
                | "title" | "AbstractText" => {
                    out.push(' ');
                    self.walk(c, out);
                    out.push(' ');
                }
                _ => self.walk(c, out),
            }
        }
    }
}

fn is_marker_like(s: &str) -> bool {
    let t = s.trim();
    !t.is_empty()
        && t.chars().any(|c| c.is_ascii_digit())
        && t.chars()
            .all(|c| c.is_ascii_digit() || matches!(c, ',' | '-' | '–' | ' '))
}

fn to_superscript(s: &str) -> String {
    const DIGITS: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];
    s.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c.to_digit(10) {
            Some(d) => DIGITS[d as usize],
            None => c,
        })
        .collect()
}

fn parse_table(node: Node) -> Table {
    let caption = child(node, "caption")
        .map(|c| TextWalker::default().text_of(c))
        .filter(|c| !c.is_empty())
        .or_else(|| child(node, "label").map(|l| TextWalker::default().text_of(l)))
        .unwrap_or_default();
    let rows = node
        .descendants()
        .filter(|n| n.has_tag_name("tr"))
        .map(|tr| {
            tr.children()
                .filter(|n| n.has_tag_name("td") || n.has_tag_name("th"))
                .map(|cell| TextWalker::default().text_of(cell))
                .collect::<Vec<_>>()
        })
        .filter(|row| !row.is_empty())
        .collect();
    Table {
        caption,
        rows,
        summary: None,
    }
}

fn parse_figure(node: Node) -> Figure {
    let caption = child(node, "caption")
        .map(|c| TextWalker::default().text_of(c))
        .unwrap_or_default();
    let href = node
        .descendants()
        .find(|n| n.has_tag_name("graphic") || n.has_tag_name("inline-graphic"))
        .and_then(|g| g.attribute((XLINK_NS, "href")).or_else(|| g.attribute("href")));
    let (image, format) = match href {
        None => (ImageRef::Missing, String::new()),
        Some(href) => resolve_href(href.trim()),
    };
    Figure {
        caption,
        image,
        format,
    }
}

fn resolve_href(href: &str) -> (ImageRef, String) {
    if let Some(rest) = href.strip_prefix("data:") {
        let Some((meta, payload)) = rest.split_once(',') else {
            return (ImageRef::Missing, String::new());
        };
        let mime = meta.split(';').next().unwrap_or_default();
        let format = format_from_mime(mime);
        if !meta.ends_with(";base64") {
            return (ImageRef::Missing, format);
        }
        let compact: String = payload.chars().filter(|c| !c.is_whitespace()).collect();
        return match base64::engine::general_purpose::STANDARD.decode(compact) {
            Ok(bytes) => (ImageRef::Inline(bytes), format),
            Err(_) => (ImageRef::Missing, format),
        };
    }
    let ext = href
        .rsplit_once('.')
        .map(|(_, e)| e.to_ascii_lowercase())
        .unwrap_or_default();
    let format = match ext.as_str() {
        "png" => "PNG",
        "jpg" | "jpeg" => "JPEG",
        "tif" | "tiff" => "TIFF",
        "gif" => "GIF",
        _ => "",
    };
    (ImageRef::Href(href.to_string()), format.to_string())
}

fn format_from_mime(mime: &str) -> String {
    match mime.to_ascii_lowercase().as_str() {
        "image/png" => "PNG",
        "image/jpeg" | "image/jpg" => "JPEG",
        "image/tiff" => "TIFF",
        "image/gif" => "GIF",
        _ => "",
    }
    .to_string()
}
