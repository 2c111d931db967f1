//! Bundled fixture files.

/// A set with one full-text record (3 sections, 1 table, 1 figure) and one
/// abstract-only record.
pub const TWO_ARTICLES_XML: &str = include_str!("../fixtures/two_articles.xml");

/// Three records, the middle one malformed, the last one without an abstract.
pub const THREE_WITH_MALFORMED_XML: &str = include_str!("../fixtures/three_with_malformed.xml");

/// 4x3 RGB PNG.
pub const PNG_4X3: &[u8] = include_bytes!("../fixtures/figure_4x3.png");

/// 2x2 RGB baseline JPEG.
pub const JPEG_2X2: &[u8] = include_bytes!("../fixtures/figure_2x2.jpg");
