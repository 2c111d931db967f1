use std::io::Cursor;

use image::ImageFormat;

use crate::error::{Error, Result};

/// Declared formats accepted by [`normalize_figure`].
pub const SUPPORTED_FORMATS: [&str; 4] = ["PNG", "JPEG", "TIFF", "GIF"];

/// A figure re-encoded as PNG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedImage {
    pub png: Vec<u8>,
    pub width: u32,
    pub height: u32,
}

fn parse_format(declared: &str) -> Option<ImageFormat> {
    match declared.trim().to_ascii_uppercase().as_str() {
        "PNG" => Some(ImageFormat::Png),
        "JPEG" | "JPG" => Some(ImageFormat::Jpeg),
        "TIFF" | "TIF" => Some(ImageFormat::Tiff),
        "GIF" => Some(ImageFormat::Gif),
        _ => None,
    }
}

/// Sniffs one of the supported formats from magic bytes.
pub fn detect_format(bytes: &[u8]) -> Option<&'static str> {
    match image::guess_format(bytes).ok()? {
        ImageFormat::Png => Some("PNG"),
        ImageFormat::Jpeg => Some("JPEG"),
        ImageFormat::Tiff => Some("TIFF"),
        ImageFormat::Gif => Some("GIF"),
        _ => None,
    }
}

/// Converts a figure to PNG, keeping its pixel dimensions. PNG input that
/// decodes cleanly is returned byte for byte.
pub fn normalize_figure(
    bytes: &[u8],
    declared_format: &str,
    pmid: &str,
    figure_index: usize,
) -> Result<NormalizedImage> {
    let format = parse_format(declared_format)
        .ok_or_else(|| Error::UnsupportedImageFormat(declared_format.to_string()))?;
    let decode_error = |message: String| Error::ImageDecode {
        pmid: pmid.to_string(),
        figure_index,
        message,
    };
    let decoded = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| decode_error(e.to_string()))?;
    let (width, height) = (decoded.width(), decoded.height());
    let png = if format == ImageFormat::Png {
        bytes.to_vec()
    } else {
        let mut out = Cursor::new(Vec::new());
        decoded
            .write_to(&mut out, ImageFormat::Png)
            .map_err(|e| decode_error(format!("PNG encoding failed: {e}")))?;
        out.into_inner()
    };
    Ok(NormalizedImage { png, width, height })
}
