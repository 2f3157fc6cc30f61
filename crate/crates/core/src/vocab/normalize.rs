use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Lowercases, applies NFKC (which folds fullwidth forms to ASCII and
/// expands enclosed alphanumerics such as `①` or `Ⓐ`), and collapses
/// whitespace runs to a single space. Leading and trailing whitespace is
/// removed.
pub fn normalize_text(raw: &str) -> String {
    let folded: String = raw.nfkc().flat_map(char::to_lowercase).collect();
    let mut out = String::with_capacity(folded.len());
    let mut pending_space = false;
    for c in folded.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if c.is_control() || c == '\u{fffd}' {
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(c);
    }
    out
}

/// [`normalize_text`] over raw bytes, rejecting invalid UTF-8.
pub fn normalize_bytes(raw: &[u8]) -> Result<String> {
    let s = std::str::from_utf8(raw)
        .map_err(|e| Error::Vocab(format!("invalid UTF-8 at byte {}", e.valid_up_to())))?;
    Ok(normalize_text(s))
}
