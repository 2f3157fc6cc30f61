#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnitKind {
    CjkChar,
    LatinRun,
    DigitRun,
    Emoji,
    Punct,
}

impl UnitKind {
    /// Latin and digit units are separated by spaces when detokenizing.
    pub fn is_spaced(self) -> bool {
        matches!(self, UnitKind::LatinRun | UnitKind::DigitRun)
    }
}

/// One pre-tokenized unit of normalized text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordUnit {
    pub text: String,
    pub kind: UnitKind,
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF
        | 0x3400..=0x4DBF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2CEAF
        | 0x2CEB0..=0x2EBEF
        | 0x30000..=0x3134F
        | 0xF900..=0xFAFF
        | 0x2F800..=0x2FA1F)
}

pub fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF
        | 0x2600..=0x27BF
        | 0x2B00..=0x2BFF
        | 0x1FC00..=0x1FFFF
        | 0xFE0F
        | 0x200D)
}

fn classify(c: char) -> Option<UnitKind> {
    if c.is_whitespace() {
        None
    } else if is_cjk(c) {
        Some(UnitKind::CjkChar)
    } else if is_emoji(c) {
        Some(UnitKind::Emoji)
    } else if c.is_numeric() {
        Some(UnitKind::DigitRun)
    } else if c.is_alphabetic() {
        Some(UnitKind::LatinRun)
    } else {
        Some(UnitKind::Punct)
    }
}

/// Splits normalized text into units: one per Chinese character, emoji, or
/// punctuation mark, and one per maximal Latin or digit run.
pub fn pre_tokenize(text: &str) -> Vec<WordUnit> {
    let mut units: Vec<WordUnit> = Vec::new();
    let mut run: Option<(UnitKind, String)> = None;
    for c in text.chars() {
        let kind = classify(c);
        match kind {
            Some(k @ (UnitKind::LatinRun | UnitKind::DigitRun)) => match &mut run {
                Some((rk, s)) if *rk == k => s.push(c),
                _ => {
                    if let Some((rk, s)) = run.take() {
                        units.push(WordUnit { text: s, kind: rk });
                    }
                    run = Some((k, c.to_string()));
                }
            },
            other => {
                if let Some((rk, s)) = run.take() {
                    units.push(WordUnit { text: s, kind: rk });
                }
                if let Some(k) = other {
                    units.push(WordUnit { text: c.to_string(), kind: k });
                }
            }
        }
    }
    if let Some((rk, s)) = run {
        units.push(WordUnit { text: s, kind: rk });
    }
    units
}
