//! Rewrites English double quotes as German-style „…“ quotes.
//!
//! Straight `"` and typographic `“` / `”` are quote events. Events pair up
//! left to right within a line: the opener becomes `„` and the closer `“`.
//! An existing `„` always opens a pair, so converted text converts to
//! itself. A quote left without a partner is not touched.

use serde::{Deserialize, Serialize};

const GERMAN_OPEN: char = '\u{201E}';
const GERMAN_CLOSE: char = '\u{201C}';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum QuoteStyle {
    /// „…“
    #[default]
    #[serde(rename = "german")]
    GermanLowHigh,
}

impl std::str::FromStr for QuoteStyle {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "german" => Ok(QuoteStyle::GermanLowHigh),
            other => Err(crate::Error::Config(format!("unknown quote style {other:?} (expected german)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuoteConfig {
    pub target_style: QuoteStyle,
    pub apply: bool,
}

impl Default for QuoteConfig {
    fn default() -> Self {
        QuoteConfig {
            target_style: QuoteStyle::GermanLowHigh,
            apply: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Converted {
    pub text: String,
    /// Quote characters left unchanged because they had no partner.
    pub unpaired: usize,
}

pub fn is_english_quote(c: char) -> bool {
    matches!(c, '"' | '\u{201C}' | '\u{201D}')
}

pub fn convert_quotes(text: &str, cfg: &QuoteConfig) -> Converted {
    if !cfg.apply {
        return Converted {
            text: text.to_string(),
            unpaired: 0,
        };
    }
    let chars: Vec<char> = text.chars().collect();
    let mut out = chars.clone();
    let mut unpaired = 0;
    // position of the pending opener and whether it was already German
    let mut open: Option<(usize, bool)> = None;
    for (i, &c) in chars.iter().enumerate() {
        let german = c == GERMAN_OPEN;
        if !german && !is_english_quote(c) {
            continue;
        }
        match open {
            None => open = Some((i, german)),
            Some((_, was_german)) if german => {
                if !was_german {
                    unpaired += 1;
                }
                open = Some((i, true));
            }
            Some((j, was_german)) => {
                if !was_german {
                    out[j] = GERMAN_OPEN;
                }
                out[i] = GERMAN_CLOSE;
                open = None;
            }
        }
    }
    if let Some((_, false)) = open {
        unpaired += 1;
    }
    Converted {
        text: out.into_iter().collect(),
        unpaired,
    }
}
