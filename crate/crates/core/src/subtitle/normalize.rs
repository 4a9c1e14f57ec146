use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

/// Subtitle text reduced to what a speaker actually says.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NormalizedText {
    pub text: String,
    /// Bracketed non-speech spans that were cut, e.g. `"(박수)"`.
    pub removed_annotations: Vec<String>,
}

/// True for characters in the Unicode punctuation categories
/// (Pc, Pd, Ps, Pe, Pi, Pf, Po).
pub fn is_removed_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Normalizes cue text for corpus use.
///
/// Steps, in order: canonical composition (NFC); removal of `(...)` and
/// `[...]` annotation spans; removal of punctuation; whitespace collapse
/// and trim. Dropping characters can leave a combining mark next to a new
/// base character, so the result is recomposed once more at the end.
pub fn normalize_text(raw: &str) -> NormalizedText {
    let composed: String = raw.nfc().collect();
    let (stripped, removed_annotations) = strip_annotations(&composed);
    let no_punct: String = stripped
        .chars()
        .filter(|&c| !is_removed_punctuation(c))
        .collect();
    let collapsed = no_punct.split_whitespace().collect::<Vec<_>>().join(" ");
    NormalizedText {
        text: collapsed.nfc().collect(),
        removed_annotations,
    }
}

/// Cuts bracketed spans. An opener starts a span that ends when the bracket
/// depth returns to zero, so `(a [b] c)` goes as one outermost span. An
/// unmatched opener is left for the punctuation pass.
fn strip_annotations(s: &str) -> (String, Vec<String>) {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut removed = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if matches!(chars[i], '(' | '[') {
            if let Some(close) = matching_close(&chars, i) {
                removed.push(chars[i..=close].iter().collect());
                i = close + 1;
                continue;
            }
        }
        out.push(chars[i]);
        i += 1;
    }
    (out, removed)
}

fn matching_close(chars: &[char], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (j, &c) in chars.iter().enumerate().skip(open) {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(j);
                }
            }
            _ => {}
        }
    }
    None
}
