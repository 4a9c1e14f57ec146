use unicode_normalization::UnicodeNormalization;

use super::ValidationError;

/// Unit-cost edit distance over Unicode code points of the NFC forms.
pub fn levenshtein(a: &str, b: &str) -> usize {
    // NFC leaves ASCII unchanged.
    if a.is_ascii() && b.is_ascii() {
        return edit_distance(a.as_bytes(), b.as_bytes());
    }
    let a: Vec<char> = a.nfc().collect();
    let b: Vec<char> = b.nfc().collect();
    edit_distance(&a, &b)
}

pub(crate) fn levenshtein_chars(a: &[char], b: &[char]) -> usize {
    edit_distance(a, b)
}

/// Single-row dynamic programme over the shorter input.
fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let mut stack = [0usize; 64];
    let mut heap = Vec::new();
    let row: &mut [usize] = if short.len() < stack.len() {
        &mut stack[..=short.len()]
    } else {
        heap.resize(short.len() + 1, 0);
        &mut heap
    };
    for (j, r) in row.iter_mut().enumerate() {
        *r = j;
    }
    for (i, lc) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = (diag + usize::from(lc != sc)).min(up + 1).min(row[j] + 1);
            diag = up;
        }
    }
    row[short.len()]
}

/// Character error rate: edit distance divided by the reference length in
/// code points. Spaces count as characters. Two empty strings score 0.
pub fn char_error_rate(reference: &str, hypothesis: &str) -> Result<f64, ValidationError> {
    let r: Vec<char> = reference.nfc().collect();
    let h: Vec<char> = hypothesis.nfc().collect();
    if r.is_empty() {
        return if h.is_empty() {
            Ok(0.0)
        } else {
            Err(ValidationError::EmptyReference)
        };
    }
    Ok(levenshtein_chars(&r, &h) as f64 / r.len() as f64)
}
