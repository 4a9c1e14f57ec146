use std::fmt::Write as _;

use super::{parse_timestamp, SubtitleDocument, SubtitleError, SubtitleSegment, MAX_TIMESTAMP_MS};

/// Why a cue was skipped during tolerant parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CueProblem {
    /// The block did not have an index line followed by a timing line.
    MalformedCue(String),
    /// Start time was not strictly before end time.
    NonPositiveDuration,
    /// The cue carried no text.
    EmptyText,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    /// 1-based line number where the offending block starts.
    pub line: usize,
    pub problem: CueProblem,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSrt {
    pub document: SubtitleDocument,
    pub warnings: Vec<ParseWarning>,
}

/// Parses a SubRip file.
///
/// Accepts an optional UTF-8 BOM and both LF and CRLF line endings. Each
/// blank-line separated block is parsed on its own; a block that fails is
/// reported in `warnings` and skipped. The call only fails outright when
/// the bytes are not UTF-8, or when the input has content but not a single
/// cue survives.
pub fn parse_srt(source_id: &str, input: &[u8]) -> Result<ParsedSrt, SubtitleError> {
    let input = input.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(input);
    let text = std::str::from_utf8(input).map_err(|e| SubtitleError::EncodingError {
        offset: e.valid_up_to(),
    })?;

    let mut segments = Vec::new();
    let mut warnings = Vec::new();
    let mut block: Vec<&str> = Vec::new();
    let mut block_start = 0;
    // CRLF and bare CR both count as line breaks.
    let text = text.replace("\r\n", "\n").replace('\r', "\n");
    let mut lines = text.split('\n');
    let mut line_no = 0;
    loop {
        let line = lines.next();
        line_no += 1;
        match line {
            Some(l) if !l.trim().is_empty() => {
                if block.is_empty() {
                    block_start = line_no;
                }
                block.push(l);
            }
            _ => {
                if !block.is_empty() {
                    let prev_index = segments.last().map(|s: &SubtitleSegment| s.index);
                    match parse_block(&block, prev_index) {
                        Ok(seg) => segments.push(seg),
                        Err(problem) => warnings.push(ParseWarning {
                            line: block_start,
                            problem,
                        }),
                    }
                    block.clear();
                }
                if line.is_none() {
                    break;
                }
            }
        }
    }

    if segments.is_empty() && !warnings.is_empty() {
        return Err(SubtitleError::FatalFormat {
            warnings: warnings.len(),
        });
    }
    Ok(ParsedSrt {
        document: SubtitleDocument::new(source_id, segments),
        warnings,
    })
}

fn parse_block(block: &[&str], prev_index: Option<u32>) -> Result<SubtitleSegment, CueProblem> {
    // Some files omit the counter line; accept a block that opens with the
    // timing line and number it after its predecessor.
    let (index, timing, text_lines) = match parse_timing(block[0]) {
        Ok(t) => (prev_index.map_or(1, |i| i.saturating_add(1)), t, &block[1..]),
        Err(_) => {
            let index: u32 = block[0].trim().parse().map_err(|_| {
                CueProblem::MalformedCue(format!("bad index line {:?}", block[0]))
            })?;
            if index == 0 {
                return Err(CueProblem::MalformedCue("index 0".into()));
            }
            let timing_line = block
                .get(1)
                .ok_or_else(|| CueProblem::MalformedCue("missing timing line".into()))?;
            (index, parse_timing(timing_line)?, &block[2..])
        }
    };
    let (start, end) = timing;
    if start >= end {
        return Err(CueProblem::NonPositiveDuration);
    }
    let raw_text = text_lines
        .iter()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    if raw_text.is_empty() {
        return Err(CueProblem::EmptyText);
    }
    Ok(SubtitleSegment {
        index,
        start,
        end,
        raw_text,
    })
}

fn parse_timing(line: &str) -> Result<(super::TimeMs, super::TimeMs), CueProblem> {
    let bad = || CueProblem::MalformedCue(format!("bad timing line {line:?}"));
    let (left, right) = line.split_once("-->").ok_or_else(bad)?;
    // Anything after the end timestamp (position hints) is ignored.
    let right = right.split_whitespace().next().ok_or_else(bad)?;
    let start = parse_timestamp(left.trim()).map_err(|_| bad())?;
    let end = parse_timestamp(right).map_err(|_| bad())?;
    if end.0 > MAX_TIMESTAMP_MS {
        return Err(bad());
    }
    Ok((start, end))
}

/// Writes the canonical form: LF endings, no BOM, one blank line between cues.
pub fn serialize_srt(doc: &SubtitleDocument) -> Vec<u8> {
    let mut out = String::new();
    for (i, seg) in doc.segments.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(
            out,
            "{}\n{} --> {}\n{}\n",
            seg.index, seg.start, seg.end, seg.raw_text
        );
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subtitle::TimeMs;
    use proptest::prelude::*;

    const SAMPLE: &str = "1\n00:00:15,761 --> 00:00:17,129\n오늘 제가 얘기할 주제는요\n\n2\n00:00:17,129 --> 00:00:20,337\n예술가가 되자. 지금 당장! 입니다.\n";

    #[test]
    fn parses_two_cue_sample() {
        let parsed = parse_srt("talk", SAMPLE.as_bytes()).unwrap();
        assert!(parsed.warnings.is_empty());
        let segs = &parsed.document.segments;
        assert_eq!(segs.len(), 2);
        assert_eq!(
            segs[0],
            SubtitleSegment::new(1, TimeMs(15761), TimeMs(17129), "오늘 제가 얘기할 주제는요").unwrap()
        );
        assert_eq!(
            segs[1],
            SubtitleSegment::new(2, TimeMs(17129), TimeMs(20337), "예술가가 되자. 지금 당장! 입니다.")
                .unwrap()
        );
        let out = String::from_utf8(serialize_srt(&parsed.document)).unwrap();
        assert!(out.contains("00:00:17,129 --> 00:00:20,337"));
        assert_eq!(out, SAMPLE);
    }

    #[test]
    fn empty_input_is_empty_document() {
        let parsed = parse_srt("x", b"").unwrap();
        assert!(parsed.document.is_empty());
        assert!(parse_srt("x", b"\n\n  \n").unwrap().document.is_empty());
    }

    #[test]
    fn minimal_cue_serializes() {
        let doc = SubtitleDocument::new(
            "x",
            vec![SubtitleSegment::new(1, TimeMs(0), TimeMs(1000), "a").unwrap()],
        );
        assert_eq!(
            serialize_srt(&doc),
            b"1\n00:00:00,000 --> 00:00:01,000\na\n".to_vec()
        );
    }

    #[test]
    fn accepts_bom_crlf_and_multiline() {
        let input = "\u{FEFF}3\r\n00:00:01,000 --> 00:00:02,000 X1:10 X2:20\r\nfirst line\r\n  second line \r\n\r\n";
        let parsed = parse_srt("x", input.as_bytes()).unwrap();
        let seg = &parsed.document.segments[0];
        assert_eq!(seg.index, 3);
        assert_eq!(seg.raw_text, "first line second line");
    }

    #[test]
    fn skips_bad_cues_and_continues() {
        let input = "1\n00:00:02,000 --> 00:00:01,000\nbackwards\n\nx\nnot a cue\n\n3\n00:00:03,000 --> 00:00:04,000\n\n4\n00:00:05,000 --> 00:00:06,000\nfine\n";
        let parsed = parse_srt("x", input.as_bytes()).unwrap();
        assert_eq!(parsed.document.len(), 1);
        assert_eq!(parsed.document.segments[0].raw_text, "fine");
        let problems: Vec<_> = parsed.warnings.iter().map(|w| &w.problem).collect();
        assert_eq!(problems.len(), 3);
        assert_eq!(*problems[0], CueProblem::NonPositiveDuration);
        assert!(matches!(problems[1], CueProblem::MalformedCue(_)));
        // "3" with a timing line and no text is a block of two lines.
        assert_eq!(*problems[2], CueProblem::EmptyText);
        assert_eq!(parsed.warnings[0].line, 1);
    }

    #[test]
    fn missing_index_line_is_numbered_after_previous() {
        let input = "7\n00:00:01,000 --> 00:00:02,000\na\n\n00:00:03,000 --> 00:00:04,000\nb\n";
        let segs = parse_srt("x", input.as_bytes()).unwrap().document.segments;
        assert_eq!(segs.iter().map(|s| s.index).collect::<Vec<_>>(), vec![7, 8]);
    }

    #[test]
    fn sorts_by_start_keeping_original_index() {
        let input = "1\n00:00:05,000 --> 00:00:06,000\nlate\n\n2\n00:00:01,000 --> 00:00:02,000\nearly\n";
        let segs = parse_srt("x", input.as_bytes()).unwrap().document.segments;
        assert_eq!(segs[0].index, 2);
        assert_eq!(segs[1].index, 1);
    }

    #[test]
    fn garbage_is_fatal_and_bad_utf8_is_encoding_error() {
        assert!(matches!(
            parse_srt("x", b"hello\nworld\n"),
            Err(SubtitleError::FatalFormat { warnings: 1 })
        ));
        assert!(matches!(
            parse_srt("x", b"1\n\xff\xfe"),
            Err(SubtitleError::EncodingError { offset: 2 })
        ));
    }

    fn arb_text() -> impl Strategy<Value = String> {
        proptest::string::string_regex("[a-zA-Z가-힣0-9.,!?()\\[\\] -]{1,30}")
            .unwrap()
            .prop_map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
            .prop_filter("non-empty", |s| !s.is_empty())
    }

    pub(crate) fn arb_document() -> impl Strategy<Value = SubtitleDocument> {
        proptest::collection::vec(
            (1u32..100_000, 0u64..MAX_TIMESTAMP_MS, 1u64..600_000, arb_text()),
            0..20,
        )
        .prop_map(|cues| {
            let segs = cues
                .into_iter()
                .map(|(index, start, len, text)| {
                    let end = (start + len).min(MAX_TIMESTAMP_MS);
                    let start = start.min(end - 1);
                    SubtitleSegment::new(index, TimeMs(start), TimeMs(end), text).unwrap()
                })
                .collect();
            SubtitleDocument::new("doc", segs)
        })
    }

    proptest! {
        #[test]
        fn parse_inverts_serialize(doc in arb_document()) {
            let bytes = serialize_srt(&doc);
            let parsed = parse_srt("doc", &bytes).unwrap();
            prop_assert!(parsed.warnings.is_empty());
            prop_assert_eq!(parsed.document, doc);
        }

        #[test]
        fn never_panics_on_arbitrary_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
            if let Ok(parsed) = parse_srt("fuzz", &bytes) {
                let segs = &parsed.document.segments;
                prop_assert!(segs.windows(2).all(|w| w[0].start <= w[1].start));
                prop_assert!(segs.iter().all(|s| s.start < s.end));
            }
        }

        #[test]
        fn never_panics_on_srt_like_text(s in "([0-9]{1,3}\n[0-9:, >-]{0,32}\n[^\n]{0,10}\n\n?){0,6}") {
            if let Ok(parsed) = parse_srt("fuzz", s.as_bytes()) {
                prop_assert!(parsed.document.segments.iter().all(|s| s.check().is_ok()));
            }
        }
    }
}
