//! Per-source yield: how much of the source material survived into the corpus.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::fsutil::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SegmentStats {
    pub count: u64,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldReport {
    pub source_id: String,
    pub n_source_segments: u64,
    pub source_duration_ms: u64,
    pub n_corpus_segments: u64,
    pub corpus_duration_ms: u64,
    /// Unrounded; round only for display.
    pub yield_duration_pct: f64,
    pub yield_count_pct: f64,
}

pub fn compute_yield(source_id: &str, source: SegmentStats, corpus: SegmentStats) -> Result<YieldReport, CorpusError> {
    if source.duration_ms == 0 {
        return Err(CorpusError::ZeroSourceDuration(source_id.to_string()));
    }
    let invalid = |reason: String| CorpusError::InvalidStats {
        source_id: source_id.to_string(),
        reason,
    };
    if corpus.count > source.count {
        return Err(invalid(format!("{} corpus segments exceed {} source segments", corpus.count, source.count)));
    }
    if corpus.duration_ms > source.duration_ms {
        return Err(invalid(format!(
            "corpus duration {} ms exceeds source duration {} ms",
            corpus.duration_ms, source.duration_ms
        )));
    }
    let pct = |part: u64, whole: u64| if whole == 0 { 0.0 } else { 100.0 * part as f64 / whole as f64 };
    Ok(YieldReport {
        source_id: source_id.to_string(),
        n_source_segments: source.count,
        source_duration_ms: source.duration_ms,
        n_corpus_segments: corpus.count,
        corpus_duration_ms: corpus.duration_ms,
        yield_duration_pct: pct(corpus.duration_ms, source.duration_ms),
        yield_count_pct: pct(corpus.count, source.count),
    })
}

/// Column sums plus per-source means.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldSummary {
    pub sources: usize,
    pub total: YieldReport,
    pub avg_source_segments: f64,
    pub avg_source_duration_ms: f64,
    pub avg_corpus_segments: f64,
    pub avg_corpus_duration_ms: f64,
}

impl YieldSummary {
    fn from_total(sources: usize, total: YieldReport) -> Self {
        let n = sources as f64;
        YieldSummary {
            sources,
            avg_source_segments: total.n_source_segments as f64 / n,
            avg_source_duration_ms: total.source_duration_ms as f64 / n,
            avg_corpus_segments: total.n_corpus_segments as f64 / n,
            avg_corpus_duration_ms: total.corpus_duration_ms as f64 / n,
            total,
        }
    }
}

fn sum_stats<'a>(reports: impl Iterator<Item = &'a YieldReport>) -> (SegmentStats, SegmentStats) {
    let mut src = SegmentStats::default();
    let mut cor = SegmentStats::default();
    for r in reports {
        src.count += r.n_source_segments;
        src.duration_ms += r.source_duration_ms;
        cor.count += r.n_corpus_segments;
        cor.duration_ms += r.corpus_duration_ms;
    }
    (src, cor)
}

pub fn aggregate_stats(reports: &[YieldReport]) -> Result<YieldSummary, CorpusError> {
    if reports.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let (src, cor) = sum_stats(reports.iter());
    let total = compute_yield("Total", src, cor)?;
    Ok(YieldSummary::from_total(reports.len(), total))
}

/// One row of a per-source statistics table in CSV form.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureRow {
    pub title: String,
    pub gender: String,
    pub year: Option<u32>,
    pub location: String,
    pub source: SegmentStats,
    pub corpus: SegmentStats,
    /// The yield printed in the table, if any.
    pub yield_pct: Option<f64>,
}

impl FixtureRow {
    pub fn report(&self) -> Result<YieldReport, CorpusError> {
        compute_yield(&self.title, self.source, self.corpus)
    }
}

/// A statistics table; a row titled `Total` holds published totals.
#[derive(Debug, Clone, PartialEq)]
pub struct TableFixture {
    pub rows: Vec<FixtureRow>,
    pub published_total: Option<FixtureRow>,
}

const TOTAL_TITLE: &str = "Total";

#[derive(Debug, Deserialize)]
struct RawRow {
    title: String,
    #[serde(default)]
    gender: String,
    #[serde(default)]
    year: String,
    #[serde(default)]
    location: String,
    src_segments: String,
    src_duration: String,
    corpus_segments: String,
    corpus_duration: String,
    #[serde(default)]
    yield_pct: String,
}

fn parse_count(s: &str) -> Result<u64, CorpusError> {
    s.replace(',', "")
        .parse()
        .map_err(|_| CorpusError::Fixture(format!("bad segment count {s:?}")))
}

/// Parses `M:SS` or `H:MM:SS`, optionally with a `.fff` fraction of a second.
pub fn parse_duration(s: &str) -> Result<u64, CorpusError> {
    let bad = || CorpusError::Fixture(format!("bad duration {s:?}"));
    let (whole, frac_ms) = match s.split_once('.') {
        Some((w, f)) if (1..=3).contains(&f.len()) && f.bytes().all(|b| b.is_ascii_digit()) => {
            (w, f.parse::<u64>().map_err(|_| bad())? * 10u64.pow(3 - f.len() as u32))
        }
        Some(_) => return Err(bad()),
        None => (s, 0),
    };
    let parts: Vec<&str> = whole.split(':').collect();
    if !(2..=3).contains(&parts.len()) || parts.iter().any(|p| p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit())) {
        return Err(bad());
    }
    let nums: Vec<u64> = parts.iter().map(|p| p.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    let secs = match nums[..] {
        [m, s] if s < 60 => m * 60 + s,
        [h, m, s] if m < 60 && s < 60 => h * 3600 + m * 60 + s,
        _ => return Err(bad()),
    };
    Ok(secs * 1000 + frac_ms)
}

/// Rounds to whole seconds; `H:MM:SS` from one hour up, `M:SS` below.
pub fn format_duration(ms: u64) -> String {
    let secs = (ms + 500) / 1000;
    let (h, m, s) = (secs / 3600, secs / 60 % 60, secs % 60);
    if h > 0 {
        format!("{h}:{m:02}:{s:02}")
    } else {
        format!("{m}:{s:02}")
    }
}

/// `H:MM:SS.mmm`, lossless.
pub fn format_duration_precise(ms: u64) -> String {
    let secs = ms / 1000;
    format!("{}:{:02}:{:02}.{:03}", secs / 3600, secs / 60 % 60, secs % 60, ms % 1000)
}

fn group_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

pub fn load_table_fixture(reader: impl Read) -> Result<TableFixture, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    let mut published_total = None;
    for (i, rec) in rdr.deserialize::<RawRow>().enumerate() {
        let raw = rec.map_err(|e| CorpusError::Fixture(e.to_string()))?;
        let row = FixtureRow {
            year: match raw.year.as_str() {
                "" => None,
                y => Some(y.parse().map_err(|_| CorpusError::Fixture(format!("bad year {y:?}")))?),
            },
            source: SegmentStats {
                count: parse_count(&raw.src_segments)?,
                duration_ms: parse_duration(&raw.src_duration)?,
            },
            corpus: SegmentStats {
                count: parse_count(&raw.corpus_segments)?,
                duration_ms: parse_duration(&raw.corpus_duration)?,
            },
            yield_pct: match raw.yield_pct.trim_end_matches('%') {
                "" => None,
                p => Some(p.parse().map_err(|_| CorpusError::Fixture(format!("bad yield {p:?}")))?),
            },
            title: raw.title,
            gender: raw.gender,
            location: raw.location,
        };
        if row.title == TOTAL_TITLE {
            if published_total.is_some() {
                return Err(CorpusError::Fixture(format!("second {TOTAL_TITLE} row at record {}", i + 1)));
            }
            published_total = Some(row);
        } else if published_total.is_some() {
            return Err(CorpusError::Fixture(format!("row after the {TOTAL_TITLE} row at record {}", i + 1)));
        } else {
            rows.push(row);
        }
    }
    Ok(TableFixture { rows, published_total })
}

impl TableFixture {
    pub fn reports(&self) -> Result<Vec<YieldReport>, CorpusError> {
        self.rows.iter().map(FixtureRow::report).collect()
    }

    /// Summary over the rows. When the table carries published totals they
    /// are used instead of the column sums, after checking the two agree:
    /// counts exactly, durations within one second per row, since each
    /// row's duration was rounded to whole seconds before printing.
    pub fn summary(&self) -> Result<YieldSummary, CorpusError> {
        let computed = aggregate_stats(&self.reports()?)?;
        let Some(p) = &self.published_total else {
            return Ok(computed);
        };
        let c = &computed.total;
        let slack = 1000 * self.rows.len() as u64;
        let mismatch = |what: &str, sum: u64, printed: u64| {
            CorpusError::Fixture(format!("{what}: rows sum to {sum} but the Total row says {printed}"))
        };
        if c.n_source_segments != p.source.count {
            return Err(mismatch("source segments", c.n_source_segments, p.source.count));
        }
        if c.n_corpus_segments != p.corpus.count {
            return Err(mismatch("corpus segments", c.n_corpus_segments, p.corpus.count));
        }
        if c.source_duration_ms.abs_diff(p.source.duration_ms) > slack {
            return Err(mismatch("source duration (ms)", c.source_duration_ms, p.source.duration_ms));
        }
        if c.corpus_duration_ms.abs_diff(p.corpus.duration_ms) > slack {
            return Err(mismatch("corpus duration (ms)", c.corpus_duration_ms, p.corpus.duration_ms));
        }
        let total = compute_yield(TOTAL_TITLE, p.source, p.corpus)?;
        Ok(YieldSummary::from_total(self.rows.len(), total))
    }
}

/// Writes reports in the statistics-table CSV format, durations to the
/// millisecond, so `stats` can read them back.
pub fn write_yield_csv(reports: &[YieldReport], path: &Path) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CorpusError::Fixture(e.to_string());
    w.write_record([
        "title", "gender", "year", "location", "src_segments", "src_duration", "corpus_segments", "corpus_duration",
        "yield_pct",
    ])
    .map_err(csv_err)?;
    for r in reports {
        w.write_record([
            r.source_id.as_str(),
            "",
            "",
            "",
            &r.n_source_segments.to_string(),
            &format_duration_precise(r.source_duration_ms),
            &r.n_corpus_segments.to_string(),
            &format_duration_precise(r.corpus_duration_ms),
            &format!("{:.1}", r.yield_duration_pct),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CorpusError::Fixture(e.to_string()))?;
    write_atomic(path, &bytes)?;
    Ok(())
}

/// Renders per-source rows followed by Total and Average rows.
pub fn format_yield_table(reports: &[YieldReport], summary: &YieldSummary) -> String {
    let header = [
        "Source", "Src segments", "Src duration", "Corpus segments", "Corpus duration", "Count yield", "Duration yield",
    ];
    let pct = |p: f64| format!("{p:.1}%");
    let mut rows: Vec<[String; 7]> = reports
        .iter()
        .map(|r| {
            [
                r.source_id.clone(),
                group_thousands(r.n_source_segments),
                format_duration(r.source_duration_ms),
                group_thousands(r.n_corpus_segments),
                format_duration(r.corpus_duration_ms),
                pct(r.yield_count_pct),
                pct(r.yield_duration_pct),
            ]
        })
        .collect();
    let t = &summary.total;
    rows.push([
        "Total".into(),
        group_thousands(t.n_source_segments),
        format_duration(t.source_duration_ms),
        group_thousands(t.n_corpus_segments),
        format_duration(t.corpus_duration_ms),
        pct(t.yield_count_pct),
        pct(t.yield_duration_pct),
    ]);
    rows.push([
        "Average".into(),
        format!("{:.1}", summary.avg_source_segments),
        format_duration(summary.avg_source_duration_ms.round() as u64),
        format!("{:.1}", summary.avg_corpus_segments),
        format_duration(summary.avg_corpus_duration_ms.round() as u64),
        pct(t.yield_count_pct),
        pct(t.yield_duration_pct),
    ]);

    let mut widths = header.map(|h| h.chars().count());
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
            let pad = " ".repeat(w - cell.chars().count());
            if i == 0 {
                s.push_str(cell);
                s.push_str(&pad);
            } else {
                s.push_str("  ");
                s.push_str(&pad);
                s.push_str(cell);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(&header.map(String::from));
    out.push_str(&line(&widths.map(|w| "-".repeat(w))));
    let n = rows.len();
    for (i, r) in rows.iter().enumerate() {
        if i == n - 2 {
            out.push_str(&line(&widths.map(|w| "-".repeat(w))));
        }
        out.push_str(&line(r));
    }
    out
}
