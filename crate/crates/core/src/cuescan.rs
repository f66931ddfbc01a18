//! Lexicon-based negation-cue detection over parallel corpora, the 2x2
//! cue-match table, and matched-pair filtering.
//!
//! Detection is deliberately shallow: exact token match for word-mode
//! lexicons, character containment for character-mode ones. The character
//! mode over-triggers on homographs by design; reports carry that caveat.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{round1, Cell, Table};

pub const OVERTRIGGER_CAVEAT: &str = "cue detection is lexicon-only: morphological negation is \
     missed and character-mode entries over-trigger on homographs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Exact match against whole lowercased tokens.
    Word,
    /// Any occurrence of an entry inside a token.
    Character,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueLexicon {
    pub language: String,
    pub match_mode: MatchMode,
    pub entries: Vec<String>,
}

impl CueLexicon {
    /// Word-mode entries are stored lowercased; empty lexicons are invalid.
    pub fn new(language: impl Into<String>, match_mode: MatchMode, entries: Vec<String>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::validation("cue lexicon has no entries"));
        }
        let entries = match match_mode {
            MatchMode::Word => entries.into_iter().map(|e| e.to_lowercase()).collect(),
            MatchMode::Character => entries,
        };
        Ok(CueLexicon { language: language.into(), match_mode, entries })
    }

    pub fn english_default() -> Self {
        let entries = ["no", "non", "not", "'t", "nothing", "without", "none", "never", "neither"];
        CueLexicon::new("en", MatchMode::Word, entries.iter().map(|s| s.to_string()).collect())
            .expect("built-in lexicon is non-empty")
    }

    /// bu, mei, wu, fei, bie, wei, fou, wu; the romanization repeats "wu"
    /// because it names two distinct characters.
    pub fn chinese_default() -> Self {
        let entries = ["不", "没", "无", "非", "别", "未", "否", "勿"];
        CueLexicon::new("zh", MatchMode::Character, entries.iter().map(|s| s.to_string()).collect())
            .expect("built-in lexicon is non-empty")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let lex: CueLexicon = serde_json::from_str(&text)
            .map_err(|e| Error::format(format!("lexicon is not valid JSON: {e}")))?;
        CueLexicon::new(lex.language, lex.match_mode, lex.entries)
    }

    fn token_matches(&self, token: &str) -> bool {
        match self.match_mode {
            MatchMode::Word => {
                let lower = token.to_lowercase();
                self.entries.iter().any(|e| *e == lower)
            }
            MatchMode::Character => self.entries.iter().any(|e| token.contains(e.as_str())),
        }
    }
}

/// Positions of tokens the lexicon flags as cues.
pub fn detect_cues<S: AsRef<str>>(tokens: &[S], lexicon: &CueLexicon) -> Vec<usize> {
    tokens
        .iter()
        .enumerate()
        .filter_map(|(i, t)| lexicon.token_matches(t.as_ref()).then_some(i))
        .collect()
}

/// Whole-line convenience: whitespace-tokenizes for word mode, substring
/// scan for character mode.
pub fn has_cue(text: &str, lexicon: &CueLexicon) -> bool {
    match lexicon.match_mode {
        MatchMode::Word => {
            text.split_whitespace().any(|t| lexicon.token_matches(t))
        }
        MatchMode::Character => lexicon.entries.iter().any(|e| text.contains(e.as_str())),
    }
}

/// Cue-presence quadrant of a sentence pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrant {
    Both,
    SrcOnly,
    TgtOnly,
    Neither,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::Both, Quadrant::SrcOnly, Quadrant::TgtOnly, Quadrant::Neither];

    pub fn is_mismatch(self) -> bool {
        matches!(self, Quadrant::SrcOnly | Quadrant::TgtOnly)
    }
}

impl std::fmt::Display for Quadrant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Quadrant::Both => "both",
            Quadrant::SrcOnly => "src_only",
            Quadrant::TgtOnly => "tgt_only",
            Quadrant::Neither => "neither",
        })
    }
}

pub fn classify_pair(src_has_cue: bool, tgt_has_cue: bool) -> Quadrant {
    match (src_has_cue, tgt_has_cue) {
        (true, true) => Quadrant::Both,
        (true, false) => Quadrant::SrcOnly,
        (false, true) => Quadrant::TgtOnly,
        (false, false) => Quadrant::Neither,
    }
}

/// Streaming 2x2 tabulation. `skipped` counts undecodable lines, which are
/// excluded from the four cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MismatchTable {
    pub both: usize,
    pub src_only: usize,
    pub tgt_only: usize,
    pub neither: usize,
    pub skipped: usize,
}

impl MismatchTable {
    pub fn add(&mut self, q: Quadrant) {
        match q {
            Quadrant::Both => self.both += 1,
            Quadrant::SrcOnly => self.src_only += 1,
            Quadrant::TgtOnly => self.tgt_only += 1,
            Quadrant::Neither => self.neither += 1,
        }
    }

    pub fn merge(&mut self, other: &MismatchTable) {
        self.both += other.both;
        self.src_only += other.src_only;
        self.tgt_only += other.tgt_only;
        self.neither += other.neither;
        self.skipped += other.skipped;
    }

    pub fn count(&self, q: Quadrant) -> usize {
        match q {
            Quadrant::Both => self.both,
            Quadrant::SrcOnly => self.src_only,
            Quadrant::TgtOnly => self.tgt_only,
            Quadrant::Neither => self.neither,
        }
    }

    pub fn total(&self) -> usize {
        self.both + self.src_only + self.tgt_only + self.neither
    }

    pub fn mismatch_count(&self) -> usize {
        self.src_only + self.tgt_only
    }

    /// Share of pairs with a cue on exactly one side, in percent.
    pub fn mismatch_rate_percent(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.mismatch_count() as f64 * 100.0 / self.total() as f64
        }
    }

    pub fn to_table(&self) -> Table {
        let mut table = Table::new("cue_match", ["quadrant", "count", "percent"]);
        for q in Quadrant::ALL {
            let pct = if self.total() == 0 {
                0.0
            } else {
                self.count(q) as f64 * 100.0 / self.total() as f64
            };
            table.push_row(vec![
                Cell::from(q.to_string()),
                Cell::from(self.count(q) as i64),
                Cell::from(round1(pct)),
            ]);
        }
        table.push_row(vec![
            Cell::from("mismatch"),
            Cell::from(self.mismatch_count() as i64),
            Cell::from(round1(self.mismatch_rate_percent())),
        ]);
        table
    }
}

/// Single pass over two parallel line streams.
pub fn mismatch_table<R1: BufRead, R2: BufRead>(
    src: R1,
    tgt: R2,
    src_lex: &CueLexicon,
    tgt_lex: &CueLexicon,
) -> Result<MismatchTable> {
    scan_pairs(src, tgt, src_lex, tgt_lex, |_, _, _| Ok(()))
}

/// What `filter_matched` does with each classified pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterPolicy {
    /// Emit only `both` and `neither` pairs.
    DropMismatch,
    /// Emit every pair and tag it with its quadrant.
    KeepAllTagged,
}

impl std::str::FromStr for FilterPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "drop_mismatch" => Ok(FilterPolicy::DropMismatch),
            "keep_all_tagged" => Ok(FilterPolicy::KeepAllTagged),
            other => Err(Error::invalid_input(format!(
                "unknown filter policy {other:?} (expected drop_mismatch or keep_all_tagged)"
            ))),
        }
    }
}

/// Streams the corpus through the classifier, writing the surviving pairs
/// as parallel text. With `KeepAllTagged`, every pair is written and its
/// quadrant goes to `tags` (one per line). Returns the full tabulation of
/// the input.
#[allow(clippy::too_many_arguments)]
pub fn filter_matched<R1, R2, W1, W2, W3>(
    src: R1,
    tgt: R2,
    src_lex: &CueLexicon,
    tgt_lex: &CueLexicon,
    policy: FilterPolicy,
    mut out_src: W1,
    mut out_tgt: W2,
    mut tags: Option<W3>,
) -> Result<MismatchTable>
where
    R1: BufRead,
    R2: BufRead,
    W1: Write,
    W2: Write,
    W3: Write,
{
    let table = scan_pairs(src, tgt, src_lex, tgt_lex, |q, s, t| {
        let keep = match policy {
            FilterPolicy::DropMismatch => !q.is_mismatch(),
            FilterPolicy::KeepAllTagged => true,
        };
        if keep {
            writeln!(out_src, "{s}")?;
            writeln!(out_tgt, "{t}")?;
            if let Some(w) = tags.as_mut() {
                writeln!(w, "{q}")?;
            }
        }
        Ok(())
    })?;
    out_src.flush()?;
    out_tgt.flush()?;
    if let Some(w) = tags.as_mut() {
        w.flush()?;
    }
    Ok(table)
}

fn scan_pairs<R1, R2, F>(
    mut src: R1,
    mut tgt: R2,
    src_lex: &CueLexicon,
    tgt_lex: &CueLexicon,
    mut visit: F,
) -> Result<MismatchTable>
where
    R1: BufRead,
    R2: BufRead,
    F: FnMut(Quadrant, &str, &str) -> Result<()>,
{
    let mut table = MismatchTable::default();
    let mut sbuf = Vec::new();
    let mut tbuf = Vec::new();
    loop {
        let s = next_line(&mut src, &mut sbuf)?;
        let t = next_line(&mut tgt, &mut tbuf)?;
        match (s, t) {
            (LineRead::Eof, LineRead::Eof) => break,
            (LineRead::Eof, _) | (_, LineRead::Eof) => {
                return Err(Error::validation(
                    "source and target streams have different line counts",
                ));
            }
            (LineRead::Undecodable, _) | (_, LineRead::Undecodable) => {
                table.skipped += 1;
            }
            (LineRead::Line(s), LineRead::Line(t)) => {
                let q = classify_pair(has_cue(&s, src_lex), has_cue(&t, tgt_lex));
                table.add(q);
                visit(q, &s, &t)?;
            }
        }
    }
    Ok(table)
}

enum LineRead {
    Line(String),
    Undecodable,
    Eof,
}

fn next_line<R: BufRead>(reader: &mut R, buf: &mut Vec<u8>) -> Result<LineRead> {
    buf.clear();
    let n = reader.read_until(b'\n', buf)?;
    if n == 0 {
        return Ok(LineRead::Eof);
    }
    if buf.last() == Some(&b'\n') {
        buf.pop();
        if buf.last() == Some(&b'\r') {
            buf.pop();
        }
    }
    match std::str::from_utf8(buf) {
        Ok(s) => Ok(LineRead::Line(s.to_string())),
        Err(_) => Ok(LineRead::Undecodable),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn english_word_mode_matches_exact_tokens_only() {
        let lex = CueLexicon::english_default();
        let tokens = ["i", "do", "not", "know"];
        assert_eq!(detect_cues(&tokens, &lex), vec![2]);
        assert_eq!(detect_cues(&["notebook"], &lex), Vec::<usize>::new());
        assert_eq!(detect_cues(&["No", "NEVER"], &lex), vec![0, 1]);
        assert_eq!(detect_cues(&["don", "'t"], &lex), vec![1]);
    }

    #[test]
    fn character_mode_matches_inside_tokens() {
        let lex = CueLexicon::chinese_default();
        assert_eq!(detect_cues(&["我", "不是"], &lex), vec![1]);
        // the known false positive: 非 inside 南非 (South Africa)
        assert!(has_cue("南非", &lex));
        assert!(!has_cue("我 喜欢 猫", &lex));
    }

    #[test]
    fn quadrants_by_hand() {
        assert_eq!(classify_pair(true, true), Quadrant::Both);
        assert_eq!(classify_pair(true, false), Quadrant::SrcOnly);
        assert_eq!(classify_pair(false, true), Quadrant::TgtOnly);
        assert_eq!(classify_pair(false, false), Quadrant::Neither);
        assert!(Quadrant::SrcOnly.is_mismatch());
        assert!(!Quadrant::Both.is_mismatch());
    }

    fn eight_pair_fixture() -> (String, String) {
        // 2 pairs per quadrant
        let src = "\
no thanks
never again
no idea
nothing here
all good
fine thanks
see you
hello there
";
        let tgt = "\
不 用
别 这样
好 的
可以
不 行
没 有
好 的
再 见
";
        (src.to_string(), tgt.to_string())
    }

    #[test]
    fn fixture_quadrants_and_mismatch_rate() {
        let (src, tgt) = eight_pair_fixture();
        let table = mismatch_table(
            src.as_bytes(),
            tgt.as_bytes(),
            &CueLexicon::english_default(),
            &CueLexicon::chinese_default(),
        )
        .unwrap();
        assert_eq!(
            (table.both, table.src_only, table.tgt_only, table.neither),
            (2, 2, 2, 2)
        );
        assert_eq!(table.total(), 8);
        assert_eq!(table.mismatch_rate_percent(), 50.0);
    }

    #[test]
    fn empty_stream_is_all_zeros() {
        let table = mismatch_table(
            &b""[..],
            &b""[..],
            &CueLexicon::english_default(),
            &CueLexicon::chinese_default(),
        )
        .unwrap();
        assert_eq!(table.total(), 0);
        assert_eq!(table.mismatch_rate_percent(), 0.0);
    }

    #[test]
    fn unequal_lengths_are_rejected() {
        let err = mismatch_table(
            &b"one line\n"[..],
            &b""[..],
            &CueLexicon::english_default(),
            &CueLexicon::chinese_default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("line counts"), "{err}");
    }

    #[test]
    fn undecodable_lines_are_counted_and_excluded() {
        let src = b"good line\n\xff\xfe broken\nanother\n";
        let tgt = "好 的\n好 的\n不 好\n".as_bytes();
        let table = mismatch_table(
            &src[..],
            tgt,
            &CueLexicon::english_default(),
            &CueLexicon::chinese_default(),
        )
        .unwrap();
        assert_eq!(table.skipped, 1);
        assert_eq!(table.total(), 2);
    }

    #[test]
    fn drop_mismatch_keeps_matched_pairs_only() {
        let (src, tgt) = eight_pair_fixture();
        let mut out_src = Vec::new();
        let mut out_tgt = Vec::new();
        let table = filter_matched(
            src.as_bytes(),
            tgt.as_bytes(),
            &CueLexicon::english_default(),
            &CueLexicon::chinese_default(),
            FilterPolicy::DropMismatch,
            &mut out_src,
            &mut out_tgt,
            None::<&mut Vec<u8>>,
        )
        .unwrap();
        assert_eq!(table.total(), 8);
        let kept_src = String::from_utf8(out_src).unwrap();
        let kept_tgt = String::from_utf8(out_tgt).unwrap();
        assert_eq!(kept_src.lines().count(), 4);
        assert_eq!(kept_tgt.lines().count(), 4);

        // rescanning the filtered output must show zero mismatches
        let rescan = mismatch_table(
            kept_src.as_bytes(),
            kept_tgt.as_bytes(),
            &CueLexicon::english_default(),
            &CueLexicon::chinese_default(),
        )
        .unwrap();
        assert_eq!(rescan.mismatch_count(), 0);
        assert_eq!(rescan.total(), 4);
    }

    #[test]
    fn keep_all_tagged_preserves_cardinality() {
        let (src, tgt) = eight_pair_fixture();
        let mut out_src = Vec::new();
        let mut out_tgt = Vec::new();
        let mut tags = Vec::new();
        filter_matched(
            src.as_bytes(),
            tgt.as_bytes(),
            &CueLexicon::english_default(),
            &CueLexicon::chinese_default(),
            FilterPolicy::KeepAllTagged,
            &mut out_src,
            &mut out_tgt,
            Some(&mut tags),
        )
        .unwrap();
        assert_eq!(String::from_utf8(out_src).unwrap().lines().count(), 8);
        let tags = String::from_utf8(tags).unwrap();
        assert_eq!(tags.lines().count(), 8);
        assert_eq!(tags.lines().next(), Some("both"));
    }

    #[test]
    fn no_mismatches_passes_through_unchanged() {
        let src = "never mind\nhello\n";
        let tgt = "没 关系\n你 好\n";
        let mut out_src = Vec::new();
        let mut out_tgt = Vec::new();
        filter_matched(
            src.as_bytes(),
            tgt.as_bytes(),
            &CueLexicon::english_default(),
            &CueLexicon::chinese_default(),
            FilterPolicy::DropMismatch,
            &mut out_src,
            &mut out_tgt,
            None::<&mut Vec<u8>>,
        )
        .unwrap();
        assert_eq!(out_src, src.as_bytes());
        assert_eq!(out_tgt, tgt.as_bytes());
    }

    #[test]
    fn removing_a_character_entry_never_increases_matches() {
        let lines = ["不 好", "非 常", "我 很 好", "南非 很 大"];
        let full = CueLexicon::chinese_default();
        let mut reduced_entries = full.entries.clone();
        reduced_entries.retain(|e| e != "非");
        let reduced = CueLexicon::new("zh", MatchMode::Character, reduced_entries).unwrap();
        for line in lines {
            let with = has_cue(line, &full);
            let without = has_cue(line, &reduced);
            assert!(with || !without, "{line}: match appeared after removing an entry");
        }
    }

    #[test]
    fn counts_stream_without_buffering_the_corpus() {
        // generate 50k pairs through a reader; memory stays at line size
        struct Repeat {
            line: &'static [u8],
            remaining: usize,
            pos: usize,
        }
        impl std::io::Read for Repeat {
            fn read(&mut self, out: &mut [u8]) -> std::io::Result<usize> {
                if self.remaining == 0 {
                    return Ok(0);
                }
                let mut written = 0;
                while written < out.len() && self.remaining > 0 {
                    out[written] = self.line[self.pos];
                    written += 1;
                    self.pos += 1;
                    if self.pos == self.line.len() {
                        self.pos = 0;
                        self.remaining -= 1;
                    }
                }
                Ok(written)
            }
        }
        let n = 50_000;
        let src = std::io::BufReader::new(Repeat { line: b"i do not know\n", remaining: n, pos: 0 });
        let tgt = std::io::BufReader::new(Repeat { line: "我 不 知道\n".as_bytes(), remaining: n, pos: 0 });
        let table = mismatch_table(
            src,
            tgt,
            &CueLexicon::english_default(),
            &CueLexicon::chinese_default(),
        )
        .unwrap();
        assert_eq!(table.both, n);
        assert_eq!(table.total(), n);
    }

    #[test]
    fn lexicon_json_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lex.json");
        let json = r#"{"language":"en","match_mode":"word","entries":["Not","NO"]}"#;
        std::fs::write(&path, json).unwrap();
        let lex = CueLexicon::read(&path).unwrap();
        // word-mode entries normalize to lowercase
        assert_eq!(lex.entries, vec!["not", "no"]);

        std::fs::write(&path, r#"{"language":"en","match_mode":"word","entries":[]}"#).unwrap();
        assert!(CueLexicon::read(&path).is_err());
    }

    #[test]
    fn mismatch_rate_on_corpus_scale_counts() {
        let table = MismatchTable {
            both: 2_600_000,
            src_only: 150_000,
            tgt_only: 4_160_000,
            neither: 17_840_000,
            skipped: 0,
        };
        assert_eq!(table.total(), 24_750_000);
        assert_eq!(table.mismatch_count(), 4_310_000);
        assert!((table.mismatch_rate_percent() - 17.4).abs() < 0.05);
        // per-cell shares round to the expected one-decimal values
        let pct = |n: usize| round1(n as f64 * 100.0 / table.total() as f64);
        assert_eq!(pct(table.both), 10.5);
        assert_eq!(pct(table.src_only), 0.6);
        assert_eq!(pct(table.tgt_only), 16.8);
        assert_eq!(pct(table.neither), 72.1);
    }

    #[test]
    fn table_percentages_round_to_one_decimal() {
        let mut table = MismatchTable::default();
        table.both = 1;
        table.src_only = 1;
        table.neither = 1;
        let rendered = table.to_table();
        let csv = rendered.to_csv().unwrap();
        assert!(csv.contains("both,1,33.3"), "{csv}");
        assert!(csv.contains("mismatch,1,33.3"), "{csv}");
    }
}
