//! Argument identification: entities and numbers in an utterance are
//! replaced by typed markers (`ci0`, `num0`, ...) before modeling, and a
//! post-processing step recovers the original logical constants afterwards.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One lexicon row: an utterance surface form, its type name, and the
/// logical constant it stands for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub surface: Vec<String>,
    pub type_name: String,
    pub constant: String,
}

/// Number-literal shapes recognized without a lexicon entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumberKind {
    /// A run of ASCII digits.
    Integer,
    /// `digits.digits`.
    Decimal,
    /// 3-4 digits that read as a clock time: hour below 24, minutes below 60.
    TimeHhmm,
}

/// A number pattern with the marker type it produces and a suffix appended
/// to the matched token to form the logical constant (e.g. `:ti`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NumberPattern {
    pub kind: NumberKind,
    pub type_name: String,
    pub constant_suffix: String,
}

impl NumberPattern {
    pub fn new(kind: NumberKind, type_name: &str, constant_suffix: &str) -> Self {
        NumberPattern {
            kind,
            type_name: type_name.to_string(),
            constant_suffix: constant_suffix.to_string(),
        }
    }

    /// The default pattern set: integers and decimals, both typed `num`.
    pub fn defaults() -> Vec<NumberPattern> {
        alloc::vec![
            NumberPattern::new(NumberKind::Integer, "num", ""),
            NumberPattern::new(NumberKind::Decimal, "num", ""),
        ]
    }

    fn matches(&self, token: &str) -> bool {
        let bytes = token.as_bytes();
        match self.kind {
            NumberKind::Integer => {
                !bytes.is_empty() && bytes.iter().all(|b| b.is_ascii_digit())
            }
            NumberKind::Decimal => {
                let mut parts = token.splitn(2, '.');
                match (parts.next(), parts.next()) {
                    (Some(a), Some(b)) => {
                        !a.is_empty()
                            && !b.is_empty()
                            && a.bytes().all(|c| c.is_ascii_digit())
                            && b.bytes().all(|c| c.is_ascii_digit())
                    }
                    _ => false,
                }
            }
            NumberKind::TimeHhmm => {
                if !(3..=4).contains(&bytes.len()) || !bytes.iter().all(|b| b.is_ascii_digit()) {
                    return false;
                }
                let (hh, mm) = token.split_at(bytes.len() - 2);
                hh.parse::<u32>().unwrap_or(99) < 24 && mm.parse::<u32>().unwrap_or(99) < 60
            }
        }
    }
}

/// Entity surface forms plus number patterns, matched by plain string
/// comparison against utterance tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgumentLexicon {
    entries: Vec<LexiconEntry>,
    /// First token of each surface form -> entry indices, longest surface
    /// first (ties broken lexicographically) so the scan is deterministic.
    by_first: BTreeMap<String, Vec<usize>>,
    patterns: Vec<NumberPattern>,
}

impl ArgumentLexicon {
    pub fn new(entries: Vec<LexiconEntry>, patterns: Vec<NumberPattern>) -> Result<Self> {
        let mut seen: BTreeMap<(Vec<String>, String), ()> = BTreeMap::new();
        for e in &entries {
            if e.surface.is_empty() {
                return Err(Error::Config(format!(
                    "lexicon entry for constant {:?} has an empty surface form",
                    e.constant
                )));
            }
            if seen
                .insert((e.surface.clone(), e.type_name.clone()), ())
                .is_some()
            {
                return Err(Error::Config(format!(
                    "duplicate lexicon entry ({:?}, {})",
                    e.surface.join(" "),
                    e.type_name
                )));
            }
        }
        let mut by_first: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            by_first.entry(e.surface[0].clone()).or_default().push(i);
        }
        for bucket in by_first.values_mut() {
            bucket.sort_by(|&a, &b| {
                entries[b]
                    .surface
                    .len()
                    .cmp(&entries[a].surface.len())
                    .then_with(|| entries[a].surface.cmp(&entries[b].surface))
                    .then_with(|| entries[a].type_name.cmp(&entries[b].type_name))
            });
        }
        Ok(ArgumentLexicon {
            entries,
            by_first,
            patterns,
        })
    }

    /// An empty lexicon with only the default number patterns.
    pub fn numbers_only() -> Self {
        ArgumentLexicon::new(Vec::new(), NumberPattern::defaults()).expect("empty lexicon")
    }

    /// Parses the lexicon file format: one entry per line,
    /// `surface<TAB>type<TAB>constant`. Blank lines are skipped. Surface
    /// forms are whitespace-split into token sequences.
    pub fn parse_lines(text: &str, patterns: Vec<NumberPattern>) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    position: lineno + 1,
                    message: format!(
                        "lexicon line must have 3 tab-separated fields, got {}",
                        fields.len()
                    ),
                });
            }
            entries.push(LexiconEntry {
                surface: fields[0].split_whitespace().map(str::to_string).collect(),
                type_name: fields[1].trim().to_string(),
                constant: fields[2].trim().to_string(),
            });
        }
        ArgumentLexicon::new(entries, patterns)
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn patterns(&self) -> &[NumberPattern] {
        &self.patterns
    }

    /// Every type name the lexicon or its patterns can produce.
    pub fn type_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .entries
            .iter()
            .map(|e| e.type_name.clone())
            .chain(self.patterns.iter().map(|p| p.type_name.clone()))
            .collect();
        names.sort();
        names.dedup();
        names
    }

    fn longest_match(&self, tokens: &[String], pos: usize) -> Option<&LexiconEntry> {
        let bucket = self.by_first.get(&tokens[pos])?;
        bucket
            .iter()
            .map(|&i| &self.entries[i])
            .find(|e| tokens[pos..].len() >= e.surface.len() && tokens[pos..pos + e.surface.len()] == e.surface[..])
    }
}

/// Ordered marker table of one utterance: `marker -> logical constant` in
/// assignment order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ArgumentTable {
    entries: Vec<(String, String)>,
}

impl ArgumentTable {
    pub fn push(&mut self, marker: String, constant: String) {
        self.entries.push((marker, constant));
    }

    pub fn get(&self, marker: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(m, _)| m == marker)
            .map(|(_, c)| c.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(m, c)| (m.as_str(), c.as_str()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Markers whose constant equals `constant`.
    pub fn markers_for(&self, constant: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, c)| c == constant)
            .map(|(m, _)| m.as_str())
            .collect()
    }

    /// The type prefixes occurring among the markers (marker minus its
    /// trailing digits).
    fn type_prefixes(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .entries
            .iter()
            .map(|(m, _)| m.trim_end_matches(|c: char| c.is_ascii_digit()))
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

/// An utterance after argument identification: tokens with markers
/// substituted, the marker table, and the original tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedUtterance {
    pub tokens: Vec<String>,
    pub table: ArgumentTable,
    pub original: Vec<String>,
}

/// One training or evaluation example: a masked utterance paired with the
/// masked logical-form token sequence. Every marker in the logical form
/// appears in the utterance's table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExamplePair {
    pub utterance: MaskedUtterance,
    pub logical_form: Vec<String>,
}

/// Scans tokens left to right; at each position the longest lexicon match is
/// preferred, then the first matching number pattern. A match of length L is
/// replaced by one marker `<type><i>` where `i` counts previously assigned
/// markers of that type, and the scan resumes after the match, so matches
/// never overlap.
pub fn identify_arguments(tokens: &[String], lexicon: &ArgumentLexicon) -> MaskedUtterance {
    let mut out = Vec::with_capacity(tokens.len());
    let mut table = ArgumentTable::default();
    let mut type_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut pos = 0;
    while pos < tokens.len() {
        if let Some(entry) = lexicon.longest_match(tokens, pos) {
            let i = type_counts.entry(entry.type_name.clone()).or_insert(0);
            let marker = format!("{}{}", entry.type_name, *i);
            *i += 1;
            out.push(marker.clone());
            table.push(marker, entry.constant.clone());
            pos += entry.surface.len();
            continue;
        }
        let pattern = lexicon
            .patterns()
            .iter()
            .find(|p| p.matches(&tokens[pos]));
        if let Some(p) = pattern {
            let i = type_counts.entry(p.type_name.clone()).or_insert(0);
            let marker = format!("{}{}", p.type_name, *i);
            *i += 1;
            out.push(marker.clone());
            table.push(marker, format!("{}{}", tokens[pos], p.constant_suffix));
            pos += 1;
            continue;
        }
        out.push(tokens[pos].clone());
        pos += 1;
    }
    MaskedUtterance {
        tokens: out,
        table,
        original: tokens.to_vec(),
    }
}

/// Replaces every logical constant that appears as a table value with its
/// marker. A constant claimed by two different markers is ambiguous and
/// reported as an error listing the candidates.
pub fn mask_logical_form(lf_tokens: &[String], table: &ArgumentTable) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(lf_tokens.len());
    for tok in lf_tokens {
        let markers = table.markers_for(tok);
        match markers.len() {
            0 => out.push(tok.clone()),
            1 => out.push(markers[0].to_string()),
            _ => {
                return Err(Error::Ambiguity {
                    constant: tok.clone(),
                    candidates: markers.iter().map(|m| m.to_string()).collect(),
                })
            }
        }
    }
    Ok(out)
}

/// Recovers constants from markers. Markers present in the table are
/// substituted; marker-shaped tokens absent from the table are left in place
/// and returned in the report (the model may legally emit a marker the
/// current utterance never produced).
pub fn unmask(prediction: &[String], table: &ArgumentTable) -> (Vec<String>, Vec<String>) {
    let prefixes = table.type_prefixes();
    let mut out = Vec::with_capacity(prediction.len());
    let mut unknown = Vec::new();
    for tok in prediction {
        if let Some(constant) = table.get(tok) {
            out.push(constant.to_string());
            continue;
        }
        let prefix = tok.trim_end_matches(|c: char| c.is_ascii_digit());
        if prefix.len() < tok.len() && prefixes.contains(&prefix) {
            unknown.push(tok.clone());
        }
        out.push(tok.clone());
    }
    (out, unknown)
}

/// Order-reversed copy of a token sequence, applied to encoder inputs after
/// masking.
pub fn reverse_input<T: Clone>(tokens: &[T]) -> Vec<T> {
    tokens.iter().rev().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;
    use alloc::vec;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn city_lexicon() -> ArgumentLexicon {
        ArgumentLexicon::new(
            vec![
                LexiconEntry {
                    surface: toks("dallas"),
                    type_name: "ci".into(),
                    constant: "dallas:ci".into(),
                },
                LexiconEntry {
                    surface: toks("san francisco"),
                    type_name: "ci".into(),
                    constant: "san_francisco:ci".into(),
                },
                LexiconEntry {
                    surface: toks("san"),
                    type_name: "ci".into(),
                    constant: "san:ci".into(),
                },
            ],
            NumberPattern::defaults(),
        )
        .unwrap()
    }

    #[test]
    fn masks_salary_number() {
        let tokens = tokenize("jobs with a salary of 40000");
        let masked = identify_arguments(&tokens, &ArgumentLexicon::numbers_only());
        assert_eq!(
            masked.tokens,
            toks("jobs with a salary of num0")
        );
        assert_eq!(masked.table.get("num0"), Some("40000"));
        assert_eq!(masked.original, tokens);
    }

    #[test]
    fn masks_cities_in_order_with_longest_match() {
        let masked = identify_arguments(&toks("dallas to san francisco"), &city_lexicon());
        assert_eq!(masked.tokens, toks("ci0 to ci1"));
        assert_eq!(masked.table.get("ci0"), Some("dallas:ci"));
        assert_eq!(masked.table.get("ci1"), Some("san_francisco:ci"));
    }

    #[test]
    fn no_entities_is_identity_with_empty_table() {
        let masked = identify_arguments(&toks("list all of them"), &city_lexicon());
        assert_eq!(masked.tokens, masked.original);
        assert!(masked.table.is_empty());
    }

    #[test]
    fn marker_indices_are_dense_per_type() {
        let lex = ArgumentLexicon::new(
            vec![
                LexiconEntry {
                    surface: toks("austin"),
                    type_name: "ci".into(),
                    constant: "austin:ci".into(),
                },
                LexiconEntry {
                    surface: toks("texas"),
                    type_name: "st".into(),
                    constant: "texas:st".into(),
                },
                LexiconEntry {
                    surface: toks("boston"),
                    type_name: "ci".into(),
                    constant: "boston:ci".into(),
                },
            ],
            vec![],
        )
        .unwrap();
        let masked = identify_arguments(&toks("austin texas boston"), &lex);
        assert_eq!(masked.tokens, toks("ci0 st0 ci1"));
    }

    #[test]
    fn mask_logical_form_substitutes_constants() {
        let tokens = tokenize("jobs with a salary of 40000");
        let masked = identify_arguments(&tokens, &ArgumentLexicon::numbers_only());
        let lf = toks("( job ANS ) ( salary_greater_than ANS 40000 year )");
        let masked_lf = mask_logical_form(&lf, &masked.table).unwrap();
        assert_eq!(
            masked_lf,
            toks("( job ANS ) ( salary_greater_than ANS num0 year )")
        );
        // Empty table: identity.
        assert_eq!(mask_logical_form(&lf, &ArgumentTable::default()).unwrap(), lf);
    }

    #[test]
    fn mask_is_ambiguous_when_two_markers_share_a_constant() {
        let mut table = ArgumentTable::default();
        table.push("ci0".into(), "dallas:ci".into());
        table.push("ci1".into(), "dallas:ci".into());
        let err = mask_logical_form(&toks("( from $0 dallas:ci )"), &table).unwrap_err();
        match err {
            Error::Ambiguity { constant, candidates } => {
                assert_eq!(constant, "dallas:ci");
                assert_eq!(candidates, vec!["ci0".to_string(), "ci1".to_string()]);
            }
            other => panic!("expected ambiguity error, got {other:?}"),
        }
    }

    #[test]
    fn unmask_round_trips_and_reports_unknown_markers() {
        let masked = identify_arguments(&toks("dallas to san francisco"), &city_lexicon());
        let lf = toks("( flight ( from $0 dallas:ci ) ( to $0 san_francisco:ci ) )");
        let masked_lf = mask_logical_form(&lf, &masked.table).unwrap();
        let (recovered, unknown) = unmask(&masked_lf, &masked.table);
        assert_eq!(recovered, lf);
        assert!(unknown.is_empty());

        // ci9 is marker-shaped but absent: retained and reported.
        let (kept, unknown) = unmask(&toks("( to $0 ci9 )"), &masked.table);
        assert_eq!(kept, toks("( to $0 ci9 )"));
        assert_eq!(unknown, vec!["ci9".to_string()]);

        // Non-marker tokens are never reported.
        let (_, unknown) = unmask(&toks("( num kilo4 )"), &masked.table);
        assert!(unknown.is_empty());
    }

    #[test]
    fn reverse_input_reverses_and_is_an_involution() {
        let t = toks("a b c");
        assert_eq!(reverse_input(&t), toks("c b a"));
        assert_eq!(reverse_input(&reverse_input(&t)), t);
        assert_eq!(reverse_input::<String>(&[]), Vec::<String>::new());
    }

    #[test]
    fn time_pattern_matches_clock_times_only() {
        let p = NumberPattern::new(NumberKind::TimeHhmm, "ti", ":ti");
        assert!(p.matches("1600"));
        assert!(p.matches("930"));
        assert!(!p.matches("2500"));
        assert!(!p.matches("1299"));
        assert!(!p.matches("40000"));
        assert!(!p.matches("12"));
    }

    #[test]
    fn pattern_order_controls_precedence() {
        let lex = ArgumentLexicon::new(
            vec![],
            vec![
                NumberPattern::new(NumberKind::TimeHhmm, "ti", ":ti"),
                NumberPattern::new(NumberKind::Integer, "num", ""),
            ],
        )
        .unwrap();
        let masked = identify_arguments(&toks("after 1600 costing 40000"), &lex);
        assert_eq!(masked.tokens, toks("after ti0 costing num0"));
        assert_eq!(masked.table.get("ti0"), Some("1600:ti"));
        assert_eq!(masked.table.get("num0"), Some("40000"));
    }

    #[test]
    fn lexicon_file_parsing_and_validation() {
        let lex = ArgumentLexicon::parse_lines(
            "dallas\tci\tdallas:ci\n\nsan francisco\tci\tsan_francisco:ci\n",
            vec![],
        )
        .unwrap();
        assert_eq!(lex.entries().len(), 2);
        assert_eq!(lex.type_names(), vec!["ci".to_string()]);

        let err = ArgumentLexicon::parse_lines("only two\tfields\n", vec![]).unwrap_err();
        assert!(matches!(err, Error::Parse { position: 1, .. }));

        let dup = ArgumentLexicon::parse_lines(
            "dallas\tci\tdallas:ci\ndallas\tci\tdallas:ci\n",
            vec![],
        );
        assert!(matches!(dup, Err(Error::Config(_))));
    }
}
