//! Text-level encodings between structured records and seq2seq source/target
//! strings, and the inverse parsers for model generations.
//!
//! The wire formats here are normative and bit-exact: values are joined with
//! `" | "`, pairs render as `"attribute: {a}, value: {v}"`, highlighted values
//! are wrapped in `<hl>` tokens, and the two sub-task prefixes are
//! `"extract value: "` and `"generate attribute: "`. Parsers are total: any
//! input string yields a `ParseReport`, never an error.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::record::{AttrValuePair, ProductRecord};

/// Separator between flattened values or rendered pairs.
pub const SEPARATOR: &str = " | ";
/// Marker wrapped around a value inside an attribute-generation input.
pub const HIGHLIGHT_TOKEN: &str = "<hl>";
/// Prefix distinguishing value-extraction inputs in multitask training.
pub const VE_PREFIX: &str = "extract value: ";
/// Prefix distinguishing attribute-generation inputs in multitask training.
pub const AG_PREFIX: &str = "generate attribute: ";

/// Substrings stripped from attribute and value strings before serialization,
/// so the flattened forms stay unambiguous without an escaping grammar.
const RESERVED: [&str; 4] = [HIGHLIGHT_TOKEN, "attribute:", "value:", "|"];

static PAIR_TEMPLATE: LazyLock<Regex> = LazyLock::new(|| {
    // Tolerates optional whitespace around ':' and ','. The attribute capture
    // is non-greedy so it stops at the first ", value:" marker.
    Regex::new(r"^attribute\s*:\s*(.*?)\s*,\s*value\s*:\s*(.*)$").expect("valid pair template")
});

/// Which sub-task a training example belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Value extraction: product text in, flattened values out.
    Ve,
    /// Attribute generation: highlighted text in, attribute name out.
    Ag,
    /// End-to-end: product text in, flattened pairs out.
    E2e,
}

/// One (source, target) training instance for a seq2seq backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskExample {
    pub source: String,
    pub target: String,
    pub task: TaskKind,
}

/// Outcome of decoding one generated string.
///
/// `parsed + malformed_segments + duplicates` always equals the number of
/// non-empty separator-delimited segments in the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseReport<T> {
    pub parsed: Vec<T>,
    pub malformed_segments: usize,
    pub duplicates: usize,
    pub raw: String,
}

impl<T> Default for ParseReport<T> {
    fn default() -> Self {
        Self {
            parsed: Vec::new(),
            malformed_segments: 0,
            duplicates: 0,
            raw: String::new(),
        }
    }
}

/// Removes every reserved sequence from `s`, iterating until stable so that
/// removals cannot splice a new reserved sequence together.
pub fn sanitize(s: &str) -> String {
    let mut out = s.to_string();
    loop {
        let before = out.len();
        for seq in RESERVED {
            out = out.replace(seq, "");
        }
        if out.len() == before {
            return out;
        }
    }
}

fn sanitize_trim(s: &str) -> String {
    sanitize(s).trim().to_string()
}

/// Serializes an ordered value list into a single flattened string.
/// Values that sanitize to nothing are dropped.
pub fn flatten_values<S: AsRef<str>>(values: &[S]) -> String {
    values
        .iter()
        .map(|v| sanitize_trim(v.as_ref()))
        .filter(|v| !v.is_empty())
        .collect::<Vec<_>>()
        .join(SEPARATOR)
}

/// Inverse of [`flatten_values`]: splits a generated string into candidate
/// values. Whitespace-only segments count as malformed; repeated values are
/// deduplicated keeping the first occurrence. Total on arbitrary input.
pub fn parse_values(generated: &str) -> ParseReport<String> {
    let mut report = ParseReport {
        raw: generated.to_string(),
        ..Default::default()
    };
    for segment in generated.split('|') {
        if segment.is_empty() {
            continue;
        }
        let value = segment.trim();
        if value.is_empty() {
            report.malformed_segments += 1;
        } else if report.parsed.iter().any(|v| v == value) {
            report.duplicates += 1;
        } else {
            report.parsed.push(value.to_string());
        }
    }
    report
}

/// Wraps the first case-insensitive occurrence of `value` in `text` with
/// highlight tokens, preserving the original surface form. Returns `None`
/// when the value does not occur.
pub fn highlight_value(text: &str, value: &str) -> Option<String> {
    let needle = value.trim();
    if needle.is_empty() {
        return None;
    }
    let (start, end) = find_case_insensitive(text, needle)?;
    let mut out = String::with_capacity(text.len() + 2 * HIGHLIGHT_TOKEN.len() + 2);
    out.push_str(&text[..start]);
    out.push_str(HIGHLIGHT_TOKEN);
    out.push(' ');
    out.push_str(&text[start..end]);
    out.push(' ');
    out.push_str(HIGHLIGHT_TOKEN);
    out.push_str(&text[end..]);
    Some(out)
}

/// Byte range of the first case-insensitive occurrence of `needle` in
/// `haystack`, aligned to character boundaries of the original text.
///
/// Lowercasing can expand one character into several (e.g. 'İ'), so the
/// search runs over a lowered character stream tagged with original byte
/// offsets and only accepts matches that align with original characters.
fn find_case_insensitive(haystack: &str, needle: &str) -> Option<(usize, usize)> {
    let mut stream: Vec<(char, usize, bool)> = Vec::with_capacity(haystack.len());
    for (byte_idx, ch) in haystack.char_indices() {
        let mut first = true;
        for lc in ch.to_lowercase() {
            stream.push((lc, byte_idx, first));
            first = false;
        }
    }
    let lowered: Vec<char> = needle.chars().flat_map(char::to_lowercase).collect();
    let n = lowered.len();
    if n == 0 || stream.len() < n {
        return None;
    }
    for start in 0..=(stream.len() - n) {
        if !stream[start].2 {
            continue;
        }
        if (0..n).any(|k| stream[start + k].0 != lowered[k]) {
            continue;
        }
        let end = start + n;
        if end < stream.len() && !stream[end].2 {
            continue;
        }
        let start_byte = stream[start].1;
        let end_byte = if end < stream.len() {
            stream[end].1
        } else {
            haystack.len()
        };
        return Some((start_byte, end_byte));
    }
    None
}

/// Renders an ordered pair list as template segments joined by the separator.
/// Pairs whose attribute or value sanitizes to nothing are dropped.
pub fn render_pairs(pairs: &[AttrValuePair]) -> String {
    pairs
        .iter()
        .filter_map(|p| {
            let a = sanitize_trim(&p.attribute);
            let v = sanitize_trim(&p.value);
            if a.is_empty() || v.is_empty() {
                None
            } else {
                Some(format!("attribute: {a}, value: {v}"))
            }
        })
        .collect::<Vec<_>>()
        .join(SEPARATOR)
}

/// Inverse of [`render_pairs`]: decodes a generated string into pairs.
/// Segments that fail the template, or whose attribute or value comes out
/// empty, count as malformed. Duplicate pairs keep the first occurrence.
/// Total on arbitrary input.
pub fn parse_pairs(generated: &str) -> ParseReport<AttrValuePair> {
    let mut report = ParseReport {
        raw: generated.to_string(),
        ..Default::default()
    };
    for segment in generated.split('|') {
        if segment.is_empty() {
            continue;
        }
        let trimmed = segment.trim();
        if trimmed.is_empty() {
            report.malformed_segments += 1;
            continue;
        }
        let Some(caps) = PAIR_TEMPLATE.captures(trimmed) else {
            report.malformed_segments += 1;
            continue;
        };
        let attribute = sanitize_trim(&caps[1]);
        let value = sanitize_trim(&caps[2]);
        if attribute.is_empty() || value.is_empty() {
            report.malformed_segments += 1;
            continue;
        }
        let pair = AttrValuePair { attribute, value };
        if report.parsed.contains(&pair) {
            report.duplicates += 1;
        } else {
            report.parsed.push(pair);
        }
    }
    report
}

/// The two prefixable sub-tasks of the multitask scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefixTask {
    Ve,
    Ag,
}

/// Prepends the sub-task prefix that tells a shared model which task to run.
pub fn add_task_prefix(task: PrefixTask, source: &str) -> String {
    match task {
        PrefixTask::Ve => format!("{VE_PREFIX}{source}"),
        PrefixTask::Ag => format!("{AG_PREFIX}{source}"),
    }
}

/// How a record is turned into training examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusKind {
    /// Separate VE and AG corpora, unprefixed sources.
    Pipeline,
    /// Mixed VE + AG examples with task prefixes.
    Multitask,
    /// Single example with a flattened-pair target.
    EndToEnd,
}

/// Examples built from one record, plus per-record build diagnostics.
#[derive(Debug, Clone, Default)]
pub struct BuiltExamples {
    pub examples: Vec<TaskExample>,
    /// Gold pairs skipped for AG because the value never occurs in the text.
    pub values_not_found: usize,
}

/// Converts one record into the training examples its scheme calls for.
///
/// Pipeline and multitask records yield one VE example (target: flattened
/// gold values, duplicates emitted once) plus one AG example per gold pair
/// whose value occurs in the text. End-to-end records yield exactly one
/// example with the rendered-pair target. A record with no usable pairs
/// yields no examples.
pub fn make_training_examples(record: &ProductRecord, kind: CorpusKind) -> BuiltExamples {
    let mut built = BuiltExamples::default();
    if record.pairs.is_empty() {
        return built;
    }
    match kind {
        CorpusKind::EndToEnd => {
            let target = render_pairs(&record.pairs);
            if !target.is_empty() {
                built.examples.push(TaskExample {
                    source: record.text.clone(),
                    target,
                    task: TaskKind::E2e,
                });
            }
        }
        CorpusKind::Pipeline | CorpusKind::Multitask => {
            let prefixed = kind == CorpusKind::Multitask;
            let mut seen_values: Vec<&str> = Vec::new();
            for pair in &record.pairs {
                if !seen_values.contains(&pair.value.as_str()) {
                    seen_values.push(&pair.value);
                }
            }
            let ve_target = flatten_values(&seen_values);
            if !ve_target.is_empty() {
                let source = if prefixed {
                    add_task_prefix(PrefixTask::Ve, &record.text)
                } else {
                    record.text.clone()
                };
                built.examples.push(TaskExample {
                    source,
                    target: ve_target,
                    task: TaskKind::Ve,
                });
            }
            for pair in &record.pairs {
                match highlight_value(&record.text, &pair.value) {
                    Some(highlighted) => {
                        let source = if prefixed {
                            add_task_prefix(PrefixTask::Ag, &highlighted)
                        } else {
                            highlighted
                        };
                        let target = sanitize_trim(&pair.attribute);
                        if !target.is_empty() {
                            built.examples.push(TaskExample {
                                source,
                                target,
                                task: TaskKind::Ag,
                            });
                        }
                    }
                    None => built.values_not_found += 1,
                }
            }
        }
    }
    built
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: &str, v: &str) -> AttrValuePair {
        AttrValuePair {
            attribute: a.into(),
            value: v.into(),
        }
    }

    fn figure_record() -> ProductRecord {
        ProductRecord {
            id: "fig1".into(),
            category: "Watches".into(),
            text: "Fossil Men's Watch Analog Display Slim Case Design with Brown Leather Band"
                .into(),
            pairs: vec![
                pair("Brand", "Fossil"),
                pair("Band Color", "Brown"),
                pair("Band Material", "Leather"),
            ],
        }
    }

    #[test]
    fn flatten_joins_with_separator() {
        assert_eq!(
            flatten_values(&["Fossil", "Brown", "Leather"]),
            "Fossil | Brown | Leather"
        );
        assert_eq!(flatten_values(&["Red"]), "Red");
        let empty: [&str; 0] = [];
        assert_eq!(flatten_values(&empty), "");
    }

    #[test]
    fn flatten_sanitizes_reserved_sequences() {
        assert_eq!(flatten_values(&["A|B", "C"]), "AB | C");
        assert_eq!(flatten_values(&["x<hl>y"]), "xy");
    }

    #[test]
    fn sanitize_is_stable_under_spliced_sequences() {
        // Removing '|' must not leave a fresh "attribute:" behind.
        assert_eq!(sanitize("at|tribute: x"), " x");
        assert_eq!(sanitize("<h<hl>l>"), "");
    }

    #[test]
    fn parse_values_inverts_flatten() {
        let report = parse_values("Fossil | Brown | Leather");
        assert_eq!(report.parsed, vec!["Fossil", "Brown", "Leather"]);
        assert_eq!(report.malformed_segments, 0);
    }

    #[test]
    fn parse_values_empty_input() {
        let report = parse_values("");
        assert!(report.parsed.is_empty());
        assert_eq!(report.malformed_segments, 0);
    }

    #[test]
    fn parse_values_counts_blank_segments() {
        let report = parse_values("Fossil |  | Brown");
        assert_eq!(report.parsed, vec!["Fossil", "Brown"]);
        assert_eq!(report.malformed_segments, 1);
    }

    #[test]
    fn parse_values_dedups_preserving_first() {
        let report = parse_values("Leather | Leather");
        assert_eq!(report.parsed, vec!["Leather"]);
        assert_eq!(report.duplicates, 1);
        assert_eq!(report.malformed_segments, 0);
    }

    #[test]
    fn highlight_wraps_first_occurrence() {
        let text = "Fossil Men's Watch Analog Display Slim Case Design with Brown Leather Band";
        let got = highlight_value(text, "Leather").unwrap();
        assert_eq!(
            got,
            "Fossil Men's Watch Analog Display Slim Case Design with Brown <hl> Leather <hl> Band"
        );
        assert_eq!(got.matches(HIGHLIGHT_TOKEN).count(), 2);
    }

    #[test]
    fn highlight_whole_string() {
        assert_eq!(highlight_value("text", "text").unwrap(), "<hl> text <hl>");
    }

    #[test]
    fn highlight_missing_value() {
        assert_eq!(highlight_value("abc", "xyz"), None);
    }

    #[test]
    fn highlight_is_case_insensitive_but_keeps_surface_form() {
        let got = highlight_value("Brown LEATHER Band", "leather").unwrap();
        assert_eq!(got, "Brown <hl> LEATHER <hl> Band");
    }

    #[test]
    fn highlight_aligns_to_character_boundaries() {
        // 'İ' lowercases to two chars; a partial overlap must not match.
        assert!(highlight_value("İstanbul", "i").is_none());
        let got = highlight_value("İstanbul", "İstanbul").unwrap();
        assert_eq!(got, "<hl> İstanbul <hl>");
    }

    #[test]
    fn render_pairs_uses_canonical_template() {
        let rendered = render_pairs(&figure_record().pairs);
        assert_eq!(
            rendered,
            "attribute: Brand, value: Fossil | attribute: Band Color, value: Brown | \
             attribute: Band Material, value: Leather"
        );
        assert_eq!(render_pairs(&[pair("A", "B")]), "attribute: A, value: B");
        assert_eq!(render_pairs(&[]), "");
    }

    #[test]
    fn render_pairs_sanitizes_values() {
        assert_eq!(
            render_pairs(&[pair("Size", "X|Y")]),
            "attribute: Size, value: XY"
        );
    }

    #[test]
    fn parse_pairs_round_trips_rendered_pairs() {
        let pairs = figure_record().pairs;
        let report = parse_pairs(&render_pairs(&pairs));
        assert_eq!(report.parsed, pairs);
        assert_eq!(report.malformed_segments, 0);
    }

    #[test]
    fn parse_pairs_counts_template_mismatches() {
        let report = parse_pairs("attribute: Brand, value: Fossil | garbage");
        assert_eq!(report.parsed, vec![pair("Brand", "Fossil")]);
        assert_eq!(report.malformed_segments, 1);
    }

    #[test]
    fn parse_pairs_requires_both_fields() {
        let report = parse_pairs("attribute: Brand");
        assert!(report.parsed.is_empty());
        assert_eq!(report.malformed_segments, 1);
    }

    #[test]
    fn parse_pairs_tolerates_loose_whitespace() {
        let report = parse_pairs("attribute :  Brand ,value:Fossil");
        assert_eq!(report.parsed, vec![pair("Brand", "Fossil")]);
    }

    #[test]
    fn parse_pairs_rejects_empty_fields() {
        let report = parse_pairs("attribute: , value: x");
        assert!(report.parsed.is_empty());
        assert_eq!(report.malformed_segments, 1);
    }

    #[test]
    fn task_prefixes_are_exact() {
        assert_eq!(add_task_prefix(PrefixTask::Ve, "abc"), "extract value: abc");
        assert_eq!(
            add_task_prefix(PrefixTask::Ag, "abc"),
            "generate attribute: abc"
        );
        assert_eq!(add_task_prefix(PrefixTask::Ve, ""), "extract value: ");
    }

    #[test]
    fn end_to_end_examples_have_one_flattened_target() {
        let built = make_training_examples(&figure_record(), CorpusKind::EndToEnd);
        assert_eq!(built.examples.len(), 1);
        let ex = &built.examples[0];
        assert_eq!(ex.task, TaskKind::E2e);
        assert_eq!(ex.source, figure_record().text);
        assert_eq!(ex.target, render_pairs(&figure_record().pairs));
    }

    #[test]
    fn pipeline_examples_are_one_ve_plus_one_ag_per_pair() {
        let built = make_training_examples(&figure_record(), CorpusKind::Pipeline);
        let ve: Vec<_> = built
            .examples
            .iter()
            .filter(|e| e.task == TaskKind::Ve)
            .collect();
        let ag: Vec<_> = built
            .examples
            .iter()
            .filter(|e| e.task == TaskKind::Ag)
            .collect();
        assert_eq!(ve.len(), 1);
        assert_eq!(ag.len(), 3);
        assert_eq!(ve[0].target, "Fossil | Brown | Leather");
        assert_eq!(ag[0].target, "Brand");
        assert!(ag[0].source.contains("<hl> Fossil <hl>"));
        assert_eq!(built.values_not_found, 0);
    }

    #[test]
    fn multitask_examples_are_prefixed() {
        let built = make_training_examples(&figure_record(), CorpusKind::Multitask);
        assert_eq!(built.examples.len(), 4);
        for ex in &built.examples {
            match ex.task {
                TaskKind::Ve => assert!(ex.source.starts_with(VE_PREFIX)),
                TaskKind::Ag => assert!(ex.source.starts_with(AG_PREFIX)),
                TaskKind::E2e => panic!("no e2e examples in multitask corpus"),
            }
        }
    }

    #[test]
    fn missing_values_skip_ag_examples() {
        let record = ProductRecord {
            id: "r".into(),
            category: "c".into(),
            text: "Red cotton shirt".into(),
            pairs: vec![pair("Brand", "Acme")],
        };
        let built = make_training_examples(&record, CorpusKind::Pipeline);
        assert_eq!(built.examples.len(), 1);
        assert_eq!(built.examples[0].task, TaskKind::Ve);
        assert_eq!(built.values_not_found, 1);
    }

    #[test]
    fn record_without_pairs_yields_nothing() {
        let record = ProductRecord {
            id: "r".into(),
            category: "c".into(),
            text: "t".into(),
            pairs: vec![],
        };
        for kind in [
            CorpusKind::Pipeline,
            CorpusKind::Multitask,
            CorpusKind::EndToEnd,
        ] {
            assert!(make_training_examples(&record, kind).examples.is_empty());
        }
    }

    #[test]
    fn duplicate_values_flatten_once() {
        let record = ProductRecord {
            id: "r".into(),
            category: "c".into(),
            text: "Steel case with steel band".into(),
            pairs: vec![
                pair("Case Material", "Steel"),
                pair("Band Material", "Steel"),
            ],
        };
        let built = make_training_examples(&record, CorpusKind::Pipeline);
        let ve = built
            .examples
            .iter()
            .find(|e| e.task == TaskKind::Ve)
            .unwrap();
        assert_eq!(ve.target, "Steel");
    }
}
