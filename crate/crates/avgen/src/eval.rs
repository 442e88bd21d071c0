//! Scoring of predicted attribute-value pairs against gold annotations.
//!
//! Matching is exact on normalized pairs: lowercase, whitespace collapsed,
//! trailing ASCII punctuation stripped from values. Predictions for
//! attributes that a record's gold set never mentions are discarded before
//! counting, so the metrics measure extraction quality on the attribute
//! schema each record actually covers.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::record::{AttrValuePair, ProductRecord};
use crate::strategies::{PredictionSet, StrategyCost, TrainedStrategy};

/// Lowercases, collapses internal whitespace runs to one space, and trims.
pub fn normalize_text(s: &str) -> String {
    s.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Like [`normalize_text`], then strips trailing ASCII punctuation. The trim
/// and strip loop runs to a fixpoint so the result is idempotent even when
/// punctuation hides behind whitespace ("v. ." → "v").
pub fn normalize_value(s: &str) -> String {
    let mut out = normalize_text(s);
    loop {
        let trimmed = out
            .trim_end_matches(|c: char| c.is_ascii_punctuation())
            .trim_end();
        if trimmed.len() == out.len() {
            return out;
        }
        out = trimmed.to_string();
    }
}

/// Canonical form used for pair equality during scoring.
pub fn normalize_pair(pair: &AttrValuePair) -> AttrValuePair {
    AttrValuePair {
        attribute: normalize_text(&pair.attribute),
        value: normalize_value(&pair.value),
    }
}

/// Drops predicted pairs whose normalized attribute appears in none of the
/// record's gold pairs. Returns the retained pairs and the discard count.
pub fn apply_discard_rule(
    predicted: &[AttrValuePair],
    gold: &[AttrValuePair],
) -> (Vec<AttrValuePair>, usize) {
    let gold_attrs: BTreeSet<String> = gold.iter().map(|p| normalize_text(&p.attribute)).collect();
    let mut retained = Vec::new();
    let mut discarded = 0;
    for pair in predicted {
        if gold_attrs.contains(&normalize_text(&pair.attribute)) {
            retained.push(pair.clone());
        } else {
            discarded += 1;
        }
    }
    (retained, discarded)
}

/// How per-record counts are combined into corpus-level metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Pool true-positive/false-positive/false-negative counts over records.
    #[default]
    Micro,
    /// Average per-record P/R/F1 with equal record weight.
    Macro,
}

/// Scoring knobs. Defaults reproduce the reference protocol.
#[derive(Debug, Clone, Copy)]
pub struct ScoreOptions {
    pub apply_discard: bool,
    pub averaging: Averaging,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            apply_discard: true,
            averaging: Averaging::Micro,
        }
    }
}

/// One record's predictions next to its gold pairs.
#[derive(Debug, Clone)]
pub struct ScoredRecord {
    pub id: String,
    pub category: String,
    pub predicted: Vec<AttrValuePair>,
    pub gold: Vec<AttrValuePair>,
}

/// Aggregate counts feeding precision and recall.
///
/// `true_positives + false_positives` equals the retained (post-discard,
/// normalized-unique) predictions and `true_positives + false_negatives`
/// equals the normalized-unique gold pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub discarded: usize,
}

impl MatchCounts {
    /// Retained predictions: `tp + fp`.
    pub fn predicted(&self) -> usize {
        self.true_positives + self.false_positives
    }

    /// Gold pairs: `tp + fn`.
    pub fn gold(&self) -> usize {
        self.true_positives + self.false_negatives
    }

    fn add(&mut self, other: &MatchCounts) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
        self.discarded += other.discarded;
    }

    fn precision(&self) -> f64 {
        if self.predicted() == 0 {
            1.0
        } else {
            self.true_positives as f64 / self.predicted() as f64
        }
    }

    fn recall(&self) -> f64 {
        if self.gold() == 0 {
            1.0
        } else {
            self.true_positives as f64 / self.gold() as f64
        }
    }
}

/// Evaluation outcome for one prediction set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: MatchCounts,
    pub records: usize,
    pub per_category: BTreeMap<String, CategoryScore>,
    pub averaging: Averaging,
    /// Digest of the scoring configuration and scored inputs; identical
    /// inputs always reproduce it.
    pub fingerprint: String,
}

/// Micro scores within one category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub records: usize,
}

/// Serializable report with percentages rounded to two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReportDoc {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: MatchCounts,
    pub records: usize,
    pub per_category: BTreeMap<String, CategoryScoreDoc>,
    pub averaging: Averaging,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScoreDoc {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub records: usize,
}

fn percent(fraction: f64) -> f64 {
    (fraction * 10_000.0).round() / 100.0
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn normalized_set(pairs: &[AttrValuePair]) -> BTreeSet<(String, String)> {
    pairs
        .iter()
        .map(|p| {
            let n = normalize_pair(p);
            (n.attribute, n.value)
        })
        .collect()
}

fn record_counts(record: &ScoredRecord, apply_discard: bool) -> MatchCounts {
    let (retained, discarded) = if apply_discard {
        apply_discard_rule(&record.predicted, &record.gold)
    } else {
        (record.predicted.clone(), 0)
    };
    // Normalized multisets collapse to sets: duplicate normalized predictions
    // count once, as do duplicate normalized gold pairs.
    let predicted = normalized_set(&retained);
    let gold = normalized_set(&record.gold);
    let true_positives = predicted.intersection(&gold).count();
    MatchCounts {
        true_positives,
        false_positives: predicted.len() - true_positives,
        false_negatives: gold.len() - true_positives,
        discarded,
    }
}

/// Order-insensitive digest of the scoring inputs and options.
fn fingerprint_inputs(records: &[ScoredRecord], options: &ScoreOptions) -> String {
    let mut lines: Vec<String> = records
        .iter()
        .map(|r| {
            let fmt = |pairs: &[AttrValuePair]| {
                let set = normalized_set(pairs);
                set.into_iter()
                    .map(|(a, v)| format!("{a}\u{1}{v}"))
                    .collect::<Vec<_>>()
                    .join("\u{2}")
            };
            format!("{}\u{3}{}\u{3}{}", r.id, fmt(&r.predicted), fmt(&r.gold))
        })
        .collect();
    lines.sort();
    let payload = format!(
        "discard={} averaging={:?}\n{}",
        options.apply_discard,
        options.averaging,
        lines.join("\n")
    );
    sha256_hex(payload.as_bytes())
}

/// Scores a corpus of records. Precision defaults to 1.0 when nothing was
/// predicted after discarding, and recall to 1.0 when a record has no gold
/// pairs, so empty cases never divide by zero.
pub fn score(records: &[ScoredRecord], options: ScoreOptions) -> EvalReport {
    let mut total = MatchCounts::default();
    let mut by_category: BTreeMap<String, (MatchCounts, usize)> = BTreeMap::new();
    let mut macro_sums = (0.0f64, 0.0f64, 0.0f64);
    for record in records {
        let counts = record_counts(record, options.apply_discard);
        total.add(&counts);
        let entry = by_category
            .entry(record.category.clone())
            .or_insert((MatchCounts::default(), 0));
        entry.0.add(&counts);
        entry.1 += 1;
        let p = counts.precision();
        let r = counts.recall();
        macro_sums.0 += p;
        macro_sums.1 += r;
        macro_sums.2 += f1_score(p, r);
    }
    let (precision, recall, f1) = match options.averaging {
        Averaging::Micro => {
            let p = total.precision();
            let r = total.recall();
            (p, r, f1_score(p, r))
        }
        Averaging::Macro => {
            if records.is_empty() {
                (1.0, 1.0, 1.0)
            } else {
                let n = records.len() as f64;
                (macro_sums.0 / n, macro_sums.1 / n, macro_sums.2 / n)
            }
        }
    };
    let per_category = by_category
        .into_iter()
        .map(|(category, (counts, records))| {
            let p = counts.precision();
            let r = counts.recall();
            (
                category,
                CategoryScore {
                    precision: p,
                    recall: r,
                    f1: f1_score(p, r),
                    records,
                },
            )
        })
        .collect();
    EvalReport {
        precision,
        recall,
        f1,
        counts: total,
        records: records.len(),
        per_category,
        averaging: options.averaging,
        fingerprint: fingerprint_inputs(records, &options),
    }
}

impl EvalReport {
    /// Rounds fractions to percentages with two decimals for serialization.
    pub fn to_doc(&self) -> EvalReportDoc {
        EvalReportDoc {
            precision: percent(self.precision),
            recall: percent(self.recall),
            f1: percent(self.f1),
            counts: self.counts,
            records: self.records,
            per_category: self
                .per_category
                .iter()
                .map(|(category, s)| {
                    (
                        category.clone(),
                        CategoryScoreDoc {
                            precision: percent(s.precision),
                            recall: percent(s.recall),
                            f1: percent(s.f1),
                            records: s.records,
                        },
                    )
                })
                .collect(),
            averaging: self.averaging,
            fingerprint: self.fingerprint.clone(),
        }
    }
}

/// F1 matrix (percent) over (training corpus, evaluation corpus) pairs.
/// Keys are corpus names; every inner map covers the same evaluation corpora.
pub type CrossEvalMatrix = BTreeMap<String, BTreeMap<String, f64>>;

/// Renders a matrix cell value as the percent figure used in reports.
pub fn as_percent(fraction: f64) -> f64 {
    percent(fraction)
}

/// Joins prediction sets to their gold records by id and scores them.
///
/// Every gold record is scored; records without a prediction count as an
/// empty prediction (abstention). A prediction whose id matches no gold
/// record, or a second prediction for the same id, is a consistency error.
pub fn score_predictions(
    predictions: &[PredictionSet],
    golds: &[ProductRecord],
    options: ScoreOptions,
) -> Result<EvalReport> {
    let mut by_id: BTreeMap<&str, &PredictionSet> = BTreeMap::new();
    let gold_ids: BTreeSet<&str> = golds.iter().map(|r| r.id.as_str()).collect();
    for prediction in predictions {
        if !gold_ids.contains(prediction.record_id.as_str()) {
            return Err(Error::Consistency(format!(
                "prediction references unknown record id '{}'",
                prediction.record_id
            )));
        }
        if by_id
            .insert(prediction.record_id.as_str(), prediction)
            .is_some()
        {
            return Err(Error::Consistency(format!(
                "duplicate prediction for record id '{}'",
                prediction.record_id
            )));
        }
    }
    let records: Vec<ScoredRecord> = golds
        .iter()
        .map(|record| ScoredRecord {
            id: record.id.clone(),
            category: record.category.clone(),
            predicted: by_id
                .get(record.id.as_str())
                .map(|p| p.pairs.clone())
                .unwrap_or_default(),
            gold: record.pairs.clone(),
        })
        .collect();
    Ok(score(&records, options))
}

/// Scores every trained strategy against every test split: cell (i, j) is
/// the F1 (percent) of the model trained on corpus i evaluated on the test
/// split of corpus j. The model and split maps must cover the same corpus
/// names.
pub fn cross_eval(
    models: &BTreeMap<String, TrainedStrategy>,
    test_splits: &BTreeMap<String, Vec<ProductRecord>>,
) -> Result<CrossEvalMatrix> {
    for name in models.keys() {
        if !test_splits.contains_key(name) {
            return Err(Error::Config(format!(
                "cross-evaluation is missing the test split for '{name}'"
            )));
        }
    }
    for name in test_splits.keys() {
        if !models.contains_key(name) {
            return Err(Error::Config(format!(
                "cross-evaluation is missing the trained model for '{name}'"
            )));
        }
    }
    let mut matrix = CrossEvalMatrix::new();
    for (trained_on, strategy) in models {
        let mut row = BTreeMap::new();
        for (evaluated_on, records) in test_splits {
            let predictions = strategy.predict(records)?;
            let report = score_predictions(&predictions, records, ScoreOptions::default())?;
            row.insert(evaluated_on.clone(), as_percent(report.f1));
        }
        matrix.insert(trained_on.clone(), row);
    }
    Ok(matrix)
}

/// One strategy's measured costs with its ratios to the End2End row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostRow {
    pub strategy: String,
    pub train_seconds: f64,
    pub infer_seconds_per_1k: f64,
    pub memory_proxy: f64,
    pub mean_pairs_per_product: f64,
    /// Ratios to the End2End row; absent when the report is raw-only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized: Option<NormalizedCost>,
}

/// Cost metrics divided by the End2End baseline (1.0 = parity).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormalizedCost {
    pub train: f64,
    pub infer: f64,
    pub memory: f64,
    pub pairs: f64,
}

/// Per-strategy costs, each metric also normalized to the End2End row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostReport {
    pub baseline: String,
    /// True when a zero End2End metric made normalization meaningless; rows
    /// then carry raw values only.
    pub raw_only: bool,
    pub rows: Vec<CostRow>,
}

/// Builds the cost table from per-strategy probes. The probes must include
/// an End2End row to normalize against; any zero End2End metric switches
/// the report to raw-only.
pub fn build_cost_report(probes: &[StrategyCost]) -> Result<CostReport> {
    let baseline_label = "end2end";
    let baseline = probes
        .iter()
        .find(|p| p.strategy == baseline_label)
        .ok_or_else(|| {
            Error::Config("a cost report requires an end2end probe to normalize against".into())
        })?
        .clone();
    let raw_only = [
        baseline.train_seconds,
        baseline.infer_seconds_per_1k,
        baseline.memory_proxy,
        baseline.mean_pairs_per_product,
    ]
    .contains(&0.0);
    let rows = probes
        .iter()
        .map(|p| CostRow {
            strategy: p.strategy.clone(),
            train_seconds: p.train_seconds,
            infer_seconds_per_1k: p.infer_seconds_per_1k,
            memory_proxy: p.memory_proxy,
            mean_pairs_per_product: p.mean_pairs_per_product,
            normalized: (!raw_only).then(|| NormalizedCost {
                train: p.train_seconds / baseline.train_seconds,
                infer: p.infer_seconds_per_1k / baseline.infer_seconds_per_1k,
                memory: p.memory_proxy / baseline.memory_proxy,
                pairs: p.mean_pairs_per_product / baseline.mean_pairs_per_product,
            }),
        })
        .collect();
    Ok(CostReport {
        baseline: baseline_label.to_string(),
        raw_only,
        rows,
    })
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

    fn record(
        id: &str,
        category: &str,
        predicted: Vec<AttrValuePair>,
        gold: Vec<AttrValuePair>,
    ) -> ScoredRecord {
        ScoredRecord {
            id: id.into(),
            category: category.into(),
            predicted,
            gold,
        }
    }

    #[test]
    fn normalize_lowercases_and_collapses_whitespace() {
        let got = normalize_pair(&pair("Band  Color", " BROWN "));
        assert_eq!(got, pair("band color", "brown"));
    }

    #[test]
    fn normalize_strips_trailing_value_punctuation() {
        assert_eq!(normalize_value("Brown."), "brown");
        assert_eq!(normalize_value("3.5 mm"), "3.5 mm");
        // Attributes keep their punctuation.
        assert_eq!(normalize_text("Size."), "size.");
    }

    #[test]
    fn normalize_value_is_idempotent_on_layered_punctuation() {
        let once = normalize_value("v. .");
        assert_eq!(once, "v");
        assert_eq!(normalize_value(&once), once);
    }

    #[test]
    fn discard_drops_unknown_attributes() {
        let gold = vec![pair("Brand", "Fossil"), pair("Band Color", "Brown")];
        let predicted = vec![
            pair("Brand", "Fossil"),
            pair("Material", "Leather"),
            pair("band color", "Black"),
        ];
        let (retained, discarded) = apply_discard_rule(&predicted, &gold);
        assert_eq!(
            retained,
            vec![pair("Brand", "Fossil"), pair("band color", "Black")]
        );
        assert_eq!(discarded, 1);
    }

    #[test]
    fn discard_keeps_wrong_values_for_known_attributes() {
        let gold = vec![pair("Brand", "Fossil")];
        let predicted = vec![pair("brand", "Casio")];
        let (retained, discarded) = apply_discard_rule(&predicted, &gold);
        assert_eq!(retained.len(), 1);
        assert_eq!(discarded, 0);
    }

    #[test]
    fn empty_gold_discards_everything() {
        let (retained, discarded) = apply_discard_rule(&[pair("A", "1")], &[]);
        assert!(retained.is_empty());
        assert_eq!(discarded, 1);
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let gold = vec![pair("Brand", "Fossil"), pair("Band Color", "Brown")];
        let records = vec![record("r", "c", gold.clone(), gold)];
        let report = score(&records, ScoreOptions::default());
        assert_eq!(report.precision, 1.0);
        assert_eq!(report.recall, 1.0);
        assert_eq!(report.f1, 1.0);
    }

    #[test]
    fn hand_derived_discard_case_scores_half() {
        let records = vec![record(
            "r",
            "c",
            vec![
                pair("brand", "fossil"),
                pair("material", "leather"),
                pair("color", "red"),
            ],
            vec![pair("brand", "fossil"), pair("color", "brown")],
        )];
        let report = score(&records, ScoreOptions::default());
        assert_eq!(report.counts.discarded, 1);
        assert_eq!(report.precision, 0.5);
        assert_eq!(report.recall, 0.5);
        assert_eq!(report.f1, 0.5);
    }

    #[test]
    fn micro_pools_counts_across_records() {
        // Record 1: 1 TP of 2 predictions, 2 gold. Record 2: 1 TP of 1, 2 gold.
        let records = vec![
            record(
                "a",
                "c",
                vec![pair("Brand", "Fossil"), pair("Color", "Red")],
                vec![pair("Brand", "Fossil"), pair("Color", "Blue")],
            ),
            record(
                "b",
                "c",
                vec![pair("Size", "L")],
                vec![pair("Size", "L"), pair("Fit", "Slim")],
            ),
        ];
        let report = score(&records, ScoreOptions::default());
        assert_eq!(report.counts.true_positives, 2);
        assert_eq!(report.counts.predicted(), 3);
        assert_eq!(report.counts.gold(), 4);
        assert!((report.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_prediction_set_has_unit_precision() {
        let records = vec![record("r", "c", vec![], vec![pair("Brand", "Fossil")])];
        let report = score(&records, ScoreOptions::default());
        assert_eq!(report.precision, 1.0);
        assert_eq!(report.recall, 0.0);
        assert_eq!(report.f1, 0.0);
    }

    #[test]
    fn empty_gold_set_has_unit_recall() {
        let records = vec![record("r", "c", vec![], vec![])];
        let report = score(&records, ScoreOptions::default());
        assert_eq!(report.recall, 1.0);
        assert_eq!(report.precision, 1.0);
        assert_eq!(report.f1, 1.0);
    }

    #[test]
    fn normalized_duplicates_count_once() {
        let records = vec![record(
            "r",
            "c",
            vec![pair("Brand", "Fossil"), pair("brand", "FOSSIL ")],
            vec![pair("Brand", "Fossil")],
        )];
        let report = score(&records, ScoreOptions::default());
        assert_eq!(report.counts.predicted(), 1);
        assert_eq!(report.precision, 1.0);
    }

    #[test]
    fn discard_can_only_raise_precision() {
        let records = vec![record(
            "r",
            "c",
            vec![pair("Brand", "Fossil"), pair("Nonsense", "x")],
            vec![pair("Brand", "Fossil")],
        )];
        let with = score(&records, ScoreOptions::default());
        let without = score(
            &records,
            ScoreOptions {
                apply_discard: false,
                ..Default::default()
            },
        );
        assert_eq!(with.precision, 1.0);
        assert_eq!(without.precision, 0.5);
        assert_eq!(with.recall, without.recall);
        assert_eq!(with.counts.discarded, 1);
    }

    #[test]
    fn macro_weights_records_equally() {
        let records = vec![
            // Perfect on one gold pair.
            record("a", "c", vec![pair("A", "1")], vec![pair("A", "1")]),
            // Zero recall on four gold pairs.
            record(
                "b",
                "c",
                vec![],
                vec![
                    pair("A", "1"),
                    pair("B", "2"),
                    pair("C", "3"),
                    pair("D", "4"),
                ],
            ),
        ];
        let macro_report = score(
            &records,
            ScoreOptions {
                averaging: Averaging::Macro,
                ..Default::default()
            },
        );
        assert!((macro_report.recall - 0.5).abs() < 1e-12);
        let micro_report = score(&records, ScoreOptions::default());
        assert!((micro_report.recall - 0.2).abs() < 1e-12);
    }

    #[test]
    fn per_category_scores_are_split_out() {
        let records = vec![
            record("a", "watch", vec![pair("A", "1")], vec![pair("A", "1")]),
            record("b", "shoe", vec![pair("B", "2")], vec![pair("B", "9")]),
        ];
        let report = score(&records, ScoreOptions::default());
        assert_eq!(report.per_category.len(), 2);
        assert_eq!(report.per_category["watch"].f1, 1.0);
        assert_eq!(report.per_category["shoe"].f1, 0.0);
        assert_eq!(report.per_category["watch"].records, 1);
    }

    #[test]
    fn doc_rounds_percentages_to_two_decimals() {
        let records = vec![record(
            "r",
            "c",
            vec![pair("A", "1"), pair("B", "2"), pair("C", "x")],
            vec![pair("A", "1"), pair("B", "2"), pair("C", "3")],
        )];
        let doc = score(&records, ScoreOptions::default()).to_doc();
        assert_eq!(doc.precision, 66.67);
        assert_eq!(doc.recall, 66.67);
        assert_eq!(doc.f1, 66.67);
    }

    #[test]
    fn fingerprint_is_stable_and_order_insensitive() {
        let a = record("a", "c", vec![pair("A", "1")], vec![pair("A", "1")]);
        let b = record("b", "c", vec![pair("B", "2")], vec![pair("B", "2")]);
        let fwd = score(&[a.clone(), b.clone()], ScoreOptions::default());
        let rev = score(&[b, a.clone()], ScoreOptions::default());
        assert_eq!(fwd.fingerprint, rev.fingerprint);
        let other = score(&[a], ScoreOptions::default());
        assert_ne!(fwd.fingerprint, other.fingerprint);
    }

    #[test]
    fn f1_handles_zero_denominator() {
        assert_eq!(f1_score(0.0, 0.0), 0.0);
        assert!((f1_score(1.0, 0.5) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn percent_f1_reproduces_from_fractions() {
        // P = 95.21, R = 75.62 must yield F1 = 84.29 after rounding.
        let f1 = f1_score(0.9521, 0.7562);
        assert_eq!(as_percent(f1), 84.29);
    }

    fn product(id: &str, category: &str, text: &str, gold: Vec<AttrValuePair>) -> ProductRecord {
        ProductRecord {
            id: id.into(),
            category: category.into(),
            text: text.into(),
            pairs: gold,
        }
    }

    fn prediction(id: &str, pairs: Vec<AttrValuePair>) -> PredictionSet {
        let line = crate::strategies::PredictionLine {
            id: id.into(),
            strategy: "end2end".into(),
            pairs,
            diagnostics: Default::default(),
        };
        line.into_set()
    }

    #[test]
    fn score_predictions_joins_by_id() {
        let golds = vec![
            product("a", "c", "t", vec![pair("brand", "fossil")]),
            product("b", "c", "t", vec![pair("color", "brown")]),
        ];
        let predictions = vec![
            prediction("b", vec![pair("color", "brown")]),
            prediction("a", vec![pair("brand", "fossil")]),
        ];
        let report = score_predictions(&predictions, &golds, ScoreOptions::default()).unwrap();
        assert_eq!(report.f1, 1.0);
        assert_eq!(report.records, 2);
    }

    #[test]
    fn score_predictions_treats_missing_prediction_as_abstention() {
        let golds = vec![
            product("a", "c", "t", vec![pair("brand", "fossil")]),
            product("b", "c", "t", vec![pair("color", "brown")]),
        ];
        let predictions = vec![prediction("a", vec![pair("brand", "fossil")])];
        let report = score_predictions(&predictions, &golds, ScoreOptions::default()).unwrap();
        assert_eq!(report.counts.false_negatives, 1);
        assert_eq!(report.precision, 1.0);
        assert_eq!(report.recall, 0.5);
    }

    #[test]
    fn score_predictions_rejects_unknown_and_duplicate_ids() {
        let golds = vec![product("a", "c", "t", vec![pair("brand", "fossil")])];
        let unknown = vec![prediction("ghost", vec![])];
        let err = score_predictions(&unknown, &golds, ScoreOptions::default()).unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
        let duplicated = vec![prediction("a", vec![]), prediction("a", vec![])];
        assert!(score_predictions(&duplicated, &golds, ScoreOptions::default()).is_err());
    }

    #[test]
    fn cross_eval_mock_matrix_is_diagonal() {
        use crate::strategies::{train_strategy, ConfigOverrides, StrategyKind};
        // Three disjoint toy corpora: a mock trained on one generates
        // nothing for the others.
        let corpora: BTreeMap<String, Vec<ProductRecord>> = [
            ("alpha", "alpha product text", "red"),
            ("beta", "beta product text", "blue"),
            ("gamma", "gamma product text", "green"),
        ]
        .into_iter()
        .map(|(name, text, color)| {
            (
                name.to_string(),
                vec![product(
                    &format!("{name}-1"),
                    name,
                    &format!("{text} {color}"),
                    vec![pair("color", color)],
                )],
            )
        })
        .collect();
        let models: BTreeMap<String, TrainedStrategy> = corpora
            .iter()
            .map(|(name, records)| {
                let model = train_strategy(
                    &StrategyKind::End2End,
                    records,
                    &[],
                    "mock",
                    0,
                    &ConfigOverrides::default(),
                )
                .unwrap();
                (name.clone(), model)
            })
            .collect();
        let matrix = cross_eval(&models, &corpora).unwrap();
        for row in corpora.keys() {
            for col in corpora.keys() {
                let cell = matrix[row][col];
                if row == col {
                    assert_eq!(cell, 100.0);
                } else {
                    assert_eq!(cell, 0.0);
                }
            }
        }
    }

    #[test]
    fn cross_eval_requires_matching_names() {
        let models = BTreeMap::new();
        let mut splits = BTreeMap::new();
        splits.insert("only-split".to_string(), Vec::new());
        let err = cross_eval(&models, &splits).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    fn probe(strategy: &str, train: f64, infer: f64, memory: f64, pairs: f64) -> StrategyCost {
        StrategyCost {
            strategy: strategy.into(),
            train_seconds: train,
            infer_seconds_per_1k: infer,
            memory_proxy: memory,
            mean_pairs_per_product: pairs,
        }
    }

    #[test]
    fn cost_report_normalizes_to_the_end2end_row() {
        let probes = vec![
            probe("pipeline", 39.0, 27.0, 2.0, 3.0),
            probe("end2end", 10.0, 10.0, 1.0, 3.0),
        ];
        let report = build_cost_report(&probes).unwrap();
        assert!(!report.raw_only);
        let pipeline = &report.rows[0].normalized.unwrap();
        assert_eq!(pipeline.train, 3.9);
        assert_eq!(pipeline.memory, 2.0);
        let e2e = &report.rows[1].normalized.unwrap();
        assert_eq!(e2e.train, 1.0);
        assert_eq!(e2e.infer, 1.0);
        assert_eq!(e2e.memory, 1.0);
        assert_eq!(e2e.pairs, 1.0);
    }

    #[test]
    fn cost_report_requires_a_baseline_and_flags_zero_metrics() {
        let missing = vec![probe("pipeline", 1.0, 1.0, 2.0, 3.0)];
        assert!(build_cost_report(&missing).is_err());
        let zeroed = vec![probe("end2end", 0.0, 1.0, 1.0, 1.0)];
        let report = build_cost_report(&zeroed).unwrap();
        assert!(report.raw_only);
        assert!(report.rows[0].normalized.is_none());
    }
}
