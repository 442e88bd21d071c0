//! Corpus-level statistics over canonical records.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::eval::{normalize_text, normalize_value};
use crate::record::ProductRecord;

/// Summary counts for a record stream. Uniqueness is measured on the same
/// normalized forms the evaluation protocol matches on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_products: usize,
    pub n_pairs: usize,
    pub n_categories: usize,
    pub n_unique_attributes: usize,
    pub n_unique_values: usize,
}

/// Counts products, pairs, categories, and normalized-unique attributes and
/// values over a record stream.
pub fn compute_stats(records: &[ProductRecord]) -> DatasetStats {
    let mut categories = BTreeSet::new();
    let mut attributes = BTreeSet::new();
    let mut values = BTreeSet::new();
    let mut n_pairs = 0usize;
    for record in records {
        categories.insert(record.category.as_str());
        for pair in &record.pairs {
            n_pairs += 1;
            attributes.insert(normalize_text(&pair.attribute));
            values.insert(normalize_value(&pair.value));
        }
    }
    DatasetStats {
        n_products: records.len(),
        n_pairs,
        n_categories: categories.len(),
        n_unique_attributes: attributes.len(),
        n_unique_values: values.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::AttrValuePair;

    fn pair(a: &str, v: &str) -> AttrValuePair {
        AttrValuePair {
            attribute: a.into(),
            value: v.into(),
        }
    }

    #[test]
    fn empty_stream_is_all_zero() {
        assert_eq!(compute_stats(&[]), DatasetStats::default());
    }

    #[test]
    fn single_record_counts_its_pairs() {
        let record = ProductRecord {
            id: "fig1".into(),
            category: "Watches".into(),
            text: "Fossil Men's Watch Analog Display Slim Case Design with Brown Leather Band"
                .into(),
            pairs: vec![
                pair("Brand", "Fossil"),
                pair("Band Color", "Brown"),
                pair("Band Material", "Leather"),
            ],
        };
        let stats = compute_stats(&[record]);
        assert_eq!(stats.n_products, 1);
        assert_eq!(stats.n_pairs, 3);
        assert_eq!(stats.n_categories, 1);
        assert_eq!(stats.n_unique_attributes, 3);
        assert_eq!(stats.n_unique_values, 3);
    }

    #[test]
    fn uniqueness_uses_normalized_forms() {
        let records = vec![
            ProductRecord {
                id: "a".into(),
                category: "c".into(),
                text: "t".into(),
                pairs: vec![pair("Brand", "Fossil")],
            },
            ProductRecord {
                id: "b".into(),
                category: "c".into(),
                text: "t".into(),
                pairs: vec![pair("BRAND", "fossil."), pair("Color", "Brown")],
            },
        ];
        let stats = compute_stats(&records);
        assert_eq!(stats.n_pairs, 3);
        assert_eq!(stats.n_unique_attributes, 2);
        assert_eq!(stats.n_unique_values, 2);
    }

    #[test]
    fn unique_counts_never_exceed_pair_count() {
        let records = vec![ProductRecord {
            id: "a".into(),
            category: "c".into(),
            text: "t".into(),
            pairs: vec![pair("A", "1"), pair("B", "1")],
        }];
        let stats = compute_stats(&records);
        assert!(stats.n_unique_attributes <= stats.n_pairs);
        assert!(stats.n_unique_values <= stats.n_pairs);
    }
}
