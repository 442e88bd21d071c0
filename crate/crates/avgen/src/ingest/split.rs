//! Seeded stratified train/validation/test splitting.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::digest::seed_fragment;
use crate::error::{Error, Result};
use crate::record::ProductRecord;

/// Categories below this size cannot fill three buckets; all their records
/// go to train and the category is flagged in the split report.
const MIN_STRATUM: usize = 3;

/// A three-way partition of a record set.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<ProductRecord>,
    pub val: Vec<ProductRecord>,
    pub test: Vec<ProductRecord>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

/// Per-category record counts after splitting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Summary of how a split distributed records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitReport {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub categories: BTreeMap<String, CategoryCounts>,
    /// Categories too small to stratify; all their records went to train.
    pub small_categories: Vec<String>,
}

/// Allocates `n` slots to three buckets by largest-remainder rounding of
/// `n * ratio`. Ties break toward the earlier bucket.
fn largest_remainder(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let mut base = [0usize; 3];
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(3);
    let mut assigned = 0usize;
    for (i, ratio) in ratios.iter().enumerate() {
        let quota = n as f64 * ratio;
        base[i] = quota.floor() as usize;
        assigned += base[i];
        remainders.push((quota - quota.floor(), i));
    }
    remainders.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("finite remainders")
            .then(a.1.cmp(&b.1))
    });
    let mut left = n.saturating_sub(assigned);
    for (_, i) in remainders {
        if left == 0 {
            break;
        }
        base[i] += 1;
        left -= 1;
    }
    base
}

/// Splits records into train/val/test, shuffling within each category with
/// a generator derived from the seed and the category name, then cutting by
/// largest-remainder quotas. Deterministic for fixed inputs and seed.
pub fn stratified_split(
    records: Vec<ProductRecord>,
    ratios: [f64; 3],
    seed: u64,
) -> Result<(DatasetSplit, SplitReport)> {
    if ratios.iter().any(|r| *r < 0.0 || !r.is_finite()) {
        return Err(Error::Config("split ratios must be non-negative".into()));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must sum to 1, got {sum}"
        )));
    }
    let mut by_category: BTreeMap<String, Vec<ProductRecord>> = BTreeMap::new();
    for record in records {
        if record.category.trim().is_empty() {
            return Err(Error::Input(format!(
                "record {}: category is empty, cannot stratify",
                record.id
            )));
        }
        by_category
            .entry(record.category.clone())
            .or_default()
            .push(record);
    }
    let mut split = DatasetSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        seed,
        ratios,
    };
    let mut report = SplitReport {
        seed,
        ratios,
        categories: BTreeMap::new(),
        small_categories: Vec::new(),
    };
    for (category, mut members) in by_category {
        // Input order must not influence the shuffle outcome.
        members.sort_by(|a, b| a.id.cmp(&b.id));
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ seed_fragment(&category));
        members.shuffle(&mut rng);
        let n = members.len();
        if n < MIN_STRATUM {
            report.small_categories.push(category.clone());
            report.categories.insert(
                category,
                CategoryCounts {
                    train: n,
                    ..Default::default()
                },
            );
            split.train.extend(members);
            continue;
        }
        let [n_train, n_val, n_test] = largest_remainder(n, ratios);
        report.categories.insert(
            category,
            CategoryCounts {
                train: n_train,
                val: n_val,
                test: n_test,
            },
        );
        let mut members = members.into_iter();
        split.train.extend(members.by_ref().take(n_train));
        split.val.extend(members.by_ref().take(n_val));
        split.test.extend(members.by_ref().take(n_test));
    }
    Ok((split, report))
}
