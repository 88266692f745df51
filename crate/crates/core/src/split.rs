//! Image-wise train/test partitions and labelled/unlabelled subsets.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Labelled fractions evaluated for the semi-supervised model.
pub const LABEL_FRACTIONS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub label_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.1,
            label_fraction: 1.0,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if !(self.label_fraction > 0.0 && self.label_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "label_fraction must lie in (0, 1], got {}",
                self.label_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Splits<T> {
    pub train_labelled: Vec<T>,
    pub train_unlabelled: Vec<T>,
    pub test: Vec<T>,
}

impl<T: Clone> Splits<T> {
    /// Every training id, labelled first.
    pub fn train(&self) -> Vec<T> {
        self.train_labelled
            .iter()
            .chain(&self.train_unlabelled)
            .cloned()
            .collect()
    }
}

/// Number of items taken by `floor(fraction * n)`.
pub fn floor_count(n: usize, fraction: f64) -> usize {
    // the epsilon keeps exact products such as 0.1 * 890 from rounding down
    ((n as f64) * fraction + 1e-9) as usize
}

/// Deterministically shuffles `ids` (after sorting, so input order does not
/// matter) and moves `floor(fraction * n)` of them into the held-out set.
pub fn holdout<T: Ord + Clone>(ids: &[T], fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let mut shuffled: Vec<T> = ids.to_vec();
    shuffled.sort();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held = floor_count(shuffled.len(), fraction);
    let rest = shuffled.split_off(held);
    (rest, shuffled)
}

/// Splits scene ids image-wise into labelled training, unlabelled training
/// and test sets.
///
/// The test set gets `floor(test_fraction * n)` ids; the labelled subset gets
/// `floor(label_fraction * train)` but at least one id when the training
/// portion is non-empty.
pub fn make_splits<T: Ord + Clone>(ids: &[T], spec: &SplitSpec) -> Result<Splits<T>> {
    spec.validate()?;
    if ids.is_empty() {
        return Err(Error::InvalidInput("no scene ids to split"));
    }
    let (mut train, test) = holdout(ids, spec.test_fraction, spec.seed);
    let labelled = floor_count(train.len(), spec.label_fraction).max(1).min(train.len());
    let unlabelled = train.split_off(labelled);
    Ok(Splits {
        train_labelled: train,
        train_unlabelled: unlabelled,
        test,
    })
}

/// Stable 64-bit seed for per-scene work, mixing a global seed with an id
/// (FNV-1a followed by a SplitMix64 finalizer).
pub fn derive_seed(global: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ global;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}
