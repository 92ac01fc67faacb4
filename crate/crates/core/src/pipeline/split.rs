//! Seed expansion and stratified partitions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One step of the SplitMix64 generator.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of repetition `r`: the `r`-th SplitMix64 output started at `master`,
/// i.e. `mix(master + (r + 1) * 0x9E3779B97F4A7C15)`.
pub fn repetition_seed(master: u64, r: usize) -> u64 {
    splitmix64(master.wrapping_add((r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// A train/test partition; both index lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn class_members(labels: &[usize]) -> Vec<Vec<usize>> {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    members
}

/// Per-class shuffled split. Each class puts `round(fraction * n_c)` samples in
/// training, clamped so that a class with two or more samples keeps at least one
/// on each side.
pub fn stratified_split(labels: &[usize], fraction: f64, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut members in class_members(labels) {
        let n = members.len();
        if n == 0 {
            continue;
        }
        members.shuffle(&mut rng);
        let mut take = (fraction * n as f64).round() as usize;
        if n >= 2 {
            take = take.clamp(1, n - 1);
        } else {
            take = 1;
        }
        train.extend_from_slice(&members[..take]);
        test.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Split { train, test }
}

/// Stratified `folds`-way partition of `indices` (positions into `labels`).
/// Returns one split per fold, holding out that fold.
pub fn stratified_folds(
    labels: &[usize],
    indices: &[usize],
    folds: usize,
    seed: u64,
) -> Vec<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sub: Vec<usize> = indices.iter().map(|&i| labels[i]).collect();
    let mut assignment = vec![0usize; indices.len()];
    let mut offset = 0;
    for mut members in class_members(&sub) {
        members.shuffle(&mut rng);
        // Continue the round-robin across classes so fold sizes stay balanced.
        for (pos, &m) in members.iter().enumerate() {
            assignment[m] = (offset + pos) % folds;
        }
        offset += members.len();
    }
    (0..folds)
        .map(|f| {
            let (test, train): (Vec<_>, Vec<_>) =
                indices.iter().zip(&assignment).partition(|(_, &a)| a == f);
            Split {
                train: train.into_iter().map(|(&i, _)| i).collect(),
                test: test.into_iter().map(|(&i, _)| i).collect(),
            }
        })
        .collect()
}
