use rand::seq::{IndexedRandom, SliceRandom};

use super::TrainError;
use crate::seed;

fn by_class(labels: &[u8]) -> Vec<Vec<usize>> {
    let classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let mut out = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        out[l as usize].push(i);
    }
    out
}

/// Splits sample indices per class so each class contributes
/// `round(n_c · train_fraction)` samples to the training side.
///
/// Returns `(train, validation)`, each sorted ascending. Both sides receive
/// at least one sample of every class.
pub fn stratified_split(
    labels: &[u8],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), TrainError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(TrainError::InvalidConfig(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let groups = by_class(labels);
    let present = groups.iter().filter(|g| !g.is_empty()).count();
    if present < 2 {
        return Err(TrainError::SplitDegenerate { classes: present });
    }
    let mut rng = seed::rng(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (class, mut g) in groups.into_iter().enumerate() {
        if g.is_empty() {
            continue;
        }
        if g.len() < 2 {
            return Err(TrainError::ClassWithTooFewSamples {
                class: class as u8,
                count: g.len(),
            });
        }
        g.shuffle(&mut rng);
        let n_train = ((g.len() as f64 * train_fraction).round() as usize).clamp(1, g.len() - 1);
        val.extend_from_slice(&g[n_train..]);
        g.truncate(n_train);
        train.extend(g);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Repeats minority-class members (drawn with replacement) until every
/// class present in `indices` matches the largest one, then shuffles.
pub fn oversample(indices: &[usize], labels: &[u8], seed: u64) -> Vec<usize> {
    let sub: Vec<u8> = indices.iter().map(|&i| labels[i]).collect();
    let groups = by_class(&sub);
    let target = groups.iter().map(Vec::len).max().unwrap_or(0);
    let mut rng = seed::rng(seed);
    let mut out = indices.to_vec();
    for g in groups.iter().filter(|g| !g.is_empty()) {
        for _ in g.len()..target {
            out.push(indices[*g.choose(&mut rng).expect("non-empty")]);
        }
    }
    out.shuffle(&mut rng);
    out
}
