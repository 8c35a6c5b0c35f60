use crate::error::{Error, Result};
use crate::rng::{streams, RngStream};

/// Train/dev/test sizes of the public SQuAD 2.0 re-split this project targets.
pub const REFERENCE_SPLIT_SIZES: (usize, usize, usize) = (129_941, 6_078, 5_915);

/// Deterministic three-way partition. Each part keeps the input order.
pub fn split_corpus<T: Clone>(items: &[T], fractions: (f64, f64, f64), seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::invalid("split_corpus", "empty input"));
    }
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(
            "split_corpus",
            format!("fractions ({a}, {b}, {c}) must be in [0, 1] and sum to 1"),
        ));
    }
    let n = items.len();
    let n_train = ((a * n as f64).round() as usize).min(n);
    let n_dev = ((b * n as f64).round() as usize).min(n - n_train);

    let mut order: Vec<usize> = (0..n).collect();
    RngStream::new(seed, streams::SPLIT).shuffle(&mut order);
    let mut part = vec![2u8; n];
    for &i in &order[..n_train] {
        part[i] = 0;
    }
    for &i in &order[n_train..n_train + n_dev] {
        part[i] = 1;
    }
    let (mut train, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (item, p) in items.iter().zip(part) {
        match p {
            0 => train.push(item.clone()),
            1 => dev.push(item.clone()),
            _ => test.push(item.clone()),
        }
    }
    Ok((train, dev, test))
}
