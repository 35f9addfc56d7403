use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DataError;

/// A look-back slice and the target slice that immediately follows it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesWindow<'a> {
    /// Row of the table where `x` starts.
    pub origin: usize,
    /// Row-major `[I, N]`.
    pub x: &'a [f64],
    /// Row-major `[O, N]`, rows `origin + I .. origin + I + O`.
    pub y: &'a [f64],
}

/// Enumerates every window inside `range` with origins `range.start`,
/// `range.start + stride`, ... in order.
pub fn windows(
    values: &[f64],
    channels: usize,
    range: Range<usize>,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<SeriesWindow<'_>>, DataError> {
    if stride == 0 {
        return Err(DataError::Shape("window stride must be >= 1".into()));
    }
    if range.end * channels > values.len() {
        return Err(DataError::Shape(format!(
            "range {range:?} exceeds table of {} rows",
            values.len() / channels.max(1)
        )));
    }
    let span = lookback + horizon;
    if range.len() < span {
        return Err(DataError::TooShort(format!(
            "range of {} steps is shorter than lookback {lookback} + horizon {horizon}",
            range.len()
        )));
    }
    Ok((range.start..=range.end - span)
        .step_by(stride)
        .map(|origin| {
            let mid = origin + lookback;
            SeriesWindow {
                origin,
                x: &values[origin * channels..mid * channels],
                y: &values[mid * channels..(mid + horizon) * channels],
            }
        })
        .collect())
}

/// A seeded permutation of `0..count`.
pub fn shuffled_order(count: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let v = vec![0.0; 200];
        assert_eq!(windows(&v, 1, 0..200, 96, 96, 1).unwrap().len(), 9);
        assert_eq!(windows(&v, 1, 0..200, 96, 96, 10).unwrap().len(), 1);
        assert!(windows(&v, 1, 0..191, 96, 96, 1).is_err());
        assert!(windows(&v, 1, 0..200, 96, 96, 0).is_err());
    }

    #[test]
    fn target_follows_history() {
        let v: Vec<f64> = (0..60).map(f64::from).collect();
        for w in windows(&v, 2, 3..30, 4, 3, 2).unwrap() {
            assert_eq!(w.x[0], (w.origin * 2) as f64);
            assert_eq!(w.y[0], ((w.origin + 4) * 2) as f64);
            assert_eq!(w.y.len(), 6);
            assert!(w.origin + 7 <= 30);
        }
    }

    #[test]
    fn shuffle_is_seeded_permutation() {
        let a = shuffled_order(50, 1);
        assert_eq!(a, shuffled_order(50, 1));
        assert_ne!(a, shuffled_order(50, 2));
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    }
}
