use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// Number of train items for a cell: `fraction * size` rounded to nearest,
/// ties going to the test side.
pub(crate) fn train_count(size: usize, fraction: f64) -> usize {
    let x = fraction * size as f64;
    let lo = x.floor();
    if x - lo > 0.5 {
        lo as usize + 1
    } else {
        lo as usize
    }
}

fn check_fraction(train_fraction: f64) -> Result<()> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    Ok(())
}

/// Splits every (class, snr) cell independently into train and test parts.
///
/// Both parts keep the input's frame order.
pub fn split_stratified(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    check_fraction(train_fraction)?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut cells: BTreeMap<(usize, i8), Vec<usize>> = BTreeMap::new();
    for (idx, f) in dataset.frames().iter().enumerate() {
        cells.entry((f.label, f.snr_db)).or_default().push(idx);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; dataset.len()];
    for members in cells.values_mut() {
        members.shuffle(&mut rng);
        let k = train_count(members.len(), train_fraction);
        for &idx in &members[..k] {
            in_train[idx] = true;
        }
    }
    Ok(partition(dataset, &in_train))
}

/// Frame-level random split ignoring class and SNR.
pub fn split_random(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    check_fraction(train_fraction)?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = train_count(dataset.len(), train_fraction);
    let mut in_train = vec![false; dataset.len()];
    for &idx in &order[..k] {
        in_train[idx] = true;
    }
    Ok(partition(dataset, &in_train))
}

fn partition(dataset: &Dataset, in_train: &[bool]) -> (Dataset, Dataset) {
    let (train, test): (Vec<_>, Vec<_>) =
        dataset.frames().iter().zip(in_train).partition(|(_, &t)| t);
    let collect = |v: Vec<(&super::LabeledFrame, &bool)>| {
        dataset.with_frames(v.into_iter().map(|(f, _)| f.clone()).collect())
    };
    (collect(train), collect(test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{IqFrame, LabeledFrame};

    fn grid(classes: usize, snrs: &[i8], per_cell: usize) -> Dataset {
        let mut frames = Vec::new();
        let mut k = 0.0;
        for label in 0..classes {
            for &snr_db in snrs {
                for _ in 0..per_cell {
                    k += 1.0;
                    frames.push(LabeledFrame {
                        frame: IqFrame::from_vecs(vec![k, 0.0], vec![0.0, k]).unwrap(),
                        label,
                        snr_db,
                    });
                }
            }
        }
        let names = (0..classes).map(|c| format!("c{c}")).collect();
        Dataset::new(names, 2, frames).unwrap()
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(train_count(2, 0.5), 1);
        assert_eq!(train_count(1000, 0.8), 800);
        assert_eq!(train_count(5, 0.5), 2);
        assert_eq!(train_count(7, 0.5), 3);
        assert_eq!(train_count(3, 0.7), 2);
        assert_eq!(train_count(3, 0.9), 3);
    }

    #[test]
    fn two_frame_cell_splits_evenly() {
        let d = grid(1, &[0], 2);
        let (train, test) = split_stratified(&d, 0.5, 3).unwrap();
        assert_eq!((train.len(), test.len()), (1, 1));
    }

    #[test]
    fn stratified_is_deterministic_and_disjoint() {
        let d = grid(3, &[-2, 0, 2], 7);
        let a = split_stratified(&d, 0.6, 9).unwrap();
        let b = split_stratified(&d, 0.6, 9).unwrap();
        assert_eq!(a, b);

        let key = |f: &LabeledFrame| f.frame.i().values()[0] as i64;
        let mut all: Vec<i64> = a.0.frames().iter().chain(a.1.frames()).map(key).collect();
        all.sort_unstable();
        let expected: Vec<i64> = d.frames().iter().map(key).collect();
        assert_eq!(all, expected);

        for label in 0..3 {
            for snr in [-2, 0, 2] {
                let n =
                    a.0.frames()
                        .iter()
                        .filter(|f| f.label == label && f.snr_db == snr)
                        .count();
                assert_eq!(n, 4);
            }
        }
    }

    #[test]
    fn errors() {
        let d = grid(1, &[0], 4);
        assert!(split_stratified(&d, 0.0, 1).is_err());
        assert!(split_stratified(&d, 1.0, 1).is_err());
        let empty = d.with_frames(Vec::new());
        assert!(matches!(
            split_stratified(&empty, 0.5, 1),
            Err(Error::EmptyDataset)
        ));
        assert!(matches!(
            split_random(&empty, 0.5, 1),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn random_split_sizes() {
        let d = grid(2, &[0, 4], 25);
        let (train, test) = split_random(&d, 0.5, 2016).unwrap();
        assert_eq!((train.len(), test.len()), (50, 50));
    }
}
