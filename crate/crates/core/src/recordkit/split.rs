use crate::error::{HaloError, Result};
use crate::rng;

/// Partition sizes `(train, val, test)` for `n` records: test takes
/// `floor(n / 5)`, validation `max(1, floor(pool / 10))` of the remaining
/// pool, and training the rest.
pub fn split_sizes(n: usize) -> Result<(usize, usize, usize)> {
    if n < 10 {
        return Err(HaloError::InsufficientData(format!(
            "need at least 10 records to split, got {n}"
        )));
    }
    let test = n / 5;
    let pool = n - test;
    let val = (pool / 10).max(1);
    Ok((pool - val, val, test))
}

/// Seeded 80/20 train-pool/test split, then 90/10 train/validation.
pub fn split_dataset<T: Clone>(items: &[T], seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let (n_train, n_val, _) = split_sizes(items.len())?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    rng::shuffle(&mut order, &mut rng::seeded(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    let train = pick(&order[..n_train]);
    let val = pick(&order[n_train..n_train + n_val]);
    let test = pick(&order[n_train + n_val..]);
    Ok((train, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn documented_sizes() {
        assert_eq!(split_sizes(1000).unwrap(), (720, 80, 200));
        assert_eq!(split_sizes(10).unwrap(), (7, 1, 2));
        assert_eq!(split_sizes(5000).unwrap(), (3600, 400, 1000));
        assert!(split_sizes(9).is_err());
    }

    #[test]
    fn disjoint_exhaustive_deterministic() {
        let items: Vec<u32> = (0..1000).collect();
        let (a, b, c) = split_dataset(&items, 5).unwrap();
        let (a2, b2, c2) = split_dataset(&items, 5).unwrap();
        assert_eq!((&a, &b, &c), (&a2, &b2, &c2));
        let all: HashSet<u32> = a.iter().chain(&b).chain(&c).copied().collect();
        assert_eq!(all.len(), 1000);
        assert_eq!(a.len() + b.len() + c.len(), 1000);
        let (a3, _, _) = split_dataset(&items, 6).unwrap();
        assert_ne!(a, a3);
    }
}
