use std::collections::HashSet;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    Symmetric,
    AsymmetricPairs,
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "clean" => Ok(NoiseKind::None),
            "sym" | "symmetric" => Ok(NoiseKind::Symmetric),
            "asym" | "asymmetric" | "pairs" => Ok(NoiseKind::AsymmetricPairs),
            other => Err(Error::InvalidInput(format!("unknown noise kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    pub pairs: Vec<(usize, usize)>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec {
            kind: NoiseKind::None,
            rate: 0.0,
            pairs: Vec::new(),
            seed: 0,
        }
    }

    pub fn symmetric(rate: f64, seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Symmetric,
            rate,
            pairs: Vec::new(),
            seed,
        }
    }

    pub fn pairs(rate: f64, pairs: Vec<(usize, usize)>, seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::AsymmetricPairs,
            rate,
            pairs,
            seed,
        }
    }

    /// True when the spec can corrupt at least one label.
    pub fn is_active(&self) -> bool {
        self.kind != NoiseKind::None && self.rate > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        check_rate(self.rate)?;
        if self.kind == NoiseKind::AsymmetricPairs {
            check_pairs(&self.pairs)?;
        }
        Ok(())
    }
}

fn check_rate(r: f64) -> Result<()> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "noise rate {r} outside [0, 1]"
        )))
    }
}

fn check_pairs(pairs: &[(usize, usize)]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput(
            "pair noise needs at least one pair".into(),
        ));
    }
    let mut seen = HashSet::new();
    for &(a, b) in pairs {
        if a == b {
            return Err(Error::InvalidInput(format!(
                "pair ({a}, {b}) flips a class to itself"
            )));
        }
        if !seen.insert(a) || !seen.insert(b) {
            return Err(Error::InvalidInput(format!(
                "pair ({a}, {b}) overlaps another pair"
            )));
        }
    }
    Ok(())
}

/// Each label is independently replaced, with probability `rate`, by a
/// class drawn uniformly from the other `classes - 1` classes.
pub fn inject_symmetric_noise(
    labels: &[usize],
    rate: f64,
    classes: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<bool>)> {
    check_rate(rate)?;
    if classes < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Index {
            index: bad,
            len: classes,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observed: Vec<usize> = labels
        .iter()
        .map(|&y| {
            if rng.gen::<f64>() < rate {
                let k = rng.gen_range(0..classes - 1);
                if k >= y {
                    k + 1
                } else {
                    k
                }
            } else {
                y
            }
        })
        .collect();
    let mask = observed.iter().zip(labels).map(|(o, t)| o != t).collect();
    Ok((observed, mask))
}

/// Labels in a pair flip to their partner with probability `spec.rate`;
/// labels outside every pair are never touched.
pub fn inject_asymmetric_noise(
    labels: &[usize],
    spec: &NoiseSpec,
) -> Result<(Vec<usize>, Vec<bool>)> {
    check_rate(spec.rate)?;
    check_pairs(&spec.pairs)?;
    let partner = |y: usize| {
        spec.pairs.iter().find_map(|&(a, b)| {
            if y == a {
                Some(b)
            } else if y == b {
                Some(a)
            } else {
                None
            }
        })
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let observed: Vec<usize> = labels
        .iter()
        .map(|&y| match partner(y) {
            Some(other) if rng.gen::<f64>() < spec.rate => other,
            _ => y,
        })
        .collect();
    let mask = observed.iter().zip(labels).map(|(o, t)| o != t).collect();
    Ok((observed, mask))
}

/// Dispatches on `spec.kind`.
pub fn inject_noise(
    labels: &[usize],
    classes: usize,
    spec: &NoiseSpec,
) -> Result<(Vec<usize>, Vec<bool>)> {
    match spec.kind {
        NoiseKind::None => Ok((labels.to_vec(), vec![false; labels.len()])),
        NoiseKind::Symmetric => inject_symmetric_noise(labels, spec.rate, classes, spec.seed),
        NoiseKind::AsymmetricPairs => inject_asymmetric_noise(labels, spec),
    }
}

/// Picks two random classes from every group (of at least two) to form a flip pair.
pub fn pairs_from_groups(groups: &[Vec<usize>], seed: u64) -> Result<Vec<(usize, usize)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = groups
        .iter()
        .map(|g| {
            if g.len() < 2 {
                return Err(Error::InvalidInput(
                    "a group needs at least two classes".into(),
                ));
            }
            let picked: Vec<usize> = g.choose_multiple(&mut rng, 2).copied().collect();
            Ok((picked[0], picked[1]))
        })
        .collect::<Result<Vec<_>>>()?;
    check_pairs(&pairs)?;
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_identity() {
        let labels: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let (obs, mask) = inject_symmetric_noise(&labels, 0.0, 10, 5).unwrap();
        assert_eq!(obs, labels);
        assert!(mask.iter().all(|m| !m));
        let spec = NoiseSpec::pairs(0.0, vec![(0, 1)], 5);
        assert_eq!(inject_asymmetric_noise(&labels, &spec).unwrap().0, labels);
    }

    #[test]
    fn forced_binary_flip() {
        let labels = vec![0, 1, 1, 0, 1];
        let (obs, mask) = inject_symmetric_noise(&labels, 1.0, 2, 9).unwrap();
        assert_eq!(obs, vec![1, 0, 0, 1, 0]);
        assert!(mask.iter().all(|&m| m));
    }

    #[test]
    fn full_pair_flip() {
        let labels = vec![0, 1, 2, 3, 0, 1];
        let spec = NoiseSpec::pairs(1.0, vec![(0, 1)], 1);
        let (obs, mask) = inject_asymmetric_noise(&labels, &spec).unwrap();
        assert_eq!(obs, vec![1, 0, 2, 3, 1, 0]);
        assert_eq!(mask, vec![true, true, false, false, true, true]);
    }

    #[test]
    fn invalid_specs() {
        assert!(inject_symmetric_noise(&[0], 1.5, 2, 0).is_err());
        assert!(inject_symmetric_noise(&[0], -0.1, 2, 0).is_err());
        assert!(inject_symmetric_noise(&[3], 0.1, 2, 0).is_err());
        let overlapping = NoiseSpec::pairs(0.3, vec![(0, 1), (1, 2)], 0);
        assert!(inject_asymmetric_noise(&[0], &overlapping).is_err());
        assert!(overlapping.validate().is_err());
        let selfish = NoiseSpec::pairs(0.3, vec![(2, 2)], 0);
        assert!(inject_asymmetric_noise(&[0], &selfish).is_err());
    }

    #[test]
    fn seeded_determinism() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 7).collect();
        let a = inject_symmetric_noise(&labels, 0.4, 7, 42).unwrap();
        let b = inject_symmetric_noise(&labels, 0.4, 7, 42).unwrap();
        let c = inject_symmetric_noise(&labels, 0.4, 7, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn group_pairs_are_within_groups() {
        let groups: Vec<Vec<usize>> = (0..4).map(|g| (g * 5..g * 5 + 5).collect()).collect();
        let pairs = pairs_from_groups(&groups, 123).unwrap();
        assert_eq!(pairs.len(), 4);
        for (g, &(a, b)) in pairs.iter().enumerate() {
            assert!(groups[g].contains(&a) && groups[g].contains(&b) && a != b);
        }
        assert_eq!(pairs, pairs_from_groups(&groups, 123).unwrap());
    }
}
