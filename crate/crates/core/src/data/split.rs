use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{class_counts, Dataset, SplitRole};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

const SPLIT_STREAM: u64 = 0x5911_7000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Within,
    Cross,
    Mix,
}

/// Split fractions. For the cross protocol the test set is the held-out
/// dataset, so `test_frac` must be 0 and `train_frac + val_frac` covers the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub protocol: Protocol,
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub labeled_frac: f64,
    pub seed: u64,
    #[serde(default)]
    pub held_out: Option<String>,
}

impl SplitSpec {
    pub fn within(seed: u64) -> Self {
        SplitSpec {
            protocol: Protocol::Within,
            train_frac: 0.8,
            val_frac: 0.1,
            test_frac: 0.1,
            labeled_frac: 0.05,
            seed,
            held_out: None,
        }
    }

    pub fn mix(seed: u64) -> Self {
        SplitSpec {
            protocol: Protocol::Mix,
            labeled_frac: 0.01,
            ..Self::within(seed)
        }
    }

    pub fn cross(held_out: impl Into<String>, seed: u64) -> Self {
        SplitSpec {
            protocol: Protocol::Cross,
            train_frac: 0.9,
            val_frac: 0.1,
            test_frac: 0.0,
            labeled_frac: 0.01,
            seed,
            held_out: Some(held_out.into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_frac, self.val_frac, self.test_frac];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f))
            || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split fractions {fr:?} must lie in [0, 1] and sum to 1"
            )));
        }
        if self.train_frac <= 0.0 {
            return Err(Error::Config("train fraction must be positive".into()));
        }
        if !(self.labeled_frac > 0.0 && self.labeled_frac <= 1.0) {
            return Err(Error::Config(format!(
                "labeled fraction {} must be in (0, 1]",
                self.labeled_frac
            )));
        }
        match (self.protocol, &self.held_out) {
            (Protocol::Cross, None) => Err(Error::Config(
                "cross protocol needs a held-out dataset id".into(),
            )),
            (Protocol::Cross, Some(_)) if self.test_frac != 0.0 => Err(Error::Config(
                "cross protocol takes its test set from the held-out dataset; set test_frac = 0"
                    .into(),
            )),
            (Protocol::Within | Protocol::Mix, Some(_)) => Err(Error::Config(
                "held_out is only valid for the cross protocol".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Index sets into `pool`.
#[derive(Debug, Clone)]
pub struct Split {
    pub pool: Dataset,
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn indices(&self, role: SplitRole) -> &[usize] {
        match role {
            SplitRole::Labeled => &self.labeled,
            SplitRole::Unlabeled => &self.unlabeled,
            SplitRole::Validation => &self.val,
            SplitRole::Test => &self.test,
        }
    }

    pub fn subset(&self, role: SplitRole) -> Result<Dataset> {
        self.pool.subset(self.indices(role))
    }

    /// The four sets are pairwise disjoint and together cover the pool.
    pub fn is_partition(&self) -> bool {
        let mut seen = BTreeSet::new();
        for set in [&self.labeled, &self.unlabeled, &self.val, &self.test] {
            for &i in set {
                if i >= self.pool.len() || !seen.insert(i) {
                    return false;
                }
            }
        }
        seen.len() == self.pool.len()
    }

    /// Source ids present in a role.
    pub fn sources(&self, role: SplitRole) -> BTreeSet<&str> {
        self.indices(role)
            .iter()
            .map(|&i| self.pool.sources()[i].as_str())
            .collect()
    }
}

fn round_count(n: usize, frac: f64) -> usize {
    ((n as f64 * frac).round() as usize).min(n)
}

fn divide(
    pool: Dataset,
    mut order: Vec<usize>,
    test: Vec<usize>,
    spec: &SplitSpec,
) -> Result<Split> {
    let n = order.len();
    let n_train = round_count(n, spec.train_frac);
    let n_val = if spec.test_frac == 0.0 {
        n - n_train
    } else {
        round_count(n, spec.val_frac).min(n - n_train)
    };
    if n_train == 0 {
        return Err(Error::Config(format!("{n} samples leave no training data")));
    }
    let n_labeled = round_count(n_train, spec.labeled_frac).max(1);
    let rest = order.split_off(n_train);
    let train = order;
    let (val, in_pool_test) = rest.split_at(n_val);
    let mut test = test;
    test.extend_from_slice(in_pool_test);
    let split = Split {
        labeled: train[..n_labeled].to_vec(),
        unlabeled: train[n_labeled..].to_vec(),
        val: val.to_vec(),
        test,
        pool,
    };
    let counts = class_counts(&split.pool.labels().select(ndarray::Axis(0), &split.labeled));
    for (c, &k) in counts.iter().enumerate() {
        if k == 0 {
            log::warn!(
                "labeled set of {} samples has no positives for class {:?}",
                split.labeled.len(),
                split.pool.class_names()[c]
            );
        }
    }
    Ok(split)
}

fn shuffled(indices: Vec<usize>, seed: u64) -> Vec<usize> {
    let mut v = indices;
    RandomStream::new(seed)
        .derive(&[SPLIT_STREAM])
        .shuffle(&mut v);
    v
}

fn expect_protocol(spec: &SplitSpec, p: Protocol) -> Result<()> {
    spec.validate()?;
    if spec.protocol != p {
        return Err(Error::Config(format!(
            "expected a {p:?} split spec, got {:?}",
            spec.protocol
        )));
    }
    Ok(())
}

/// Train/val/test by seeded shuffle, then the train part into labeled/unlabeled.
pub fn split_within(ds: &Dataset, spec: &SplitSpec) -> Result<Split> {
    expect_protocol(spec, Protocol::Within)?;
    let order = shuffled((0..ds.len()).collect(), spec.seed);
    divide(ds.clone(), order, Vec::new(), spec)
}

/// Pool every dataset, then split as in the within protocol.
pub fn split_mix(datasets: &[Dataset], spec: &SplitSpec) -> Result<Split> {
    expect_protocol(spec, Protocol::Mix)?;
    if datasets.len() < 2 {
        return Err(Error::Config(
            "mix protocol needs at least two datasets".into(),
        ));
    }
    let pool = Dataset::pool(datasets, "mix")?;
    let order = shuffled((0..pool.len()).collect(), spec.seed);
    divide(pool, order, Vec::new(), spec)
}

/// The held-out dataset is the whole test set; the others are pooled into train/val.
pub fn split_cross(datasets: &[Dataset], spec: &SplitSpec) -> Result<Split> {
    expect_protocol(spec, Protocol::Cross)?;
    let held = spec.held_out.as_deref().unwrap_or_default();
    if !datasets.iter().any(|d| d.dataset_id() == held) {
        let ids: Vec<&str> = datasets.iter().map(Dataset::dataset_id).collect();
        return Err(Error::Config(format!(
            "held-out dataset {held:?} not among {ids:?}"
        )));
    }
    if datasets.len() < 2 {
        return Err(Error::Config(
            "cross protocol needs at least two datasets".into(),
        ));
    }
    let pool = Dataset::pool(datasets, format!("cross-{held}"))?;
    let (test, rest): (Vec<usize>, Vec<usize>) =
        (0..pool.len()).partition(|&i| pool.sources()[i] == held);
    let order = shuffled(rest, spec.seed);
    divide(pool, order, test, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::default_class_names;
    use crate::signal::SignalMatrix;
    use ndarray::Array2;

    pub(crate) fn dummy(id: &str, n: usize) -> Dataset {
        let signals = (0..n)
            .map(|i| SignalMatrix::new(Array2::from_elem((1, 2), i as f64)).unwrap())
            .collect();
        let labels = Array2::from_shape_fn((n, 5), |(i, c)| f64::from(u8::from((i + c) % 3 == 0)));
        Dataset::new(signals, labels, id, default_class_names(5)).unwrap()
    }

    #[test]
    fn within_sizes() {
        let s = split_within(&dummy("a", 1000), &SplitSpec::within(1)).unwrap();
        assert_eq!(
            (
                s.labeled.len(),
                s.unlabeled.len(),
                s.val.len(),
                s.test.len()
            ),
            (40, 760, 100, 100)
        );
        assert!(s.is_partition());
        let again = split_within(&dummy("a", 1000), &SplitSpec::within(1)).unwrap();
        assert_eq!(s.labeled, again.labeled);
        assert_eq!(s.test, again.test);
        let other = split_within(&dummy("a", 1000), &SplitSpec::within(2)).unwrap();
        assert_ne!(s.labeled, other.labeled);
    }

    #[test]
    fn mix_sizes_and_provenance() {
        let s = split_mix(&[dummy("a", 500), dummy("b", 500)], &SplitSpec::mix(3)).unwrap();
        assert_eq!(s.labeled.len() + s.unlabeled.len(), 800);
        assert_eq!(s.labeled.len(), 8);
        assert!(s.is_partition());
        assert_eq!(s.pool.sources().iter().filter(|x| *x == "a").count(), 500);
        assert!(split_mix(&[dummy("a", 10)], &SplitSpec::mix(3)).is_err());
    }

    #[test]
    fn cross_holds_out_whole_dataset() {
        let ds: Vec<Dataset> = ["A", "B", "C", "D"]
            .iter()
            .map(|id| dummy(id, 100))
            .collect();
        let mut tests = Vec::new();
        for held in ["A", "B", "C", "D"] {
            let s = split_cross(&ds, &SplitSpec::cross(held, 5)).unwrap();
            assert!(s.is_partition());
            assert_eq!(s.test.len(), 100);
            assert_eq!(s.sources(SplitRole::Test), BTreeSet::from([held]));
            for role in [
                SplitRole::Labeled,
                SplitRole::Unlabeled,
                SplitRole::Validation,
            ] {
                assert!(!s.sources(role).contains(held));
            }
            assert_eq!(s.labeled.len() + s.unlabeled.len(), 270);
            assert_eq!(s.val.len(), 30);
            tests.push(s.test.clone());
        }
        tests.dedup();
        assert_eq!(tests.len(), 4);
        assert!(matches!(
            split_cross(&ds, &SplitSpec::cross("Z", 5)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn spec_validation() {
        let mut s = SplitSpec::within(0);
        s.train_frac = 0.9;
        assert!(s.validate().is_err());
        let mut c = SplitSpec::cross("A", 0);
        c.held_out = None;
        assert!(c.validate().is_err());
    }
}
