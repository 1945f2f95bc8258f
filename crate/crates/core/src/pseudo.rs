//! Teacher memory banks and K-nearest soft-vote pseudo-labels.
//!
//! The banks hold, for every unlabeled sample, the teacher's feature vector
//! and its sigmoid predictions. A query feature selects its K nearest bank
//! rows; the pseudo-label is the mean of their predictions and each class is
//! weighted by the neighbor agreement `|2/K · Σ p - 1|`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{read_matrices, write_matrices, ParameterSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Cosine,
    Euclidean,
}

impl Distance {
    /// Cosine distance is `1 - cos`; a zero vector has cosine 0 with anything.
    pub fn between(self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        match self {
            Distance::Euclidean => a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Distance::Cosine => {
                let na = a.dot(&a).sqrt();
                let nb = b.dot(&b).sqrt();
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - a.dot(&b) / (na * nb)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnnConfig {
    pub k: usize,
    pub distance: Distance,
    /// Drop the query's own bank row from its neighbor list.
    pub exclude_self: bool,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: 10,
            distance: Distance::Cosine,
            exclude_self: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// Feature bank Z (N_U × d) and prediction bank P (N_U × C); row i of both
/// always describes unlabeled sample i.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBanks {
    features: Array2<f64>,
    predictions: Array2<f64>,
    filled: Vec<bool>,
}

/// Soft pseudo-label and per-class agreement for one unlabeled sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    pub values: Array1<f64>,
    pub agreement: Array1<f64>,
}

impl MemoryBanks {
    pub fn empty(n: usize, feature_dim: usize, num_classes: usize) -> Self {
        MemoryBanks {
            features: Array2::zeros((n, feature_dim)),
            predictions: Array2::zeros((n, num_classes)),
            filled: vec![false; n],
        }
    }

    /// One teacher pass over every (weakly augmented, preprocessed) unlabeled input.
    pub fn init(teacher: &ParameterSet, inputs: &Array2<f64>) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::Config(
                "memory banks need at least one unlabeled sample".into(),
            ));
        }
        let pass = teacher.forward(inputs)?;
        let n = inputs.nrows();
        Ok(MemoryBanks {
            features: pass.features,
            predictions: pass.probs,
            filled: vec![true; n],
        })
    }

    pub fn len(&self) -> usize {
        self.filled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filled.is_empty()
    }

    pub fn is_filled(&self) -> bool {
        self.filled.iter().all(|&f| f)
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn predictions(&self) -> &Array2<f64> {
        &self.predictions
    }

    /// Overwrites rows `indices` of both banks with the teacher's output on
    /// `inputs` (one input row per index). Later duplicates win.
    pub fn update(
        &mut self,
        indices: &[usize],
        teacher: &ParameterSet,
        inputs: &Array2<f64>,
    ) -> Result<()> {
        if indices.is_empty() {
            return Ok(());
        }
        let pass = teacher.forward(inputs)?;
        self.write_rows(indices, pass.features.view(), pass.probs.view())
    }

    pub fn write_rows(
        &mut self,
        indices: &[usize],
        features: ArrayView2<f64>,
        predictions: ArrayView2<f64>,
    ) -> Result<()> {
        if features.nrows() != indices.len() || predictions.nrows() != indices.len() {
            return Err(Error::Contract(format!(
                "{} indices but {} feature rows and {} prediction rows",
                indices.len(),
                features.nrows(),
                predictions.nrows()
            )));
        }
        if features.ncols() != self.features.ncols()
            || predictions.ncols() != self.predictions.ncols()
        {
            return Err(Error::shape(
                "bank row width",
                &[self.features.ncols(), self.predictions.ncols()],
                &[features.ncols(), predictions.ncols()],
            ));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Contract(format!(
                "bank index {bad} out of range 0..{}",
                self.len()
            )));
        }
        for (r, &i) in indices.iter().enumerate() {
            self.features.row_mut(i).assign(&features.row(r));
            self.predictions.row_mut(i).assign(&predictions.row(r));
            self.filled[i] = true;
        }
        Ok(())
    }

    /// The `cfg.k` bank rows nearest to `query`, ties broken by lower index.
    /// `self_index` is skipped when `cfg.exclude_self` is set.
    pub fn knn_query(
        &self,
        query: ArrayView1<f64>,
        cfg: &KnnConfig,
        self_index: Option<usize>,
    ) -> Result<Vec<Neighbor>> {
        if query.len() != self.features.ncols() {
            return Err(Error::shape(
                "knn query",
                &[self.features.ncols()],
                &[query.len()],
            ));
        }
        let skip = if cfg.exclude_self { self_index } else { None };
        let available = self.len() - usize::from(skip.is_some_and(|i| i < self.len()));
        if cfg.k == 0 || cfg.k > available {
            return Err(Error::Config(format!(
                "k = {} must lie in [1, {available}] for this bank",
                cfg.k
            )));
        }
        if !self.is_filled() {
            return Err(Error::Contract(
                "memory banks queried before initialization".into(),
            ));
        }
        let mut all: Vec<Neighbor> = self
            .features
            .axis_iter(Axis(0))
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .map(|(index, row)| Neighbor {
                index,
                distance: cfg.distance.between(query, row),
            })
            .collect();
        let order = |a: &Neighbor, b: &Neighbor| {
            a.distance
                .total_cmp(&b.distance)
                .then(a.index.cmp(&b.index))
        };
        if cfg.k < all.len() {
            all.select_nth_unstable_by(cfg.k - 1, order);
            all.truncate(cfg.k);
        }
        all.sort_by(order);
        Ok(all)
    }

    /// Prediction rows of the given neighbors, stacked K × C.
    pub fn neighbor_predictions(&self, neighbors: &[Neighbor]) -> Array2<f64> {
        let idx: Vec<usize> = neighbors.iter().map(|n| n.index).collect();
        self.predictions.select(Axis(0), &idx)
    }

    /// Pseudo-label and agreement for every query row.
    pub fn pseudo_labels(
        &self,
        queries: &Array2<f64>,
        cfg: &KnnConfig,
        self_indices: Option<&[usize]>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let c = self.predictions.ncols();
        let mut values = Array2::zeros((queries.nrows(), c));
        let mut agreement = Array2::zeros((queries.nrows(), c));
        for (i, q) in queries.axis_iter(Axis(0)).enumerate() {
            let own = self_indices.map(|s| s[i]);
            let nb = self.knn_query(q, cfg, own)?;
            let preds = self.neighbor_predictions(&nb);
            values.row_mut(i).assign(&soft_vote(&preds)?);
            agreement.row_mut(i).assign(&neighbor_agreement(&preds)?);
        }
        Ok((values, agreement))
    }

    /// Writes features, predictions and the filled mask (N × 1, 0/1) in the
    /// matrix checkpoint format.
    pub fn write_to<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        let mask = Array2::from_shape_fn((self.len(), 1), |(i, _)| {
            f64::from(u8::from(self.filled[i]))
        });
        write_matrices(w, &[self.features.clone(), self.predictions.clone(), mask])
    }

    pub fn read_from<R: std::io::Read>(r: &mut R) -> Result<Self> {
        let mut mats = read_matrices(r)?;
        if mats.len() != 3 {
            return Err(Error::parse(
                "bank checkpoint",
                format!("expected 3 matrices, got {}", mats.len()),
            ));
        }
        let mask = mats.pop().expect("three matrices");
        let predictions = mats.pop().expect("three matrices");
        let features = mats.pop().expect("three matrices");
        if features.nrows() != predictions.nrows()
            || mask.nrows() != features.nrows()
            || mask.ncols() != 1
        {
            return Err(Error::parse("bank checkpoint", "inconsistent row counts"));
        }
        Ok(MemoryBanks {
            features,
            predictions,
            filled: mask.iter().map(|&v| v != 0.0).collect(),
        })
    }
}

/// Column-wise mean of K neighbor predictions.
pub fn soft_vote(neighbor_preds: &Array2<f64>) -> Result<Array1<f64>> {
    neighbor_preds
        .mean_axis(Axis(0))
        .filter(|_| neighbor_preds.nrows() > 0)
        .ok_or_else(|| Error::Contract("soft vote over zero neighbors".into()))
}

/// `|2/K · Σ_k p_kc - 1|` per class.
pub fn neighbor_agreement(neighbor_preds: &Array2<f64>) -> Result<Array1<f64>> {
    let k = neighbor_preds.nrows();
    if k == 0 {
        return Err(Error::Contract("agreement over zero neighbors".into()));
    }
    let sums = neighbor_preds.sum_axis(Axis(0));
    Ok(sums.mapv(|s| agreement_from_sum(s, k)))
}

pub fn agreement_from_sum(sum: f64, k: usize) -> f64 {
    (2.0 * sum / k as f64 - 1.0).abs().min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelConfig;
    use crate::rng::RandomStream;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_bank(n: usize, d: usize, c: usize, seed: u64) -> MemoryBanks {
        let mut rng = RandomStream::new(seed);
        let f = Array2::from_shape_fn((n, d), |_| rng.rng_mut().random_range(-1.0..1.0));
        let p = Array2::from_shape_fn((n, c), |_| rng.unit());
        let mut b = MemoryBanks::empty(n, d, c);
        b.write_rows(&(0..n).collect::<Vec<_>>(), f.view(), p.view())
            .unwrap();
        b
    }

    fn brute_force(bank: &MemoryBanks, q: ArrayView1<f64>, k: usize, dist: Distance) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = bank
            .features()
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| (dist.between(q, r), i))
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        d.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn init_rejects_empty() {
        let cfg = ModelConfig {
            feature_dim: 3,
            head_hidden: 3,
            ..ModelConfig::new(4, 2)
        };
        let t = ParameterSet::zeros(&cfg).unwrap();
        assert!(matches!(
            MemoryBanks::init(&t, &Array2::zeros((0, 4))),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn init_matches_direct_forward() {
        let cfg = ModelConfig {
            feature_dim: 3,
            head_hidden: 3,
            ..ModelConfig::new(4, 2)
        };
        let t = ParameterSet::init(&cfg, &mut RandomStream::new(2)).unwrap();
        let x = Array2::from_shape_fn((6, 4), |(i, j)| (i as f64 - j as f64) * 0.3);
        let b = MemoryBanks::init(&t, &x).unwrap();
        let pass = t.forward(&x).unwrap();
        assert_eq!(b.features(), &pass.features);
        assert_eq!(b.predictions(), &pass.probs);
        assert!(b.predictions().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn update_is_local_and_last_write_wins() {
        let mut b = random_bank(10, 3, 2, 1);
        let before = b.clone();
        b.write_rows(
            &[],
            Array2::zeros((0, 3)).view(),
            Array2::zeros((0, 2)).view(),
        )
        .unwrap();
        assert_eq!(b, before);
        let f = array![[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]];
        let p = array![[0.1, 0.1], [0.9, 0.9]];
        b.write_rows(&[4, 4], f.view(), p.view()).unwrap();
        assert_eq!(b.features().row(4), array![2.0, 2.0, 2.0]);
        for j in (0..10).filter(|&j| j != 4) {
            assert_eq!(b.features().row(j), before.features().row(j));
            assert_eq!(b.predictions().row(j), before.predictions().row(j));
        }
        assert!(b
            .write_rows(
                &[10],
                f.slice(ndarray::s![0..1, ..]),
                p.slice(ndarray::s![0..1, ..])
            )
            .is_err());
    }

    #[test]
    fn knn_examples() {
        let b = random_bank(20, 4, 3, 5);
        let cfg = KnnConfig {
            k: 1,
            distance: Distance::Euclidean,
            exclude_self: false,
        };
        let nb = b.knn_query(b.features().row(7), &cfg, None).unwrap();
        assert_eq!(nb[0].index, 7);
        let all = KnnConfig {
            k: 20,
            ..cfg.clone()
        };
        let mut idx: Vec<usize> = b
            .knn_query(b.features().row(0), &all, None)
            .unwrap()
            .iter()
            .map(|n| n.index)
            .collect();
        idx.sort();
        assert_eq!(idx, (0..20).collect::<Vec<_>>());
        assert!(matches!(
            b.knn_query(b.features().row(0), &KnnConfig { k: 21, ..cfg }, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn knn_excludes_self_on_request() {
        let b = random_bank(15, 4, 2, 6);
        let cfg = KnnConfig {
            k: 3,
            distance: Distance::Cosine,
            exclude_self: true,
        };
        let nb = b.knn_query(b.features().row(2), &cfg, Some(2)).unwrap();
        assert!(nb.iter().all(|n| n.index != 2));
    }

    #[test]
    fn knn_ties_prefer_lower_index() {
        let mut b = MemoryBanks::empty(4, 2, 2);
        let f = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 0.0]];
        b.write_rows(&[0, 1, 2, 3], f.view(), Array2::zeros((4, 2)).view())
            .unwrap();
        let cfg = KnnConfig {
            k: 2,
            distance: Distance::Euclidean,
            exclude_self: false,
        };
        let nb = b.knn_query(array![1.0, 0.0].view(), &cfg, None).unwrap();
        assert_eq!(nb.iter().map(|n| n.index).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn knn_matches_exhaustive_sort_on_50_rows() {
        let b = random_bank(50, 6, 2, 11);
        let mut rng = RandomStream::new(12);
        for dist in [Distance::Cosine, Distance::Euclidean] {
            let q = Array1::from_shape_fn(6, |_| rng.rng_mut().random_range(-1.0..1.0));
            let cfg = KnnConfig {
                k: 5,
                distance: dist,
                exclude_self: false,
            };
            let got: Vec<usize> = b
                .knn_query(q.view(), &cfg, None)
                .unwrap()
                .iter()
                .map(|n| n.index)
                .collect();
            assert_eq!(got, brute_force(&b, q.view(), 5, dist));
        }
    }

    #[test]
    fn soft_vote_examples() {
        assert_eq!(soft_vote(&array![[0.3, 0.7]]).unwrap(), array![0.3, 0.7]);
        assert_eq!(
            soft_vote(&array![[1.0, 0.0], [0.0, 1.0]]).unwrap(),
            array![0.5, 0.5]
        );
        let v = soft_vote(&array![[0.9, 0.1], [0.8, 0.2], [0.1, 0.9]]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.4).abs() < 1e-15);
        assert!(soft_vote(&Array2::zeros((0, 2))).is_err());
    }

    #[test]
    fn agreement_examples() {
        assert_eq!(
            neighbor_agreement(&array![[1.0], [1.0], [1.0]]).unwrap()[0],
            1.0
        );
        assert_eq!(neighbor_agreement(&array![[1.0], [0.0]]).unwrap()[0], 0.0);
        assert_eq!(agreement_from_sum(3.0, 4), 0.5);
    }

    #[test]
    fn bank_checkpoint_round_trip() {
        let b = random_bank(9, 3, 2, 3);
        let mut buf = Vec::new();
        b.write_to(&mut buf).unwrap();
        assert_eq!(MemoryBanks::read_from(&mut buf.as_slice()).unwrap(), b);
    }

    proptest! {
        #[test]
        fn vote_and_agreement_bounded_and_order_free(v in proptest::collection::vec(0.0f64..=1.0, 12), rot in 0usize..6) {
            let preds = Array2::from_shape_vec((6, 2), v).unwrap();
            let order: Vec<usize> = (0..6).map(|i| (i + rot) % 6).collect();
            let permuted = preds.select(Axis(0), &order);
            let (a, b) = (soft_vote(&preds).unwrap(), neighbor_agreement(&preds).unwrap());
            let (pa, pb) = (soft_vote(&permuted).unwrap(), neighbor_agreement(&permuted).unwrap());
            for c in 0..2 {
                prop_assert!((0.0..=1.0).contains(&a[c]) && (0.0..=1.0).contains(&b[c]));
                prop_assert!((a[c] - pa[c]).abs() < 1e-12 && (b[c] - pb[c]).abs() < 1e-12);
            }
        }

        #[test]
        fn agreement_monotone_in_distance_from_half(m1 in 0.0f64..=1.0, m2 in 0.0f64..=1.0) {
            let k = 10;
            let (lo, hi) = if (m1 - 0.5).abs() <= (m2 - 0.5).abs() { (m1, m2) } else { (m2, m1) };
            prop_assert!(agreement_from_sum(lo * k as f64, k) <= agreement_from_sum(hi * k as f64, k) + 1e-12);
        }
    }
}
