//! Label correlation matrices and the Frobenius alignment loss.
//!
//! Entry `(c1, c2)` measures how strongly classes `c1` and `c2` co-occur,
//! estimated from the column vectors of an n × C label (or prediction)
//! matrix. Cosine similarity is the default; Pearson (squared) and
//! inverse-Euclidean variants are selectable for comparison.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    #[default]
    Cosine,
    Pearson,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationSource {
    Labeled,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub values: Array2<f64>,
    pub source: CorrelationSource,
}

impl CorrelationMatrix {
    pub fn num_classes(&self) -> usize {
        self.values.nrows()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W, class_names: &[String]) -> Result<()> {
        write!(w, "class")?;
        for name in class_names {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for (name, row) in class_names.iter().zip(self.values.rows()) {
            write!(w, "{name}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Divides each nonzero column by its Euclidean norm; all-zero columns stay zero.
pub fn normalize_columns(y: &Array2<f64>) -> Array2<f64> {
    let mut out = y.clone();
    for mut col in out.columns_mut() {
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col.mapv_inplace(|v| v / norm);
        }
    }
    out
}

fn column_norms(y: &Array2<f64>) -> Array1<f64> {
    y.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect()
}

/// `N(Y)^T N(Y)`.
pub fn cosine_matrix(y: &Array2<f64>) -> Array2<f64> {
    let n = normalize_columns(y);
    n.t().dot(&n)
}

fn centered(y: &Array2<f64>) -> Array2<f64> {
    let mean = y
        .mean_axis(Axis(0))
        .unwrap_or_else(|| Array1::zeros(y.ncols()));
    y - &mean
}

/// Squared Pearson coefficient for every column pair; constant columns give 0.
pub fn pearson_matrix(y: &Array2<f64>) -> Array2<f64> {
    let rho = cosine_matrix(&centered(y));
    rho.mapv(|r| r * r)
}

/// `1 / (1 + ||y_c1 - y_c2||)` for every column pair.
pub fn euclidean_matrix(y: &Array2<f64>) -> Array2<f64> {
    let c = y.ncols();
    let mut out = Array2::ones((c, c));
    for i in 0..c {
        for j in (i + 1)..c {
            let r = euclidean_correlation(y.column(i), y.column(j));
            out[[i, j]] = r;
            out[[j, i]] = r;
        }
    }
    out
}

pub fn similarity_matrix(y: &Array2<f64>, kind: SimilarityKind) -> Array2<f64> {
    match kind {
        SimilarityKind::Cosine => cosine_matrix(y),
        SimilarityKind::Pearson => pearson_matrix(y),
        SimilarityKind::Euclidean => euclidean_matrix(y),
    }
}

fn check_binary(y: &Array2<f64>) -> Result<()> {
    if let Some(((i, c), v)) = y.indexed_iter().find(|(_, &v)| v != 0.0 && v != 1.0) {
        return Err(Error::Contract(format!(
            "label matrix must be binary, found {v} at ({i}, {c})"
        )));
    }
    Ok(())
}

/// Correlation matrix of a binary ground-truth label matrix.
pub fn correlation_labeled(y_b: &Array2<f64>, kind: SimilarityKind) -> Result<CorrelationMatrix> {
    check_binary(y_b)?;
    Ok(CorrelationMatrix {
        values: similarity_matrix(y_b, kind),
        source: CorrelationSource::Labeled,
    })
}

/// Correlation matrix of stacked student predictions on unlabeled samples.
pub fn correlation_unlabeled(p_u: &Array2<f64>, kind: SimilarityKind) -> Result<CorrelationMatrix> {
    if p_u.nrows() == 0 {
        return Err(Error::Contract("prediction matrix has no rows".into()));
    }
    Ok(CorrelationMatrix {
        values: similarity_matrix(p_u, kind),
        source: CorrelationSource::Unlabeled,
    })
}

pub fn frobenius_loss(r_b: &Array2<f64>, r_u: &Array2<f64>) -> Result<f64> {
    if r_b.dim() != r_u.dim() {
        return Err(Error::shape(
            "frobenius_loss",
            &[r_b.nrows(), r_b.ncols()],
            &[r_u.nrows(), r_u.ncols()],
        ));
    }
    Ok((r_b - r_u).mapv(|d| d * d).sum().sqrt())
}

/// Squared Pearson coefficient of two vectors. Returns 0 (with a warning)
/// when either vector is constant.
pub fn pearson_correlation(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let ma = a.mean().unwrap_or(0.0);
    let mb = b.mean().unwrap_or(0.0);
    let da = a.mapv(|v| v - ma);
    let db = b.mapv(|v| v - mb);
    let na = da.dot(&da).sqrt();
    let nb = db.dot(&db).sqrt();
    if na == 0.0 || nb == 0.0 {
        log::warn!("pearson correlation undefined for a constant column; using 0");
        return 0.0;
    }
    let rho = da.dot(&db) / (na * nb);
    (rho * rho).min(1.0)
}

pub fn euclidean_correlation(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let d = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    1.0 / (1.0 + d)
}

/// `sqrt(P(c1=1 | c2=1) · P(c2=1 | c1=1))` from empirical co-occurrence counts.
/// Returns 0 (with a warning) if either class has no positives.
pub fn conditional_probability_form(y: &Array2<f64>, c1: usize, c2: usize) -> f64 {
    let mut n1 = 0usize;
    let mut n2 = 0usize;
    let mut both = 0usize;
    for row in y.rows() {
        let a = row[c1] == 1.0;
        let b = row[c2] == 1.0;
        n1 += a as usize;
        n2 += b as usize;
        both += (a && b) as usize;
    }
    if n1 == 0 || n2 == 0 {
        log::warn!("conditional probability undefined: class without positives");
        return 0.0;
    }
    let p1_given_2 = both as f64 / n2 as f64;
    let p2_given_1 = both as f64 / n1 as f64;
    (p1_given_2 * p2_given_1).sqrt()
}

/// Backpropagates `d_n` (gradient w.r.t. the column-normalized matrix) to
/// the unnormalized matrix `x` whose column norms are `norms`.
fn normalize_backward(n: &Array2<f64>, d_n: &Array2<f64>, norms: &Array1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(n.dim());
    for c in 0..n.ncols() {
        if norms[c] == 0.0 {
            continue;
        }
        let nc = n.column(c);
        let gc = d_n.column(c);
        let proj = nc.dot(&gc);
        let mut oc = out.column_mut(c);
        for i in 0..nc.len() {
            oc[i] = (gc[i] - nc[i] * proj) / norms[c];
        }
    }
    out
}

/// `||R_b - S(P)||_F` and its gradient with respect to `P`, where `S` is the
/// selected similarity. At a zero loss the gradient is taken as zero.
pub fn alignment_loss_and_grad(
    p: &Array2<f64>,
    r_b: &Array2<f64>,
    kind: SimilarityKind,
) -> Result<(f64, Array2<f64>)> {
    let c = p.ncols();
    if r_b.dim() != (c, c) {
        return Err(Error::shape(
            "alignment target",
            &[c, c],
            &[r_b.nrows(), r_b.ncols()],
        ));
    }
    let r = similarity_matrix(p, kind);
    let loss = frobenius_loss(r_b, &r)?;
    if loss == 0.0 {
        return Ok((0.0, Array2::zeros(p.dim())));
    }
    let g = (&r - r_b) / loss;
    let grad = match kind {
        SimilarityKind::Cosine => {
            let norms = column_norms(p);
            let n = normalize_columns(p);
            let d_n = n.dot(&(&g + &g.t()));
            normalize_backward(&n, &d_n, &norms)
        }
        SimilarityKind::Pearson => {
            let x = centered(p);
            let norms = column_norms(&x);
            let m = normalize_columns(&x);
            let rho = m.t().dot(&m);
            let g_rho = 2.0 * &rho * &g;
            let d_m = m.dot(&(&g_rho + &g_rho.t()));
            let d_x = normalize_backward(&m, &d_m, &norms);
            let mean = d_x.mean_axis(Axis(0)).expect("non-empty");
            d_x - &mean
        }
        SimilarityKind::Euclidean => {
            let mut d_p = Array2::zeros(p.dim());
            for i in 0..c {
                for j in 0..c {
                    if i == j {
                        continue;
                    }
                    let diff = &p.column(i) - &p.column(j);
                    let d = diff.dot(&diff).sqrt();
                    if d == 0.0 {
                        continue;
                    }
                    // both (i, j) and (j, i) entries depend on the pair
                    let coef = (g[[i, j]] + g[[j, i]]) * (-1.0 / ((1.0 + d) * (1.0 + d))) / d;
                    d_p.column_mut(i).scaled_add(coef, &diff);
                }
            }
            d_p
        }
    };
    Ok((loss, grad))
}
