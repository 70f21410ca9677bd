//! Linear probes: multinomial logistic regression with Monte Carlo
//! cross-validation.
//!
//! Features are z-scored internally. Weights start at zero and are fitted by
//! full-batch gradient descent on mean cross-entropy plus `λ/2 ‖W‖²` (bias
//! unpenalized). A step that would raise the loss is retried at half the
//! learning rate, so the accepted loss sequence never increases.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

const MAX_HALVINGS: usize = 60;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("need at least two classes")]
    SingleClass,
    #[error("feature matrix has {rows} rows but {labels} labels")]
    DimensionMismatch { rows: usize, labels: usize },
    #[error("class '{class}' has {count} members, need at least 2")]
    ClassTooSmall { class: String, count: usize },
    #[error("empty input")]
    Empty,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite feature value")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, ProbeError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub test_fraction: f64,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            l2_lambda: 1e-2,
            learning_rate: 0.1,
            max_iters: 500,
            grad_tol: 1e-6,
            test_fraction: 0.2,
            repetitions: 10,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ProbeError::InvalidConfig(m.into()));
        if !(self.l2_lambda >= 0.0) {
            return bad("l2_lambda must be nonnegative");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.grad_tol >= 0.0) {
            return bad("grad_tol must be nonnegative");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must lie in (0, 1)");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub classes: Vec<String>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// `classes × d`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub loss: f64,
    /// Loss before the first step and after every accepted step.
    #[serde(default)]
    pub loss_trace: Vec<f64>,
}

impl ProbeModel {
    fn standardize(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.to_owned();
        for mut row in z.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        z
    }

    /// Predicted class indices.
    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        let logits = self.standardize(x).dot(&self.weights.t()) + &self.bias;
        logits
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                        if v > best.1 {
                            (i, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }

    pub fn predict_labels(&self, x: ArrayView2<f64>) -> Vec<String> {
        self.predict(x)
            .into_iter()
            .map(|i| self.classes[i].clone())
            .collect()
    }

    pub fn accuracy(&self, x: ArrayView2<f64>, y: &[String]) -> f64 {
        let pred = self.predict_labels(x);
        let hits = pred.iter().zip(y).filter(|(p, t)| p == t).count();
        hits as f64 / y.len() as f64
    }
}

/// Mean cross-entropy plus `λ/2 ‖W‖²`, and its gradients w.r.t. `W` and `b`.
pub fn loss_and_grad(
    x: ArrayView2<f64>,
    y: &[usize],
    w: &Array2<f64>,
    b: &Array1<f64>,
    lambda: f64,
) -> (f64, Array2<f64>, Array1<f64>) {
    let m = x.nrows() as f64;
    let mut p = x.dot(&w.t()) + b;
    let mut loss = 0.0;
    for (mut row, &yi) in p.rows_mut().into_iter().zip(y) {
        let mx = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        row.mapv_inplace(|v| (v - mx).exp());
        let z = row.sum();
        loss -= (row[yi] / z).ln();
        row.mapv_inplace(|v| v / z);
        row[yi] -= 1.0;
    }
    loss = loss / m + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    let gw = p.t().dot(&x) / m + w * lambda;
    let gb = p.sum_axis(Axis(0)) / m;
    (loss, gw, gb)
}

fn column_scaling(x: ArrayView2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let mean: Vec<f64> = x.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_default();
    let scale = x
        .columns()
        .into_iter()
        .zip(&mean)
        .map(|(c, m)| {
            (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
                .sqrt()
                .max(1e-8)
        })
        .collect();
    (mean, scale)
}

fn class_index(y: &[String]) -> (Vec<String>, Vec<usize>) {
    let mut classes: Vec<String> = y.to_vec();
    classes.sort();
    classes.dedup();
    let lookup: BTreeMap<&String, usize> =
        classes.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let idx = y.iter().map(|c| lookup[c]).collect();
    (classes, idx)
}

fn check_xy(x: ArrayView2<f64>, y: &[String]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(ProbeError::DimensionMismatch {
            rows: x.nrows(),
            labels: y.len(),
        });
    }
    if y.is_empty() {
        return Err(ProbeError::Empty);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ProbeError::NonFinite);
    }
    Ok(())
}

/// Fits a multinomial logistic regression.
pub fn train_logreg(x: ArrayView2<f64>, y: &[String], config: &ProbeConfig) -> Result<ProbeModel> {
    config.validate()?;
    check_xy(x, y)?;
    let (classes, yi) = class_index(y);
    if classes.len() < 2 {
        return Err(ProbeError::SingleClass);
    }
    let (mean, scale) = column_scaling(x);
    let mut model = ProbeModel {
        classes,
        mean,
        scale,
        weights: Array2::zeros((0, 0)),
        bias: Array1::zeros(0),
        iterations: 0,
        converged: false,
        loss: f64::NAN,
        loss_trace: Vec::new(),
    };
    let z = model.standardize(x);
    let k = model.classes.len();
    let mut w = Array2::<f64>::zeros((k, x.ncols()));
    let mut b = Array1::<f64>::zeros(k);
    let mut lr = config.learning_rate;
    let (mut loss, mut gw, mut gb) = loss_and_grad(z.view(), &yi, &w, &b, config.l2_lambda);
    let mut trace = vec![loss];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        let gnorm = gw
            .iter()
            .chain(gb.iter())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        if gnorm < config.grad_tol {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let w_new = &w - &(&gw * lr);
            let b_new = &b - &(&gb * lr);
            let (l_new, gw_new, gb_new) =
                loss_and_grad(z.view(), &yi, &w_new, &b_new, config.l2_lambda);
            if l_new <= loss {
                w = w_new;
                b = b_new;
                loss = l_new;
                gw = gw_new;
                gb = gb_new;
                trace.push(loss);
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
    }
    model.weights = w;
    model.bias = b;
    model.iterations = iterations;
    model.converged = converged;
    model.loss = loss;
    model.loss_trace = trace;
    Ok(model)
}

/// Max class frequency over the sample count.
pub fn majority_baseline(y: &[String]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let mut counts: BTreeMap<&String, usize> = BTreeMap::new();
    for c in y {
        *counts.entry(c).or_default() += 1;
    }
    *counts.values().max().unwrap() as f64 / y.len() as f64
}

/// Stratified split: per class, `max(1, round(count·fraction))` test items,
/// capped at `count − 1`. Returns sorted `(train, test)` indices.
pub fn stratified_split(
    y: &[String],
    fraction: f64,
    rng: &mut SplitMix64,
) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<&String, Vec<usize>> = BTreeMap::new();
    for (i, c) in y.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for members in by_class.values_mut() {
        rng.shuffle(members);
        let c = members.len();
        let n_test = ((c as f64 * fraction).round() as usize)
            .max(1)
            .min(c.saturating_sub(1));
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub majority_baseline: f64,
    pub chance: f64,
    pub n_classes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub config: ProbeConfig,
}

impl ProbeReport {
    /// Standard error of the mean accuracy under chance-level guessing,
    /// treating every test prediction as an independent trial.
    pub fn chance_standard_error(&self) -> f64 {
        let p = self.chance;
        (p * (1.0 - p) / (self.accuracies.len() * self.n_test) as f64).sqrt()
    }
}

fn rows(x: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

/// Repeated stratified train/test splits; repetition `r` uses the stream
/// `(seed, r)`.
pub fn monte_carlo_cv(
    x: ArrayView2<f64>,
    y: &[String],
    config: &ProbeConfig,
) -> Result<ProbeReport> {
    config.validate()?;
    check_xy(x, y)?;
    let (classes, _) = class_index(y);
    if classes.len() < 2 {
        return Err(ProbeError::SingleClass);
    }
    for c in &classes {
        let count = y.iter().filter(|v| *v == c).count();
        if count < 2 {
            return Err(ProbeError::ClassTooSmall {
                class: c.clone(),
                count,
            });
        }
    }
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..config.repetitions)
        .map(|r| {
            stratified_split(
                y,
                config.test_fraction,
                &mut SplitMix64::new(config.seed, r as u64),
            )
        })
        .collect();
    let accuracies: Vec<f64> = splits
        .par_iter()
        .map(|(train, test)| {
            let y_train: Vec<String> = train.iter().map(|&i| y[i].clone()).collect();
            let y_test: Vec<String> = test.iter().map(|&i| y[i].clone()).collect();
            let model = train_logreg(rows(x, train).view(), &y_train, config)?;
            Ok(model.accuracy(rows(x, test).view(), &y_test))
        })
        .collect::<Result<_>>()?;
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let std = (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(ProbeReport {
        mean,
        std,
        majority_baseline: majority_baseline(y),
        chance: 1.0 / classes.len() as f64,
        n_classes: classes.len(),
        n_train: splits[0].0.len(),
        n_test: splits[0].1.len(),
        accuracies,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn separable_line() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..40 {
            xs.push(if i < 20 { -1.0 } else { 1.0 });
            ys.push(if i < 20 { "neg" } else { "pos" }.to_string());
        }
        let x = Array2::from_shape_vec((40, 1), xs).unwrap();
        let m = train_logreg(x.view(), &ys, &ProbeConfig::default()).unwrap();
        assert_eq!(m.accuracy(x.view(), &ys), 1.0);
    }

    #[test]
    fn single_class_rejected() {
        let x = Array2::zeros((3, 2));
        assert!(matches!(
            train_logreg(x.view(), &labels(&["a", "a", "a"]), &ProbeConfig::default()),
            Err(ProbeError::SingleClass)
        ));
    }

    #[test]
    fn baselines() {
        assert!((majority_baseline(&labels(&["a", "a", "b"])) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(majority_baseline(&labels(&["a"])), 1.0);
        let ten: Vec<String> = (0..10).map(|i| i.to_string()).collect();
        assert!((majority_baseline(&ten) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn split_sizes() {
        let y: Vec<String> = (0..50).map(|i| (i % 5).to_string()).collect();
        let (train, test) = stratified_split(&y, 0.2, &mut SplitMix64::new(1, 0));
        assert_eq!(test.len(), 10);
        assert_eq!(train.len(), 40);
        let y2 = labels(&["a", "a", "b", "b", "b"]);
        let (_, test) = stratified_split(&y2, 0.9, &mut SplitMix64::new(1, 0));
        assert_eq!(test.len(), 3);
    }
}
