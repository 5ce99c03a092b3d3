//! Linear classifiers on standardized features: multinomial logistic
//! regression by gradient descent and a one-vs-rest linear SVM by subgradient
//! descent on the hinge loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data_model::{LabeledDataset, TurnoverClass, N_CLASSES};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batch {
    Full,
    Size(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub batch: Batch,
    pub seed: u64,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            learning_rate: 0.1,
            epochs: 200,
            l2: 1e-4,
            batch: Batch::Full,
            seed: 0,
        }
    }
}

impl GdConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain("learning_rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::domain("epochs must be at least 1"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::domain("l2 must be non-negative"));
        }
        if self.batch == Batch::Size(0) {
            return Err(Error::domain("batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    MultinomialLogistic,
    SvmOvr,
}

/// K×(F+1) weight matrix (bias last in each row) plus the standardization
/// learned on the training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub feature_names: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub feature_means: Vec<f64>,
    pub feature_stddevs: Vec<f64>,
    /// Classes seen in training; absent classes are never predicted.
    pub present: [bool; N_CLASSES],
    /// Full-data objective after each epoch, starting with the initial value.
    /// For the SVM this is the sum of the per-class objectives.
    pub loss_history: Vec<f64>,
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn standardize(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_features() {
            return Err(Error::domain(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.n_features()
            )));
        }
        Ok(row
            .iter()
            .zip(self.feature_means.iter().zip(&self.feature_stddevs))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    /// Raw decision values: logits or SVM margins.
    pub fn scores(&self, row: &[f64]) -> Result<[f64; N_CLASSES]> {
        let x = self.standardize(row)?;
        let mut s = [0.0; N_CLASSES];
        for (k, w) in self.weights.iter().enumerate().take(N_CLASSES) {
            s[k] = dot_with_bias(w, &x);
        }
        Ok(s)
    }

    /// Softmax of the scores.
    pub fn probabilities(&self, row: &[f64]) -> Result<[f64; N_CLASSES]> {
        Ok(softmax(&self.scores(row)?))
    }
}

fn dot_with_bias(w: &[f64], x: &[f64]) -> f64 {
    let f = x.len();
    w[..f].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[f]
}

fn softmax(z: &[f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e = z.map(|v| (v - max).exp());
    let s: f64 = e.iter().sum();
    for v in &mut e {
        *v /= s;
    }
    e
}

/// Highest-scoring present class; ties toward the lower class.
pub fn predict_linear(m: &LinearModel, row: &[f64]) -> Result<TurnoverClass> {
    let s = m.scores(row)?;
    let mut best: Option<usize> = None;
    for k in 0..N_CLASSES {
        if !m.present[k] {
            continue;
        }
        if best.map_or(true, |b| s[k] > s[b]) {
            best = Some(k);
        }
    }
    Ok(TurnoverClass::ALL[best.unwrap_or(0)])
}

/// Column means and population standard deviations; near-constant columns get 1.
fn standardization(d: &LabeledDataset) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (n, f) = (d.n_rows(), d.n_features());
    let mut means = vec![0.0; f];
    for row in d.rows() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let mut sds = vec![0.0; f];
    for row in d.rows() {
        for j in 0..f {
            sds[j] += (row[j] - means[j]).powi(2);
        }
    }
    for s in &mut sds {
        *s = (*s / n as f64).sqrt();
        if !(*s > 1e-12) || !s.is_finite() {
            *s = 1.0;
        }
    }
    let mut x = Vec::with_capacity(n * f);
    for row in d.rows() {
        x.extend((0..f).map(|j| (row[j] - means[j]) / sds[j]));
    }
    (means, sds, x)
}

/// Mean softmax cross-entropy plus `(l2/2)·‖W‖²` (biases unpenalized), and its gradient.
///
/// `w` is the K×(F+1) matrix flattened row-major; `x` is n×F row-major.
pub fn softmax_objective(
    w: &[f64],
    x: &[f64],
    y: &[usize],
    n_features: usize,
    l2: f64,
) -> (f64, Vec<f64>) {
    let f = n_features;
    let stride = f + 1;
    let n = y.len();
    let mut grad = vec![0.0; w.len()];
    let mut loss = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let xi = &x[i * f..(i + 1) * f];
        let mut z = [0.0; N_CLASSES];
        for k in 0..N_CLASSES {
            z[k] = dot_with_bias(&w[k * stride..(k + 1) * stride], xi);
        }
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[yi];
        for k in 0..N_CLASSES {
            let p = (z[k] - lse).exp();
            let coef = p - if k == yi { 1.0 } else { 0.0 };
            let g = &mut grad[k * stride..(k + 1) * stride];
            for j in 0..f {
                g[j] += coef * xi[j];
            }
            g[f] += coef;
        }
    }
    let inv = 1.0 / n as f64;
    loss *= inv;
    grad.iter_mut().for_each(|g| *g *= inv);
    for k in 0..N_CLASSES {
        for j in 0..f {
            let wk = w[k * stride + j];
            loss += 0.5 * l2 * wk * wk;
            grad[k * stride + j] += l2 * wk;
        }
    }
    (loss, grad)
}

/// Mean hinge loss `max(0, 1 − y·(w·x + b))` plus `(l2/2)·‖w‖²` (bias
/// unpenalized), with a subgradient. Labels are ±1.
pub fn hinge_objective(
    w: &[f64],
    x: &[f64],
    y: &[f64],
    n_features: usize,
    l2: f64,
) -> (f64, Vec<f64>) {
    let f = n_features;
    let n = y.len();
    let mut grad = vec![0.0; f + 1];
    let mut loss = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let xi = &x[i * f..(i + 1) * f];
        let margin = yi * dot_with_bias(w, xi);
        if margin < 1.0 {
            loss += 1.0 - margin;
            for j in 0..f {
                grad[j] -= yi * xi[j];
            }
            grad[f] -= yi;
        }
    }
    let inv = 1.0 / n as f64;
    loss *= inv;
    grad.iter_mut().for_each(|g| *g *= inv);
    for j in 0..f {
        loss += 0.5 * l2 * w[j] * w[j];
        grad[j] += l2 * w[j];
    }
    (loss, grad)
}

fn require_classes(d: &LabeledDataset, model: &str) -> Result<[bool; N_CLASSES]> {
    if d.is_empty() {
        return Err(Error::domain(format!("{model}: empty training set")));
    }
    let h = d.class_histogram();
    Ok(h.map(|c| c > 0))
}

fn batches(n: usize, cfg: &GdConfig, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Vec<usize>> {
    match cfg.batch {
        Batch::Full => vec![(0..n).collect()],
        Batch::Size(b) => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            idx.chunks(b).map(<[usize]>::to_vec).collect()
        }
    }
}

fn gather(x: &[f64], f: usize, rows: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * f);
    for &i in rows {
        out.extend_from_slice(&x[i * f..(i + 1) * f]);
    }
    out
}

fn ensure_finite(model: &str, epoch: usize, loss: f64, w: &[f64]) -> Result<()> {
    if !loss.is_finite() || w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Training {
            model: model.to_string(),
            epoch,
            message: format!("objective became {loss}"),
        });
    }
    Ok(())
}

/// Multinomial logistic regression.
///
/// Full-batch training halves the step whenever it would raise the
/// objective, so the loss history never increases.
pub fn train_multinomial_logreg(d: &LabeledDataset, cfg: &GdConfig) -> Result<LinearModel> {
    const NAME: &str = "multinomial_logistic";
    cfg.check()?;
    let present = require_classes(d, NAME)?;
    let (n, f) = (d.n_rows(), d.n_features());
    let (means, sds, x) = standardization(d);
    let y: Vec<usize> = d.labels().iter().map(|l| l.index()).collect();
    let mut w = vec![0.0; N_CLASSES * (f + 1)];
    let mut rng = seed::rng(cfg.seed);
    let (mut loss, mut grad) = softmax_objective(&w, &x, &y, f, cfg.l2);
    let mut history = vec![loss];
    let mut lr = cfg.learning_rate;

    for epoch in 1..=cfg.epochs {
        match cfg.batch {
            Batch::Full => {
                let mut accepted = false;
                for _ in 0..60 {
                    let cand: Vec<f64> = w.iter().zip(&grad).map(|(a, g)| a - lr * g).collect();
                    let (l, g) = softmax_objective(&cand, &x, &y, f, cfg.l2);
                    ensure_finite(NAME, epoch, l, &cand)?;
                    if l <= loss {
                        w = cand;
                        loss = l;
                        grad = g;
                        accepted = true;
                        break;
                    }
                    lr *= 0.5;
                }
                if !accepted {
                    // Step underflowed: the iterate is stationary to machine precision.
                    history.push(loss);
                    continue;
                }
            }
            Batch::Size(_) => {
                for rows in batches(n, cfg, &mut rng) {
                    let xb = gather(&x, f, &rows);
                    let yb: Vec<usize> = rows.iter().map(|&i| y[i]).collect();
                    let (_, g) = softmax_objective(&w, &xb, &yb, f, cfg.l2);
                    for (a, gi) in w.iter_mut().zip(&g) {
                        *a -= lr * gi;
                    }
                }
                let (l, g) = softmax_objective(&w, &x, &y, f, cfg.l2);
                ensure_finite(NAME, epoch, l, &w)?;
                loss = l;
                grad = g;
            }
        }
        history.push(loss);
    }

    Ok(LinearModel {
        kind: LinearKind::MultinomialLogistic,
        feature_names: d.feature_names().to_vec(),
        weights: w.chunks(f + 1).map(<[f64]>::to_vec).collect(),
        feature_means: means,
        feature_stddevs: sds,
        present,
        loss_history: history,
    })
}

/// One-vs-rest linear SVM. Each class's classifier follows the subgradient
/// with step `learning_rate / sqrt(epoch)` and keeps its best iterate.
/// A class with no training rows becomes the constant scorer −1.
pub fn train_svm_ovr(d: &LabeledDataset, cfg: &GdConfig) -> Result<LinearModel> {
    const NAME: &str = "svm_ovr";
    cfg.check()?;
    let present = require_classes(d, NAME)?;
    let (n, f) = (d.n_rows(), d.n_features());
    let (means, sds, x) = standardization(d);
    let mut weights = Vec::with_capacity(N_CLASSES);
    let mut per_class_history = Vec::with_capacity(N_CLASSES);

    for k in 0..N_CLASSES {
        if !present[k] {
            let mut w = vec![0.0; f + 1];
            w[f] = -1.0;
            weights.push(w);
            per_class_history.push(Vec::new());
            continue;
        }
        let y: Vec<f64> = d
            .labels()
            .iter()
            .map(|l| if l.index() == k { 1.0 } else { -1.0 })
            .collect();
        let mut rng = seed::rng(seed::derive(cfg.seed, k as u64, 0));
        let mut w = vec![0.0; f + 1];
        let (mut obj, mut grad) = hinge_objective(&w, &x, &y, f, cfg.l2);
        let mut best = (obj, w.clone());
        let mut history = vec![obj];
        for epoch in 1..=cfg.epochs {
            let step = cfg.learning_rate / (epoch as f64).sqrt();
            match cfg.batch {
                Batch::Full => {
                    for (a, g) in w.iter_mut().zip(&grad) {
                        *a -= step * g;
                    }
                }
                Batch::Size(_) => {
                    for rows in batches(n, cfg, &mut rng) {
                        let xb = gather(&x, f, &rows);
                        let yb: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
                        let (_, g) = hinge_objective(&w, &xb, &yb, f, cfg.l2);
                        for (a, gi) in w.iter_mut().zip(&g) {
                            *a -= step * gi;
                        }
                    }
                }
            }
            let (o, g) = hinge_objective(&w, &x, &y, f, cfg.l2);
            ensure_finite(NAME, epoch, o, &w)?;
            obj = o;
            grad = g;
            if obj < best.0 {
                best = (obj, w.clone());
            }
            history.push(best.0);
        }
        weights.push(best.1);
        per_class_history.push(history);
    }

    let loss_history = (0..=cfg.epochs)
        .map(|e| {
            per_class_history
                .iter()
                .filter(|h| !h.is_empty())
                .map(|h| h[e])
                .sum()
        })
        .collect();
    Ok(LinearModel {
        kind: LinearKind::SvmOvr,
        feature_names: d.feature_names().to_vec(),
        weights,
        feature_means: means,
        feature_stddevs: sds,
        present,
        loss_history,
    })
}
