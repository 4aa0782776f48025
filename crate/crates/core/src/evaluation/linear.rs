use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Linear, Module, Optimizer, OptimizerConfig, OptimizerKind, Param};
use crate::rng::{rng_for, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearEvalConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Standardize features with training-set statistics before fitting.
    pub standardize: bool,
}

impl LinearEvalConfig {
    pub fn desk() -> Self {
        Self { epochs: 50, ..Self::paper() }
    }

    pub fn paper() -> Self {
        Self { epochs: 200, batch_size: 64, lr: 3e-4, weight_decay: 0.0, standardize: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("linear eval needs epochs > 0 and batch_size > 0".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("linear eval lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("linear eval weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        Ok(())
    }
}

impl Default for LinearEvalConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Test-set metrics of a linear probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `None` for classes absent from the test split.
    pub per_class: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub n_test: usize,
    pub config: LinearEvalConfig,
}

impl EvalReport {
    pub fn from_predictions(truth: &[usize], pred: &[usize], classes: usize, config: LinearEvalConfig) -> Self {
        let mut confusion = vec![vec![0usize; classes]; classes];
        for (&t, &p) in truth.iter().zip(pred) {
            confusion[t][p] += 1;
        }
        let trace: usize = (0..classes).map(|c| confusion[c][c]).sum();
        let per_class = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let n: usize = row.iter().sum();
                (n > 0).then(|| row[c] as f64 / n as f64)
            })
            .collect();
        let n_test = truth.len();
        let accuracy = if n_test == 0 { 0.0 } else { trace as f64 / n_test as f64 };
        Self { accuracy, per_class, confusion, n_test, config }
    }

    pub fn classes(&self) -> usize {
        self.confusion.len()
    }

    pub fn correct(&self) -> usize {
        (0..self.classes()).map(|c| self.confusion[c][c]).sum()
    }

    /// Confusion matrix as CSV with a header row of predicted classes.
    pub fn confusion_csv(&self, class_names: &[String]) -> String {
        let name = |c: usize| class_names.get(c).cloned().unwrap_or_else(|| c.to_string());
        let mut out = String::from("true\\pred");
        for c in 0..self.classes() {
            out.push(',');
            out.push_str(&name(c));
        }
        out.push('\n');
        for (t, row) in self.confusion.iter().enumerate() {
            out.push_str(&name(t));
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self, class_names: &[String]) -> String {
        let mut out = format!("accuracy {:.4} ({} / {})\n", self.accuracy, self.correct(), self.n_test);
        for (c, acc) in self.per_class.iter().enumerate() {
            let name = class_names.get(c).cloned().unwrap_or_else(|| c.to_string());
            match acc {
                Some(a) => out.push_str(&format!("  {name:<12} {a:.4}\n")),
                None => out.push_str(&format!("  {name:<12} n/a\n")),
            }
        }
        out
    }
}

fn check_inputs(x: &Array2<f64>, y: &[usize], what: &str) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{what}: {} embeddings but {} labels", x.nrows(), y.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eval(format!("{what} embeddings contain non-finite values")));
    }
    Ok(())
}

/// Per-column mean and standard deviation; constant columns get unit scale.
fn column_stats(x: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let mean: Vec<f64> = x.mean_axis(Axis(0)).expect("non-empty").to_vec();
    let std = x
        .axis_iter(Axis(1))
        .zip(&mean)
        .map(|(col, m)| {
            let v = col.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n;
            if v > 1e-24 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

fn apply_stats(x: &Array2<f64>, mean: &[f64], std: &[f64]) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        for ((v, m), s) in row.iter_mut().zip(mean).zip(std) {
            *v = (*v - m) / s;
        }
    }
    out
}

fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Softmax cross-entropy gradient with respect to the logits, averaged over rows.
fn softmax_xent_grad(logits: &Array2<f64>, y: &[usize]) -> (f64, Array2<f64>) {
    let n = logits.nrows() as f64;
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (mut row, &t) in grad.rows_mut().into_iter().zip(y) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
        loss -= row[t].ln();
        row[t] -= 1.0;
        row /= n;
    }
    (loss / n, grad)
}

/// A fitted linear classifier on frozen features.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    pub layer: Linear<f64>,
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl LinearProbe {
    pub fn fit(x: &Array2<f64>, y: &[usize], classes: usize, cfg: &LinearEvalConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        check_inputs(x, y, "train")?;
        if let Some(&bad) = y.iter().find(|&&l| l >= classes) {
            return Err(Error::Eval(format!("label {bad} outside 0..{classes}")));
        }
        let mut seen = y.to_vec();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() < 2 {
            return Err(Error::Eval(format!("linear eval needs at least two classes, training labels hold {}", seen.len())));
        }
        let d = x.ncols();
        let (mean, std) = if cfg.standardize { column_stats(x) } else { (vec![0.0; d], vec![1.0; d]) };
        let xs = apply_stats(x, &mean, &std);
        let mut layer = Linear {
            weight: Param::zeros("probe.weight", &[d, classes]),
            bias: Param::zeros("probe.bias", &[classes]),
        };
        let mut opt = Optimizer::new(OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..OptimizerConfig::default()
        });
        let n = xs.nrows();
        let mut order: Vec<usize> = (0..n).collect();
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng_for(seed, Stream::LinearEval, &[epoch as u64]));
            for idx in order.chunks(cfg.batch_size) {
                let xb = xs.select(Axis(0), idx);
                let yb: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
                let (_, g) = softmax_xent_grad(&layer.forward(&xb), &yb);
                layer.zero_grad();
                layer.backward(&xb, &g, false);
                opt.apply(&mut layer, cfg.lr);
            }
        }
        Ok(Self { layer, mean, std })
    }

    pub fn classes(&self) -> usize {
        self.layer.output_dim()
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        if x.ncols() != self.layer.input_dim() {
            return Err(Error::Shape(format!("probe expects width {}, got {}", self.layer.input_dim(), x.ncols())));
        }
        let logits = self.layer.forward(&apply_stats(x, &self.mean, &self.std));
        Ok(logits.rows().into_iter().map(argmax).collect())
    }
}

/// Fits a softmax linear classifier on the training embeddings and reports
/// test metrics. The class count is one past the largest label seen.
pub fn linear_eval(
    train_x: &Array2<f64>,
    train_y: &[usize],
    test_x: &Array2<f64>,
    test_y: &[usize],
    cfg: &LinearEvalConfig,
    seed: u64,
) -> Result<EvalReport> {
    check_inputs(test_x, test_y, "test")?;
    if train_x.ncols() != test_x.ncols() {
        return Err(Error::Shape(format!(
            "train embeddings have width {}, test {}",
            train_x.ncols(),
            test_x.ncols()
        )));
    }
    if test_y.is_empty() {
        return Err(Error::Eval("empty test split".into()));
    }
    let classes = train_y.iter().chain(test_y).max().map_or(0, |m| m + 1);
    let probe = LinearProbe::fit(train_x, train_y, classes, cfg, seed)?;
    let pred = probe.predict(test_x)?;
    Ok(EvalReport::from_predictions(test_y, &pred, classes, cfg.clone()))
}
