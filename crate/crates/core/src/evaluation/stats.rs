use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Mean of repeated trials with a Student-t confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single trial.
    pub std: f64,
    pub confidence: f64,
    /// `None` when fewer than two trials make the interval undefined.
    pub half_width: Option<f64>,
}

impl TrialSummary {
    pub fn mean_percent(&self) -> f64 {
        self.mean * 100.0
    }

    pub fn half_width_percent(&self) -> Option<f64> {
        self.half_width.map(|h| h * 100.0)
    }

    /// `mean ± half-width` in percent, with `—` for an undefined interval.
    pub fn display_percent(&self) -> String {
        match self.half_width_percent() {
            Some(h) => format!("{:.2} ± {:.2}", self.mean_percent(), h),
            None => format!("{:.2} ± —", self.mean_percent()),
        }
    }
}

/// Two-sided Student-t critical value for `df` degrees of freedom.
pub fn t_critical(confidence: f64, df: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Eval(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    let t = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Eval(e.to_string()))?;
    Ok(t.inverse_cdf(0.5 + confidence / 2.0))
}

/// Summarizes accuracies (fractions) from independent trials.
pub fn aggregate_trials(values: &[f64], confidence: f64) -> Result<TrialSummary> {
    if values.is_empty() {
        return Err(Error::Eval("no trials to aggregate".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eval("non-finite trial value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let half_width = if n > 1 {
        Some(t_critical(confidence, (n - 1) as f64)? * std / (n as f64).sqrt())
    } else {
        t_critical(confidence, 1.0)?;
        None
    };
    Ok(TrialSummary { n, mean, std, confidence, half_width })
}
