//! Equal error rate and minimum detection cost.
//!
//! Operating points are taken at every distinct score `t` (accept iff
//! `score >= t`) plus `+∞` (reject everything). Tied scores of different
//! classes move together, giving the usual step-function ROC.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scoring::Label;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfConfig {
    pub c_miss: f64,
    pub c_fa: f64,
    pub p_target: f64,
}

impl Default for DcfConfig {
    fn default() -> Self {
        Self {
            c_miss: 1.0,
            c_fa: 1.0,
            p_target: 0.05,
        }
    }
}

impl DcfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_miss > 0.0 && self.c_fa > 0.0) || !(self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(Error::invalid(format!("invalid DCF parameters {self:?}")));
        }
        Ok(())
    }

    /// Cost of the better of the two trivial systems (accept all, reject all).
    /// Dividing a DCF by this gives the normalized DCF used in many
    /// challenge leaderboards.
    pub fn default_cost(&self) -> f64 {
        (self.c_miss * self.p_target).min(self.c_fa * (1.0 - self.p_target))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRates {
    pub e_miss: f64,
    pub e_fa: f64,
    pub threshold: f64,
}

/// `C_miss·E_miss·P_target + C_fa·E_fa·(1 − P_target)`.
pub fn dcf_point(e: &ErrorRates, cfg: &DcfConfig) -> f64 {
    cfg.c_miss * e.e_miss * cfg.p_target + cfg.c_fa * e.e_fa * (1.0 - cfg.p_target)
}

fn class_counts(scores: &[f64], labels: &[Label]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("score {i} is not finite")));
    }
    let n_target = labels.iter().filter(|&&l| l == Label::Target).count();
    let n_nontarget = labels.len() - n_target;
    if n_target == 0 || n_nontarget == 0 {
        return Err(Error::degenerate(format!(
            "need both classes, got {n_target} targets and {n_nontarget} nontargets"
        )));
    }
    Ok((n_target, n_nontarget))
}

/// Error rates at every operating point, ordered by increasing threshold.
/// The first point accepts everything, the last (`+∞`) rejects everything.
pub fn roc_sweep(scores: &[f64], labels: &[Label]) -> Result<Vec<ErrorRates>> {
    let (n_t, n_n) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut points = Vec::new();
    let (mut missed, mut rejected_non) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        points.push(ErrorRates {
            e_miss: missed as f64 / n_t as f64,
            e_fa: (n_n - rejected_non) as f64 / n_n as f64,
            threshold: t,
        });
        while i < order.len() && scores[order[i]] == t {
            match labels[order[i]] {
                Label::Target => missed += 1,
                Label::Nontarget => rejected_non += 1,
            }
            i += 1;
        }
    }
    points.push(ErrorRates {
        e_miss: 1.0,
        e_fa: 0.0,
        threshold: f64::INFINITY,
    });
    Ok(points)
}

/// Interpolated crossing of the miss and false-alarm curves. Returns the
/// rate (not percent) and a threshold.
pub(crate) fn eer_from_sweep(points: &[ErrorRates]) -> (f64, f64) {
    let i = points
        .iter()
        .position(|p| p.e_miss >= p.e_fa)
        .expect("sweep ends at (1, 0)");
    if i == 0 {
        let p = points[0];
        return (p.e_miss, p.threshold);
    }
    let (a, b) = (points[i - 1], points[i]);
    let denom = (b.e_miss - a.e_miss) - (b.e_fa - a.e_fa);
    let alpha = if denom > 0.0 {
        (a.e_fa - a.e_miss) / denom
    } else {
        0.0
    };
    let rate = a.e_miss + alpha * (b.e_miss - a.e_miss);
    let threshold = if b.threshold.is_finite() {
        a.threshold + alpha * (b.threshold - a.threshold)
    } else {
        a.threshold
    };
    (rate, threshold)
}

/// EER in percent and the interpolated threshold.
pub fn eer(scores: &[f64], labels: &[Label]) -> Result<(f64, f64)> {
    let (rate, t) = eer_from_sweep(&roc_sweep(scores, labels)?);
    Ok((rate * 100.0, t))
}

pub(crate) fn min_dcf_from_sweep(points: &[ErrorRates], cfg: &DcfConfig) -> (f64, f64) {
    points
        .iter()
        .map(|p| (dcf_point(p, cfg), p.threshold))
        .fold((f64::INFINITY, f64::INFINITY), |best, cur| {
            if cur.0 < best.0 {
                cur
            } else {
                best
            }
        })
}

pub fn min_dcf(scores: &[f64], labels: &[Label], cfg: &DcfConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    Ok(min_dcf_from_sweep(&roc_sweep(scores, labels)?, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Percent.
    pub eer: f64,
    pub min_dcf: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
    pub eer_threshold: f64,
    pub dcf_threshold: f64,
}

impl MetricsReport {
    pub fn compute(scores: &[f64], labels: &[Label], cfg: &DcfConfig) -> Result<Self> {
        cfg.validate()?;
        let (n_target, n_nontarget) = class_counts(scores, labels)?;
        let sweep = roc_sweep(scores, labels)?;
        let (eer_rate, eer_threshold) = eer_from_sweep(&sweep);
        let (min_dcf, dcf_threshold) = min_dcf_from_sweep(&sweep, cfg);
        Ok(Self {
            eer: eer_rate * 100.0,
            min_dcf,
            n_target,
            n_nontarget,
            eer_threshold,
            dcf_threshold,
        })
    }

    /// `EER=4.7770% minDCF=0.2800`.
    pub fn summary_line(&self) -> String {
        format!("EER={:.4}% minDCF={:.4}", self.eer, self.min_dcf)
    }

    pub fn to_json(&self) -> String {
        // Infinite thresholds (all-reject optimum) have no JSON number form.
        let mut v = serde_json::to_value(self).expect("plain struct");
        for key in ["eer_threshold", "dcf_threshold"] {
            let t = match key {
                "eer_threshold" => self.eer_threshold,
                _ => self.dcf_threshold,
            };
            if !t.is_finite() {
                v[key] = serde_json::Value::String(if t > 0.0 { "inf" } else { "-inf" }.into());
            }
        }
        serde_json::to_string(&v).expect("serializable")
    }
}
