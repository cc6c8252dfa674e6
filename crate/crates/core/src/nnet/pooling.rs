use rand::Rng;

use super::layers::{Param, ParamMuts, ParamRefs};
use super::Tensor3;

/// Mean and population standard deviation over time for every
/// (channel, frequency) cell: `[means..., stds...]`, length `2·C·F`.
pub fn stats_pool(x: &Tensor3) -> Vec<f64> {
    let cells = x.channels * x.freq;
    let mut out = vec![0.0; 2 * cells];
    let n = x.time as f64;
    for c in 0..x.channels {
        for f in 0..x.freq {
            let s = x.series(c, f);
            let mean = s.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
            let var = s.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n;
            let idx = c * x.freq + f;
            out[idx] = mean;
            out[cells + idx] = var.sqrt();
        }
    }
    out
}

/// Attention-weighted mean and standard deviation with weights `w_t`, which
/// must sum to one over time.
pub fn attentive_stats_pool(x: &Tensor3, weights: &[f64]) -> Vec<f64> {
    assert_eq!(weights.len(), x.time, "one attention weight per frame");
    let cells = x.channels * x.freq;
    let mut out = vec![0.0; 2 * cells];
    for c in 0..x.channels {
        for f in 0..x.freq {
            let s = x.series(c, f);
            let mean: f64 = s.iter().zip(weights).map(|(&v, w)| w * f64::from(v)).sum();
            let var: f64 = s
                .iter()
                .zip(weights)
                .map(|(&v, w)| w * (f64::from(v) - mean).powi(2))
                .sum();
            let idx = c * x.freq + f;
            out[idx] = mean;
            out[cells + idx] = var.max(0.0).sqrt();
        }
    }
    out
}

/// Frame-level attention: the per-channel frequency mean of each frame goes
/// through `tanh(W1·m + b1)`, a scalar score `v·h + b2`, and a softmax over time.
#[derive(Debug, Clone)]
pub struct AttentivePool {
    pub channels: usize,
    pub hidden: usize,
    pub w1: Param,
    pub b1: Param,
    pub v: Param,
    pub b2: Param,
}

impl AttentivePool {
    pub fn new(channels: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            channels,
            hidden,
            w1: Param::he_uniform(vec![hidden, channels], channels, rng),
            b1: Param::filled(vec![hidden], 0.0),
            v: Param::he_uniform(vec![hidden], hidden, rng),
            b2: Param::filled(vec![1], 0.0),
        }
    }

    pub fn attention_weights(&self, x: &Tensor3) -> Vec<f64> {
        assert_eq!(x.channels, self.channels, "attention input channels");
        let nf = x.freq as f64;
        let mut scores = Vec::with_capacity(x.time);
        let mut m = vec![0.0f64; x.channels];
        for t in 0..x.time {
            for (c, slot) in m.iter_mut().enumerate() {
                *slot = (0..x.freq).map(|f| f64::from(x.at(c, f, t))).sum::<f64>() / nf;
            }
            let e: f64 = self
                .w1
                .data
                .chunks_exact(self.channels)
                .zip(&self.b1.data)
                .zip(&self.v.data)
                .map(|((row, &b), &v)| {
                    let pre: f64 = row.iter().zip(&m).map(|(&w, &x)| f64::from(w) * x).sum();
                    f64::from(v) * (pre + f64::from(b)).tanh()
                })
                .sum::<f64>()
                + f64::from(self.b2.data[0]);
            scores.push(e);
        }
        softmax(&scores)
    }

    pub fn forward(&self, x: &Tensor3) -> Vec<f64> {
        attentive_stats_pool(x, &self.attention_weights(x))
    }

    pub(crate) fn collect<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a>) {
        out.push((format!("{prefix}.w1"), &self.w1));
        out.push((format!("{prefix}.b1"), &self.b1));
        out.push((format!("{prefix}.v"), &self.v));
        out.push((format!("{prefix}.b2"), &self.b2));
    }

    pub(crate) fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a>) {
        out.push((format!("{prefix}.w1"), &mut self.w1));
        out.push((format!("{prefix}.b1"), &mut self.b1));
        out.push((format!("{prefix}.v"), &mut self.v));
        out.push((format!("{prefix}.b2"), &mut self.b2));
    }
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|v| v / z).collect()
}
