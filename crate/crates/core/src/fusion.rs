//! Score-level fusion: per-system min-max scaling followed by a convex
//! weighted sum, with a lattice search over the weight simplex.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::metrics::{eer_from_sweep, min_dcf_from_sweep, roc_sweep, DcfConfig};
use crate::par;
use crate::scoring::{Label, ScoreSet, Trial, TrialList};

pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Maps the scores affinely onto `[0, 1]`.
pub fn minmax_scale(scores: &ScoreSet) -> Result<ScoreSet> {
    let lo = scores.scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if scores.is_empty() || !(hi > lo) {
        return Err(Error::degenerate(format!(
            "system '{}' has constant scores",
            scores.system_id
        )));
    }
    let range = hi - lo;
    scores.with_scores(scores.scores.iter().map(|s| (s - lo) / range).collect())
}

/// Nonnegative per-system weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    entries: Vec<(String, f64)>,
}

impl FusionWeights {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("no fusion weights"));
        }
        let mut seen = HashSet::new();
        for (id, w) in &entries {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate weight for system '{id}'")));
            }
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::invalid(format!("weight {w} for '{id}' is negative or not finite")));
            }
        }
        let sum: f64 = entries.iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self { entries })
    }

    pub fn uniform(ids: &[String]) -> Result<Self> {
        let w = 1.0 / ids.len().max(1) as f64;
        Self::new(ids.iter().map(|id| (id.clone(), w)).collect())
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.entries.iter().find(|(k, _)| k == id).map(|&(_, w)| w)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|&(_, w)| w).collect()
    }
}

impl fmt::Display for FusionWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.entries.iter().map(|(id, w)| format!("{w}·{id}")).collect();
        write!(f, "{}", parts.join(" + "))
    }
}

fn keys_as_trials(keys: &[(String, String)]) -> TrialList {
    TrialList::new(
        keys.iter()
            .map(|(e, t)| Trial {
                label: None,
                enroll: e.clone(),
                test: t.clone(),
            })
            .collect(),
    )
}

/// Aligns every set to the first set's trial order. Sets must cover
/// exactly the same trials.
fn align_all(sets: &[ScoreSet]) -> Result<Vec<ScoreSet>> {
    let first = sets.first().ok_or_else(|| Error::invalid("no score sets to fuse"))?;
    let trials = keys_as_trials(&first.keys);
    sets.iter()
        .map(|s| {
            if s.len() != first.len() {
                return Err(Error::invalid(format!(
                    "system '{}' has {} trials, '{}' has {}",
                    s.system_id,
                    s.len(),
                    first.system_id,
                    first.len()
                )));
            }
            s.align_to(&trials)
        })
        .collect()
}

fn scaled_columns(sets: &[ScoreSet]) -> Result<Vec<ScoreSet>> {
    align_all(sets)?.iter().map(minmax_scale).collect()
}

fn weighted_sum(columns: &[&[f64]], weights: &[f64]) -> Vec<f64> {
    let n = columns.first().map_or(0, |c| c.len());
    (0..n)
        .map(|i| columns.iter().zip(weights).map(|(c, w)| w * c[i]).sum())
        .collect()
}

/// `Σ_k w_k · minmax(s_k)` per trial, in the first set's trial order.
pub fn fuse(sets: &[ScoreSet], weights: &FusionWeights) -> Result<ScoreSet> {
    let scaled = scaled_columns(sets)?;
    let ids: HashSet<&str> = scaled.iter().map(|s| s.system_id.as_str()).collect();
    if ids.len() != scaled.len() {
        return Err(Error::invalid("duplicate system ids among score sets"));
    }
    for (id, _) in weights.entries() {
        if !ids.contains(id.as_str()) {
            return Err(Error::invalid(format!("weight given for unknown system '{id}'")));
        }
    }
    let w = scaled
        .iter()
        .map(|s| {
            weights
                .get(&s.system_id)
                .ok_or_else(|| Error::invalid(format!("no weight for system '{}'", s.system_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let cols: Vec<&[f64]> = scaled.iter().map(|s| s.scores.as_slice()).collect();
    let fused = weighted_sum(&cols, &w)
        .into_iter()
        .map(|v: f64| v.clamp(0.0, 1.0))
        .collect();
    ScoreSet::new("fused", scaled[0].keys.clone(), fused)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// minDCF, ties broken by EER.
    Dcf,
    /// EER, ties broken by minDCF.
    Eer,
}

impl Objective {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dcf" | "mindcf" => Ok(Objective::Dcf),
            "eer" => Ok(Objective::Eer),
            other => Err(Error::invalid(format!("unknown objective '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub coarse_step: f64,
    pub fine_step: f64,
    pub objective: Objective,
    pub dcf: DcfConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            coarse_step: 0.05,
            fine_step: 0.01,
            objective: Objective::Dcf,
            dcf: DcfConfig::default(),
        }
    }
}

impl SearchConfig {
    /// Single-resolution search: the lattice itself is at `g`.
    pub fn with_granularity(g: f64) -> Self {
        Self {
            coarse_step: g,
            fine_step: g,
            ..Self::default()
        }
    }
}

fn units_of(step: f64) -> Result<u32> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::invalid(format!("step {step} not in (0, 1]")));
    }
    let n = (1.0 / step).round();
    if ((1.0 / step) - n).abs() > 1e-6 {
        return Err(Error::invalid(format!("step {step} does not divide 1")));
    }
    Ok(n as u32)
}

/// One evaluated weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub weights: Vec<f64>,
    /// Percent.
    pub eer: f64,
    pub dcf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub weights: FusionWeights,
    pub eer: f64,
    pub dcf: f64,
    pub objective: f64,
    pub trace: Vec<TracePoint>,
}

impl SearchResult {
    /// One row per evaluated candidate: `w_<id>...,EER,DCF`.
    pub fn trace_csv(&self) -> String {
        let mut s: String = self
            .weights
            .entries()
            .iter()
            .map(|(id, _)| format!("w_{id},"))
            .collect();
        s.push_str("EER,DCF\n");
        for p in &self.trace {
            for w in &p.weights {
                s.push_str(&format!("{w:.4},"));
            }
            s.push_str(&format!("{:.10},{:.10}\n", p.eer, p.dcf));
        }
        s
    }
}

/// Every composition of `total` into `k` nonnegative parts, in
/// lexicographic order.
pub fn simplex_lattice(k: usize, total: u32) -> Vec<Vec<u32>> {
    fn rec(k: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in 0..=left {
            cur.push(v);
            rec(k - 1, left - v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        rec(k, total, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

struct Evaluator<'a> {
    columns: Vec<&'a [f64]>,
    labels: &'a [Label],
    units: u32,
    cfg: SearchConfig,
}

impl Evaluator<'_> {
    fn eval(&self, units: &[u32]) -> Result<TracePoint> {
        let weights: Vec<f64> = units.iter().map(|&u| f64::from(u) / f64::from(self.units)).collect();
        let fused = weighted_sum(&self.columns, &weights);
        let sweep = roc_sweep(&fused, self.labels)?;
        Ok(TracePoint {
            weights,
            eer: eer_from_sweep(&sweep).0 * 100.0,
            dcf: min_dcf_from_sweep(&sweep, &self.cfg.dcf).0,
        })
    }

    fn key(&self, p: &TracePoint) -> (f64, f64) {
        match self.cfg.objective {
            Objective::Dcf => (p.dcf, p.eer),
            Objective::Eer => (p.eer, p.dcf),
        }
    }

    fn better(&self, a: &TracePoint, b: &TracePoint) -> bool {
        let (ka, kb) = (self.key(a), self.key(b));
        ka.0 < kb.0 || (ka.0 == kb.0 && ka.1 < kb.1)
    }
}

/// Weight search: a full lattice scan at `coarse_step`, then pairwise
/// transfers of `fine_step` between systems until no transfer improves the
/// objective. Ties keep the earlier candidate.
pub fn search_weights(sets: &[ScoreSet], labels: &[Label], cfg: &SearchConfig) -> Result<SearchResult> {
    cfg.dcf.validate()?;
    if labels.is_empty() {
        return Err(Error::invalid("no labeled trials"));
    }
    let scaled = scaled_columns(sets)?;
    if labels.len() != scaled[0].len() {
        return Err(Error::invalid(format!(
            "{} labels for {} trials",
            labels.len(),
            scaled[0].len()
        )));
    }
    let coarse_units = units_of(cfg.coarse_step)?;
    let fine_units = units_of(cfg.fine_step)?;
    if fine_units % coarse_units != 0 {
        return Err(Error::invalid(format!(
            "coarse step {} is not a multiple of fine step {}",
            cfg.coarse_step, cfg.fine_step
        )));
    }
    let ratio = fine_units / coarse_units;
    let ev = Evaluator {
        columns: scaled.iter().map(|s| s.scores.as_slice()).collect(),
        labels,
        units: fine_units,
        cfg: *cfg,
    };
    let k = scaled.len();

    let lattice: Vec<Vec<u32>> = simplex_lattice(k, coarse_units)
        .into_iter()
        .map(|v| v.into_iter().map(|u| u * ratio).collect())
        .collect();
    let mut trace = par::map(&lattice, |u| ev.eval(u))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut best_idx = 0;
    for i in 1..trace.len() {
        if ev.better(&trace[i], &trace[best_idx]) {
            best_idx = i;
        }
    }
    let mut best_units = lattice[best_idx].clone();
    let mut best = trace[best_idx].clone();

    if ratio > 1 {
        loop {
            let moves: Vec<Vec<u32>> = (0..k)
                .flat_map(|from| (0..k).map(move |to| (from, to)))
                .filter(|&(from, to)| from != to && best_units[from] > 0)
                .map(|(from, to)| {
                    let mut u = best_units.clone();
                    u[from] -= 1;
                    u[to] += 1;
                    u
                })
                .collect();
            let points = par::map(&moves, |u| ev.eval(u))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let mut improved = None;
            for (i, p) in points.iter().enumerate() {
                let incumbent = improved.map_or(&best, |j: usize| &points[j]);
                if ev.better(p, incumbent) {
                    improved = Some(i);
                }
            }
            trace.extend(points.iter().cloned());
            match improved {
                Some(i) => {
                    best_units = moves[i].clone();
                    best = points[i].clone();
                }
                None => break,
            }
        }
    }

    let weights = FusionWeights::new(
        scaled
            .iter()
            .zip(&best.weights)
            .map(|(s, &w)| (s.system_id.clone(), w))
            .collect(),
    )?;
    let objective = ev.key(&best).0;
    Ok(SearchResult {
        weights,
        eer: best.eer,
        dcf: best.dcf,
        objective,
        trace,
    })
}
