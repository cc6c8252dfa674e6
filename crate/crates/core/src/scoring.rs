//! Trial scoring and adaptive symmetric score normalization (AS-norm).
//!
//! A trial score is the mean cosine over all pairs of evaluation-segment
//! embeddings of the two utterances (10 × 10 by default).
//!
//! AS-norm scores each side's utterance vector against every cohort vector,
//! keeps the `X` highest scores (ties by cohort index), and normalizes with
//! their mean and population standard deviation:
//!
//! ```text
//! s' = ½·[(s − μ_e)/σ_e + (s − μ_t)/σ_t]
//! ```

use std::collections::{BTreeSet, HashMap};

use ndarray::{s, Axis};
use rand::seq::index::sample;

use crate::dsp::{crop_or_wrap, FeatureMatrix, OffsetPolicy, Waveform};
use crate::error::{Error, Result};
use crate::metrics::{eer_from_sweep, min_dcf_from_sweep, roc_sweep, DcfConfig};
use crate::nnet::Embedding;
use crate::par;
use crate::seed::derived_rng;

pub const EVAL_SEGMENTS: usize = 10;
pub const EVAL_SEGMENT_SECONDS: f64 = 4.0;

/// Cohort spread below this is treated as degenerate.
pub const SIGMA_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Target,
    Nontarget,
}

impl Label {
    pub fn from_flag(flag: &str) -> Result<Self> {
        match flag {
            "1" => Ok(Label::Target),
            "0" => Ok(Label::Nontarget),
            other => Err(Error::format("trial list", format!("label '{other}' is not 0 or 1"))),
        }
    }

    pub fn flag(self) -> char {
        match self {
            Label::Target => '1',
            Label::Nontarget => '0',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub label: Option<Label>,
    pub enroll: String,
    pub test: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrialList {
    pub trials: Vec<Trial>,
}

impl TrialList {
    pub fn new(trials: Vec<Trial>) -> Self {
        Self { trials }
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Labels of every trial; errors if any trial is unlabeled.
    pub fn labels(&self) -> Result<Vec<Label>> {
        self.trials
            .iter()
            .enumerate()
            .map(|(i, t)| {
                t.label
                    .ok_or_else(|| Error::invalid(format!("trial {i} has no label")))
            })
            .collect()
    }

    pub fn keys(&self) -> Vec<(String, String)> {
        self.trials
            .iter()
            .map(|t| (t.enroll.clone(), t.test.clone()))
            .collect()
    }

    /// Distinct utterance ids in first-appearance order.
    pub fn utterances(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for t in &self.trials {
            for id in [&t.enroll, &t.test] {
                if seen.insert(id.as_str()) {
                    out.push(id.clone());
                }
            }
        }
        out
    }
}

/// One score per trial, in trial-list order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub system_id: String,
    pub keys: Vec<(String, String)>,
    pub scores: Vec<f64>,
}

impl ScoreSet {
    pub fn new(system_id: impl Into<String>, keys: Vec<(String, String)>, scores: Vec<f64>) -> Result<Self> {
        if keys.len() != scores.len() {
            return Err(Error::invalid(format!(
                "{} keys for {} scores",
                keys.len(),
                scores.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("score {i} is not finite")));
        }
        Ok(Self {
            system_id: system_id.into(),
            keys,
            scores,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn with_scores(&self, scores: Vec<f64>) -> Result<Self> {
        Self::new(self.system_id.clone(), self.keys.clone(), scores)
    }

    /// Reorders to match `trials`; every trial must be present.
    pub fn align_to(&self, trials: &TrialList) -> Result<Self> {
        let index: HashMap<(&str, &str), usize> = self
            .keys
            .iter()
            .enumerate()
            .map(|(i, (e, t))| ((e.as_str(), t.as_str()), i))
            .collect();
        let scores = trials
            .trials
            .iter()
            .map(|t| {
                index
                    .get(&(t.enroll.as_str(), t.test.as_str()))
                    .map(|&i| self.scores[i])
                    .ok_or_else(|| {
                        Error::invalid(format!(
                            "system '{}' has no score for trial {} {}",
                            self.system_id, t.enroll, t.test
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.system_id.clone(), trials.keys(), scores)
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Start offsets of `n` evenly spaced windows of `seg` samples over `len`
/// samples (inclusive linear spacing).
pub fn segment_offsets(len: usize, seg: usize, n: usize) -> Vec<usize> {
    let span = len.saturating_sub(seg);
    if n <= 1 {
        return vec![0; n];
    }
    (0..n)
        .map(|k| round_half_up(span as f64 * k as f64 / (n - 1) as f64))
        .collect()
}

/// `n` evenly spaced segments of `seg_len_s` seconds; short input is
/// wrap-padded to one segment first.
pub fn sample_eval_segments(wave: &Waveform, n: usize, seg_len_s: f64) -> Result<Vec<Waveform>> {
    let seg = wave.seconds_to_samples(seg_len_s);
    if seg == 0 || n == 0 {
        return Err(Error::invalid("segment length and count must be positive"));
    }
    let padded;
    let wave = if wave.len() < seg {
        padded = crop_or_wrap(wave, seg, OffsetPolicy::Fixed(0))?;
        &padded
    } else {
        wave
    };
    Ok(segment_offsets(wave.len(), seg, n)
        .into_iter()
        .map(|o| Waveform {
            samples: wave.samples[o..o + seg].to_vec(),
            sample_rate: wave.sample_rate,
        })
        .collect())
}

/// `n` evenly spaced windows of `seg_frames` frames; short input is
/// wrap-padded along time first.
pub fn sample_feature_segments(feat: &FeatureMatrix, n: usize, seg_frames: usize) -> Result<Vec<FeatureMatrix>> {
    let frames = feat.n_frames();
    if seg_frames == 0 || n == 0 || frames == 0 {
        return Err(Error::invalid("segment length, count and input must be non-empty"));
    }
    let padded;
    let src = if frames < seg_frames {
        let rows: Vec<usize> = (0..seg_frames).map(|t| t % frames).collect();
        padded = feat.with_values(feat.values.select(Axis(0), &rows));
        &padded
    } else {
        feat
    };
    Ok(segment_offsets(src.n_frames(), seg_frames, n)
        .into_iter()
        .map(|o| src.with_values(src.values.slice(s![o..o + seg_frames, ..]).to_owned()))
        .collect())
}

pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!("dimensions {} and {} differ", a.dim(), b.dim())));
    }
    let (na, nb) = (a.norm(), b.norm());
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(Error::degenerate("cosine of a zero vector"));
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit_all(embs: &[Embedding]) -> Result<Vec<Embedding>> {
    embs.iter()
        .map(|e| {
            e.normalized()
                .ok_or_else(|| Error::degenerate("zero embedding in trial"))
        })
        .collect()
}

/// Mean pairwise cosine between two sets of segment embeddings.
pub fn trial_score(enroll: &[Embedding], test: &[Embedding]) -> Result<f64> {
    if enroll.is_empty() || test.is_empty() {
        return Err(Error::invalid("trial side has no embeddings"));
    }
    let e = unit_all(enroll)?;
    let t = unit_all(test)?;
    trial_score_unit(&e, &t)
}

/// [`trial_score`] for embeddings that are already unit length.
pub fn trial_score_unit(enroll: &[Embedding], test: &[Embedding]) -> Result<f64> {
    if enroll.is_empty() || test.is_empty() {
        return Err(Error::invalid("trial side has no embeddings"));
    }
    let dim = enroll[0].dim();
    if enroll.iter().chain(test).any(|e| e.dim() != dim) {
        return Err(Error::invalid("embedding dimensions differ"));
    }
    let mut total = 0.0;
    for a in enroll {
        for b in test {
            total += dot(&a.0, &b.0);
        }
    }
    Ok(total / (enroll.len() * test.len()) as f64)
}

/// Scores every trial. `embeddings` maps utterance id to its segment
/// embeddings.
pub fn score_trials(
    trials: &TrialList,
    embeddings: &HashMap<String, Vec<Embedding>>,
    system_id: &str,
) -> Result<ScoreSet> {
    let mut unit: HashMap<&str, Vec<Embedding>> = HashMap::new();
    for id in trials.utterances() {
        let embs = embeddings
            .get(&id)
            .ok_or_else(|| Error::invalid(format!("no embeddings for utterance '{id}'")))?;
        let (key, _) = embeddings.get_key_value(&id).expect("present");
        unit.insert(key.as_str(), unit_all(embs)?);
    }
    let scores = par::map(&trials.trials, |t| {
        trial_score_unit(&unit[t.enroll.as_str()], &unit[t.test.as_str()])
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    ScoreSet::new(system_id, trials.keys(), scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CohortConfig {
    pub size: usize,
    pub top_x: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            size: 3000,
            top_x: 200,
            repeats: 10,
            seed: 0,
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_x == 0 || self.top_x > self.size {
            return Err(Error::invalid(format!(
                "top-X {} must be in 1..={}",
                self.top_x, self.size
            )));
        }
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be positive"));
        }
        Ok(())
    }
}

/// Mean and standard deviation of one utterance's top-X cohort scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mu: f64,
    pub sigma: f64,
}

impl NormStats {
    /// Statistics of the `top_x` largest values of `scores`.
    pub fn from_scores(scores: &[f64], top_x: usize) -> Result<Self> {
        if top_x == 0 || top_x > scores.len() {
            return Err(Error::invalid(format!(
                "top-X {top_x} exceeds cohort of {}",
                scores.len()
            )));
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
        if top_x < order.len() {
            order.select_nth_unstable_by(top_x - 1, cmp);
        }
        let top = &order[..top_x];
        let n = top_x as f64;
        let mu = top.iter().map(|&i| scores[i]).sum::<f64>() / n;
        let var = top.iter().map(|&i| (scores[i] - mu).powi(2)).sum::<f64>() / n;
        let sigma = var.sqrt();
        if !(sigma > SIGMA_EPS) {
            return Err(Error::degenerate(format!(
                "top-{top_x} cohort scores have zero spread"
            )));
        }
        Ok(Self { mu, sigma })
    }

    pub fn normalize(&self, raw: f64) -> f64 {
        (raw - self.mu) / self.sigma
    }
}

/// Cohort of unit-length utterance vectors.
#[derive(Debug, Clone)]
pub struct Cohort {
    vectors: Vec<Embedding>,
}

impl Cohort {
    pub fn new(vectors: &[Embedding]) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::invalid("empty cohort"));
        }
        Ok(Self {
            vectors: unit_all(vectors)?,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn scores(&self, unit: &Embedding) -> Vec<f64> {
        self.vectors.iter().map(|c| dot(&unit.0, &c.0)).collect()
    }

    pub fn stats(&self, vector: &Embedding, top_x: usize) -> Result<NormStats> {
        let unit = vector
            .normalized()
            .ok_or_else(|| Error::degenerate("zero utterance vector"))?;
        NormStats::from_scores(&self.scores(&unit), top_x)
    }
}

pub fn asnorm_from_stats(raw: f64, enroll: &NormStats, test: &NormStats) -> f64 {
    0.5 * (enroll.normalize(raw) + test.normalize(raw))
}

/// AS-norm of one raw score against a cohort.
pub fn asnorm(raw: f64, enroll: &Embedding, test: &Embedding, cohort: &[Embedding], top_x: usize) -> Result<f64> {
    let cohort = Cohort::new(cohort)?;
    let e = cohort.stats(enroll, top_x)?;
    let t = cohort.stats(test, top_x)?;
    Ok(asnorm_from_stats(raw, &e, &t))
}

/// Normalizes every trial; statistics are computed once per utterance.
/// Trials whose statistics are degenerate come back as `Err`.
pub fn normalize_trials(
    raw: &ScoreSet,
    trials: &TrialList,
    vectors: &HashMap<String, Embedding>,
    cohort: &Cohort,
    top_x: usize,
) -> Result<Vec<Result<f64>>> {
    if raw.len() != trials.len() {
        return Err(Error::invalid("score set does not cover the trial list"));
    }
    let ids = trials.utterances();
    let stats: Vec<Result<NormStats>> = par::map(&ids, |id| {
        let v = vectors
            .get(id)
            .ok_or_else(|| Error::invalid(format!("no utterance vector for '{id}'")))?;
        cohort.stats(v, top_x)
    });
    let mut by_id: HashMap<&str, &Result<NormStats>> = HashMap::new();
    for (id, s) in ids.iter().zip(&stats) {
        if let Err(Error::InvalidInput(msg)) = s {
            return Err(Error::InvalidInput(msg.clone()));
        }
        by_id.insert(id.as_str(), s);
    }
    Ok(trials
        .trials
        .iter()
        .zip(&raw.scores)
        .map(|(t, &s)| match (by_id[t.enroll.as_str()], by_id[t.test.as_str()]) {
            (Ok(e), Ok(v)) => Ok(asnorm_from_stats(s, e, v)),
            (Err(e), _) | (_, Err(e)) => Err(Error::degenerate(format!(
                "trial {} {}: {e}",
                t.enroll, t.test
            ))),
        })
        .collect())
}

/// Normalizes every trial or fails on the first degenerate one.
pub fn normalize_scores(
    raw: &ScoreSet,
    trials: &TrialList,
    vectors: &HashMap<String, Embedding>,
    cohort: &Cohort,
    top_x: usize,
) -> Result<ScoreSet> {
    let scores = normalize_trials(raw, trials, vectors, cohort, top_x)?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    raw.with_scores(scores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub n: usize,
    pub x: usize,
    pub eer_mean: f64,
    pub eer_std: f64,
    pub dcf_mean: f64,
    pub dcf_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub cells: Vec<GridCell>,
    pub skipped: Vec<(usize, usize, String)>,
    /// Index into `cells` of the minimum mean DCF.
    pub selected: Option<usize>,
}

impl GridReport {
    pub fn selected_cell(&self) -> Option<&GridCell> {
        self.selected.map(|i| &self.cells[i])
    }

    /// `N,X,EER_mean,EER_std,DCF_mean,DCF_std,selected`, one row per evaluated cell.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("N,X,EER_mean,EER_std,DCF_mean,DCF_std,selected\n");
        for (i, c) in self.cells.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{:.10},{:.10},{:.10},{:.10},{}\n",
                c.n,
                c.x,
                c.eer_mean,
                c.eer_std,
                c.dcf_mean,
                c.dcf_std,
                u8::from(self.selected == Some(i))
            ));
        }
        s
    }
}

/// Index minimizing mean DCF; ties go to smaller N, then smaller X.
pub fn select_cell(cells: &[GridCell]) -> Option<usize> {
    (0..cells.len()).min_by(|&a, &b| {
        let (p, q) = (&cells[a], &cells[b]);
        p.dcf_mean
            .total_cmp(&q.dcf_mean)
            .then(p.n.cmp(&q.n))
            .then(p.x.cmp(&q.x))
    })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Seeded cohort draw of `size` members from a pool of `pool_len`.
pub fn draw_cohort(pool_len: usize, size: usize, master_seed: u64, repeat: usize) -> Vec<usize> {
    let mut rng = derived_rng(master_seed, &format!("norm.cohort.{size}"), repeat as u64);
    let mut idx = sample(&mut rng, pool_len, size).into_vec();
    idx.sort_unstable();
    idx
}

/// Evaluates every (N, X) cell over `repeats` random cohorts drawn from
/// `dev_pool` and selects the cell with the lowest mean minDCF.
#[allow(clippy::too_many_arguments)]
pub fn grid_search_norm(
    raw: &ScoreSet,
    trials: &TrialList,
    vectors: &HashMap<String, Embedding>,
    dev_pool: &[Embedding],
    ns: &[usize],
    xs: &[usize],
    repeats: usize,
    master_seed: u64,
    dcf: &DcfConfig,
) -> Result<GridReport> {
    let labels = trials.labels()?;
    if repeats == 0 {
        return Err(Error::invalid("repeats must be positive"));
    }
    let max_n = ns.iter().copied().max().unwrap_or(0);
    if dev_pool.len() < max_n {
        return Err(Error::invalid(format!(
            "development pool has {} vectors, grid needs {max_n}",
            dev_pool.len()
        )));
    }
    let pool = unit_all(dev_pool)?;
    let mut jobs = Vec::new();
    let mut skipped = Vec::new();
    for &n in ns {
        for &x in xs {
            if x == 0 || x > n {
                skipped.push((n, x, format!("X={x} not in 1..=N={n}")));
            } else {
                jobs.push((n, x));
            }
        }
    }
    let runs: Vec<(usize, usize, usize)> = jobs
        .iter()
        .flat_map(|&(n, x)| (0..repeats).map(move |r| (n, x, r)))
        .collect();
    let results = par::map(&runs, |&(n, x, r)| -> Result<(f64, f64)> {
        let members: Vec<Embedding> = draw_cohort(pool.len(), n, master_seed, r)
            .into_iter()
            .map(|i| pool[i].clone())
            .collect();
        let cohort = Cohort { vectors: members };
        let normed = normalize_scores(raw, trials, vectors, &cohort, x)?;
        let sweep = roc_sweep(&normed.scores, &labels)?;
        Ok((eer_from_sweep(&sweep).0 * 100.0, min_dcf_from_sweep(&sweep, dcf).0))
    });
    let mut cells = Vec::new();
    for (j, &(n, x)) in jobs.iter().enumerate() {
        let chunk = &results[j * repeats..(j + 1) * repeats];
        if let Some(Err(e)) = chunk.iter().find(|r| r.is_err()) {
            if e.is_degenerate() {
                skipped.push((n, x, e.to_string()));
                continue;
            }
            return Err(Error::invalid(e.to_string()));
        }
        let (eers, dcfs): (Vec<f64>, Vec<f64>) = chunk.iter().map(|r| *r.as_ref().expect("ok")).unzip();
        let (eer_mean, eer_std) = mean_std(&eers);
        let (dcf_mean, dcf_std) = mean_std(&dcfs);
        cells.push(GridCell {
            n,
            x,
            eer_mean,
            eer_std,
            dcf_mean,
            dcf_std,
        });
    }
    let selected = select_cell(&cells);
    Ok(GridReport {
        cells,
        skipped,
        selected,
    })
}
