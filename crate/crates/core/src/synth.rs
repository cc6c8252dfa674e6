//! Synthetic speaker embeddings with controllable difficulty.
//!
//! Speaker centroids are isotropic Gaussians with scale `between`; each
//! utterance adds isotropic noise with scale `within` and is L2-normalized.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::formats::EmbeddingStore;
use crate::nnet::Embedding;
use crate::par;
use crate::scoring::{Label, Trial, TrialList};
use crate::seed::derived_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub dim: usize,
    pub within: f64,
    pub between: f64,
    pub seed: u64,
    /// Cohort utterances, one per extra speaker.
    pub n_cohort: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_speakers: 500,
            utts_per_speaker: 5,
            dim: 64,
            within: 0.5,
            between: 1.0,
            seed: 0,
            n_cohort: 400,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.within > 0.0 && self.within.is_finite()) || !(self.between > 0.0 && self.between.is_finite()) {
            return Err(Error::invalid("spreads must be positive and finite"));
        }
        if self.dim < 2 {
            return Err(Error::invalid("dim must be at least 2"));
        }
        if self.n_speakers < 2 || self.utts_per_speaker < 2 {
            return Err(Error::invalid("need at least 2 speakers with 2 utterances each"));
        }
        Ok(())
    }

    /// Same-speaker pairs, which equals the nontarget count.
    pub fn n_target_trials(&self) -> usize {
        self.n_speakers * self.utts_per_speaker * (self.utts_per_speaker - 1) / 2
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub store: EmbeddingStore,
    pub cohort: EmbeddingStore,
    pub trials: TrialList,
}

pub fn utterance_id(speaker: usize, utt: usize) -> String {
    format!("spk{speaker:04}-utt{utt:03}")
}

fn gaussian(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
    let n = Normal::new(0.0, scale).expect("positive scale");
    (0..dim).map(|_| n.sample(rng)).collect()
}

fn unit(v: Vec<f64>) -> Result<Embedding> {
    Embedding(v)
        .normalized()
        .ok_or_else(|| Error::degenerate("synthetic vector has zero norm"))
}

fn speaker_utterances(spec: &SyntheticSpec, component: &str, speaker: usize, n: usize) -> Result<Vec<Embedding>> {
    let mut rng = derived_rng(spec.seed, component, speaker as u64);
    let centroid = gaussian(&mut rng, spec.dim, spec.between);
    (0..n)
        .map(|_| {
            let noise = gaussian(&mut rng, spec.dim, spec.within);
            unit(centroid.iter().zip(noise).map(|(c, e)| c + e).collect())
        })
        .collect()
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let speakers: Vec<usize> = (0..spec.n_speakers).collect();
    let per_speaker = par::map(&speakers, |&s| {
        speaker_utterances(spec, "synth.speaker", s, spec.utts_per_speaker)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut store = EmbeddingStore::new(spec.dim);
    for (s, utts) in per_speaker.into_iter().enumerate() {
        for (u, v) in utts.into_iter().enumerate() {
            store.insert(utterance_id(s, u), v)?;
        }
    }

    let cohort_idx: Vec<usize> = (0..spec.n_cohort).collect();
    let cohort_vecs = par::map(&cohort_idx, |&c| {
        speaker_utterances(spec, "synth.cohort", c, 1).map(|mut v| v.remove(0))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut cohort = EmbeddingStore::new(spec.dim);
    for (c, v) in cohort_vecs.into_iter().enumerate() {
        cohort.insert(format!("coh{c:05}"), v)?;
    }

    let mut trials = Vec::with_capacity(2 * spec.n_target_trials());
    for s in 0..spec.n_speakers {
        for a in 0..spec.utts_per_speaker {
            for b in a + 1..spec.utts_per_speaker {
                trials.push(Trial {
                    label: Some(Label::Target),
                    enroll: utterance_id(s, a),
                    test: utterance_id(s, b),
                });
            }
        }
    }
    let n_targets = trials.len();
    let mut rng = derived_rng(spec.seed, "synth.nontarget", 0);
    let mut seen = HashSet::new();
    let u = spec.utts_per_speaker;
    while trials.len() < 2 * n_targets {
        let s1 = rng.random_range(0..spec.n_speakers);
        let s2 = rng.random_range(0..spec.n_speakers - 1);
        let s2 = if s2 >= s1 { s2 + 1 } else { s2 };
        let (u1, u2) = (rng.random_range(0..u), rng.random_range(0..u));
        let key = (s1.min(s2), s1.max(s2), if s1 < s2 { (u1, u2) } else { (u2, u1) });
        if seen.insert(key) {
            trials.push(Trial {
                label: Some(Label::Nontarget),
                enroll: utterance_id(s1, u1),
                test: utterance_id(s2, u2),
            });
        }
    }
    Ok(SyntheticData {
        store,
        cohort,
        trials: TrialList::new(trials),
    })
}
