//! Data augmentation: additive noise at a target SNR, reverberation,
//! spectral masking, and offline augmentation manifests.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::{crop_or_wrap, mean_power, FeatureMatrix, OffsetPolicy, Waveform};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub const SEGMENT_WIDTH_S: f64 = 5.0;
pub const SEGMENT_STEP_S: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Speech,
    Music,
    Noise,
    Rir,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Speech,
        Category::Music,
        Category::Noise,
        Category::Rir,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPolicy {
    pub category: Category,
    pub snr_range_db: (f64, f64),
    pub n_sources_range: (usize, usize),
}

impl AugmentPolicy {
    pub fn default_for(category: Category) -> Self {
        let (snr_range_db, n_sources_range) = match category {
            Category::Speech => ((13.0, 20.0), (3, 7)),
            Category::Music => ((5.0, 15.0), (1, 1)),
            Category::Noise => ((0.0, 15.0), (1, 1)),
            Category::Rir => ((0.0, 0.0), (1, 1)),
        };
        Self {
            category,
            snr_range_db,
            n_sources_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.snr_range_db;
        let (nlo, nhi) = self.n_sources_range;
        if !(lo <= hi) || nlo > nhi || nlo == 0 {
            return Err(Error::invalid(format!("invalid policy {self:?}")));
        }
        Ok(())
    }

    fn draw_snr(&self, rng: &mut impl Rng) -> f64 {
        let (lo, hi) = self.snr_range_db;
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    }
}

/// Noise recordings cut into fixed-width segments, grouped by category.
#[derive(Debug, Clone, Default)]
pub struct NoiseCorpus {
    segments: BTreeMap<Category, Vec<Waveform>>,
}

impl NoiseCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Segments `recording` (5 s width, 3 s step) and files the pieces under
    /// `category`. Recordings shorter than one segment contribute nothing.
    pub fn add_recording(&mut self, category: Category, recording: &Waveform) {
        let pieces = segment_corpus(recording, SEGMENT_WIDTH_S, SEGMENT_STEP_S);
        self.segments.entry(category).or_default().extend(pieces);
    }

    /// Adds an already segmented waveform as-is.
    pub fn add_segment(&mut self, category: Category, segment: Waveform) {
        self.segments.entry(category).or_default().push(segment);
    }

    pub fn segments(&self, category: Category) -> &[Waveform] {
        self.segments.get(&category).map_or(&[], Vec::as_slice)
    }

    fn require(&self, category: Category) -> Result<&[Waveform]> {
        let segs = self.segments(category);
        if segs.is_empty() {
            return Err(Error::invalid(format!("noise corpus has no {category:?} segments")));
        }
        Ok(segs)
    }
}

pub fn segment_corpus(wave: &Waveform, width_s: f64, step_s: f64) -> Vec<Waveform> {
    let width = wave.seconds_to_samples(width_s);
    let step = wave.seconds_to_samples(step_s);
    if width == 0 || step == 0 || wave.len() < width {
        return Vec::new();
    }
    (0..=(wave.len() - width) / step)
        .map(|i| Waveform {
            samples: wave.samples[i * step..i * step + width].to_vec(),
            sample_rate: wave.sample_rate,
        })
        .collect()
}

/// Fits a noise to `len` samples: wrap-tiles short noise, randomly crops long noise.
fn fit_noise(noise: &Waveform, len: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let policy = OffsetPolicy::Random(rng.random());
    Ok(crop_or_wrap(noise, len, policy)?.samples)
}

/// Sums `noises` (each fitted to the clean length) and scales the aggregate
/// so that `10·log10(P_clean / P_noise) = snr_db` before adding it.
pub fn mix_at_snr(
    clean: &Waveform,
    noises: &[Waveform],
    snr_db: f64,
    rng: &mut impl Rng,
) -> Result<Waveform> {
    let p_clean = clean.power();
    if p_clean <= 0.0 {
        return Err(Error::degenerate("clean signal has zero energy"));
    }
    if noises.is_empty() {
        return Err(Error::invalid("no noise sources given"));
    }
    let len = clean.len();
    let mut total = vec![0.0; len];
    for (i, noise) in noises.iter().enumerate() {
        if noise.power() <= 0.0 {
            return Err(Error::degenerate(format!("noise source {i} has zero energy")));
        }
        for (acc, v) in total.iter_mut().zip(fit_noise(noise, len, rng)?) {
            *acc += v;
        }
    }
    let p_noise = mean_power(&total);
    if p_noise <= 0.0 {
        return Err(Error::degenerate("summed noise has zero energy"));
    }
    let gain = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = clean
        .samples
        .iter()
        .zip(&total)
        .map(|(c, n)| c + gain * n)
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: clean.sample_rate,
    })
}

pub(crate) fn fft_convolve(x: &[f64], h: &[f64], out_len: usize) -> Vec<f64> {
    let full = x.len() + h.len() - 1;
    let n = full.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let load = |src: &[f64]| {
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (slot, &v) in buf.iter_mut().zip(src) {
            slot.re = v;
        }
        buf
    };
    let mut a = load(x);
    let mut b = load(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    a[..out_len.min(full)].iter().map(|c| c.re * scale).collect()
}

/// Convolves with `rir` (truncated to the input length) and rescales the
/// result to the input's power.
pub fn apply_rir(wave: &Waveform, rir: &Waveform) -> Result<Waveform> {
    if rir.is_empty() || rir.power() <= 0.0 {
        return Err(Error::degenerate("impulse response has zero energy"));
    }
    let mut samples = fft_convolve(&wave.samples, &rir.samples, wave.len());
    let p_in = wave.power();
    let p_out = mean_power(&samples);
    if p_out > 0.0 {
        let gain = (p_in / p_out).sqrt();
        samples.iter_mut().for_each(|v| *v *= gain);
    }
    Ok(Waveform {
        samples,
        sample_rate: wave.sample_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskSpec {
    pub max_time_mask_frames: usize,
    pub max_freq_mask_bins: usize,
    pub n_time_masks: usize,
    pub n_freq_masks: usize,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self {
            max_time_mask_frames: 10,
            max_freq_mask_bins: 8,
            n_time_masks: 1,
            n_freq_masks: 1,
        }
    }
}

/// Applies time and frequency masks filled with the matrix mean.
pub fn spec_mask(feat: &FeatureMatrix, spec: &MaskSpec, rng: &mut impl Rng) -> Result<FeatureMatrix> {
    let (frames, bins) = feat.values.dim();
    if spec.max_time_mask_frames > frames || spec.max_freq_mask_bins > bins {
        return Err(Error::invalid(format!(
            "mask widths {}x{} exceed matrix {frames}x{bins}",
            spec.max_time_mask_frames, spec.max_freq_mask_bins
        )));
    }
    let fill = feat.values.mean().unwrap_or(0.0);
    let mut values = feat.values.clone();
    for _ in 0..spec.n_time_masks {
        let width = rng.random_range(0..=spec.max_time_mask_frames);
        let start = rng.random_range(0..=frames - width);
        values
            .slice_mut(ndarray::s![start..start + width, ..])
            .fill(fill);
    }
    for _ in 0..spec.n_freq_masks {
        let width = rng.random_range(0..=spec.max_freq_mask_bins);
        let start = rng.random_range(0..=bins - width);
        values
            .slice_mut(ndarray::s![.., start..start + width])
            .fill(fill);
    }
    Ok(feat.with_values(values))
}

/// What [`augment_online`] drew.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineDraw {
    pub category: Category,
    pub snr_db: Option<f64>,
    /// Indices into the corpus segments (or the RIR list) that were used.
    pub sources: Vec<usize>,
}

/// Picks one of speech, music, noise or reverberation uniformly and applies it.
pub fn augment_online(
    wave: &Waveform,
    corpus: &NoiseCorpus,
    rirs: &[Waveform],
    rng: &mut impl Rng,
) -> Result<(Waveform, OnlineDraw)> {
    for cat in [Category::Speech, Category::Music, Category::Noise] {
        corpus.require(cat)?;
    }
    if rirs.is_empty() {
        return Err(Error::invalid("no impulse responses given"));
    }
    let category = *Category::ALL.choose(rng).expect("non-empty");
    let policy = AugmentPolicy::default_for(category);
    if category == Category::Rir {
        let idx = rng.random_range(0..rirs.len());
        let out = apply_rir(wave, &rirs[idx])?;
        return Ok((
            out,
            OnlineDraw {
                category,
                snr_db: None,
                sources: vec![idx],
            },
        ));
    }
    let segs = corpus.require(category)?;
    let (lo, hi) = policy.n_sources_range;
    let count = rng.random_range(lo..=hi);
    let sources: Vec<usize> = if count <= segs.len() {
        rand::seq::index::sample(rng, segs.len(), count).into_vec()
    } else {
        (0..count).map(|_| rng.random_range(0..segs.len())).collect()
    };
    let snr = policy.draw_snr(rng);
    let noises: Vec<Waveform> = sources.iter().map(|&i| segs[i].clone()).collect();
    let out = mix_at_snr(wave, &noises, snr, rng)?;
    Ok((
        out,
        OnlineDraw {
            category,
            snr_db: Some(snr),
            sources,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RoomClass {
    Small,
    Medium,
    Large,
}

impl RoomClass {
    pub const ALL: [RoomClass; 3] = [RoomClass::Small, RoomClass::Medium, RoomClass::Large];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Transform {
    None,
    Music,
    Noise,
    Speech,
    Rir(RoomClass),
    SpecMask,
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::None => "none",
            Transform::Music => "music",
            Transform::Noise => "noise",
            Transform::Speech => "speech",
            Transform::Rir(RoomClass::Small) => "rir_small",
            Transform::Rir(RoomClass::Medium) => "rir_medium",
            Transform::Rir(RoomClass::Large) => "rir_large",
            Transform::SpecMask => "specmask",
        })
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Transform::None,
            "music" => Transform::Music,
            "noise" => Transform::Noise,
            "speech" => Transform::Speech,
            "rir_small" => Transform::Rir(RoomClass::Small),
            "rir_medium" => Transform::Rir(RoomClass::Medium),
            "rir_large" => Transform::Rir(RoomClass::Large),
            "specmask" => Transform::SpecMask,
            other => return Err(Error::format("manifest", format!("unknown transform '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub id: String,
    pub path: String,
}

/// One augmentation directive. Audio is rendered from it on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub utterance_id: String,
    pub source_path: String,
    pub transform: Transform,
    pub seed: u64,
    pub params: Vec<(String, String)>,
}

impl ManifestRecord {
    pub fn param(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_line(&self) -> String {
        let mut line = format!(
            "{}\t{}\t{}\t{}",
            self.utterance_id, self.source_path, self.transform, self.seed
        );
        for (k, v) in &self.params {
            line.push('\t');
            line.push_str(k);
            line.push('=');
            line.push_str(v);
        }
        line
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 {
            return Err(Error::format(
                "manifest",
                format!("expected at least 4 tab-separated columns: '{line}'"),
            ));
        }
        let seed = cols[3]
            .parse()
            .map_err(|_| Error::format("manifest", format!("bad seed '{}'", cols[3])))?;
        let params = cols[4..]
            .iter()
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::format("manifest", format!("bad parameter '{kv}'")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            utterance_id: cols[0].to_string(),
            source_path: cols[1].to_string(),
            transform: cols[2].parse()?,
            seed,
            params,
        })
    }
}

/// Expands every utterance into the original plus music, noise, one RIR
/// room class and a spectral mask directive (5 records per input).
pub fn build_offline_manifest(
    utterances: &[Utterance],
    master_seed: u64,
    mask: &MaskSpec,
) -> Result<Vec<ManifestRecord>> {
    if utterances.is_empty() {
        return Err(Error::invalid("empty utterance list"));
    }
    let music = AugmentPolicy::default_for(Category::Music);
    let noise = AugmentPolicy::default_for(Category::Noise);
    let mut out = Vec::with_capacity(utterances.len() * 5);
    for (i, utt) in utterances.iter().enumerate() {
        let record = |transform: Transform, params: Vec<(String, String)>| {
            let seed = derive_seed(master_seed, &format!("offline.{transform}"), i as u64);
            ManifestRecord {
                utterance_id: utt.id.clone(),
                source_path: utt.path.clone(),
                transform,
                seed,
                params,
            }
        };
        let mut rng = crate::seed::derived_rng(master_seed, "offline.draw", i as u64);
        let snr = |policy: &AugmentPolicy, rng: &mut rand_chacha::ChaCha8Rng| {
            vec![("snr_db".to_string(), format!("{:.4}", policy.draw_snr(rng)))]
        };
        let room = RoomClass::ALL[rng.random_range(0..RoomClass::ALL.len())];
        out.push(record(Transform::None, vec![]));
        out.push(record(Transform::Music, snr(&music, &mut rng)));
        out.push(record(Transform::Noise, snr(&noise, &mut rng)));
        out.push(record(Transform::Rir(room), vec![]));
        out.push(record(
            Transform::SpecMask,
            vec![
                ("max_time".into(), mask.max_time_mask_frames.to_string()),
                ("max_freq".into(), mask.max_freq_mask_bins.to_string()),
                ("n_time".into(), mask.n_time_masks.to_string()),
                ("n_freq".into(), mask.n_freq_masks.to_string()),
            ],
        ));
    }
    Ok(out)
}

pub fn format_manifest(records: &[ManifestRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.to_line());
        s.push('\n');
    }
    s
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(ManifestRecord::parse_line)
        .collect()
}

/// Impulse responses grouped by room class.
#[derive(Debug, Clone, Default)]
pub struct RirSet {
    pub by_room: BTreeMap<RoomClass, Vec<Waveform>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rendered {
    Audio(Waveform),
    Features(FeatureMatrix),
}

/// Materializes one manifest record. Spectral masks act on `features`, which
/// the caller computes from the source audio.
pub fn render_record(
    record: &ManifestRecord,
    wave: &Waveform,
    corpus: &NoiseCorpus,
    rirs: &RirSet,
    features: impl FnOnce(&Waveform) -> Result<FeatureMatrix>,
) -> Result<Rendered> {
    let mut rng = crate::seed::rng_from_seed(record.seed);
    let snr = || -> Result<f64> {
        record
            .param("snr_db")
            .ok_or_else(|| Error::format("manifest", "missing snr_db"))?
            .parse()
            .map_err(|_| Error::format("manifest", "bad snr_db"))
    };
    let usize_param = |key: &str| -> Result<usize> {
        record
            .param(key)
            .ok_or_else(|| Error::format("manifest", format!("missing {key}")))?
            .parse()
            .map_err(|_| Error::format("manifest", format!("bad {key}")))
    };
    Ok(match record.transform {
        Transform::None => Rendered::Audio(wave.clone()),
        Transform::Music | Transform::Noise | Transform::Speech => {
            let (category, count) = match record.transform {
                Transform::Music => (Category::Music, 1),
                Transform::Noise => (Category::Noise, 1),
                _ => {
                    let (lo, hi) = AugmentPolicy::default_for(Category::Speech).n_sources_range;
                    (Category::Speech, rng.random_range(lo..=hi))
                }
            };
            let segs = corpus.require(category)?;
            let noises: Vec<Waveform> = (0..count)
                .map(|_| segs[rng.random_range(0..segs.len())].clone())
                .collect();
            Rendered::Audio(mix_at_snr(wave, &noises, snr()?, &mut rng)?)
        }
        Transform::Rir(room) => {
            let set = rirs
                .by_room
                .get(&room)
                .filter(|v| !v.is_empty())
                .ok_or_else(|| Error::invalid(format!("no {room:?} room impulse responses")))?;
            Rendered::Audio(apply_rir(wave, &set[rng.random_range(0..set.len())])?)
        }
        Transform::SpecMask => {
            let spec = MaskSpec {
                max_time_mask_frames: usize_param("max_time")?,
                max_freq_mask_bins: usize_param("max_freq")?,
                n_time_masks: usize_param("n_time")?,
                n_freq_masks: usize_param("n_freq")?,
            };
            Rendered::Features(spec_mask(&features(wave)?, &spec, &mut rng)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SAMPLE_RATE;
    use crate::seed::rng_from_seed;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_wave(n: usize, seed: u64) -> Waveform {
        let mut rng = rng_from_seed(seed);
        Waveform::new((0..n).map(|_| rng.random_range(-0.5..0.5)).collect(), SAMPLE_RATE).unwrap()
    }

    fn snr_db(clean: &Waveform, mixed: &Waveform) -> f64 {
        let noise: Vec<f64> = mixed
            .samples
            .iter()
            .zip(&clean.samples)
            .map(|(m, c)| m - c)
            .collect();
        10.0 * (clean.power() / mean_power(&noise)).log10()
    }

    fn naive_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|n| {
                (0..h.len())
                    .filter(|&k| k <= n)
                    .map(|k| h[k] * x[n - k])
                    .sum()
            })
            .collect()
    }

    #[test]
    fn segmenting() {
        let sr = SAMPLE_RATE as usize;
        assert_eq!(segment_corpus(&random_wave(13 * sr, 0), 5.0, 3.0).len(), 3);
        let segs = segment_corpus(&random_wave(13 * sr, 0), 5.0, 3.0);
        assert!(segs.iter().all(|s| s.len() == 5 * sr));
        assert_eq!(segment_corpus(&random_wave(5 * sr, 0), 5.0, 3.0).len(), 1);
        assert!(segment_corpus(&random_wave(49 * sr / 10, 0), 5.0, 3.0).is_empty());
    }

    proptest! {
        #[test]
        fn segment_count_formula(secs in 5usize..40) {
            let w = Waveform::new(vec![0.1; secs * 1000], 1000).unwrap();
            prop_assert_eq!(segment_corpus(&w, 5.0, 3.0).len(), (secs - 5) / 3 + 1);
        }

        #[test]
        fn achieved_snr_matches_request(seed in 0u64..500, snr in -5.0f64..30.0, n_noise in 1usize..4) {
            let clean = random_wave(2000, seed);
            let noises: Vec<_> = (0..n_noise).map(|k| random_wave(700 + 900 * k, seed + 1000 + k as u64)).collect();
            let mut rng = rng_from_seed(seed);
            let mixed = mix_at_snr(&clean, &noises, snr, &mut rng).unwrap();
            prop_assert!((snr_db(&clean, &mixed) - snr).abs() < 0.01);
        }

        #[test]
        fn rir_preserves_power(seed in 0u64..200, taps in 1usize..300) {
            let w = random_wave(3000, seed);
            let rir = random_wave(taps, seed + 7);
            let out = apply_rir(&w, &rir).unwrap();
            prop_assert!((out.power() - w.power()).abs() <= 1e-6 * w.power());
        }
    }

    #[test]
    fn high_snr_is_nearly_clean() {
        let clean = random_wave(4000, 1);
        let mut rng = rng_from_seed(2);
        let mixed = mix_at_snr(&clean, &[random_wave(4000, 3)], 100.0, &mut rng).unwrap();
        let diff: Vec<f64> = mixed.samples.iter().zip(&clean.samples).map(|(a, b)| a - b).collect();
        assert!((mean_power(&diff) / clean.power()).sqrt() < 1e-4);
    }

    #[test]
    fn aggregate_speech_noise_power() {
        let clean = random_wave(5000, 4);
        let noises: Vec<_> = (0..3).map(|k| random_wave(5000, 10 + k)).collect();
        let mut rng = rng_from_seed(5);
        let mixed = mix_at_snr(&clean, &noises, 13.0, &mut rng).unwrap();
        // Equal-length noises are used whole, so the residual is gain·Σnoise.
        let sum: Vec<f64> = (0..5000).map(|t| noises.iter().map(|n| n.samples[t]).sum()).collect();
        let gain = (clean.power() / (mean_power(&sum) * 10f64.powf(1.3))).sqrt();
        for t in 0..5000 {
            assert!((mixed.samples[t] - clean.samples[t] - gain * sum[t]).abs() < 1e-12);
        }
        assert!((snr_db(&clean, &mixed) - 13.0).abs() < 0.01);
    }

    #[test]
    fn zero_energy_inputs_rejected() {
        let silent = Waveform::new(vec![0.0; 100], SAMPLE_RATE).unwrap();
        let noise = random_wave(100, 0);
        let mut rng = rng_from_seed(0);
        assert!(mix_at_snr(&silent, &[noise.clone()], 10.0, &mut rng).unwrap_err().is_degenerate());
        assert!(mix_at_snr(&noise, &[silent.clone()], 10.0, &mut rng).unwrap_err().is_degenerate());
        assert!(apply_rir(&noise, &silent).unwrap_err().is_degenerate());
    }

    #[test]
    fn rir_identity_and_oracle() {
        let w = random_wave(1000, 8);
        let delta = Waveform::new(vec![1.0], SAMPLE_RATE).unwrap();
        let out = apply_rir(&w, &delta).unwrap();
        for (a, b) in out.samples.iter().zip(&w.samples) {
            assert!((a - b).abs() < 1e-12);
        }
        let scaled = Waveform::new(vec![0.1, 0.0, 0.0], SAMPLE_RATE).unwrap();
        let out = apply_rir(&w, &scaled).unwrap();
        for (a, b) in out.samples.iter().zip(&w.samples) {
            assert!((a - b).abs() < 1e-12);
        }

        let rir = random_wave(64, 9);
        let out = apply_rir(&w, &rir).unwrap();
        let mut expected = naive_convolve(&w.samples, &rir.samples);
        let gain = (w.power() / mean_power(&expected)).sqrt();
        expected.iter_mut().for_each(|v| *v *= gain);
        let peak = expected.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in out.samples.iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-9 * peak);
        }
    }

    #[test]
    fn masks() {
        let values = Array2::from_shape_fn((50, 40), |(t, f)| (t * 40 + f) as f64);
        let feat = FeatureMatrix::from_values(values);
        let none = MaskSpec {
            max_time_mask_frames: 0,
            max_freq_mask_bins: 0,
            n_time_masks: 2,
            n_freq_masks: 2,
        };
        assert_eq!(spec_mask(&feat, &none, &mut rng_from_seed(0)).unwrap(), feat);

        let time_only = MaskSpec {
            max_time_mask_frames: 12,
            max_freq_mask_bins: 0,
            n_time_masks: 1,
            n_freq_masks: 0,
        };
        let masked = spec_mask(&feat, &time_only, &mut rng_from_seed(3)).unwrap();
        let mut rng = rng_from_seed(3);
        let width: usize = rng.random_range(0..=12);
        let changed = feat
            .values
            .iter()
            .zip(masked.values.iter())
            .filter(|(a, b)| a != b)
            .count();
        // Cell values are distinct integers and the mean is 999.5, so every masked cell changes.
        assert_eq!(changed, width * 40);
        let again = spec_mask(&feat, &time_only, &mut rng_from_seed(3)).unwrap();
        assert_eq!(masked, again);

        let too_wide = MaskSpec {
            max_time_mask_frames: 51,
            ..none
        };
        assert!(spec_mask(&feat, &too_wide, &mut rng_from_seed(0)).is_err());
    }

    fn corpus() -> NoiseCorpus {
        let mut c = NoiseCorpus::new();
        for (k, cat) in [Category::Speech, Category::Music, Category::Noise].into_iter().enumerate() {
            for j in 0..8 {
                c.add_segment(cat, random_wave(800, 100 + 10 * k as u64 + j));
            }
        }
        c
    }

    #[test]
    fn online_category_frequencies() {
        let c = corpus();
        let rirs = vec![random_wave(16, 77)];
        let w = random_wave(600, 1);
        let mut counts = BTreeMap::new();
        let mut rng = rng_from_seed(2024);
        for _ in 0..10_000 {
            let (_, draw) = augment_online(&w, &c, &rirs, &mut rng).unwrap();
            *counts.entry(draw.category).or_insert(0usize) += 1;
            if draw.category == Category::Speech {
                assert!((3..=7).contains(&draw.sources.len()));
                assert!((13.0..=20.0).contains(&draw.snr_db.unwrap()));
            }
            if draw.category == Category::Noise {
                assert!((0.0..=15.0).contains(&draw.snr_db.unwrap()));
            }
        }
        for cat in Category::ALL {
            let f = counts[&cat] as f64 / 10_000.0;
            assert!((0.23..=0.27).contains(&f), "{cat:?}: {f}");
        }
    }

    #[test]
    fn online_is_seed_deterministic_and_checks_corpus() {
        let c = corpus();
        let rirs = vec![random_wave(16, 77)];
        let w = random_wave(600, 1);
        let a = augment_online(&w, &c, &rirs, &mut rng_from_seed(5)).unwrap();
        let b = augment_online(&w, &c, &rirs, &mut rng_from_seed(5)).unwrap();
        assert_eq!(a, b);
        let mut partial = NoiseCorpus::new();
        partial.add_segment(Category::Music, random_wave(10, 0));
        assert!(augment_online(&w, &partial, &rirs, &mut rng_from_seed(5)).is_err());
        assert!(augment_online(&w, &c, &[], &mut rng_from_seed(5)).is_err());
    }

    #[test]
    fn offline_manifest() {
        let utts: Vec<Utterance> = (0..100)
            .map(|i| Utterance {
                id: format!("utt{i:03}"),
                path: format!("/data/utt{i:03}.wav"),
            })
            .collect();
        let m = build_offline_manifest(&utts, 42, &MaskSpec::default()).unwrap();
        assert_eq!(m.len(), 500);
        let ids: std::collections::HashSet<_> = utts.iter().map(|u| u.id.as_str()).collect();
        assert!(m.iter().all(|r| ids.contains(r.utterance_id.as_str())));
        let text = format_manifest(&m);
        let again = format_manifest(&build_offline_manifest(&utts, 42, &MaskSpec::default()).unwrap());
        assert_eq!(text, again);
        assert_eq!(parse_manifest(&text).unwrap(), m);
        for r in m.iter().filter(|r| r.transform == Transform::Noise) {
            let snr: f64 = r.param("snr_db").unwrap().parse().unwrap();
            assert!((0.0..=15.0).contains(&snr));
        }
        assert!(build_offline_manifest(&[], 0, &MaskSpec::default()).is_err());
    }

    #[test]
    fn render_each_transform() {
        let utts = vec![Utterance {
            id: "a".into(),
            path: "a.wav".into(),
        }];
        let m = build_offline_manifest(&utts, 1, &MaskSpec::default()).unwrap();
        let c = corpus();
        let mut rirs = RirSet::default();
        for room in RoomClass::ALL {
            rirs.by_room.insert(room, vec![random_wave(32, room as u64)]);
        }
        let w = random_wave(16000, 3);
        let feats = |w: &Waveform| crate::dsp::extract_fbank(w, &crate::dsp::FeatureConfig::fbank40());
        for r in &m {
            let out = render_record(r, &w, &c, &rirs, feats).unwrap();
            match (r.transform, out) {
                (Transform::None, Rendered::Audio(a)) => assert_eq!(a, w),
                (Transform::SpecMask, Rendered::Features(f)) => assert_eq!(f.n_mels(), 40),
                (_, Rendered::Audio(a)) => assert_eq!(a.len(), w.len()),
                (t, other) => panic!("{t}: unexpected {other:?}"),
            }
        }
    }
}
