//! Log mel-filterbank front end.
//!
//! Two presets are provided: [`FeatureConfig::fbank40`] (Hann window,
//! 20-7600 Hz band, no pre-emphasis) and [`FeatureConfig::fbank64`]
//! (0.97 pre-emphasis, Hamming window, full band). Both use 25 ms windows,
//! a 10 ms hop and a 512-point FFT at 16 kHz.
//!
//! Pipeline: pre-emphasis, framing without centre padding, windowing,
//! zero-padded FFT, power spectrum, HTK mel projection, `ln(max(e, 1e-10))`.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::Rng;
pub use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

pub const SAMPLE_RATE: u32 = 16_000;

/// Energy floor applied before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

/// Variance floor used by [`instance_normalize`].
pub const INSTANCE_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("waveform has no samples"));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Mean squared amplitude.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn seconds_to_samples(&self, secs: f64) -> usize {
        (secs * f64::from(self.sample_rate)).round() as usize
    }
}

pub(crate) fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// Periodic Hann, `0.5 - 0.5 cos(2πn/N)` (equivalently `sin²(πn/N)`).
    Hann,
    /// Periodic Hamming, `0.54 - 0.46 cos(2πn/N)`.
    Hamming,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / n;
                match self {
                    Window::Hann => 0.5 - 0.5 * phase.cos(),
                    Window::Hamming => 0.54 - 0.46 * phase.cos(),
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Hann => "hann",
            Window::Hamming => "hamming",
            Window::Rectangular => "rectangular",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(Window::Hann),
            "hamming" => Ok(Window::Hamming),
            "rectangular" | "rect" => Ok(Window::Rectangular),
            other => Err(Error::invalid(format!("unknown window '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub n_mels: usize,
    pub window: Window,
    pub win_len_ms: f64,
    pub hop_ms: f64,
    pub nfft: usize,
    pub preemphasis: Option<f64>,
    pub fmin_hz: Option<f64>,
    pub fmax_hz: Option<f64>,
}

impl FeatureConfig {
    pub fn fbank40() -> Self {
        Self {
            n_mels: 40,
            window: Window::Hann,
            win_len_ms: 25.0,
            hop_ms: 10.0,
            nfft: 512,
            preemphasis: None,
            fmin_hz: Some(20.0),
            fmax_hz: Some(7600.0),
        }
    }

    pub fn fbank64() -> Self {
        Self {
            n_mels: 64,
            window: Window::Hamming,
            win_len_ms: 25.0,
            hop_ms: 10.0,
            nfft: 512,
            preemphasis: Some(0.97),
            fmin_hz: None,
            fmax_hz: None,
        }
    }

    pub fn win_samples(&self, sample_rate: u32) -> usize {
        (self.win_len_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }

    /// Band edges after defaulting to `[0, Nyquist]`.
    pub fn band(&self, sample_rate: u32) -> (f64, f64) {
        let nyquist = f64::from(sample_rate) / 2.0;
        (self.fmin_hz.unwrap_or(0.0), self.fmax_hz.unwrap_or(nyquist))
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.n_mels == 0 {
            return Err(Error::invalid("n_mels must be positive"));
        }
        let win = self.win_samples(sample_rate);
        let hop = self.hop_samples(sample_rate);
        if win == 0 || hop == 0 {
            return Err(Error::invalid("window and hop must be at least one sample"));
        }
        if self.nfft < win {
            return Err(Error::invalid(format!(
                "nfft {} shorter than window {win}",
                self.nfft
            )));
        }
        if let Some(c) = self.preemphasis {
            if !(0.0..1.0).contains(&c) {
                return Err(Error::invalid(format!("pre-emphasis {c} outside [0, 1)")));
            }
        }
        let (lo, hi) = self.band(sample_rate);
        let nyquist = f64::from(sample_rate) / 2.0;
        if !(lo >= 0.0 && lo < hi) {
            return Err(Error::invalid(format!("invalid band {lo}..{hi} Hz")));
        }
        if hi > nyquist {
            return Err(Error::invalid(format!(
                "fmax {hi} Hz above Nyquist {nyquist} Hz"
            )));
        }
        Ok(())
    }
}

/// Frames × mel bins log energies.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub hop_samples: usize,
    pub win_samples: usize,
    pub window: Window,
}

impl FeatureMatrix {
    pub fn from_values(values: Array2<f64>) -> Self {
        Self {
            values,
            hop_samples: 160,
            win_samples: 400,
            window: Window::Hann,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_mels(&self) -> usize {
        self.values.ncols()
    }

    pub fn with_values(&self, values: Array2<f64>) -> Self {
        Self {
            values,
            hop_samples: self.hop_samples,
            win_samples: self.win_samples,
            window: self.window,
        }
    }
}

pub fn preemphasize(wave: &Waveform, coeff: f64) -> Waveform {
    let x = &wave.samples;
    let mut out = Vec::with_capacity(x.len());
    if let Some(&first) = x.first() {
        out.push(first);
    }
    out.extend(x.windows(2).map(|w| w[1] - coeff * w[0]));
    Waveform {
        samples: out,
        sample_rate: wave.sample_rate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffsetPolicy {
    /// Uniform crop start drawn from a generator seeded with this value.
    Random(u64),
    /// Fixed crop start, clamped to the last valid offset.
    Fixed(usize),
}

/// Crops to `target` samples, or tiles the signal cyclically when it is
/// shorter than `target`.
pub fn crop_or_wrap(wave: &Waveform, target: usize, policy: OffsetPolicy) -> Result<Waveform> {
    if wave.samples.is_empty() {
        return Err(Error::invalid("cannot crop an empty waveform"));
    }
    if target == 0 {
        return Err(Error::invalid("target length must be positive"));
    }
    let len = wave.samples.len();
    let samples = if len >= target {
        let max_start = len - target;
        let start = match policy {
            OffsetPolicy::Random(seed) => rng_from_seed(seed).random_range(0..=max_start),
            OffsetPolicy::Fixed(start) => start.min(max_start),
        };
        wave.samples[start..start + target].to_vec()
    } else {
        wave.samples.iter().copied().cycle().take(target).collect()
    };
    Ok(Waveform {
        samples,
        sample_rate: wave.sample_rate,
    })
}

pub fn frame_count(len: usize, win: usize, hop: usize) -> Option<usize> {
    (len >= win && hop > 0).then(|| 1 + (len - win) / hop)
}

/// Splits into frames `[i·hop, i·hop + win)` that lie fully inside the signal.
pub fn frame_signal(wave: &Waveform, win: usize, hop: usize) -> Result<Vec<&[f64]>> {
    let n = frame_count(wave.samples.len(), win, hop).ok_or_else(|| {
        Error::invalid(format!(
            "signal of {} samples shorter than one {win}-sample window",
            wave.samples.len()
        ))
    })?;
    Ok((0..n)
        .map(|i| &wave.samples[i * hop..i * hop + win])
        .collect())
}

/// Windowed, zero-padded FFT over frames of a fixed length.
pub struct SpectrumAnalyzer {
    nfft: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl SpectrumAnalyzer {
    pub fn new(window: Window, frame_len: usize, nfft: usize) -> Result<Self> {
        if frame_len == 0 || frame_len > nfft {
            return Err(Error::invalid(format!(
                "frame length {frame_len} must be in 1..={nfft}"
            )));
        }
        let fft = FftPlanner::new().plan_fft_forward(nfft);
        Ok(Self {
            nfft,
            window: window.coefficients(frame_len),
            fft,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.nfft / 2 + 1
    }

    /// Full complex spectrum (all `nfft` bins) of the windowed frame.
    pub fn complex_spectrum(&self, frame: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(frame.len(), self.window.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nfft];
        for ((slot, &x), &w) in buf.iter_mut().zip(frame).zip(&self.window) {
            slot.re = x * w;
        }
        self.fft.process(&mut buf);
        buf
    }

    pub fn magnitude(&self, frame: &[f64]) -> Vec<f64> {
        let spec = self.complex_spectrum(frame);
        spec[..self.n_bins()].iter().map(|c| c.norm()).collect()
    }

    pub fn power(&self, frame: &[f64]) -> Vec<f64> {
        let spec = self.complex_spectrum(frame);
        spec[..self.n_bins()].iter().map(|c| c.norm_sqr()).collect()
    }
}

/// `|DFT|` of the windowed frame zero-padded to `nfft`, bins `0..=nfft/2`.
pub fn fft_magnitude(frame: &[f64], window: Window, nfft: usize) -> Result<Vec<f64>> {
    Ok(SpectrumAnalyzer::new(window, frame.len(), nfft)?.magnitude(frame))
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filter centres in Hz, equally spaced in mel between the band
/// edges (edges excluded).
pub fn mel_center_frequencies(cfg: &FeatureConfig, sample_rate: u32) -> Vec<f64> {
    let (lo, hi) = cfg.band(sample_rate);
    let (mlo, mhi) = (hz_to_mel(lo), hz_to_mel(hi));
    let step = (mhi - mlo) / (cfg.n_mels + 1) as f64;
    (1..=cfg.n_mels)
        .map(|i| mel_to_hz(mlo + step * i as f64))
        .collect()
}

/// `n_mels × (nfft/2 + 1)` triangular filters evaluated at the FFT bin
/// frequencies.
pub fn mel_filterbank_matrix(cfg: &FeatureConfig, sample_rate: u32) -> Result<Array2<f64>> {
    cfg.validate(sample_rate)?;
    let (lo, hi) = cfg.band(sample_rate);
    let (mlo, mhi) = (hz_to_mel(lo), hz_to_mel(hi));
    let step = (mhi - mlo) / (cfg.n_mels + 1) as f64;
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(mlo + step * i as f64))
        .collect();
    let n_bins = cfg.nfft / 2 + 1;
    let bin_hz = f64::from(sample_rate) / cfg.nfft as f64;
    let mut fb = Array2::zeros((cfg.n_mels, n_bins));
    for m in 0..cfg.n_mels {
        let (left, centre, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let rising = (f - left) / (centre - left);
            let falling = (right - f) / (right - centre);
            fb[[m, k]] = rising.min(falling).max(0.0);
        }
        if fb.row(m).iter().all(|&v| v <= 0.0) {
            return Err(Error::invalid(format!(
                "mel filter {m} ({left:.1}-{right:.1} Hz) covers no FFT bin; use fewer mels or a larger nfft"
            )));
        }
    }
    Ok(fb)
}

/// Reusable extractor holding the filterbank and FFT plan.
pub struct FbankExtractor {
    cfg: FeatureConfig,
    sample_rate: u32,
    win: usize,
    hop: usize,
    analyzer: SpectrumAnalyzer,
    filters: Array2<f64>,
}

impl FbankExtractor {
    pub fn new(cfg: FeatureConfig, sample_rate: u32) -> Result<Self> {
        let filters = mel_filterbank_matrix(&cfg, sample_rate)?;
        let win = cfg.win_samples(sample_rate);
        let hop = cfg.hop_samples(sample_rate);
        let analyzer = SpectrumAnalyzer::new(cfg.window, win, cfg.nfft)?;
        Ok(Self {
            cfg,
            sample_rate,
            win,
            hop,
            analyzer,
            filters,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn extract(&self, wave: &Waveform) -> Result<FeatureMatrix> {
        if wave.sample_rate != self.sample_rate {
            return Err(Error::invalid(format!(
                "expected {} Hz audio, got {} Hz",
                self.sample_rate, wave.sample_rate
            )));
        }
        let emphasized;
        let wave = match self.cfg.preemphasis {
            Some(c) => {
                emphasized = preemphasize(wave, c);
                &emphasized
            }
            None => wave,
        };
        let frames = frame_signal(wave, self.win, self.hop)?;
        let mut values = Array2::zeros((frames.len(), self.cfg.n_mels));
        for (frame, mut row) in frames.iter().zip(values.rows_mut()) {
            let power = self.analyzer.power(frame);
            for (m, slot) in row.iter_mut().enumerate() {
                let energy: f64 = self
                    .filters
                    .row(m)
                    .iter()
                    .zip(&power)
                    .map(|(w, p)| w * p)
                    .sum();
                *slot = energy.max(LOG_FLOOR).ln();
            }
        }
        Ok(FeatureMatrix {
            values,
            hop_samples: self.hop,
            win_samples: self.win,
            window: self.cfg.window,
        })
    }
}

pub fn extract_fbank(wave: &Waveform, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    FbankExtractor::new(cfg.clone(), wave.sample_rate)?.extract(wave)
}

/// Per mel bin over time: subtract the mean and divide by the standard
/// deviation, with the variance floored at [`INSTANCE_NORM_EPS`].
pub fn instance_normalize(feat: &FeatureMatrix) -> FeatureMatrix {
    let mut values = feat.values.clone();
    let n = values.nrows().max(1) as f64;
    for mut col in values.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let scale = 1.0 / var.max(INSTANCE_NORM_EPS).sqrt();
        col.mapv_inplace(|v| (v - mean) * scale);
    }
    feat.with_values(values)
}
