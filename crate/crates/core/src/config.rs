//! Flat `key=value` experiment configuration with section prefixes.
//!
//! ```text
//! seed=7
//! feature.preset=fbank40
//! feature.n_mels=40
//! network.embed_dim=256
//! network.pooling=asp
//! loss.kind=s-aam
//! scoring.cohort_size=3000
//! dcf.p_target=0.05
//! synth.within=0.5
//! ```
//!
//! Lines starting with `#` are comments. Unknown keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::augment::MaskSpec;
use crate::dsp::{FeatureConfig, Window};
use crate::error::{Error, Result};
use crate::formats::read_text;
use crate::fusion::{Objective, SearchConfig};
use crate::loss::{LossConfig, LossKind};
use crate::metrics::DcfConfig;
use crate::nnet::{NetworkConfig, Pooling};
use crate::scoring::{CohortConfig, EVAL_SEGMENTS, EVAL_SEGMENT_SECONDS};
use crate::synth::SyntheticSpec;

/// Ordered key/value pairs; later duplicates are rejected.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format("config", format!("line {}: expected key=value", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::format("config", format!("line {}: empty key", i + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::format("config", format!("line {}: duplicate key '{k}'", i + 1)));
        }
    }
    Ok(map)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::invalid(format!("{key}: cannot parse '{v}'")))
}

fn opt_num(key: &str, v: &str) -> Result<Option<f64>> {
    if v.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

fn list4(key: &str, v: &str) -> Result<[usize; 4]> {
    let parts = v
        .split(',')
        .map(|p| num::<usize>(key, p.trim()))
        .collect::<Result<Vec<_>>>()?;
    parts
        .try_into()
        .map_err(|_| Error::invalid(format!("{key}: expected 4 comma-separated values")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringConfig {
    pub cohort: CohortConfig,
    pub n_segments: usize,
    pub segment_seconds: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            cohort: CohortConfig::default(),
            n_segments: EVAL_SEGMENTS,
            segment_seconds: EVAL_SEGMENT_SECONDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub feature: FeatureConfig,
    pub network: NetworkConfig,
    pub loss: LossConfig,
    pub scoring: ScoringConfig,
    pub dcf: DcfConfig,
    pub mask: MaskSpec,
    pub synth: SyntheticSpec,
    pub fusion: SearchConfig,
    /// `io.<name>=path` entries.
    pub paths: BTreeMap<String, PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            feature: FeatureConfig::fbank40(),
            network: NetworkConfig::new(40, 256, Pooling::Stats, 1),
            loss: LossConfig::default(),
            scoring: ScoringConfig::default(),
            dcf: DcfConfig::default(),
            mask: MaskSpec::default(),
            synth: SyntheticSpec::default(),
            fusion: SearchConfig::default(),
            paths: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let mut cfg = Self::default();
        if let Some(p) = kv.get("feature.preset") {
            cfg.feature = match p.as_str() {
                "fbank40" => FeatureConfig::fbank40(),
                "fbank64" => FeatureConfig::fbank64(),
                other => return Err(Error::invalid(format!("unknown feature preset '{other}'"))),
            };
        }
        let mut feat_dim_set = false;
        for (k, v) in &kv {
            let k = k.as_str();
            let v = v.as_str();
            match k {
                "seed" => cfg.master_seed = num(k, v)?,
                "feature.preset" => {}
                "feature.n_mels" => cfg.feature.n_mels = num(k, v)?,
                "feature.window" => cfg.feature.window = Window::parse(v)?,
                "feature.win_ms" => cfg.feature.win_len_ms = num(k, v)?,
                "feature.hop_ms" => cfg.feature.hop_ms = num(k, v)?,
                "feature.nfft" => cfg.feature.nfft = num(k, v)?,
                "feature.preemphasis" => cfg.feature.preemphasis = opt_num(k, v)?,
                "feature.fmin" => cfg.feature.fmin_hz = opt_num(k, v)?,
                "feature.fmax" => cfg.feature.fmax_hz = opt_num(k, v)?,
                "network.feat_dim" => {
                    cfg.network.feat_dim = num(k, v)?;
                    feat_dim_set = true;
                }
                "network.embed_dim" => cfg.network.embed_dim = num(k, v)?,
                "network.pooling" => cfg.network.pooling = Pooling::parse(v)?,
                "network.aggregate_stages" => cfg.network.aggregate_stages = num(k, v)?,
                "network.channels" => cfg.network.channels = list4(k, v)?,
                "network.blocks" => cfg.network.blocks_per_stage = list4(k, v)?,
                "network.asp_hidden" => cfg.network.asp_hidden = num(k, v)?,
                "loss.kind" => cfg.loss.kind = LossKind::parse(v)?,
                "loss.margin" => cfg.loss.margin = num(k, v)?,
                "loss.scale" => cfg.loss.scale = num(k, v)?,
                "loss.ap_group_size" => cfg.loss.ap_group_size = num(k, v)?,
                "loss.ap_w" => cfg.loss.ap_affine.w = num(k, v)?,
                "loss.ap_b" => cfg.loss.ap_affine.b = num(k, v)?,
                "loss.switch_epoch" => cfg.loss.switch_epoch = num(k, v)?,
                "scoring.segments" => cfg.scoring.n_segments = num(k, v)?,
                "scoring.segment_seconds" => cfg.scoring.segment_seconds = num(k, v)?,
                "scoring.cohort_size" => cfg.scoring.cohort.size = num(k, v)?,
                "scoring.top_x" => cfg.scoring.cohort.top_x = num(k, v)?,
                "scoring.repeats" => cfg.scoring.cohort.repeats = num(k, v)?,
                "dcf.c_miss" => cfg.dcf.c_miss = num(k, v)?,
                "dcf.c_fa" => cfg.dcf.c_fa = num(k, v)?,
                "dcf.p_target" => cfg.dcf.p_target = num(k, v)?,
                "augment.max_time_mask" => cfg.mask.max_time_mask_frames = num(k, v)?,
                "augment.max_freq_mask" => cfg.mask.max_freq_mask_bins = num(k, v)?,
                "augment.n_time_masks" => cfg.mask.n_time_masks = num(k, v)?,
                "augment.n_freq_masks" => cfg.mask.n_freq_masks = num(k, v)?,
                "synth.n_speakers" => cfg.synth.n_speakers = num(k, v)?,
                "synth.utts_per_speaker" => cfg.synth.utts_per_speaker = num(k, v)?,
                "synth.dim" => cfg.synth.dim = num(k, v)?,
                "synth.within" => cfg.synth.within = num(k, v)?,
                "synth.between" => cfg.synth.between = num(k, v)?,
                "synth.n_cohort" => cfg.synth.n_cohort = num(k, v)?,
                "fusion.coarse_step" => cfg.fusion.coarse_step = num(k, v)?,
                "fusion.fine_step" => cfg.fusion.fine_step = num(k, v)?,
                "fusion.objective" => cfg.fusion.objective = Objective::parse(v)?,
                _ if k.starts_with("io.") => {
                    cfg.paths.insert(k[3..].to_string(), PathBuf::from(v));
                }
                _ => return Err(Error::invalid(format!("unknown config key '{k}'"))),
            }
        }
        if !feat_dim_set {
            cfg.network.feat_dim = cfg.feature.n_mels;
        }
        cfg.synth.seed = cfg.master_seed;
        cfg.scoring.cohort.seed = cfg.master_seed;
        cfg.fusion.dcf = cfg.dcf;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.feature.validate(crate::dsp::SAMPLE_RATE)?;
        self.network.validate()?;
        self.loss.validate()?;
        self.dcf.validate()?;
        if self.scoring.n_segments == 0 || !(self.scoring.segment_seconds > 0.0) {
            return Err(Error::invalid("scoring segments must be positive"));
        }
        Ok(())
    }
}

/// Systems and optional fixed weights for score fusion.
///
/// ```text
/// system.resnet_asp=scores/asp.txt
/// system.resnet_sp=scores/sp.txt
/// weight.resnet_asp=0.7
/// weight.resnet_sp=0.3
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub systems: Vec<(String, PathBuf)>,
    pub weights: Option<Vec<(String, f64)>>,
    pub search: SearchConfig,
}

impl FusionConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let mut systems = Vec::new();
        let mut weights = Vec::new();
        let mut search = SearchConfig::default();
        for (k, v) in &kv {
            if let Some(name) = k.strip_prefix("system.") {
                let p = PathBuf::from(v);
                systems.push((name.to_string(), if p.is_absolute() { p } else { base.join(p) }));
            } else if let Some(name) = k.strip_prefix("weight.") {
                weights.push((name.to_string(), num::<f64>(k, v)?));
            } else {
                match k.as_str() {
                    "fusion.coarse_step" => search.coarse_step = num(k, v)?,
                    "fusion.fine_step" => search.fine_step = num(k, v)?,
                    "fusion.objective" => search.objective = Objective::parse(v)?,
                    "dcf.p_target" => search.dcf.p_target = num(k, v)?,
                    "dcf.c_miss" => search.dcf.c_miss = num(k, v)?,
                    "dcf.c_fa" => search.dcf.c_fa = num(k, v)?,
                    _ => return Err(Error::invalid(format!("unknown fusion key '{k}'"))),
                }
            }
        }
        if systems.is_empty() {
            return Err(Error::invalid("fusion config lists no systems"));
        }
        let weights = if weights.is_empty() {
            None
        } else {
            for (name, _) in &weights {
                if !systems.iter().any(|(s, _)| s == name) {
                    return Err(Error::invalid(format!("weight for unlisted system '{name}'")));
                }
            }
            if weights.len() != systems.len() {
                return Err(Error::invalid("weights must be given for every system or none"));
            }
            Some(
                systems
                    .iter()
                    .map(|(s, _)| (s.clone(), weights.iter().find(|(n, _)| n == s).expect("checked").1))
                    .collect(),
            )
        };
        Ok(Self {
            systems,
            weights,
            search,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&read_text(path)?, base)
    }
}
