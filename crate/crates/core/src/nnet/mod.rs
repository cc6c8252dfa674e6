//! Forward-pass embedding network.
//!
//! A half-channel ResNet-34 trunk (channels 32/64/128/256, blocks 3/4/6/3,
//! no stride on the first convolution) followed by one or more pooling heads.
//! Stages 2-4 downsample frequency and time by 2 with strided convolutions,
//! so stage outputs are `32×D×L`, `64×D/2×⌈L/2⌉`, `128×D/4×⌈L/4⌉` and
//! `256×D/8×⌈L/8⌉`. Every stage pools to `2·C·F = 64·D` values.
//!
//! With `aggregate_stages = K > 1` the outputs of Res4, Res3 (and Res2) are
//! pooled by separate heads of identical architecture, projected to `M`
//! dimensions and merged by a per-dimension softmax weighting across heads.

mod layers;
mod network;
mod pooling;
mod serialize;
mod tensor;

pub use layers::{BasicBlock, ChannelNorm, Conv2d, Linear, Param};
pub use network::{aggregate_embeddings, Head, Network, PoolingHead};
pub use pooling::{attentive_stats_pool, stats_pool, AttentivePool};
pub use serialize::{read_network, write_network, NETWORK_MAGIC};
pub use tensor::Tensor3;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Stats,
    Attentive,
}

impl Pooling {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sp" | "stats" => Ok(Pooling::Stats),
            "asp" | "attentive" => Ok(Pooling::Attentive),
            other => Err(Error::invalid(format!("unknown pooling '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pooling::Stats => "sp",
            Pooling::Attentive => "asp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub feat_dim: usize,
    pub embed_dim: usize,
    pub pooling: Pooling,
    pub aggregate_stages: usize,
    pub channels: [usize; 4],
    pub blocks_per_stage: [usize; 4],
    pub asp_hidden: usize,
}

impl NetworkConfig {
    pub const HALF_RESNET34_CHANNELS: [usize; 4] = [32, 64, 128, 256];
    pub const RESNET34_BLOCKS: [usize; 4] = [3, 4, 6, 3];

    pub fn new(feat_dim: usize, embed_dim: usize, pooling: Pooling, aggregate_stages: usize) -> Self {
        Self {
            feat_dim,
            embed_dim,
            pooling,
            aggregate_stages,
            channels: Self::HALF_RESNET34_CHANNELS,
            blocks_per_stage: Self::RESNET34_BLOCKS,
            asp_hidden: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feat_dim == 0 || self.feat_dim % 8 != 0 {
            return Err(Error::invalid(format!(
                "feature dimension {} must be a positive multiple of 8",
                self.feat_dim
            )));
        }
        if self.embed_dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if !(1..=3).contains(&self.aggregate_stages) {
            return Err(Error::invalid(format!(
                "aggregate_stages {} not in 1..=3",
                self.aggregate_stages
            )));
        }
        if self.channels.contains(&0) || self.blocks_per_stage.contains(&0) {
            return Err(Error::invalid("stage channels and block counts must be positive"));
        }
        if self.pooling == Pooling::Attentive && self.asp_hidden == 0 {
            return Err(Error::invalid("attentive pooling needs a hidden size"));
        }
        Ok(())
    }

    /// Frequency stride of stage `s` relative to the input (1, 2, 4, 8).
    pub fn stage_downsample(stage: usize) -> usize {
        1 << stage
    }

    /// Pooled width `2·C·F` of stage `s`'s output (`s` in `0..4`).
    pub fn pooled_width(&self, stage: usize) -> usize {
        2 * self.channels[stage] * self.feat_dim.div_ceil(Self::stage_downsample(stage))
    }
}

/// Fixed-length utterance or segment representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit-length copy; `None` for the zero vector.
    pub fn normalized(&self) -> Option<Embedding> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| Embedding(self.0.iter().map(|v| v / n).collect()))
    }

    /// Element-wise mean of equally sized embeddings.
    pub fn mean(embs: &[Embedding]) -> Result<Embedding> {
        let first = embs
            .first()
            .ok_or_else(|| Error::invalid("mean of zero embeddings"))?;
        let mut acc = vec![0.0; first.dim()];
        for e in embs {
            if e.dim() != acc.len() {
                return Err(Error::invalid("embedding dimensions differ"));
            }
            for (a, v) in acc.iter_mut().zip(&e.0) {
                *a += v;
            }
        }
        let n = embs.len() as f64;
        Ok(Embedding(acc.into_iter().map(|v| v / n).collect()))
    }
}
