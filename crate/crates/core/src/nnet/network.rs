use super::layers::{BasicBlock, ChannelNorm, Conv2d, Linear, Param, ParamMuts, ParamRefs};
use super::pooling::{softmax, stats_pool, AttentivePool};
use super::{Embedding, NetworkConfig, Pooling, Tensor3};
use crate::dsp::FeatureMatrix;
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Minimum number of frames for three stride-2 stages.
pub const MIN_FRAMES: usize = 8;

#[derive(Debug, Clone)]
pub enum PoolingHead {
    Stats,
    Attentive(AttentivePool),
}

impl PoolingHead {
    pub fn forward(&self, x: &Tensor3) -> Vec<f64> {
        match self {
            PoolingHead::Stats => stats_pool(x),
            PoolingHead::Attentive(p) => p.forward(x),
        }
    }
}

/// Pooling plus projection to the embedding dimension for one trunk output.
#[derive(Debug, Clone)]
pub struct Head {
    /// Index into the trunk outputs (`4` = Res4, `3` = Res3, `2` = Res2).
    pub tap: usize,
    pub pool: PoolingHead,
    pub linear: Linear,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub config: NetworkConfig,
    pub conv1: Conv2d,
    pub norm1: ChannelNorm,
    pub stages: Vec<Vec<BasicBlock>>,
    pub heads: Vec<Head>,
    /// `K × M` per-dimension aggregation logits; present when `K > 1`.
    pub aggregate: Option<Param>,
}

impl Network {
    /// Builds the network with weights drawn deterministically from `seed`.
    pub fn build(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(seed);
        let c0 = config.channels[0];
        let conv1 = Conv2d::new(1, c0, 3, 1, &mut rng);
        let norm1 = ChannelNorm::new(c0);
        let mut stages = Vec::with_capacity(4);
        let mut in_ch = c0;
        for (s, (&out_ch, &n_blocks)) in config
            .channels
            .iter()
            .zip(&config.blocks_per_stage)
            .enumerate()
        {
            let stride = if s == 0 { 1 } else { 2 };
            let mut blocks = Vec::with_capacity(n_blocks);
            for b in 0..n_blocks {
                let (i, st) = if b == 0 { (in_ch, stride) } else { (out_ch, 1) };
                blocks.push(BasicBlock::new(i, out_ch, st, &mut rng));
            }
            stages.push(blocks);
            in_ch = out_ch;
        }
        let heads = (0..config.aggregate_stages)
            .map(|k| {
                let stage = 3 - k;
                let pool = match config.pooling {
                    Pooling::Stats => PoolingHead::Stats,
                    Pooling::Attentive => PoolingHead::Attentive(AttentivePool::new(
                        config.channels[stage],
                        config.asp_hidden,
                        &mut rng,
                    )),
                };
                let linear = Linear::new(config.pooled_width(stage), config.embed_dim, &mut rng);
                Head {
                    tap: stage + 1,
                    pool,
                    linear,
                }
            })
            .collect();
        let aggregate = (config.aggregate_stages > 1)
            .then(|| Param::filled(vec![config.aggregate_stages, config.embed_dim], 0.0));
        Ok(Self {
            config,
            conv1,
            norm1,
            stages,
            heads,
            aggregate,
        })
    }

    pub fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out: ParamRefs<'_> = Vec::new();
        self.conv1.collect("conv1", &mut out);
        self.norm1.collect("norm1", &mut out);
        for (s, blocks) in self.stages.iter().enumerate() {
            for (b, block) in blocks.iter().enumerate() {
                block.collect(&format!("res{}.{b}", s + 1), &mut out);
            }
        }
        for (k, head) in self.heads.iter().enumerate() {
            if let PoolingHead::Attentive(p) = &head.pool {
                p.collect(&format!("head{k}.attention"), &mut out);
            }
            head.linear.collect(&format!("head{k}.linear"), &mut out);
        }
        if let Some(a) = &self.aggregate {
            out.push(("aggregate.weight".to_string(), a));
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out: ParamMuts<'_> = Vec::new();
        self.conv1.collect_mut("conv1", &mut out);
        self.norm1.collect_mut("norm1", &mut out);
        for (s, blocks) in self.stages.iter_mut().enumerate() {
            for (b, block) in blocks.iter_mut().enumerate() {
                block.collect_mut(&format!("res{}.{b}", s + 1), &mut out);
            }
        }
        for (k, head) in self.heads.iter_mut().enumerate() {
            if let PoolingHead::Attentive(p) = &mut head.pool {
                p.collect_mut(&format!("head{k}.attention"), &mut out);
            }
            head.linear.collect_mut(&format!("head{k}.linear"), &mut out);
        }
        if let Some(a) = &mut self.aggregate {
            out.push(("aggregate.weight".to_string(), a));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    fn input_tensor(&self, feat: &FeatureMatrix) -> Result<Tensor3> {
        let (frames, dim) = feat.values.dim();
        if dim != self.config.feat_dim {
            return Err(Error::invalid(format!(
                "features have {dim} bins, network expects {}",
                self.config.feat_dim
            )));
        }
        if frames < MIN_FRAMES {
            return Err(Error::invalid(format!(
                "{frames} frames is too short; need at least {MIN_FRAMES}"
            )));
        }
        // Feature matrices are time-major; the trunk wants (1, freq, time).
        let mut data = vec![0.0f32; frames * dim];
        for ((t, f), &v) in feat.values.indexed_iter() {
            data[f * frames + t] = v as f32;
        }
        Tensor3::from_vec(1, dim, frames, data)
    }

    /// Activations after Conv1 and after each residual stage, in that order.
    pub fn trunk_forward(&self, feat: &FeatureMatrix) -> Result<Vec<Tensor3>> {
        let x = self.input_tensor(feat)?;
        let mut h = self.conv1.forward(&x);
        self.norm1.forward_inplace(&mut h);
        h.data.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut outs = Vec::with_capacity(5);
        outs.push(h);
        for blocks in &self.stages {
            let mut cur = outs.last().expect("non-empty").clone();
            for block in blocks {
                cur = block.forward(&cur);
            }
            outs.push(cur);
        }
        Ok(outs)
    }

    /// One projected embedding per head, before aggregation.
    pub fn head_embeddings(&self, feat: &FeatureMatrix) -> Result<Vec<Embedding>> {
        let outs = self.trunk_forward(feat)?;
        Ok(self
            .heads
            .iter()
            .map(|h| Embedding(h.linear.forward(&h.pool.forward(&outs[h.tap]))))
            .collect())
    }

    pub fn embed(&self, feat: &FeatureMatrix) -> Result<Embedding> {
        let embs = self.head_embeddings(feat)?;
        match &self.aggregate {
            None => Ok(embs.into_iter().next().expect("one head")),
            Some(w) => {
                let logits: Vec<Vec<f64>> = w
                    .data
                    .chunks_exact(self.config.embed_dim)
                    .map(|row| row.iter().map(|&v| f64::from(v)).collect())
                    .collect();
                aggregate_embeddings(&embs, &logits)
            }
        }
    }
}

/// `out[d] = Σ_k softmax_k(w[k][d]) · emb_k[d]`.
pub fn aggregate_embeddings(embs: &[Embedding], logits: &[Vec<f64>]) -> Result<Embedding> {
    let first = embs
        .first()
        .ok_or_else(|| Error::invalid("no embeddings to aggregate"))?;
    let m = first.dim();
    if logits.len() != embs.len() {
        return Err(Error::invalid(format!(
            "{} weight vectors for {} embeddings",
            logits.len(),
            embs.len()
        )));
    }
    if embs.iter().any(|e| e.dim() != m) || logits.iter().any(|w| w.len() != m) {
        return Err(Error::invalid("aggregation inputs differ in length"));
    }
    let out = (0..m)
        .map(|d| {
            let col: Vec<f64> = logits.iter().map(|w| w[d]).collect();
            softmax(&col)
                .iter()
                .zip(embs)
                .map(|(a, e)| a * e.0[d])
                .sum()
        })
        .collect();
    Ok(Embedding(out))
}
