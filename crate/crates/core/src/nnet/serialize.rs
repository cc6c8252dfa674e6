//! Flat binary weight container.
//!
//! ```text
//! magic      b"SVNW"
//! version    u32 = 1
//! config     feat_dim u32, embed_dim u32, pooling u8 (0 = SP, 1 = ASP),
//!            aggregate_stages u8, asp_hidden u32, channels 4×u32, blocks 4×u32
//! count      u32
//! per param  name_len u32, name (UTF-8), rank u32, dims rank×u32, data f32...
//! ```
//!
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use super::{Network, NetworkConfig, Pooling};
use crate::error::{Error, Result};

pub const NETWORK_MAGIC: &[u8; 4] = b"SVNW";
const VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::invalid("value exceeds u32"))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub fn write_network(net: &Network, w: &mut impl Write) -> Result<()> {
    let cfg = &net.config;
    w.write_all(NETWORK_MAGIC)?;
    put_u32(w, VERSION as usize)?;
    put_u32(w, cfg.feat_dim)?;
    put_u32(w, cfg.embed_dim)?;
    w.write_all(&[
        match cfg.pooling {
            Pooling::Stats => 0,
            Pooling::Attentive => 1,
        },
        cfg.aggregate_stages as u8,
    ])?;
    put_u32(w, cfg.asp_hidden)?;
    for &c in &cfg.channels {
        put_u32(w, c)?;
    }
    for &b in &cfg.blocks_per_stage {
        put_u32(w, b)?;
    }
    let params = net.named_params();
    put_u32(w, params.len())?;
    for (name, p) in params {
        put_u32(w, name.len())?;
        w.write_all(name.as_bytes())?;
        put_u32(w, p.shape.len())?;
        for &d in &p.shape {
            put_u32(w, d)?;
        }
        let mut buf = Vec::with_capacity(p.data.len() * 4);
        for v in &p.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_network(r: &mut impl Read) -> Result<Network> {
    let bad = |d: String| Error::format("network weights", d);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != NETWORK_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = get_u32(r)?;
    if version != VERSION as usize {
        return Err(bad(format!("unsupported version {version}")));
    }
    let feat_dim = get_u32(r)?;
    let embed_dim = get_u32(r)?;
    let pooling = match get_u8(r)? {
        0 => Pooling::Stats,
        1 => Pooling::Attentive,
        other => return Err(bad(format!("unknown pooling tag {other}"))),
    };
    let aggregate_stages = get_u8(r)? as usize;
    let asp_hidden = get_u32(r)?;
    let mut channels = [0usize; 4];
    for c in channels.iter_mut() {
        *c = get_u32(r)?;
    }
    let mut blocks_per_stage = [0usize; 4];
    for b in blocks_per_stage.iter_mut() {
        *b = get_u32(r)?;
    }
    let config = NetworkConfig {
        feat_dim,
        embed_dim,
        pooling,
        aggregate_stages,
        channels,
        blocks_per_stage,
        asp_hidden,
    };
    let mut net = Network::build(config, 0)?;
    let count = get_u32(r)?;
    let mut slots = net.named_params_mut();
    if count != slots.len() {
        return Err(bad(format!(
            "{count} parameters stored, architecture has {}",
            slots.len()
        )));
    }
    for (expected_name, param) in slots.iter_mut() {
        let name_len = get_u32(r)?;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| bad("non-UTF-8 name".into()))?;
        if &name != expected_name {
            return Err(bad(format!("expected '{expected_name}', found '{name}'")));
        }
        let rank = get_u32(r)?;
        let shape = (0..rank).map(|_| get_u32(r)).collect::<Result<Vec<_>>>()?;
        if shape != param.shape {
            return Err(bad(format!(
                "'{name}' has shape {shape:?}, expected {:?}",
                param.shape
            )));
        }
        let mut buf = vec![0u8; param.data.len() * 4];
        r.read_exact(&mut buf)?;
        for (slot, chunk) in param.data.iter_mut().zip(buf.chunks_exact(4)) {
            *slot = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
    }
    drop(slots);
    Ok(net)
}
