//! On-disk formats: trial lists, score files, feature matrices, embedding
//! stores and WAV audio.
//!
//! Binary layouts are little-endian:
//!
//! ```text
//! feature matrix   b"SVFM" version u32, rows u32, cols u32, hop u32, win u32,
//!                  window u8, rows×cols f32 (row-major, frame-major)
//! embedding store  b"SVEM" version u32, dim u32, count u32,
//!                  per record: id_len u32, id (UTF-8), dim×f32
//! ```

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::dsp::{FeatureMatrix, Waveform, Window};
use crate::error::{Error, Result};
use crate::nnet::Embedding;
use crate::scoring::{Label, ScoreSet, Trial, TrialList};

pub const FEATURE_MAGIC: &[u8; 4] = b"SVFM";
pub const EMBEDDING_MAGIC: &[u8; 4] = b"SVEM";
const VERSION: u32 = 1;

/// Writes via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("'{}' has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// `<0|1> enroll test` per line; the label column may be omitted.
pub fn parse_trials(text: &str) -> Result<TrialList> {
    let mut trials = Vec::new();
    for (n, line) in content_lines(text) {
        let cols: Vec<&str> = line.split_whitespace().collect();
        let trial = match cols.as_slice() {
            [flag, e, t] => Trial {
                label: Some(
                    Label::from_flag(flag)
                        .map_err(|_| Error::format("trial list", format!("line {n}: bad label '{flag}'")))?,
                ),
                enroll: e.to_string(),
                test: t.to_string(),
            },
            [e, t] => Trial {
                label: None,
                enroll: e.to_string(),
                test: t.to_string(),
            },
            _ => {
                return Err(Error::format(
                    "trial list",
                    format!("line {n}: expected 2 or 3 columns, found {}", cols.len()),
                ))
            }
        };
        trials.push(trial);
    }
    Ok(TrialList::new(trials))
}

pub fn format_trials(trials: &TrialList) -> String {
    let mut s = String::new();
    for t in &trials.trials {
        match t.label {
            Some(l) => s.push_str(&format!("{} {} {}\n", l.flag(), t.enroll, t.test)),
            None => s.push_str(&format!("{} {}\n", t.enroll, t.test)),
        }
    }
    s
}

/// `enroll test score` per line.
pub fn parse_scores(text: &str, system_id: &str) -> Result<ScoreSet> {
    let mut keys = Vec::new();
    let mut scores = Vec::new();
    for (n, line) in content_lines(text) {
        let cols: Vec<&str> = line.split_whitespace().collect();
        let [e, t, s] = cols.as_slice() else {
            return Err(Error::format(
                "score file",
                format!("line {n}: expected 3 columns, found {}", cols.len()),
            ));
        };
        let v: f64 = s
            .parse()
            .map_err(|_| Error::format("score file", format!("line {n}: bad score '{s}'")))?;
        keys.push((e.to_string(), t.to_string()));
        scores.push(v);
    }
    ScoreSet::new(system_id, keys, scores)
}

/// Scores use the shortest decimal that round-trips.
pub fn format_scores(scores: &ScoreSet) -> String {
    let mut s = String::new();
    for ((e, t), v) in scores.keys.iter().zip(&scores.scores) {
        s.push_str(&format!("{e} {t} {v:?}\n"));
    }
    s
}

pub fn read_trials(path: &Path) -> Result<TrialList> {
    parse_trials(&read_text(path)?)
}

pub fn read_scores(path: &Path) -> Result<ScoreSet> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "system".into());
    parse_scores(&read_text(path)?, &id)
}

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::invalid("value exceeds u32"))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::format(self.what, "truncated"));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<impl Iterator<Item = f32> + 'a> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| Error::format(self.what, "size overflow"))?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::format(self.what, "bad magic"));
        }
        let v = self.u32()?;
        if v != VERSION as usize {
            return Err(Error::format(self.what, format!("unsupported version {v}")));
        }
        Ok(())
    }
}

fn window_tag(w: Window) -> u8 {
    match w {
        Window::Hann => 0,
        Window::Hamming => 1,
        Window::Rectangular => 2,
    }
}

pub fn encode_features(feat: &FeatureMatrix) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(25 + feat.values.len() * 4);
    buf.extend_from_slice(FEATURE_MAGIC);
    put_u32(&mut buf, VERSION as usize)?;
    put_u32(&mut buf, feat.n_frames())?;
    put_u32(&mut buf, feat.n_mels())?;
    put_u32(&mut buf, feat.hop_samples)?;
    put_u32(&mut buf, feat.win_samples)?;
    buf.push(window_tag(feat.window));
    for v in feat.values.iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix> {
    let mut c = Cursor { bytes, what: "feature matrix" };
    c.header(FEATURE_MAGIC)?;
    let rows = c.u32()?;
    let cols = c.u32()?;
    let hop_samples = c.u32()?;
    let win_samples = c.u32()?;
    let window = match c.take(1)?[0] {
        0 => Window::Hann,
        1 => Window::Hamming,
        2 => Window::Rectangular,
        t => return Err(Error::format("feature matrix", format!("unknown window tag {t}"))),
    };
    let data: Vec<f64> = c.f32s(rows * cols)?.map(f64::from).collect();
    if !c.bytes.is_empty() {
        return Err(Error::format("feature matrix", "trailing bytes"));
    }
    let values = Array2::from_shape_vec((rows, cols), data).expect("size checked");
    Ok(FeatureMatrix {
        values,
        hop_samples,
        win_samples,
        window,
    })
}

pub fn write_features(path: &Path, feat: &FeatureMatrix) -> Result<()> {
    write_atomic(path, &encode_features(feat)?)
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    decode_features(&read_bytes(path)?)
}

/// Ordered, id-unique collection of fixed-dimension embeddings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Embedding>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, v: Embedding) -> Result<()> {
        let id = id.into();
        if v.dim() != self.dim {
            return Err(Error::invalid(format!(
                "embedding '{id}' has dimension {}, store has {}",
                v.dim(),
                self.dim
            )));
        }
        if id.chars().any(char::is_whitespace) || id.is_empty() {
            return Err(Error::invalid(format!("invalid embedding id '{id}'")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::invalid(format!("duplicate embedding id '{id}'")));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vectors.push(v);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Embedding> {
        self.index.get(id).map(|&i| &self.vectors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Embedding)> {
        self.ids.iter().map(String::as_str).zip(&self.vectors)
    }

    /// Segment embeddings `<id>#0..` of an utterance, or the single
    /// `<id>` record when no segments are stored.
    pub fn segments(&self, id: &str) -> Option<Vec<Embedding>> {
        let segs: Vec<Embedding> = (0..)
            .map_while(|k| self.get(&format!("{id}#{k}")).cloned())
            .collect();
        if segs.is_empty() {
            self.get(id).map(|v| vec![v.clone()])
        } else {
            Some(segs)
        }
    }

    /// Records without a `#` segment suffix.
    pub fn utterance_vectors(&self) -> Vec<(&str, &Embedding)> {
        self.iter().filter(|(id, _)| !id.contains('#')).collect()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::with_capacity(16 + self.len() * (self.dim * 4 + 24));
        buf.extend_from_slice(EMBEDDING_MAGIC);
        put_u32(&mut buf, VERSION as usize)?;
        put_u32(&mut buf, self.dim)?;
        put_u32(&mut buf, self.len())?;
        for (id, v) in self.iter() {
            put_u32(&mut buf, id.len())?;
            buf.extend_from_slice(id.as_bytes());
            for x in &v.0 {
                buf.extend_from_slice(&(*x as f32).to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { bytes, what: "embedding store" };
        c.header(EMBEDDING_MAGIC)?;
        let dim = c.u32()?;
        let count = c.u32()?;
        let mut store = Self::new(dim);
        for _ in 0..count {
            let n = c.u32()?;
            let id = std::str::from_utf8(c.take(n)?)
                .map_err(|_| Error::format("embedding store", "non-UTF-8 id"))?
                .to_string();
            let v = Embedding(c.f32s(dim)?.map(f64::from).collect());
            store
                .insert(id, v)
                .map_err(|e| Error::format("embedding store", e.to_string()))?;
        }
        if !c.bytes.is_empty() {
            return Err(Error::format("embedding store", "trailing bytes"));
        }
        Ok(store)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&read_bytes(path)?)
    }
}

/// Reads 16-bit PCM mono audio scaled to `[-1, 1)`.
pub fn decode_wav(reader: impl Read) -> Result<Waveform> {
    let mut r = hound::WavReader::new(reader)?;
    let spec = r.spec();
    if spec.channels != 1 {
        return Err(Error::format("wav", format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::format(
            "wav",
            format!("{}-bit {:?}, expected 16-bit PCM", spec.bits_per_sample, spec.sample_format),
        ));
    }
    let samples = r
        .samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Waveform::new(samples, spec.sample_rate)
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    decode_wav(std::io::Cursor::new(read_bytes(path)?))
        .map_err(|e| Error::format("wav", format!("{}: {e}", path.display())))
}

pub fn encode_wav(wave: &Waveform) -> Result<Vec<u8>> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cur = std::io::Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut cur, spec)?;
        for &s in &wave.samples {
            let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            w.write_sample(v)?;
        }
        w.finalize()?;
    }
    Ok(cur.into_inner())
}

pub fn write_wav(path: &Path, wave: &Waveform) -> Result<()> {
    write_atomic(path, &encode_wav(wave)?)
}

/// Ids appearing in a trial list but missing from `available`.
pub fn missing_ids<'a>(trials: &'a TrialList, available: &HashSet<&str>) -> Vec<&'a str> {
    let mut seen = HashSet::new();
    trials
        .trials
        .iter()
        .flat_map(|t| [t.enroll.as_str(), t.test.as_str()])
        .filter(|id| !available.contains(id) && seen.insert(*id))
        .collect()
}
