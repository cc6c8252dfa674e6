use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use svtk::augment::{
    augment_online, build_offline_manifest, format_manifest, parse_manifest, render_record, Category,
    NoiseCorpus, Rendered, RirSet, RoomClass, Transform, Utterance,
};
use svtk::config::{ExperimentConfig, FusionConfig};
use svtk::dsp::{frame_count, instance_normalize, FbankExtractor, FeatureMatrix, Waveform};
use svtk::formats::{
    format_scores, read_features, read_scores, read_text, read_trials, read_wav, write_atomic, write_features,
    write_wav, EmbeddingStore,
};
use svtk::fusion::{fuse, search_weights, FusionWeights, Objective, SearchConfig};
use svtk::metrics::MetricsReport;
use svtk::nnet::{read_network, Embedding, Network};
use svtk::scoring::{
    draw_cohort, grid_search_norm, normalize_scores, sample_eval_segments, sample_feature_segments, score_trials, Cohort,
    ScoreSet, TrialList,
};
use svtk::seed::{derive_seed, derived_rng};
use svtk::synth::generate;
use svtk::{par, Error, Result};

use crate::{Command, Global};

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Utterance list: `<id> <wav path>` per line.
    #[arg(long)]
    pub list: PathBuf,
    /// Output directory; one `<id>.fbank` per utterance.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Directory of music recordings.
    #[arg(long)]
    pub music: Option<PathBuf>,
    /// Directory of noise recordings.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Directory of babble-speech recordings.
    #[arg(long)]
    pub speech: Option<PathBuf>,
    /// Impulse responses, in `small/`, `medium/` and `large/` subdirectories.
    #[arg(long)]
    pub rirs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub list: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Output directory for `<id>.wav` and `draws.tsv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Utterance list to expand into a manifest.
    #[arg(long, conflicts_with = "manifest")]
    pub list: Option<PathBuf>,
    /// Existing manifest to render.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Only write `manifest.tsv`.
    #[arg(long)]
    pub manifest_only: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Utterance list: `<id> <path>`; `.fbank` paths are read as features.
    #[arg(long)]
    pub list: PathBuf,
    /// Network weights; without it the network is built from the seed.
    #[arg(long)]
    pub network: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub trials: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NormArgs {
    #[arg(long)]
    pub trials: PathBuf,
    /// Raw score file.
    #[arg(long)]
    pub scores: PathBuf,
    /// Embeddings of the trial utterances.
    #[arg(long)]
    pub store: PathBuf,
    /// Cohort embeddings (one per utterance).
    #[arg(long)]
    pub cohort: PathBuf,
    /// Cohort grid `N1,N2,.../X1,X2,...`; requires labeled trials.
    #[arg(long)]
    pub grid: Option<String>,
    /// Grid table CSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Cohort size without `--grid` (default: the whole cohort).
    #[arg(long)]
    pub cohort_size: Option<usize>,
    #[arg(long)]
    pub top_x: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Score files, fused in the given order.
    pub scores: Vec<PathBuf>,
    /// Fixed weights `w1,w2,...`; otherwise they are searched.
    #[arg(long)]
    pub weights: Option<String>,
    /// Labeled trials for the weight search.
    #[arg(long)]
    pub trials: Option<PathBuf>,
    /// Search step used for both lattice and refinement.
    #[arg(long)]
    pub granularity: Option<f64>,
    /// `dcf` or `eer`.
    #[arg(long)]
    pub objective: Option<String>,
    /// Search trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub trials: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    /// JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub speakers: Option<usize>,
    #[arg(long)]
    pub utts: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub within: Option<f64>,
    #[arg(long)]
    pub between: Option<f64>,
    /// Cohort size.
    #[arg(long)]
    pub cohort: Option<usize>,
    /// Output directory for `store.svem`, `cohort.svem` and `trials.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(global: &Global, command: &Command) -> Result<()> {
    match command {
        Command::Fuse(a) => cmd_fuse(global, a),
        other => {
            let cfg = experiment_config(global)?;
            match other {
                Command::Features(a) => cmd_features(&cfg, a),
                Command::Augment(a) => cmd_augment(&cfg, a),
                Command::Render(a) => cmd_render(&cfg, a),
                Command::Embed(a) => cmd_embed(&cfg, a),
                Command::Score(a) => cmd_score(a),
                Command::Norm(a) => cmd_norm(&cfg, a),
                Command::Eval(a) => cmd_eval(&cfg, a),
                Command::Synth(a) => cmd_synth(&cfg, a),
                Command::Fuse(_) => unreachable!(),
            }
        }
    }
}

fn experiment_config(global: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &global.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = global.seed {
        cfg.master_seed = s;
        cfg.synth.seed = s;
        cfg.scoring.cohort.seed = s;
    }
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn read_list(path: &Path) -> Result<Vec<Utterance>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in read_text(path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let [id, p] = cols.as_slice() else {
            return Err(Error::Format {
                what: "utterance list",
                detail: format!("line {}: expected `<id> <path>`", i + 1),
            });
        };
        if !seen.insert(id.to_string()) {
            return Err(Error::InvalidInput(format!("duplicate utterance id '{id}'")));
        }
        let p = PathBuf::from(p);
        let p = if p.is_absolute() { p } else { base.join(p) };
        out.push(Utterance {
            id: id.to_string(),
            path: p.to_string_lossy().into_owned(),
        });
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("{} lists no utterances", path.display())));
    }
    Ok(out)
}

/// Runs `f` for every utterance; reports each failure and fails if any did.
fn for_each_utterance<T: Send>(
    utts: &[Utterance],
    f: impl Fn(usize, &Utterance) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    let indexed: Vec<(usize, &Utterance)> = utts.iter().enumerate().collect();
    let results = par::map(&indexed, |&(i, u)| f(i, u));
    let mut ok = Vec::with_capacity(results.len());
    let mut failed = 0;
    let mut degenerate = true;
    for (u, r) in utts.iter().zip(results) {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                eprintln!("error: {}: {e}", u.id);
                degenerate &= e.is_degenerate();
                failed += 1;
            }
        }
    }
    if failed > 0 {
        let msg = format!("{failed} of {} utterances failed", utts.len());
        return Err(if degenerate { Error::Degenerate(msg) } else { Error::InvalidInput(msg) });
    }
    Ok(ok)
}

fn cmd_features(cfg: &ExperimentConfig, a: &FeaturesArgs) -> Result<()> {
    let utts = read_list(&a.list)?;
    fs::create_dir_all(&a.out)?;
    for_each_utterance(&utts, |_, u| {
        let wave = read_wav(Path::new(&u.path))?;
        let feat = FbankExtractor::new(cfg.feature.clone(), wave.sample_rate)?.extract(&wave)?;
        write_features(&a.out.join(format!("{}.fbank", u.id)), &feat)
    })?;
    println!("wrote {} feature files to {}", utts.len(), a.out.display());
    Ok(())
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

fn load_corpus(c: &CorpusArgs) -> Result<(NoiseCorpus, RirSet)> {
    let mut corpus = NoiseCorpus::new();
    for (cat, dir) in [
        (Category::Music, &c.music),
        (Category::Noise, &c.noise),
        (Category::Speech, &c.speech),
    ] {
        if let Some(dir) = dir {
            for f in wav_files(dir)? {
                corpus.add_recording(cat, &read_wav(&f)?);
            }
        }
    }
    let mut rirs = RirSet::default();
    if let Some(dir) = &c.rirs {
        for (room, sub) in [
            (RoomClass::Small, "small"),
            (RoomClass::Medium, "medium"),
            (RoomClass::Large, "large"),
        ] {
            let sub = dir.join(sub);
            if sub.is_dir() {
                let waves = wav_files(&sub)?.iter().map(|f| read_wav(f)).collect::<Result<Vec<_>>>()?;
                rirs.by_room.insert(room, waves);
            }
        }
    }
    Ok((corpus, rirs))
}

fn cmd_augment(cfg: &ExperimentConfig, a: &AugmentArgs) -> Result<()> {
    let utts = read_list(&a.list)?;
    let (corpus, rirs) = load_corpus(&a.corpus)?;
    let all_rirs: Vec<Waveform> = rirs.by_room.values().flatten().cloned().collect();
    fs::create_dir_all(&a.out)?;
    let draws = for_each_utterance(&utts, |i, u| {
        let wave = read_wav(Path::new(&u.path))?;
        let mut rng = derived_rng(cfg.master_seed, "online", i as u64);
        let (out, draw) = augment_online(&wave, &corpus, &all_rirs, &mut rng)?;
        write_wav(&a.out.join(format!("{}.wav", u.id)), &out)?;
        let snr = draw.snr_db.map_or("-".to_string(), |s| format!("{s:.4}"));
        let sources: Vec<String> = draw.sources.iter().map(usize::to_string).collect();
        Ok(format!("{}\t{:?}\t{snr}\t{}\n", u.id, draw.category, sources.join(",")))
    })?;
    write_text(&a.out.join("draws.tsv"), &draws.concat())?;
    println!("augmented {} utterances into {}", utts.len(), a.out.display());
    Ok(())
}

fn cmd_render(cfg: &ExperimentConfig, a: &RenderArgs) -> Result<()> {
    let records = match (&a.list, &a.manifest) {
        (Some(list), None) => {
            let records = build_offline_manifest(&read_list(list)?, cfg.master_seed, &cfg.mask)?;
            write_text(&a.out.join("manifest.tsv"), &format_manifest(&records))?;
            records
        }
        (None, Some(m)) => parse_manifest(&read_text(m)?)?,
        _ => return Err(Error::InvalidInput("give exactly one of --list and --manifest".into())),
    };
    if a.manifest_only {
        println!("wrote {} manifest records", records.len());
        return Ok(());
    }
    let (corpus, rirs) = load_corpus(&a.corpus)?;
    let indexed: Vec<Utterance> = records
        .iter()
        .map(|r| Utterance {
            id: format!("{}.{}", r.utterance_id, r.transform),
            path: r.source_path.clone(),
        })
        .collect();
    fs::create_dir_all(&a.out)?;
    for_each_utterance(&indexed, |i, u| {
        let record = &records[i];
        let wave = read_wav(Path::new(&u.path))?;
        let rendered = render_record(record, &wave, &corpus, &rirs, |w| {
            Ok(instance_normalize(
                &FbankExtractor::new(cfg.feature.clone(), w.sample_rate)?.extract(w)?,
            ))
        })?;
        match rendered {
            Rendered::Audio(w) => write_wav(&a.out.join(format!("{}.wav", u.id)), &w),
            Rendered::Features(f) => write_features(&a.out.join(format!("{}.fbank", u.id)), &f),
        }
    })?;
    let masked = records.iter().filter(|r| r.transform == Transform::SpecMask).count();
    println!(
        "rendered {} records ({masked} feature masks) into {}",
        records.len(),
        a.out.display()
    );
    Ok(())
}

fn embed_segments(net: &Network, segments: &[FeatureMatrix]) -> Result<Vec<Embedding>> {
    segments.iter().map(|f| net.embed(&instance_normalize(f))).collect()
}

fn cmd_embed(cfg: &ExperimentConfig, a: &EmbedArgs) -> Result<()> {
    let utts = read_list(&a.list)?;
    let net = match &a.network {
        Some(p) => read_network(&mut fs::File::open(p)?)?,
        None => Network::build(cfg.network.clone(), derive_seed(cfg.master_seed, "network", 0))?,
    };
    if net.config.feat_dim != cfg.feature.n_mels {
        return Err(Error::InvalidInput(format!(
            "network expects {} bins, features have {}",
            net.config.feat_dim, cfg.feature.n_mels
        )));
    }
    let n = cfg.scoring.n_segments;
    let secs = cfg.scoring.segment_seconds;
    let per_utt = for_each_utterance(&utts, |_, u| {
        let path = Path::new(&u.path);
        let segments = if path.extension().is_some_and(|x| x == "fbank") {
            let feat = read_features(path)?;
            let samples = (secs * f64::from(svtk::dsp::SAMPLE_RATE)).round() as usize;
            let seg = frame_count(samples, feat.win_samples, feat.hop_samples)
                .ok_or_else(|| Error::InvalidInput("segment shorter than one frame".into()))?;
            sample_feature_segments(&feat, n, seg)?
        } else {
            let wave = read_wav(path)?;
            let ex = FbankExtractor::new(cfg.feature.clone(), wave.sample_rate)?;
            sample_eval_segments(&wave, n, secs)?
                .iter()
                .map(|w| ex.extract(w))
                .collect::<Result<Vec<_>>>()?
        };
        embed_segments(&net, &segments)
    })?;
    let mut store = EmbeddingStore::new(net.config.embed_dim);
    for (u, embs) in utts.iter().zip(per_utt) {
        let mean = Embedding::mean(&embs)?;
        for (k, e) in embs.into_iter().enumerate() {
            store.insert(format!("{}#{k}", u.id), e)?;
        }
        store.insert(u.id.clone(), mean)?;
    }
    store.write(&a.out)?;
    println!("wrote {} embeddings for {} utterances", store.len(), utts.len());
    Ok(())
}

fn segment_map(store: &EmbeddingStore, trials: &TrialList) -> Result<HashMap<String, Vec<Embedding>>> {
    trials
        .utterances()
        .into_iter()
        .map(|id| {
            let segs = store
                .segments(&id)
                .ok_or_else(|| Error::InvalidInput(format!("no embedding for '{id}'")))?;
            Ok((id, segs))
        })
        .collect()
}

fn file_stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "system".into())
}

fn cmd_score(a: &ScoreArgs) -> Result<()> {
    let trials = read_trials(&a.trials)?;
    let store = EmbeddingStore::read(&a.store)?;
    let scores = score_trials(&trials, &segment_map(&store, &trials)?, &file_stem(&a.out))?;
    write_text(&a.out, &format_scores(&scores))?;
    println!("scored {} trials", scores.len());
    Ok(())
}

fn parse_list(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad {what} value '{p}'")))
        })
        .collect()
}

/// `N1,N2/X1,X2`.
pub fn parse_grid(s: &str) -> Result<(Vec<usize>, Vec<usize>)> {
    let (ns, xs) = s
        .split_once('/')
        .ok_or_else(|| Error::InvalidInput(format!("grid '{s}' is not N1,N2/X1,X2")))?;
    Ok((parse_list(ns, "N")?, parse_list(xs, "X")?))
}

fn utterance_vectors(store: &EmbeddingStore, trials: &TrialList) -> Result<HashMap<String, Embedding>> {
    trials
        .utterances()
        .into_iter()
        .map(|id| {
            let v = match store.get(&id) {
                Some(v) => v.clone(),
                None => Embedding::mean(
                    &store
                        .segments(&id)
                        .ok_or_else(|| Error::InvalidInput(format!("no embedding for '{id}'")))?,
                )?,
            };
            Ok((id, v))
        })
        .collect()
}

fn cmd_norm(cfg: &ExperimentConfig, a: &NormArgs) -> Result<()> {
    let trials = read_trials(&a.trials)?;
    let raw = read_scores(&a.scores)?.align_to(&trials)?;
    let store = EmbeddingStore::read(&a.store)?;
    let vectors = utterance_vectors(&store, &trials)?;
    let cohort_store = EmbeddingStore::read(&a.cohort)?;
    let pool: Vec<Embedding> = cohort_store
        .utterance_vectors()
        .into_iter()
        .map(|(_, v)| v.clone())
        .collect();
    let seed = cfg.scoring.cohort.seed;
    let (n, x) = match &a.grid {
        Some(g) => {
            let (ns, xs) = parse_grid(g)?;
            let repeats = a.repeats.unwrap_or(cfg.scoring.cohort.repeats);
            let report = grid_search_norm(&raw, &trials, &vectors, &pool, &ns, &xs, repeats, seed, &cfg.dcf)?;
            for (n, x, why) in &report.skipped {
                eprintln!("skipped N={n} X={x}: {why}");
            }
            if let Some(t) = &a.table {
                write_text(t, &report.to_csv())?;
            }
            let cell = report
                .selected_cell()
                .ok_or_else(|| Error::Degenerate("no grid cell could be evaluated".into()))?;
            println!(
                "selected N={} X={} EER={:.4}±{:.4}% minDCF={:.4}±{:.4}",
                cell.n, cell.x, cell.eer_mean, cell.eer_std, cell.dcf_mean, cell.dcf_std
            );
            (cell.n, cell.x)
        }
        None => {
            if a.table.is_some() {
                return Err(Error::InvalidInput("--table requires --grid".into()));
            }
            (
                a.cohort_size.unwrap_or(pool.len()),
                a.top_x.unwrap_or(cfg.scoring.cohort.top_x),
            )
        }
    };
    if n > pool.len() {
        return Err(Error::InvalidInput(format!("cohort size {n} exceeds the {} available", pool.len())));
    }
    if x == 0 || x > n {
        return Err(Error::InvalidInput(format!("top-X {x} not in 1..={n}")));
    }
    let members: Vec<Embedding> = if n == pool.len() {
        pool
    } else {
        draw_cohort(pool.len(), n, seed, 0).into_iter().map(|i| pool[i].clone()).collect()
    };
    let normed = normalize_scores(&raw, &trials, &vectors, &Cohort::new(&members)?, x)?;
    write_text(&a.out, &format_scores(&normed))?;
    println!("normalized {} trials with N={n} X={x}", normed.len());
    Ok(())
}

fn parse_weights(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad weight '{p}'")))
        })
        .collect()
}

fn cmd_fuse(global: &Global, a: &FuseArgs) -> Result<()> {
    let (mut systems, mut fixed, mut search) = (Vec::new(), None, SearchConfig::default());
    if let Some(p) = &global.config {
        let fc = FusionConfig::load(p)?;
        systems = fc.systems;
        fixed = fc.weights.map(|w| w.into_iter().map(|(_, v)| v).collect::<Vec<_>>());
        search = fc.search;
    }
    for p in &a.scores {
        systems.push((file_stem(p), p.clone()));
    }
    if systems.is_empty() {
        return Err(Error::InvalidInput("no score files to fuse".into()));
    }
    let mut seen = HashSet::new();
    for (id, _) in &systems {
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate system id '{id}'")));
        }
    }
    if let Some(w) = &a.weights {
        fixed = Some(parse_weights(w)?);
    }
    if let Some(g) = a.granularity {
        search = SearchConfig {
            coarse_step: g,
            fine_step: g,
            ..search
        };
    }
    if let Some(o) = &a.objective {
        search.objective = Objective::parse(o)?;
    }
    let trials = a.trials.as_ref().map(|p| read_trials(p)).transpose()?;
    let sets = systems
        .iter()
        .map(|(id, p)| {
            let mut s = read_scores(p)?;
            s.system_id = id.clone();
            match &trials {
                Some(t) => s.align_to(t),
                None => Ok(s),
            }
        })
        .collect::<Result<Vec<ScoreSet>>>()?;
    let ids: Vec<String> = systems.iter().map(|(id, _)| id.clone()).collect();
    let weights = match fixed {
        Some(w) => {
            if w.len() != ids.len() {
                return Err(Error::InvalidInput(format!("{} weights for {} systems", w.len(), ids.len())));
            }
            FusionWeights::new(ids.into_iter().zip(w).collect())?
        }
        None => {
            let trials = trials
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("weight search needs --trials with labels".into()))?;
            let res = search_weights(&sets, &trials.labels()?, &search)?;
            if let Some(t) = &a.trace {
                write_text(t, &res.trace_csv())?;
            }
            println!(
                "searched {} weight vectors: EER={:.4}% minDCF={:.4}",
                res.trace.len(),
                res.eer,
                res.dcf
            );
            res.weights
        }
    };
    let fused = fuse(&sets, &weights)?;
    write_text(&a.out, &format_scores(&fused))?;
    let parts: Vec<String> = weights.entries().iter().map(|(id, w)| format!("{id}={w:.4}")).collect();
    println!("weights {}", parts.join(" "));
    Ok(())
}

fn cmd_eval(cfg: &ExperimentConfig, a: &EvalArgs) -> Result<()> {
    let trials = read_trials(&a.trials)?;
    let scores = read_scores(&a.scores)?.align_to(&trials)?;
    let report = MetricsReport::compute(&scores.scores, &trials.labels()?, &cfg.dcf)?;
    if let Some(p) = &a.out {
        write_text(p, &(report.to_json() + "\n"))?;
    }
    println!("{}", report.summary_line());
    Ok(())
}

fn cmd_synth(cfg: &ExperimentConfig, a: &SynthArgs) -> Result<()> {
    let mut spec = cfg.synth.clone();
    if let Some(v) = a.speakers {
        spec.n_speakers = v;
    }
    if let Some(v) = a.utts {
        spec.utts_per_speaker = v;
    }
    if let Some(v) = a.dim {
        spec.dim = v;
    }
    if let Some(v) = a.within {
        spec.within = v;
    }
    if let Some(v) = a.between {
        spec.between = v;
    }
    if let Some(v) = a.cohort {
        spec.n_cohort = v;
    }
    let data = generate(&spec)?;
    fs::create_dir_all(&a.out)?;
    data.store.write(&a.out.join("store.svem"))?;
    data.cohort.write(&a.out.join("cohort.svem"))?;
    write_text(&a.out.join("trials.txt"), &svtk::formats::format_trials(&data.trials))?;
    println!(
        "wrote {} utterances, {} cohort vectors, {} trials to {}",
        data.store.len(),
        data.cohort.len(),
        data.trials.len(),
        a.out.display()
    );
    Ok(())
}
