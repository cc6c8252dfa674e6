//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits nonzero if any criterion fails.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ndarray::{Array, Array2, Array3, Dimension};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};
use svtk::augment::{apply_rir, mix_at_snr};
use svtk::dsp::{extract_fbank, Complex64, FeatureConfig, FeatureMatrix, SpectrumAnalyzer, Waveform, Window, SAMPLE_RATE};
use svtk::fusion::{fuse, minmax_scale, search_weights, simplex_lattice, FusionWeights, SearchConfig};
use svtk::loss::{aam_softmax_loss, angular_prototypical_loss, combined_ap_plus_s, softmax_loss, ApAffine};
use svtk::metrics::{dcf_point, eer, min_dcf, DcfConfig, ErrorRates};
use svtk::nnet::{Embedding, Network, NetworkConfig, Pooling};
use svtk::scoring::{asnorm, cosine, sample_eval_segments, score_trials, trial_score, Label, ScoreSet};
use svtk::seed::rng_from_seed;
use svtk::synth::{generate, SyntheticSpec};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    check(t < limit, || format!("took {t:.2?}, limit {limit:?}"))
}

// ---------------------------------------------------------------- network

fn features(frames: usize, dim: usize) -> FeatureMatrix {
    FeatureMatrix::from_values(Array2::from_shape_fn((frames, dim), |(t, f)| {
        ((t * 13 + f * 5) % 17) as f64 / 17.0 - 0.5
    }))
}

fn stage_shapes() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    for d in [40, 64] {
        let net = Network::build(NetworkConfig::new(d, 256, Pooling::Stats, 1), 1).map_err(|e| e.to_string())?;
        check(net.config.pooled_width(3) == 64 * d, || format!("flatten width {} for D={d}", net.config.pooled_width(3)))?;
        for l in [100, 198, 200] {
            let outs = net.trunk_forward(&features(l, d)).map_err(|e| e.to_string())?;
            let expect = [
                (32, d, l),
                (32, d, l),
                (64, d.div_ceil(2), l.div_ceil(2)),
                (128, d.div_ceil(4), l.div_ceil(4)),
                (256, d.div_ceil(8), l.div_ceil(8)),
            ];
            for (i, (o, e)) in outs.iter().zip(expect).enumerate() {
                check(o.shape() == e, || format!("D={d} L={l} stage {i}: {:?} != {e:?}", o.shape()))?;
                checked += 1;
            }
            let (c, f, _) = outs[4].shape();
            check(2 * c * f == 64 * d, || format!("pooled width {} != {}", 2 * c * f, 64 * d))?;
        }
    }
    within_time(start, Duration::from_secs(10))?;
    Ok(format!("{checked} stage outputs, flatten = 64·D, {:.2?}", start.elapsed()))
}

fn analytic_parameters(d: usize, m: usize) -> usize {
    let conv = |i: usize, o: usize, k: usize| i * o * k * k;
    let norm = |c: usize| 2 * c;
    let mut total = conv(1, 32, 3) + norm(32);
    let mut cin = 32;
    for (s, (c, b)) in [(32, 3), (64, 4), (128, 6), (256, 3)].into_iter().enumerate() {
        for i in 0..b {
            let input = if i == 0 { cin } else { c };
            total += conv(input, c, 3) + norm(c) + conv(c, c, 3) + norm(c);
            if (i == 0 && s > 0) || input != c {
                total += conv(input, c, 1) + norm(c);
            }
        }
        cin = c;
    }
    total + 2 * 256 * d.div_ceil(8) * m + m
}

fn parameter_count() -> Outcome {
    let start = Instant::now();
    let net = Network::build(NetworkConfig::new(40, 256, Pooling::Stats, 1), 0).map_err(|e| e.to_string())?;
    let built = net.parameter_count();
    let analytic = analytic_parameters(40, 256);
    check(built == analytic, || format!("builder {built} != analytic {analytic}"))?;
    check((5.0e6..=7.0e6).contains(&(built as f64)), || format!("{built} outside [5.0e6, 7.0e6]"))?;
    within_time(start, Duration::from_secs(1))?;
    Ok(format!("{built} parameters, {:.2?}", start.elapsed()))
}

// ---------------------------------------------------------------- metrics

fn dcf_points() -> Outcome {
    let cfg = DcfConfig::default();
    for ((m, f), want) in [((0.0, 0.0), 0.0), ((1.0, 0.0), 0.05), ((0.0, 1.0), 0.95), ((0.5, 0.5), 0.5)] {
        let got = dcf_point(&ErrorRates { e_miss: m, e_fa: f, threshold: 0.0 }, &cfg);
        check(got == want, || format!("({m}, {f}) -> {got}, want {want}"))?;
    }
    Ok("4 points exact".into())
}

fn count_rates(scores: &[f64], labels: &[Label], t: f64) -> (f64, f64) {
    let (mut miss, mut fa, mut nt, mut nn) = (0usize, 0usize, 0usize, 0usize);
    for (s, l) in scores.iter().zip(labels) {
        match l {
            Label::Target => {
                nt += 1;
                miss += usize::from(*s < t);
            }
            Label::Nontarget => {
                nn += 1;
                fa += usize::from(*s >= t);
            }
        }
    }
    (miss as f64 / nt as f64, fa as f64 / nn as f64)
}

/// O(n²): every distinct score plus +∞ as a threshold, rates by counting.
fn scan(scores: &[f64], labels: &[Label]) -> Vec<(f64, f64)> {
    let mut t = scores.to_vec();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t.push(f64::INFINITY);
    t.into_iter().map(|t| count_rates(scores, labels, t)).collect()
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let cfg = DcfConfig::default();
    let mut rng = rng_from_seed(4);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = if case % 10 == 0 { 2000 } else { rng.random_range(4..1000) };
        let mut labels: Vec<Label> = (0..n).map(|i| if i % 4 == 0 { Label::Target } else { Label::Nontarget }).collect();
        labels.shuffle(&mut rng);
        let coarse = case % 3 == 0;
        let scores: Vec<f64> = labels
            .iter()
            .map(|l| {
                let s = rng.random::<f64>() + if *l == Label::Target { 0.3 } else { 0.0 };
                if coarse { (s * 25.0).round() } else { s }
            })
            .collect();
        let pts = scan(&scores, &labels);
        let want_dcf = pts
            .iter()
            .map(|&(m, f)| cfg.c_miss * m * cfg.p_target + cfg.c_fa * f * (1.0 - cfg.p_target))
            .fold(f64::INFINITY, f64::min);
        let got_dcf = min_dcf(&scores, &labels, &cfg).map_err(|e| e.to_string())?.0;
        check(got_dcf == want_dcf, || format!("case {case}: minDCF {got_dcf} != {want_dcf}"))?;
        let i = pts.iter().position(|p| p.0 >= p.1).unwrap();
        let want_eer = if i == 0 {
            100.0 * pts[0].0
        } else {
            let ((m0, f0), (m1, f1)) = (pts[i - 1], pts[i]);
            let a = (f0 - m0) / ((m1 - m0) - (f1 - f0));
            100.0 * (m0 + a * (m1 - m0))
        };
        let got_eer = eer(&scores, &labels).map_err(|e| e.to_string())?.0;
        worst = worst.max((got_eer - want_eer).abs());
        check(worst <= 1e-9, || format!("case {case}: EER {got_eer} vs {want_eer}"))?;
    }
    within_time(start, Duration::from_secs(60))?;
    Ok(format!("100 sets, minDCF exact, max EER diff {worst:.1e}, {:.2?}", start.elapsed()))
}

// ---------------------------------------------------------------- losses

const FD_STEP: f64 = 1e-6;

fn fd_grad<D: Dimension>(x: &Array<f64, D>, f: impl Fn(&Array<f64, D>) -> f64) -> Array<f64, D> {
    let mut g = x.clone();
    let mut probe = x.clone();
    let n = x.len();
    for i in 0..n {
        let orig = probe.as_slice().unwrap()[i];
        probe.as_slice_mut().unwrap()[i] = orig + FD_STEP;
        let up = f(&probe);
        probe.as_slice_mut().unwrap()[i] = orig - FD_STEP;
        let down = f(&probe);
        probe.as_slice_mut().unwrap()[i] = orig;
        g.as_slice_mut().unwrap()[i] = (up - down) / (2.0 * FD_STEP);
    }
    g
}

fn rel<D: Dimension>(a: &Array<f64, D>, b: &Array<f64, D>) -> f64 {
    let diff = (a - b).mapv(|v| v * v).sum().sqrt();
    let scale = a.mapv(|v| v * v).sum().sqrt().max(b.mapv(|v| v * v).sum().sqrt());
    diff / scale.max(1e-300)
}

fn gaussian2(rng: &mut impl Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.sample(StandardNormal))
}

fn gaussian3(rng: &mut impl Rng, a: usize, b: usize, c: usize) -> Array3<f64> {
    Array3::from_shape_fn((a, b, c), |_| rng.sample(StandardNormal))
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let tol = 1e-5;
    let mut worst = [0.0f64; 4];
    for seed in 0..50u64 {
        let mut rng = rng_from_seed(1000 + seed);
        let (n, c, d) = (6, 5, 8);
        let e = gaussian2(&mut rng, n, d);
        let w = gaussian2(&mut rng, c, d);
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();

        let s = softmax_loss(e.view(), &y, w.view()).unwrap();
        let es = rel(&s.grad_embeddings, &fd_grad(&e, |x| softmax_loss(x.view(), &y, w.view()).unwrap().value));
        let ws = rel(s.grad_weights.as_ref().unwrap(), &fd_grad(&w, |x| softmax_loss(e.view(), &y, x.view()).unwrap().value));
        worst[0] = worst[0].max(es).max(ws);

        let a = aam_softmax_loss(e.view(), &y, w.view(), 0.2, 30.0).unwrap();
        let ea = rel(&a.grad_embeddings, &fd_grad(&e, |x| aam_softmax_loss(x.view(), &y, w.view(), 0.2, 30.0).unwrap().value));
        let wa = rel(
            a.grad_weights.as_ref().unwrap(),
            &fd_grad(&w, |x| aam_softmax_loss(e.view(), &y, x.view(), 0.2, 30.0).unwrap().value),
        );
        worst[1] = worst[1].max(ea).max(wa);

        let groups = gaussian3(&mut rng, 5, 2, d);
        let aff = ApAffine { w: rng.random_range(1.0..15.0), b: rng.random_range(-8.0..0.0) };
        let p = angular_prototypical_loss(groups.view(), aff).unwrap();
        let ep = rel(&p.grad_embeddings, &fd_grad(&groups, |x| angular_prototypical_loss(x.view(), aff).unwrap().value));
        let f = |a: ApAffine| angular_prototypical_loss(groups.view(), a).unwrap().value;
        let dw = (f(ApAffine { w: aff.w + FD_STEP, ..aff }) - f(ApAffine { w: aff.w - FD_STEP, ..aff })) / (2.0 * FD_STEP);
        let db = (f(ApAffine { b: aff.b + FD_STEP, ..aff }) - f(ApAffine { b: aff.b - FD_STEP, ..aff })) / (2.0 * FD_STEP);
        let ga = p.grad_affine.unwrap();
        let eaff = rel(&ndarray::arr1(&[ga.w, ga.b]), &ndarray::arr1(&[dw, db]));
        worst[2] = worst[2].max(ep).max(eaff);

        let g4 = gaussian3(&mut rng, 4, 2, d);
        let w6 = gaussian2(&mut rng, 6, d);
        let spk: Vec<usize> = rand::seq::index::sample(&mut rng, 6, 4).into_vec();
        let comb = combined_ap_plus_s(g4.view(), &spk, w6.view(), aff).unwrap();
        let ec = rel(&comb.grad_embeddings, &fd_grad(&g4, |x| combined_ap_plus_s(x.view(), &spk, w6.view(), aff).unwrap().value));
        let wc = rel(
            comb.grad_weights.as_ref().unwrap(),
            &fd_grad(&w6, |x| combined_ap_plus_s(g4.view(), &spk, x.view(), aff).unwrap().value),
        );
        worst[3] = worst[3].max(ec).max(wc);
    }
    let names = ["S", "AAM", "AP", "AP+S"];
    for (name, w) in names.iter().zip(worst) {
        check(w <= tol, || format!("{name} worst relative error {w:.2e}"))?;
    }
    within_time(start, Duration::from_secs(120))?;
    Ok(format!(
        "50 cases each, worst rel err S {:.1e} AAM {:.1e} AP {:.1e} AP+S {:.1e}, {:.2?}",
        worst[0],
        worst[1],
        worst[2],
        worst[3],
        start.elapsed()
    ))
}

fn loss_reductions() -> Outcome {
    let mut rng = rng_from_seed(6);
    let mut worst_aam = 0.0f64;
    let mut worst_ap = 0.0f64;
    for _ in 0..20 {
        let e = gaussian2(&mut rng, 8, 6);
        let w = gaussian2(&mut rng, 5, 6);
        let y: Vec<usize> = (0..8).map(|_| rng.random_range(0..5)).collect();
        let got = aam_softmax_loss(e.view(), &y, w.view(), 0.0, 1.0).unwrap().value;
        let mut want = 0.0;
        for (i, &yi) in y.iter().enumerate() {
            let er = e.row(i);
            let cos: Vec<f64> = w
                .rows()
                .into_iter()
                .map(|wr| er.dot(&wr) / (er.dot(&er).sqrt() * wr.dot(&wr).sqrt()))
                .collect();
            want += cos.iter().map(|c| c.exp()).sum::<f64>().ln() - cos[yi];
        }
        worst_aam = worst_aam.max((got - want / 8.0).abs());
        let n = rng.random_range(2..20);
        let groups = gaussian3(&mut rng, n, 2, 6);
        let ap = angular_prototypical_loss(groups.view(), ApAffine { w: 0.0, b: rng.random_range(-5.0..5.0) }).unwrap();
        worst_ap = worst_ap.max((ap.value - (n as f64).ln()).abs());
    }
    check(worst_aam <= 1e-12, || format!("AAM(m=0,s=1) off by {worst_aam:e}"))?;
    check(worst_ap <= 1e-12, || format!("AP(w=0) off ln(n) by {worst_ap:e}"))?;
    Ok(format!("AAM diff {worst_aam:.1e}, AP diff {worst_ap:.1e}"))
}

// ---------------------------------------------------------------- dsp

fn dsp_oracles() -> Outcome {
    let mut rng = rng_from_seed(7);
    let mut worst_fft = 0.0f64;
    for (len, nfft) in [(400, 512), (512, 512), (300, 1024)] {
        let frame: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = SpectrumAnalyzer::new(Window::Rectangular, len, nfft).unwrap().complex_spectrum(&frame);
        let slow: Vec<Complex64> = (0..nfft)
            .map(|k| {
                frame.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (t, &v)| {
                    let a = -2.0 * PI * ((k * t) % nfft) as f64 / nfft as f64;
                    acc + Complex64::new(v * a.cos(), v * a.sin())
                })
            })
            .collect();
        let err: f64 = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let scale: f64 = slow.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
        worst_fft = worst_fft.max(err / scale);
    }
    check(worst_fft <= 1e-9, || format!("FFT relative error {worst_fft:e}"))?;

    let sr = SAMPLE_RATE as usize;
    let two_s = Waveform::new((0..2 * sr).map(|_| rng.random_range(-0.5..0.5)).collect(), SAMPLE_RATE).unwrap();
    let f = extract_fbank(&two_s, &FeatureConfig::fbank40()).map_err(|e| e.to_string())?;
    check((f.n_frames(), f.n_mels()) == (198, 40), || format!("fbank shape {:?}", f.values.dim()))?;

    let power = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let mut worst_snr = 0.0f64;
    let mut worst_rir = 0.0f64;
    for _ in 0..25 {
        let clean = Waveform::new((0..sr).map(|_| rng.random_range(-0.5..0.5)).collect(), SAMPLE_RATE).unwrap();
        let k = rng.random_range(1..=7);
        let noises: Vec<Waveform> = (0..k)
            .map(|_| {
                let n = rng.random_range(sr / 2..2 * sr);
                Waveform::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), SAMPLE_RATE).unwrap()
            })
            .collect();
        let snr = rng.random_range(0.0..20.0);
        let mixed = mix_at_snr(&clean, &noises, snr, &mut rng).map_err(|e| e.to_string())?;
        let resid: Vec<f64> = mixed.samples.iter().zip(&clean.samples).map(|(m, c)| m - c).collect();
        worst_snr = worst_snr.max((10.0 * (power(&clean.samples) / power(&resid)).log10() - snr).abs());

        let rlen = rng.random_range(200..8000);
        let rir = Waveform::new(
            (0..rlen).map(|i| rng.random_range(-1.0..1.0) * (-(i as f64) / 500.0).exp()).collect(),
            SAMPLE_RATE,
        )
        .unwrap();
        let out = apply_rir(&clean, &rir).map_err(|e| e.to_string())?;
        worst_rir = worst_rir.max((out.power() - clean.power()).abs() / clean.power());
    }
    check(worst_snr <= 0.01, || format!("SNR off by {worst_snr} dB"))?;
    check(worst_rir <= 1e-6, || format!("RIR power off by {worst_rir:e}"))?;
    Ok(format!(
        "FFT {worst_fft:.1e}, 2 s → 198×40, SNR {worst_snr:.1e} dB, RIR power {worst_rir:.1e}"
    ))
}

// ---------------------------------------------------------------- scoring

fn raw_cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
}

fn random_embs(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<Embedding> {
    (0..n).map(|_| Embedding((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())).collect()
}

fn scoring_protocol() -> Outcome {
    let mut rng = rng_from_seed(8);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let e = random_embs(&mut rng, 10, 32);
        let t = random_embs(&mut rng, 10, 32);
        let mut total = 0.0;
        for a in &e {
            for b in &t {
                total += raw_cos(&a.0, &b.0);
            }
        }
        worst = worst.max((trial_score(&e, &t).unwrap() - total / 100.0).abs());
    }
    check(worst <= 1e-12, || format!("10×10 mean off by {worst:e}"))?;

    let sr = SAMPLE_RATE as usize;
    let w = Waveform::new((0..4 * sr).map(|_| rng.random_range(-1.0..1.0)).collect(), SAMPLE_RATE).unwrap();
    let segs = sample_eval_segments(&w, 10, 4.0).map_err(|e| e.to_string())?;
    check(segs.len() == 10 && segs.iter().all(|s| *s == w), || "4 s input did not give 10 identical segments".into())?;
    let a = random_embs(&mut rng, 1, 16).remove(0);
    let b = random_embs(&mut rng, 1, 16).remove(0);
    let single = cosine(&a, &b).unwrap();
    let repeated = trial_score(&vec![a; 10], &vec![b; 10]).unwrap();
    check((single - repeated).abs() <= 1e-12, || format!("{repeated} != {single}"))?;
    Ok(format!("10×10 max diff {worst:.1e}, 4 s → 10 identical segments"))
}

fn brute_stats(v: &Embedding, cohort: &[Embedding], x: usize) -> (f64, f64) {
    let mut s: Vec<(f64, usize)> = cohort.iter().enumerate().map(|(i, c)| (raw_cos(&v.0, &c.0), i)).collect();
    s.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mu = s[..x].iter().map(|p| p.0).sum::<f64>() / x as f64;
    let var = s[..x].iter().map(|p| (p.0 - mu).powi(2)).sum::<f64>() / x as f64;
    (mu, var.sqrt())
}

fn svtk_bin() -> &'static str {
    env!("CARGO_BIN_EXE_svtk")
}

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(svtk_bin()).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("svtk {} failed: {}", args[0], String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn ps(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn asnorm_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(9);
    let mut worst = 0.0f64;
    let mut worst_full = 0.0f64;
    for _ in 0..300 {
        let n = rng.random_range(2..=10);
        let x = rng.random_range(2..=n);
        let cohort = random_embs(&mut rng, n, 8);
        let v = random_embs(&mut rng, 2, 8);
        let raw = rng.random_range(-1.0..1.0);
        let (me, se) = brute_stats(&v[0], &cohort, x);
        let (mt, st) = brute_stats(&v[1], &cohort, x);
        let want = 0.5 * ((raw - me) / se + (raw - mt) / st);
        let got = asnorm(raw, &v[0], &v[1], &cohort, x).map_err(|e| e.to_string())?;
        worst = worst.max((got - want).abs() / want.abs().max(1.0));

        let full = |e: &Embedding| {
            let s: Vec<f64> = cohort.iter().map(|c| raw_cos(&e.0, &c.0)).collect();
            let mu = s.iter().sum::<f64>() / n as f64;
            (mu, (s.iter().map(|t| (t - mu).powi(2)).sum::<f64>() / n as f64).sqrt())
        };
        let ((fe, fse), (ft, fst)) = (full(&v[0]), full(&v[1]));
        let sym = 0.5 * ((raw - fe) / fse + (raw - ft) / fst);
        worst_full = worst_full.max((asnorm(raw, &v[0], &v[1], &cohort, n).unwrap() - sym).abs() / sym.abs().max(1.0));
    }
    check(worst <= 1e-12, || format!("AS-norm off by {worst:e}"))?;
    check(worst_full <= 1e-12, || format!("X=N off symmetric norm by {worst_full:e}"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let syn = d.join("syn");
    run_cli(&[
        "synth", "--seed", "11", "--speakers", "500", "--utts", "5", "--dim", "64", "--within", "2.0", "--cohort", "400",
        "--out", ps(&syn),
    ])?;
    let trials = syn.join("trials.txt");
    let store = syn.join("store.svem");
    let raw = d.join("raw.txt");
    run_cli(&["score", "--trials", ps(&trials), "--store", ps(&store), "--out", ps(&raw)])?;
    let table = d.join("grid.csv");
    run_cli(&[
        "norm", "--seed", "11", "--trials", ps(&trials), "--scores", ps(&raw), "--store", ps(&store), "--cohort",
        ps(&syn.join("cohort.svem")), "--grid", "200,300/20,40", "--repeats", "10", "--table", ps(&table), "--out",
        ps(&d.join("norm.txt")),
    ])?;
    let csv = fs::read_to_string(&table).map_err(|e| e.to_string())?;
    let mut lines = csv.lines();
    check(lines.next() == Some("N,X,EER_mean,EER_std,DCF_mean,DCF_std,selected"), || "bad CSV header".into())?;
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    check(rows.len() == 4, || format!("{} grid rows, want 4", rows.len()))?;
    let num = |r: &Vec<String>, i: usize| r[i].parse::<f64>().unwrap_or(f64::NAN);
    check(rows.iter().all(|r| num(r, 3) >= 0.0 && num(r, 5) >= 0.0), || "missing or negative std".into())?;
    let argmin = (0..rows.len())
        .min_by(|&a, &b| {
            num(&rows[a], 4)
                .total_cmp(&num(&rows[b], 4))
                .then(num(&rows[a], 0).total_cmp(&num(&rows[b], 0)))
                .then(num(&rows[a], 1).total_cmp(&num(&rows[b], 1)))
        })
        .unwrap();
    let flagged: Vec<usize> = (0..rows.len()).filter(|&i| rows[i][6] == "1").collect();
    check(flagged == vec![argmin], || format!("selected {flagged:?}, argmin {argmin}"))?;
    within_time(start, Duration::from_secs(300))?;
    let sel = &rows[argmin];
    Ok(format!(
        "max diff {worst:.1e}, X=N {worst_full:.1e}; grid selects N={} X={} (DCF {:.4}±{:.4}), {:.2?}",
        sel[0],
        sel[1],
        num(sel, 4),
        num(sel, 5),
        start.elapsed()
    ))
}

// ---------------------------------------------------------------- fusion

fn fusion_invariances() -> Outcome {
    let n = 10_000;
    let mut rng = rng_from_seed(10);
    let labels: Vec<Label> = (0..n).map(|i| if i % 2 == 0 { Label::Target } else { Label::Nontarget }).collect();
    let keys: Vec<(String, String)> = (0..n).map(|i| (format!("e{i}"), format!("t{i}"))).collect();
    let strong: Vec<f64> = labels
        .iter()
        .map(|l| rng.sample::<f64, _>(StandardNormal) + if *l == Label::Target { 2.5 } else { 0.0 })
        .collect();
    let noise: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let strong = ScoreSet::new("strong", keys.clone(), strong).unwrap();
    let noise = ScoreSet::new("noise", keys, noise).unwrap();
    let cfg = DcfConfig::default();

    let scaled = minmax_scale(&strong).map_err(|e| e.to_string())?;
    let (e0, d0) = (eer(&strong.scores, &labels).unwrap().0, min_dcf(&strong.scores, &labels, &cfg).unwrap().0);
    let (e1, d1) = (eer(&scaled.scores, &labels).unwrap().0, min_dcf(&scaled.scores, &labels, &cfg).unwrap().0);
    check(e0 == e1 && d0 == d1, || format!("min-max changed metrics: {e0}/{d0} -> {e1}/{d1}"))?;

    let copy = ScoreSet { system_id: "copy".into(), ..strong.clone() };
    let mut worst_self = 0.0f64;
    for k in 0..=20 {
        let w = f64::from(k) / 20.0;
        let weights = FusionWeights::new(vec![("strong".into(), w), ("copy".into(), 1.0 - w)]).unwrap();
        let f = fuse(&[strong.clone(), copy.clone()], &weights).map_err(|e| e.to_string())?;
        worst_self = worst_self.max((eer(&f.scores, &labels).unwrap().0 - e0).abs());
    }
    check(worst_self <= 1e-9, || format!("self-fusion EER off by {worst_self:e}"))?;

    let res = search_weights(&[strong.clone(), noise.clone()], &labels, &SearchConfig::with_granularity(0.01))
        .map_err(|e| e.to_string())?;
    let w = res.weights.get("strong").unwrap();
    let mut best = (f64::INFINITY, f64::INFINITY, f64::NAN);
    for u in simplex_lattice(2, 100) {
        let ws = f64::from(u[0]) / 100.0;
        let weights = FusionWeights::new(vec![("strong".into(), ws), ("noise".into(), f64::from(u[1]) / 100.0)]).unwrap();
        let f = fuse(&[strong.clone(), noise.clone()], &weights).unwrap();
        let d = min_dcf(&f.scores, &labels, &cfg).unwrap().0;
        let e = eer(&f.scores, &labels).unwrap().0;
        if d < best.0 || (d == best.0 && e < best.1) {
            best = (d, e, ws);
        }
    }
    check(w >= 0.9, || format!("strong weight {w} < 0.9"))?;
    check((w - best.2).abs() < 1e-12, || format!("search {w} vs brute force {}", best.2))?;
    Ok(format!(
        "min-max exact, self-fusion diff {worst_self:.1e}, strong weight {w:.2} (brute force {:.2})",
        best.2
    ))
}

// ---------------------------------------------------------------- end to end

fn synth_eer(within: f64, seed: u64) -> Result<f64, String> {
    let data = generate(&SyntheticSpec {
        n_speakers: 500,
        utts_per_speaker: 5,
        dim: 32,
        within,
        between: 0.15,
        seed,
        n_cohort: 0,
    })
    .map_err(|e| e.to_string())?;
    check(data.trials.len() == 10_000, || format!("{} trials", data.trials.len()))?;
    let embs: HashMap<String, Vec<Embedding>> = data.store.iter().map(|(k, v)| (k.to_string(), vec![v.clone()])).collect();
    let scores = score_trials(&data.trials, &embs, "synth").map_err(|e| e.to_string())?;
    Ok(eer(&scores.scores, &data.trials.labels().unwrap()).map_err(|e| e.to_string())?.0)
}

fn synthetic_monotonicity() -> Outcome {
    let start = Instant::now();
    let levels = [0.1, 0.2, 0.3, 0.4, 0.5];
    let eers = levels.iter().map(|&w| synth_eer(w, 21)).collect::<Result<Vec<_>, _>>()?;
    let inversions: Vec<f64> = eers.windows(2).filter(|p| p[1] < p[0]).map(|p| p[0] - p[1]).collect();
    check(
        inversions.len() <= 1 && inversions.iter().all(|&d| d <= 0.5),
        || format!("EER sequence {eers:?} not monotone"),
    )?;
    let zero = synth_eer(1e-9, 22)?;
    check(zero == 0.0, || format!("vanishing spread EER {zero}"))?;
    within_time(start, Duration::from_secs(300))?;
    let shown: Vec<String> = eers.iter().map(|e| format!("{e:.2}")).collect();
    Ok(format!("EER% [{}], vanishing spread 0, {:.2?}", shown.join(", "), start.elapsed()))
}

fn pipeline(dir: &Path, extra: &[&'static str]) -> Result<Vec<(String, String)>, String> {
    let with = |mut args: Vec<&str>| {
        args.extend_from_slice(extra);
        run_cli(&args)
    };
    let syn = dir.join("syn");
    with(vec![
        "synth", "--seed", "31", "--speakers", "120", "--utts", "4", "--dim", "32", "--within", "0.6", "--cohort", "150",
        "--out", ps(&syn),
    ])?;
    let trials = syn.join("trials.txt");
    let store = syn.join("store.svem");
    let raw = dir.join("raw.txt");
    let norm = dir.join("norm.txt");
    let grid = dir.join("grid.csv");
    let fused = dir.join("fused.txt");
    let trace = dir.join("trace.csv");
    let report = dir.join("report.json");
    with(vec!["score", "--trials", ps(&trials), "--store", ps(&store), "--out", ps(&raw)])?;
    with(vec![
        "norm", "--seed", "31", "--trials", ps(&trials), "--scores", ps(&raw), "--store", ps(&store), "--cohort",
        ps(&syn.join("cohort.svem")), "--grid", "100,150/10,30", "--repeats", "4", "--table", ps(&grid), "--out",
        ps(&norm),
    ])?;
    with(vec!["fuse", ps(&raw), ps(&norm), "--trials", ps(&trials), "--trace", ps(&trace), "--out", ps(&fused)])?;
    let summary = with(vec!["eval", "--trials", ps(&trials), "--scores", ps(&fused), "--out", ps(&report)])?;
    let mut hashes = Vec::new();
    for p in [
        syn.join("store.svem"),
        syn.join("cohort.svem"),
        trials,
        raw,
        norm,
        grid,
        trace,
        fused,
        report,
    ] {
        let bytes = fs::read(&p).map_err(|e| e.to_string())?;
        let name = p.strip_prefix(dir).unwrap().display().to_string();
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        hashes.push((name, hex));
    }
    hashes.push(("stdout".into(), summary));
    Ok(hashes)
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline(a.path(), &[])?;
    let second = pipeline(b.path(), &["--jobs", "1"])?;
    for (x, y) in first.iter().zip(&second) {
        check(x == y, || format!("{} differs between runs", x.0))?;
    }
    Ok(format!(
        "{} artifacts byte-identical across reruns (default pool vs 1 thread); {}",
        first.len() - 1,
        first.last().unwrap().1.trim()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("stage shape conformance", stage_shapes),
        ("parameter count", parameter_count),
        ("detection cost points", dcf_points),
        ("metric oracle equivalence", metric_oracles),
        ("loss gradient checks", gradient_checks),
        ("AAM and AP reductions", loss_reductions),
        ("DSP oracles", dsp_oracles),
        ("scoring protocol", scoring_protocol),
        ("AS-norm oracle and grid", asnorm_oracle),
        ("fusion invariances", fusion_invariances),
        ("synthetic EER monotonicity", synthetic_monotonicity),
        ("pipeline determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("[PASS] {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
