use rand::seq::SliceRandom;
use rand::Rng;
use svtk::metrics::{dcf_point, eer, min_dcf, roc_sweep, DcfConfig, ErrorRates};
use svtk::scoring::Label;
use svtk::seed::rng_from_seed;

/// Error rates at threshold `t` by direct counting (accept iff score >= t).
fn rates_at(scores: &[f64], labels: &[Label], t: f64) -> (f64, f64) {
    let nt = labels.iter().filter(|&&l| l == Label::Target).count() as f64;
    let nn = labels.len() as f64 - nt;
    let miss = scores
        .iter()
        .zip(labels)
        .filter(|(s, l)| **l == Label::Target && **s < t)
        .count() as f64;
    let fa = scores
        .iter()
        .zip(labels)
        .filter(|(s, l)| **l == Label::Nontarget && **s >= t)
        .count() as f64;
    (miss / nt, fa / nn)
}

fn candidates(scores: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = scores.to_vec();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t.push(f64::INFINITY);
    t
}

fn oracle_min_dcf(scores: &[f64], labels: &[Label], cfg: &DcfConfig) -> f64 {
    candidates(scores)
        .into_iter()
        .map(|t| {
            let (m, f) = rates_at(scores, labels, t);
            dcf_point(&ErrorRates { e_miss: m, e_fa: f, threshold: t }, cfg)
        })
        .fold(f64::INFINITY, f64::min)
}

fn oracle_eer(scores: &[f64], labels: &[Label]) -> f64 {
    let pts: Vec<(f64, f64)> = candidates(scores)
        .into_iter()
        .map(|t| rates_at(scores, labels, t))
        .collect();
    for w in pts.windows(2) {
        let ((m0, f0), (m1, f1)) = (w[0], w[1]);
        if m0 < f0 && m1 >= f1 {
            let a = (f0 - m0) / ((m1 - m0) - (f1 - f0));
            return 100.0 * (m0 + a * (m1 - m0));
        }
    }
    100.0 * pts[0].0
}

fn random_set(rng: &mut impl Rng, n: usize) -> (Vec<f64>, Vec<Label>) {
    let mut labels: Vec<Label> = (0..n)
        .map(|i| if i % 3 == 0 { Label::Target } else { Label::Nontarget })
        .collect();
    labels.shuffle(rng);
    let quantize = rng.random_bool(0.3);
    let scores = labels
        .iter()
        .map(|l| {
            let base = rng.random::<f64>() + if *l == Label::Target { 0.4 } else { 0.0 };
            if quantize {
                (base * 20.0).round() / 20.0
            } else {
                base
            }
        })
        .collect();
    (scores, labels)
}

#[test]
fn matches_exhaustive_oracles() {
    let cfg = DcfConfig::default();
    let mut rng = rng_from_seed(42);
    for case in 0..100 {
        let n = if case < 5 { 2000 } else { rng.random_range(2..400) };
        let (scores, labels) = random_set(&mut rng, n.max(3));
        let (d, _) = min_dcf(&scores, &labels, &cfg).unwrap();
        assert_eq!(d, oracle_min_dcf(&scores, &labels, &cfg), "case {case}");
        let (e, _) = eer(&scores, &labels).unwrap();
        assert!((e - oracle_eer(&scores, &labels)).abs() <= 1e-9, "case {case}");
        assert!(d <= 0.05);
    }
}

#[test]
fn sweep_is_monotone() {
    let mut rng = rng_from_seed(1);
    for _ in 0..20 {
        let (scores, labels) = random_set(&mut rng, 300);
        let sweep = roc_sweep(&scores, &labels).unwrap();
        for w in sweep.windows(2) {
            assert!(w[0].e_miss <= w[1].e_miss);
            assert!(w[0].e_fa >= w[1].e_fa);
            assert!(w[0].threshold < w[1].threshold);
        }
    }
}

#[test]
fn invariant_under_increasing_transform() {
    let cfg = DcfConfig::default();
    let mut rng = rng_from_seed(2);
    let (scores, labels) = random_set(&mut rng, 500);
    let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
    assert_eq!(eer(&scores, &labels).unwrap().0, eer(&mapped, &labels).unwrap().0);
    assert_eq!(
        min_dcf(&scores, &labels, &cfg).unwrap().0,
        min_dcf(&mapped, &labels, &cfg).unwrap().0
    );
}

#[test]
fn symmetric_under_label_flip_and_negation() {
    let mut rng = rng_from_seed(3);
    let (scores, labels) = random_set(&mut rng, 400);
    let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
    let flipped: Vec<Label> = labels
        .iter()
        .map(|l| match l {
            Label::Target => Label::Nontarget,
            Label::Nontarget => Label::Target,
        })
        .collect();
    let a = eer(&scores, &labels).unwrap().0;
    let b = eer(&neg, &flipped).unwrap().0;
    assert!((a - b).abs() < 1.0, "{a} vs {b}");
}

#[test]
fn shuffled_labels_give_chance_eer() {
    let mut rng = rng_from_seed(4);
    let scores: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
    let labels: Vec<Label> = (0..10_000)
        .map(|_| if rng.random_bool(0.5) { Label::Target } else { Label::Nontarget })
        .collect();
    let e = eer(&scores, &labels).unwrap().0;
    assert!((e - 50.0).abs() <= 2.0, "{e}");
}
