//! Distributional properties of the purity tests under the null and under
//! injected fine structure.

use rand::Rng;

use spce::purity::{
    detection_rate_test, halves_test, homogeneity_test, purity_suite, random_subensembles, runs_test, Channel,
    PurityConfig, PurityReport, SubsampleScheme, Verdict,
};
use spce::quantum::{build_singlet, sample_trial, Direction, Outcome};
use spce::rng::{labels, Stream};
use spce::series::{Detection, ModelTag, TimeSeries};

fn iid_series(n: usize, rng: &mut Stream) -> TimeSeries {
    let psi = build_singlet();
    let (a, b) = (Direction::planar_degrees(0.0), Direction::planar_degrees(70.0));
    TimeSeries::from_detections("iid", None, ModelTag::Quantum, 0, (0..n).map(|_| Detection::Pair(sample_trial(&psi, &a, &b, rng))))
}

/// Kolmogorov-Smirnov distance of a sample from Uniform(0, 1).
fn ks_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max)
}

#[test]
fn null_p_values_are_uniform() {
    let reps = 1000;
    let n = 10_000;
    let mut p: [Vec<f64>; 5] = Default::default();
    for rep in 0..reps {
        let mut rng = Stream::new(1_000 + rep);
        let s = iid_series(n, &mut rng);
        let subs = random_subensembles(&s, 10, 0.2, &rng.derive(labels::SUBSAMPLE)).unwrap();
        let mut thinned = TimeSeries::new("nd", None, ModelTag::Contextual);
        for t in s.trials() {
            let d = if rng.random::<f64>() < 0.5 { t.detection } else { Detection::NoDetection };
            thinned.push(0, d);
        }
        let reports: [PurityReport; 5] = [
            homogeneity_test(&subs, SubsampleScheme::Subsampled { population: n }, 0.05).unwrap(),
            runs_test(&s, Channel::X, 0.05).unwrap(),
            runs_test(&s, Channel::Product, 0.05).unwrap(),
            halves_test(&s, 0.05).unwrap(),
            detection_rate_test(&thinned, 0.05).unwrap(),
        ];
        for (acc, r) in p.iter_mut().zip(reports) {
            acc.push(r.p_value);
        }
    }
    for (name, values) in ["homogeneity", "runs x", "runs product", "halves", "detection rate"].iter().zip(p) {
        let d = ks_uniform(values);
        assert!(d <= 0.05, "{name}: KS distance {d}");
    }
}

#[test]
fn periodic_injection_is_detected() {
    let reps = 100;
    let n = 10_000;
    for k in 2..=20usize {
        let mut rejected = 0;
        for rep in 0..reps {
            let mut rng = Stream::new(((k as u64) << 32) + rep);
            let s = iid_series(n, &mut rng);
            // every k-th outcome forced to repeat its predecessor
            let mut forced = TimeSeries::new("forced", None, ModelTag::External);
            let mut prev: Option<Outcome> = None;
            for (i, o) in s.outcomes().enumerate() {
                let o = match prev {
                    Some(p) if i % k == 0 => p,
                    _ => o,
                };
                forced.push(0, Detection::Pair(o));
                prev = Some(o);
            }
            rejected += usize::from(runs_test(&forced, Channel::X, 0.05).unwrap().verdict == Verdict::Reject);
        }
        let power = rejected as f64 / reps as f64;
        assert!(power >= 0.9, "k = {k}: power {power}");
    }
}

#[test]
fn verdicts_are_invariant_under_relabeling() {
    let cfg = PurityConfig::default();
    for seed in 0..20 {
        let mut rng = Stream::new(seed);
        let s = iid_series(2000, &mut rng);
        let sub = Stream::new(seed).derive(labels::SUBSAMPLE);
        let a = purity_suite(&s, &cfg, &sub).unwrap();
        let b = purity_suite(&s.map_outcomes(Outcome::flipped), &cfg, &sub).unwrap();
        assert_eq!(a.pure_consistent, b.pure_consistent);
        for (x, y) in a.reports.iter().zip(&b.reports) {
            assert_eq!(x.verdict, y.verdict, "{}", x.test_name);
            assert!((x.statistic - y.statistic).abs() <= 1e-9 * x.statistic.abs().max(1.0));
        }
    }
}

#[test]
fn homogeneity_ignores_subsample_order() {
    let mut rng = Stream::new(9);
    let s = iid_series(5000, &mut rng);
    let subs = random_subensembles(&s, 10, 0.2, &rng.derive(labels::SUBSAMPLE)).unwrap();
    let scheme = SubsampleScheme::Subsampled { population: 5000 };
    let base = homogeneity_test(&subs, scheme, 0.05).unwrap();
    let mut reversed = subs.clone();
    reversed.reverse();
    let mut rotated = subs.clone();
    rotated.rotate_left(3);
    for perm in [reversed, rotated] {
        let r = homogeneity_test(&perm, scheme, 0.05).unwrap();
        assert!((r.statistic - base.statistic).abs() <= 1e-9 * base.statistic.max(1.0));
        assert_eq!(r.verdict, base.verdict);
    }
}

#[test]
fn iid_series_are_pure_consistent() {
    let cfg = PurityConfig::default();
    let pure = (0..100)
        .filter(|&seed| {
            let mut rng = Stream::new(5_000 + seed);
            let s = iid_series(1000, &mut rng);
            purity_suite(&s, &cfg, &rng.derive(labels::SUBSAMPLE)).unwrap().pure_consistent
        })
        .count();
    assert!(pure >= 93, "{pure} of 100");
}
