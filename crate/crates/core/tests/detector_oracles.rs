use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use swarmguard::detector::*;

/// `C(n, k) p^k (1 − p)^(n − k)` in exact rational arithmetic, `p` taken as
/// the exact binary value of the float.
fn exact_pmf(n: u64, k: u64, p: f64) -> f64 {
    let p = BigRational::from_float(p).unwrap();
    let q = BigRational::one() - &p;
    let mut c = BigInt::one();
    for i in 0..k {
        c = c * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    let mut v = BigRational::from_integer(c);
    for _ in 0..k {
        v *= &p;
    }
    for _ in 0..(n - k) {
        v *= &q;
    }
    v.to_f64().unwrap()
}

#[test]
fn pmf_matches_exact_rationals() {
    for p in [1e-3, 0.01, 0.049_970_777_323_202_806, 0.05, 0.2, 0.5, 0.93] {
        for n in 1..=64 {
            for k in 0..=n {
                let want = exact_pmf(n, k, p);
                let got = binomial_pmf(n, k, p);
                if want == 0.0 {
                    assert_eq!(got, 0.0);
                } else {
                    assert!(((got - want) / want).abs() < 1e-12, "n={n} k={k} p={p}: {got} vs {want}");
                }
            }
        }
    }
}

#[test]
fn pmf_sums_to_one_beyond_exact_range() {
    for n in [65u64, 100, 500] {
        let s: f64 = (0..=n).map(|k| binomial_pmf(n, k, 0.05)).sum();
        assert!((s - 1.0).abs() < 1e-9, "{n}: {s}");
    }
}

fn gaussian_agents(rng: &mut ChaCha8Rng, count: usize, len: usize, shift: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..len).map(|_| { let z: f64 = StandardNormal.sample(rng); z + shift }).collect::<Vec<f64>>())
        .collect()
}

fn flag_rate(cfg: &DetectorConfig, agents: &[Vec<f64>]) -> f64 {
    agents.iter().filter(|a| Verdict::from_log_probs(cfg, a).flagged()).count() as f64 / agents.len() as f64
}

#[test]
fn naive_false_alarms_compound_per_action() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let calib = gaussian_agents(&mut rng, 2000, 10, 0.0);
    let cfg = calibrate(Criterion::Naive, &calib, 0.05).unwrap();
    let fresh = gaussian_agents(&mut rng, 20_000, 10, 0.0);
    let want = 1.0 - (1.0 - cfg.f_p).powi(10);
    let got = flag_rate(&cfg, &fresh);
    let sd = (want * (1.0 - want) / 20_000.0).sqrt();
    assert!((got - want).abs() < 4.0 * sd + 0.01, "{got} vs {want}");
}

#[test]
fn mean_criterion_holds_its_rate_on_fresh_agents() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let calib = gaussian_agents(&mut rng, 3000, 20, 1.0);
    let fresh = gaussian_agents(&mut rng, 20_000, 20, 1.0);
    for fpr in [0.05, 0.01] {
        let cfg = calibrate(Criterion::Mean, &calib, fpr).unwrap();
        let got = flag_rate(&cfg, &fresh);
        assert!((got - fpr).abs() < 0.01, "{fpr}: {got}");
    }
}

#[test]
fn calibration_quantile_bounds_the_action_flag_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let calib = gaussian_agents(&mut rng, 137, 13, 0.0);
    let n = (137 * 13) as f64;
    for fpr in [0.05, 0.01] {
        let cfg = calibrate(Criterion::Binomial, &calib, fpr).unwrap();
        let below = calib.iter().flatten().filter(|&&v| v < cfg.threshold).count() as f64;
        assert!(below / n <= fpr + 1.0 / n);
        assert_eq!(cfg.f_p, below / n);
    }
    let h5 = calibrate(Criterion::Mean, &calib, 0.05).unwrap().threshold;
    let h1 = calibrate(Criterion::Mean, &calib, 0.01).unwrap().threshold;
    assert!(h1 <= h5);
    assert!(matches!(calibrate(Criterion::Mean, &[], 0.05), Err(DetectorError::EmptyCalibration)));
}

#[test]
fn binomial_criterion_follows_the_pmf_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = DetectorConfig {
        criterion: Criterion::Binomial,
        fpr_max: 0.05,
        threshold: -1.0,
        f_p: 0.08,
        binomial_tail: false,
    };
    for _ in 0..200 {
        let lps: Vec<f64> = (0..rng.random_range(1..50)).map(|_| rng.random_range(-3.0..3.0)).collect();
        let v = Verdict::from_log_probs(&cfg, &lps);
        for t in 1..=lps.len() {
            let k = lps[..t].iter().filter(|&&x| x < cfg.threshold).count() as u64;
            assert_eq!(v.flagged_at(t), exact_pmf(t as u64, k, cfg.f_p) < cfg.fpr_max);
        }
    }
}

#[test]
fn lowering_threshold_never_adds_flags() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let agents = gaussian_agents(&mut rng, 300, 25, 0.0);
    for criterion in [Criterion::Naive, Criterion::Mean] {
        let mut prev = usize::MAX;
        for h in [1.0, 0.5, 0.0, -0.5, -1.0, -2.0] {
            let cfg = DetectorConfig {
                criterion,
                fpr_max: 0.05,
                threshold: h,
                f_p: 0.05,
                binomial_tail: false,
            };
            let n = agents.iter().filter(|a| Verdict::from_log_probs(&cfg, a).flagged()).count();
            assert!(n <= prev);
            prev = n;
        }
    }
}

#[test]
fn mean_flag_can_clear_after_good_actions() {
    let cfg = DetectorConfig {
        criterion: Criterion::Mean,
        fpr_max: 0.05,
        threshold: 0.0,
        f_p: 0.05,
        binomial_tail: false,
    };
    let mut lps = vec![2.0, 2.0, -10.0];
    lps.extend([3.0; 7]);
    let v = Verdict::from_log_probs(&cfg, &lps);
    assert!(v.flagged_at(3));
    assert!(!v.flagged_at(10));
    let naive = Verdict::from_log_probs(&DetectorConfig { criterion: Criterion::Naive, ..cfg }, &lps);
    assert!(naive.flagged_at(3) && naive.flagged_at(10));
}
