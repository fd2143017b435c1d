use lgc_regime::copula::{sample_points, CopulaSpec};
use lgc_regime::exec::{NoClock, Sequential};
use lgc_regime::lgc::{default_grid, estimate_map, BandwidthSpec, LgcOptions};
use lgc_regime::regimetest::d1_statistic;
use lgc_regime::rng;
use lgc_regime::simstudy::{misclassification_design, run_misclassification_study, Labels};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn median_d1_grows_with_correlation_gap() {
    let gaps = [0.0, 0.3, 0.6, 0.9];
    let mut medians = Vec::new();
    for (g, &gap) in gaps.iter().enumerate() {
        let mut stats = Vec::with_capacity(50);
        for rep in 0..50u64 {
            let seed = rng::derive_seed(1000 + g as u64, rep);
            let a = sample_points(&CopulaSpec::gaussian(-gap / 2.0), 300, &mut rng::stream(seed, 0)).unwrap();
            let b = sample_points(&CopulaSpec::gaussian(gap / 2.0), 300, &mut rng::stream(seed, 1)).unwrap();
            let pooled: Vec<[f64; 2]> = a.iter().chain(&b).copied().collect();
            let grid = default_grid(&pooled, 5, 5.0, 95.0).unwrap();
            let bw = BandwidthSpec::default().resolve(&pooled).unwrap();
            let ma = estimate_map(&a, &grid, bw, &LgcOptions::default()).unwrap().0;
            let mb = estimate_map(&b, &grid, bw, &LgcOptions::default()).unwrap().0;
            stats.push(d1_statistic(&ma, &mb).unwrap().0);
        }
        medians.push(median(stats));
    }
    for w in medians.windows(2) {
        assert!(w[1] >= w[0], "medians {medians:?}");
    }
    assert!(medians[3] > 5.0 * medians[0], "medians {medians:?}");
}

#[test]
fn separated_regimes_lose_nothing_to_classification() {
    let mut d = misclassification_design(20, 500, 100, 5);
    d.regime_dgps = vec![CopulaSpec::gaussian(0.5).with_marginals(20.0, 1.0), CopulaSpec::clayton(3.0).with_marginals(-20.0, 1.0)];
    d.hmm.restarts = 2;
    let r = run_misclassification_study(&d, &Sequential, &NoClock).unwrap();
    assert_eq!(r.accuracy, Some(1.0));
    assert_eq!(r.skipped, 0);
    for &level in &d.levels {
        let t = r.rate(Labels::True, level).unwrap();
        let p = r.rate(Labels::Predicted, level).unwrap();
        assert!(t.rejections.abs_diff(p.rejections) <= 1, "level {level}: {} vs {}", t.rejections, p.rejections);
    }
}
