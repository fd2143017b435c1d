use lgc_regime::copula::{sample_points, CopulaSpec};
use lgc_regime::garch::{conditional_sd, GarchParams};
use lgc_regime::hmm::{self, HmmModel, HmmOptions};
use lgc_regime::lgc::{default_grid, estimate_map, Bandwidths, Grid, LgcMap, LgcOptions};
use lgc_regime::regimetest::d1_statistic;
use lgc_regime::rng;
use lgc_regime::timeseries::describe;
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn cov_strategy() -> impl Strategy<Value = [[f64; 2]; 2]> {
    (0.2f64..4.0, 0.2f64..4.0, -0.9f64..0.9).prop_map(|(s1, s2, r)| [[s1 * s1, r * s1 * s2], [r * s1 * s2, s2 * s2]])
}

fn tpm_strategy(c: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.05f64..1.0, c), c).prop_map(|rows| {
        rows.into_iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|v| v / s).collect()
            })
            .collect()
    })
}

fn model_strategy() -> impl Strategy<Value = HmmModel> {
    (2usize..=3).prop_flat_map(|c| {
        (
            prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0).prop_map(|(a, b)| [a, b]), c),
            prop::collection::vec(cov_strategy(), c),
            tpm_strategy(c),
        )
            .prop_map(|(m, s, g)| HmmModel::new(m, s, g).unwrap())
    })
}

fn gaussian_sample(rho: f64, n: usize, seed: u64) -> Vec<[f64; 2]> {
    sample_points(&CopulaSpec::gaussian(rho), n, &mut rng::stream(seed, 0)).unwrap()
}

fn small_map(data: &[[f64; 2]], grid: &Grid, b: Bandwidths) -> LgcMap {
    estimate_map(data, grid, b, &LgcOptions::default()).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn describe_is_permutation_invariant(x in prop::collection::vec(-50.0f64..50.0, 4..60), seed in any::<u64>()) {
        let mut y = x.clone();
        let mut r = rng::stream(seed, 0);
        rand::seq::SliceRandom::shuffle(y.as_mut_slice(), &mut r);
        let a = describe(&x).unwrap();
        let b = describe(&y).unwrap();
        prop_assert_eq!(a.median, b.median);
        prop_assert_eq!(a.min, b.min);
        prop_assert_eq!(a.iqr, b.iqr);
        prop_assert!(close(a.mean, b.mean, 1e-12));
        prop_assert!(close(a.variance, b.variance, 1e-10));
        prop_assert!(close(a.kurtosis, b.kurtosis, 1e-9));
    }

    #[test]
    fn describe_scales(x in prop::collection::vec(-10.0f64..10.0, 8..60), k in 0.1f64..20.0, c in -100.0f64..100.0) {
        let a = describe(&x).unwrap();
        prop_assume!(a.variance > 1e-3);
        let y: Vec<f64> = x.iter().map(|v| k * v + c).collect();
        let b = describe(&y).unwrap();
        prop_assert!(close(b.variance, k * k * a.variance, 1e-10));
        prop_assert!((b.skewness - a.skewness).abs() < 1e-10 * (1.0 + a.skewness.abs()) * 1e2);
        prop_assert!(close(b.kurtosis, a.kurtosis, 1e-10 * 1e2));
    }

    #[test]
    fn garch_variance_stays_positive(x in prop::collection::vec(-20.0f64..20.0, 5..200),
                                     omega in 1e-4f64..2.0, alpha in 0.0f64..0.5, frac in 0.0f64..0.99, shape in 2.1f64..50.0) {
        let beta = (1.0 - alpha) * frac;
        let p = GarchParams::new(0.0, omega, alpha, beta, shape).unwrap();
        let sd = conditional_sd(&x, &p).unwrap();
        prop_assert!(sd.iter().all(|&s| s > 0.0 && s.is_finite()));
    }

    #[test]
    fn hmm_working_round_trip(m in model_strategy()) {
        let back = hmm::from_working(&hmm::to_working(&m), m.n_regimes, false).unwrap();
        for k in 0..m.n_regimes {
            for i in 0..2 {
                prop_assert!(close(back.means[k][i], m.means[k][i], 1e-12));
                for j in 0..2 {
                    prop_assert!(close(back.covariances[k][i][j], m.covariances[k][i][j], 1e-12));
                }
            }
            for j in 0..m.n_regimes {
                prop_assert!(close(back.tpm[k][j], m.tpm[k][j], 1e-12));
            }
        }
    }

    #[test]
    fn hmm_forward_matches_backward(m in model_strategy(), t in 1usize..200, seed in any::<u64>()) {
        let (x, _) = hmm::simulate(&m, t, &mut rng::stream(seed, 0));
        let obs = hmm::Observations::new(&x);
        let fb = hmm::forward_backward(&m, obs).unwrap();
        prop_assert!((fb.loglik - fb.backward_loglik(&m, &obs)).abs() <= 1e-8 * (1.0 + fb.loglik.abs()));
    }

    #[test]
    fn smoothing_rows_sum_to_one_and_labels_survive_rescaling(m in model_strategy(), t in 1usize..120, seed in any::<u64>(), k in 0.05f64..20.0) {
        let (x, _) = hmm::simulate(&m, t, &mut rng::stream(seed, 0));
        let p = hmm::decode(&m, &x).unwrap();
        for row in &p.smoothing {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // Scaling data and model by k multiplies every density by k^-2.
        let xs: Vec<[f64; 2]> = x.iter().map(|v| [k * v[0], k * v[1]]).collect();
        let scaled = HmmModel::new(
            m.means.iter().map(|v| [k * v[0], k * v[1]]).collect(),
            m.covariances.iter().map(|s| [[k * k * s[0][0], k * k * s[0][1]], [k * k * s[1][0], k * k * s[1][1]]]).collect(),
            m.tpm.clone(),
        ).unwrap();
        let q = hmm::decode(&scaled, &xs).unwrap();
        for (a, b) in p.smoothing.iter().zip(&q.smoothing) {
            let top = a.iter().cloned().fold(f64::MIN, f64::max);
            let second = a.iter().cloned().filter(|&v| v < top).fold(0.0, f64::max);
            if top - second > 1e-6 {
                for (u, v) in a.iter().zip(b) { prop_assert!((u - v).abs() < 1e-7); }
            }
        }
        for ((a, b), row) in p.labels.iter().zip(&q.labels).zip(&p.smoothing) {
            let mut s = row.clone();
            s.sort_by(|u, v| v.total_cmp(u));
            if s[0] - s[1] > 1e-6 { prop_assert_eq!(a, b); }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn hmm_fit_never_below_its_starts(seed in any::<u64>()) {
        let m = HmmModel::new(
            vec![[0.5, 0.5], [-1.0, -1.0]],
            vec![[[1.0, 0.3], [0.3, 1.0]], [[4.0, 2.0], [2.0, 4.0]]],
            vec![vec![0.95, 0.05], vec![0.1, 0.9]],
        ).unwrap();
        let (x, _) = hmm::simulate(&m, 300, &mut rng::stream(seed, 0));
        let fit = hmm::fit_hmm(&x, 2, &HmmOptions { std_errors: false, seed, ..Default::default() }).unwrap();
        let d = fit.diagnostics.as_ref().unwrap();
        for &l in &d.initial_logliks {
            if l.is_finite() { prop_assert!(fit.loglik >= l - 1e-9); }
        }
        for &l in &d.restart_logliks {
            if l.is_finite() { prop_assert!(fit.loglik >= l - 1e-9); }
        }
    }

    #[test]
    fn lgc_exchange_symmetry(rho in -0.8f64..0.8, seed in any::<u64>()) {
        let data = gaussian_sample(rho, 300, seed);
        let grid = default_grid(&data, 5, 5.0, 95.0).unwrap();
        let b = Bandwidths::new(0.6, 0.9).unwrap();
        let map = small_map(&data, &grid, b);
        let swapped: Vec<[f64; 2]> = data.iter().map(|p| [p[1], p[0]]).collect();
        let tmap = small_map(&swapped, &grid.transpose(), Bandwidths::new(0.9, 0.6).unwrap());
        let (nx, ny) = (grid.xs().len(), grid.ys().len());
        for i in 0..nx {
            for j in 0..ny {
                let a = &map.params[i * ny + j];
                let t = &tmap.params[j * nx + i];
                prop_assert_eq!(a.converged, t.converged);
                if a.converged {
                    prop_assert!((a.rho - t.rho).abs() < 1e-8, "{} vs {}", a.rho, t.rho);
                    prop_assert!((a.sigma1 - t.sigma2).abs() < 1e-8 * (1.0 + a.sigma1));
                }
            }
        }
    }

    #[test]
    fn lgc_affine_equivariance(rho in -0.8f64..0.8, seed in any::<u64>(), a1 in 0.1f64..10.0, a2 in 0.1f64..10.0, c1 in -5.0f64..5.0, c2 in -5.0f64..5.0) {
        let data = gaussian_sample(rho, 300, seed);
        let grid = default_grid(&data, 5, 5.0, 95.0).unwrap();
        let b = Bandwidths::new(0.7, 0.7).unwrap();
        let map = small_map(&data, &grid, b);
        let moved: Vec<[f64; 2]> = data.iter().map(|p| [a1 * p[0] + c1, a2 * p[1] + c2]).collect();
        let mgrid = Grid::new(
            grid.xs().iter().map(|x| a1 * x + c1).collect(),
            grid.ys().iter().map(|y| a2 * y + c2).collect(),
            grid.weights().to_vec(),
        ).unwrap();
        let mmap = small_map(&moved, &mgrid, Bandwidths::new(a1 * 0.7, a2 * 0.7).unwrap());
        for (p, q) in map.params.iter().zip(&mmap.params) {
            prop_assert_eq!(p.converged, q.converged);
            if p.converged {
                prop_assert!((p.rho - q.rho).abs() < 1e-8, "{} vs {}", p.rho, q.rho);
                prop_assert!(p.rho > -1.0 && p.rho < 1.0 && p.sigma1 > 0.0 && p.sigma2 > 0.0);
            }
        }
    }

    #[test]
    fn d1_is_symmetric_and_nonnegative(r1 in -0.8f64..0.8, r2 in -0.8f64..0.8, seed in any::<u64>()) {
        let a = gaussian_sample(r1, 200, seed);
        let b = gaussian_sample(r2, 200, seed.wrapping_add(1));
        let mut pooled = a.clone();
        pooled.extend_from_slice(&b);
        let grid = default_grid(&pooled, 4, 5.0, 95.0).unwrap();
        let bw = Bandwidths::new(0.8, 0.8).unwrap();
        let (ma, mb) = (small_map(&a, &grid, bw), small_map(&b, &grid, bw));
        let (dab, _) = d1_statistic(&ma, &mb).unwrap();
        let (dba, _) = d1_statistic(&mb, &ma).unwrap();
        prop_assert!(dab >= 0.0);
        prop_assert!((dab - dba).abs() <= 1e-15);
        prop_assert_eq!(d1_statistic(&ma, &ma).unwrap().0, 0.0);
    }
}
