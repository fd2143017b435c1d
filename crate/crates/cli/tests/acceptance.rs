//! Acceptance run: one PASS/FAIL line per criterion. Set
//! `LGC_ACCEPTANCE_STRICT=1` to exit nonzero on any FAIL.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use lgc_regime::copula::{sample_points, CopulaSpec};
use lgc_regime::exec::{Executor, NoClock};
use lgc_regime::garch::{self, fit_garch, standardized_residuals, GarchOptions, GarchParams};
use lgc_regime::hmm::{self, fit_hmm, HmmModel, HmmOptions, Observations};
use lgc_regime::lgc::{estimate_map, integral_term, BandwidthSpec, Bandwidths, Grid, GridSpec, LgcMap, LgcOptions, LocalParams};
use lgc_regime::regimetest::d1_statistic;
use lgc_regime::rng::{self, derive_seed, StreamRng};
use lgc_regime::simstudy::{
    level_design, level_models, misclassification_design, power_baseline, power_design, run_level_study, run_misclassification_study,
    run_power_study, Labels, StudyResult,
};
use lgc_regime_cli::input::{format_timestamp, Mode};
use lgc_regime_cli::{run_pipeline, PipelineConfig, RayonExecutor};
use rand::Rng;
use sha2::{Digest, Sha256};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

const M: usize = 200;
const B: usize = 200;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Exact two-sided 99% acceptance region for the rejection count under level `alpha`.
fn binomial_band(n: usize, alpha: f64) -> (u64, u64) {
    let b = Binomial::new(alpha, n as u64).unwrap();
    (b.inverse_cdf(0.005), b.inverse_cdf(0.995))
}

fn rejections(r: &StudyResult, labels: Labels, level: f64) -> (usize, usize, f64) {
    let row = r.rate(labels, level).unwrap();
    (row.rejections, row.n, row.rate)
}

fn level_study(exec: &RayonExecutor) -> Outcome {
    let mut pass = true;
    let mut detail = String::new();
    for (i, model) in level_models().into_iter().enumerate() {
        let d = level_design(model, M, B, derive_seed(101, i as u64));
        let r = run_level_study(&d, exec, &NoClock).unwrap();
        for alpha in [0.05, 0.10] {
            let (k, n, _) = rejections(&r, Labels::True, alpha);
            let (lo, hi) = binomial_band(n, alpha);
            let ok = (lo..=hi).contains(&(k as u64));
            pass &= ok;
            write!(detail, " {}@{alpha}={k}/{n}[{lo},{hi}]{}", model.label(), if ok { "" } else { "!" }).unwrap();
        }
    }
    outcome(pass, detail)
}

fn power_study(exec: &RayonExecutor) -> Outcome {
    let cases: [(CopulaSpec, f64, f64); 3] =
        [(CopulaSpec::gaussian(-0.5), 0.98, 1.0), (CopulaSpec::clayton(3.0), 0.90, 1.0), (CopulaSpec::gumbel(2.0), 0.35, 0.70)];
    let mut pass = true;
    let mut detail = String::new();
    for (i, (spec, lo, hi)) in cases.into_iter().enumerate() {
        let d = power_design(spec.with_marginals(0.0, 4.0), M, B, derive_seed(202, i as u64));
        let r = run_power_study(&d, exec, &NoClock).unwrap();
        let (_, _, rate) = rejections(&r, Labels::True, 0.05);
        let ok = rate >= lo && rate <= hi;
        pass &= ok;
        write!(detail, " {}={rate:.3} in [{lo}, {hi}]{}", spec.label(), if ok { "" } else { "!" }).unwrap();
    }
    outcome(pass, detail)
}

fn misclassification_study(exec: &RayonExecutor) -> Outcome {
    let d = misclassification_design(M, 500, B, 303);
    let r = run_misclassification_study(&d, exec, &NoClock).unwrap();
    let acc = r.accuracy.unwrap();
    let (_, n, pt) = rejections(&r, Labels::True, 0.05);
    let (_, _, pp) = rejections(&r, Labels::Predicted, 0.05);
    // One-sided 95% margin on the difference of two binomial proportions.
    let noise = 1.645 * ((pt * (1.0 - pt) + pp * (1.0 - pp)) / n as f64).sqrt();
    let pass = (0.70..=0.88).contains(&acc) && (0.65..=0.95).contains(&pp) && pp < pt - noise;
    outcome(
        pass,
        format!(
            " accuracy={acc:.3} predicted={pp:.3} true={pt:.3} noise={noise:.3} untestable={} skipped={} confusion={:?}",
            r.untestable,
            r.skipped,
            r.confusion.unwrap()
        ),
    )
}

fn gauss2(x: [f64; 2], m: [f64; 2], s: &[[f64; 2]; 2]) -> f64 {
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let (d0, d1) = (x[0] - m[0], x[1] - m[1]);
    let q = (s[1][1] * d0 * d0 - 2.0 * s[0][1] * d0 * d1 + s[0][0] * d1 * d1) / det;
    (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
}

/// Likelihood summed over every state path.
fn enumerate_paths(m: &HmmModel, x: &[[f64; 2]]) -> f64 {
    let (c, t) = (m.n_regimes, x.len());
    let mut total = 0.0;
    for code in 0..c.pow(t as u32) {
        let mut path = Vec::with_capacity(t);
        let mut v = code;
        for _ in 0..t {
            path.push(v % c);
            v /= c;
        }
        let mut p = m.initial[path[0]] * gauss2(x[0], m.means[path[0]], &m.covariances[path[0]]);
        for s in 1..t {
            p *= m.tpm[path[s - 1]][path[s]] * gauss2(x[s], m.means[path[s]], &m.covariances[path[s]]);
        }
        total += p;
    }
    total.ln()
}

fn random_model(c: usize, r: &mut impl Rng) -> HmmModel {
    let means = (0..c).map(|_| [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)]).collect();
    let covs = (0..c)
        .map(|_| {
            let (a, b, rho) = (r.random_range(0.3..2.0f64), r.random_range(0.3..2.0f64), r.random_range(-0.85..0.85));
            [[a * a, rho * a * b], [rho * a * b, b * b]]
        })
        .collect();
    let tpm = (0..c)
        .map(|_| {
            let row: Vec<f64> = (0..c).map(|_| r.random_range(0.05..1.0)).collect();
            let s: f64 = row.iter().sum();
            row.iter().map(|v| v / s).collect()
        })
        .collect();
    HmmModel::new(means, covs, tpm).unwrap()
}

fn index_model() -> HmmModel {
    HmmModel::new(
        vec![[0.073, 0.051], [-0.117, -0.112]],
        vec![[[0.486, 0.230], [0.230, 0.523]], [[4.120, 1.965], [1.965, 3.422]]],
        vec![vec![0.978, 0.022], vec![0.071, 0.929]],
    )
    .unwrap()
}

fn hmm_correctness(exec: &RayonExecutor) -> Outcome {
    let mut r = rng::stream(404, 0);
    let mut worst_enum = 0.0f64;
    for k in 0..100 {
        let m = random_model(2 + k % 2, &mut r);
        let t = 1 + k % 8;
        let x: Vec<[f64; 2]> = (0..t).map(|_| [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)]).collect();
        let ll = hmm::log_likelihood(&m, &x).unwrap();
        let oracle = enumerate_paths(&m, &x);
        worst_enum = worst_enum.max(((ll - oracle) / oracle).abs());
    }
    let mut worst_fb = 0.0f64;
    for k in 0..100 {
        let m = random_model(2 + k % 2, &mut r);
        let t = r.random_range(1..=200);
        let x = hmm::simulate(&m, t, &mut r).0;
        let obs = Observations::new(&x);
        let fb = hmm::forward_backward(&m, obs).unwrap();
        worst_fb = worst_fb.max((fb.loglik - fb.backward_loglik(&m, &obs)).abs());
    }

    let truth = index_model();
    let reps = 50;
    let fits = exec.map(reps, |rep| {
        let seed = derive_seed(405, rep as u64);
        let x = hmm::simulate(&truth, 9000, &mut rng::stream(seed, 0)).0;
        fit_hmm(&x, 2, &HmmOptions { restarts: 2, seed: derive_seed(seed, 1), ..HmmOptions::default() })
    });
    // (name, truth, estimate, se) per natural parameter.
    let mut covered: BTreeMap<String, usize> = BTreeMap::new();
    let mut failed_fits = 0;
    for f in &fits {
        let Ok(m) = f else {
            failed_fits += 1;
            continue;
        };
        let Some(se) = &m.std_errors else {
            failed_fits += 1;
            continue;
        };
        let mut check = |name: String, t: f64, e: f64, s: f64| {
            let hit = s.is_finite() && (e - t).abs() <= 3.0 * s;
            *covered.entry(name).or_default() += hit as usize;
        };
        for k in 0..2 {
            for i in 0..2 {
                check(format!("mu{k}{i}"), truth.means[k][i], m.means[k][i], se.means[k][i]);
            }
            for (i, j) in [(0, 0), (0, 1), (1, 1)] {
                check(format!("sigma{k}{i}{j}"), truth.covariances[k][i][j], m.covariances[k][i][j], se.covariances[k][i][j]);
            }
            for j in 0..2 {
                check(format!("gamma{k}{j}"), truth.tpm[k][j], m.tpm[k][j], se.tpm[k][j]);
            }
            check(format!("delta{k}"), truth.stationary[k], m.stationary[k], se.stationary[k]);
        }
    }
    let need = (0.95 * reps as f64).ceil() as usize;
    let worst = covered.iter().min_by_key(|(_, &v)| v).map(|(k, &v)| (k.clone(), v)).unwrap_or_default();
    let recovery = failed_fits == 0 && covered.len() == 16 && covered.values().all(|&v| v >= need);
    let pass = worst_enum <= 1e-10 && worst_fb <= 1e-8 && recovery;
    outcome(
        pass,
        format!(
            " enumeration rel err {worst_enum:.2e}; forward/backward {worst_fb:.2e}; recovery lowest coverage {}={}/{reps} (need {need}), failed fits {failed_fits}",
            worst.0, worst.1
        ),
    )
}

fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Composite Gauss-Legendre on `[a, b]`.
fn integrate(a: f64, b: f64, nodes: &[(f64, f64)], panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for &(x, w) in nodes {
            s += w * f(c + 0.5 * h * x);
        }
    }
    0.5 * h * s
}

/// The integral term by 2-D quadrature: the outer variable over the bulk of
/// the first marginal, the inner one over the bulk of its conditional law.
fn quadrature_integral(t: &LocalParams, x: [f64; 2], b: Bandwidths, nodes: &[(f64, f64)]) -> f64 {
    let cov = [[t.sigma1 * t.sigma1, t.rho * t.sigma1 * t.sigma2], [t.rho * t.sigma1 * t.sigma2, t.sigma2 * t.sigma2]];
    let k = |v: [f64; 2]| (-0.5 * (((v[0] - x[0]) / b.b1).powi(2) + ((v[1] - x[1]) / b.b2).powi(2))).exp();
    let csd = t.sigma2 * (1.0 - t.rho * t.rho).sqrt();
    let (lo1, hi1) = (t.mu1 - 12.0 * t.sigma1, t.mu1 + 12.0 * t.sigma1);
    integrate(lo1, hi1, nodes, 24, |v1| {
        let cm = t.mu2 + t.rho * t.sigma2 / t.sigma1 * (v1 - t.mu1);
        integrate(cm - 12.0 * csd, cm + 12.0 * csd, nodes, 24, |v2| k([v1, v2]) * gauss2([v1, v2], [t.mu1, t.mu2], &cov))
    })
}

fn lgc_correctness(exec: &RayonExecutor) -> Outcome {
    let rhos = [-0.5, 0.0, 0.5, 0.8];
    let maps = exec.map(rhos.len(), |i| {
        let data = sample_points(&CopulaSpec::gaussian(rhos[i]), 5000, &mut rng::stream(505, i as u64)).unwrap();
        let grid = GridSpec::default().resolve(&data).unwrap();
        let bw = BandwidthSpec::default().resolve(&data).unwrap();
        estimate_map(&data, &grid, bw, &LgcOptions::default()).unwrap().0
    });
    let mut pass = true;
    let mut detail = String::new();
    for (rho, map) in rhos.iter().zip(&maps) {
        let dev: Vec<f64> = (0..map.grid.len()).filter(|&i| map.is_included(i)).map(|i| (map.params[i].rho - rho).abs()).collect();
        let mad = dev.iter().sum::<f64>() / dev.len() as f64;
        let max = dev.iter().cloned().fold(0.0, f64::max);
        let ok = !dev.is_empty() && mad <= 0.05 && max <= 0.1;
        pass &= ok;
        write!(detail, " rho={rho}: mad {mad:.4} max {max:.4} over {}{}", dev.len(), if ok { "" } else { "!" }).unwrap();
    }
    let nodes = gauss_legendre(20);
    let mut r = rng::stream(506, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let t = LocalParams::new(
            r.random_range(-2.0..2.0),
            r.random_range(-2.0..2.0),
            r.random_range(0.3..3.0),
            r.random_range(0.3..3.0),
            r.random_range(-0.95..0.95),
        );
        let b = Bandwidths::new(r.random_range(0.2..2.0), r.random_range(0.2..2.0)).unwrap();
        let x = [t.mu1 + r.random_range(-2.0..2.0) * (t.sigma1 + b.b1), t.mu2 + r.random_range(-2.0..2.0) * (t.sigma2 + b.b2)];
        let exact = integral_term(&t, x, b);
        let q = quadrature_integral(&t, x, b, &nodes);
        worst = worst.max((exact - q).abs() / q.abs().max(1e-300));
    }
    pass &= worst <= 1e-8;
    write!(detail, "; integral vs quadrature rel err {worst:.2e}").unwrap();
    outcome(pass, detail)
}

fn random_map(grid: &Grid, r: &mut impl Rng) -> LgcMap {
    let params = (0..grid.len())
        .map(|_| {
            let mut p = LocalParams::new(0.0, 0.0, 1.0, 1.0, r.random_range(-0.99..0.99));
            p.converged = r.random_range(0.0..1.0) < 0.9;
            p
        })
        .collect();
    LgcMap { grid: grid.clone(), params, bandwidths: Bandwidths::new(1.0, 1.0).unwrap(), sample_size: 100 }
}

/// Mean squared local-correlation gap over the weighted gridpoints usable in
/// both maps, with weight-zero points kept in the count.
fn d1_oracle(a: &LgcMap, b: &LgcMap) -> f64 {
    let g = &a.grid;
    let (nx, ny) = (g.xs().len(), g.ys().len());
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 0..nx {
        for j in 0..ny {
            let idx = i * ny + j;
            let w = g.weights()[idx];
            let both = a.params[idx].converged && b.params[idx].converged;
            if w <= 0.0 {
                count += 1;
            } else if both {
                sum += w * (a.params[idx].rho - b.params[idx].rho).powi(2);
                count += 1;
            }
        }
    }
    sum / count as f64
}

fn d1_correctness(exec: &RayonExecutor) -> Outcome {
    let mut r = rng::stream(606, 0);
    let (mut worst_id, mut worst_sym, mut worst_oracle) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = r.random_range(2..10);
        let axis = |r: &mut StreamRng| -> Vec<f64> {
            let mut v: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let (xs, ys) = (axis(&mut r), axis(&mut r));
        let weights =
            (0..xs.len() * ys.len()).map(|_| if r.random_range(0.0..1.0) < 0.2 { 0.0 } else { r.random_range(0.1..2.0) }).collect();
        let Ok(grid) = Grid::new(xs, ys, weights) else { continue };
        let (a, b) = (random_map(&grid, &mut r), random_map(&grid, &mut r));
        let Ok((dab, _)) = d1_statistic(&a, &b) else { continue };
        let (dba, _) = d1_statistic(&b, &a).unwrap();
        worst_id = worst_id.max(d1_statistic(&a, &a).map(|v| v.0.abs()).unwrap_or(0.0));
        worst_sym = worst_sym.max((dab - dba).abs());
        worst_oracle = worst_oracle.max((dab - d1_oracle(&a, &b)).abs());
    }
    let mut baseline = level_design(power_baseline(), M, B, 607);
    baseline.name = "gaussian(0.5), N(1, 16) marginals".into();
    let rr = run_level_study(&baseline, exec, &NoClock).unwrap();
    let (k, n, _) = rejections(&rr, Labels::True, 0.05);
    let (lo, hi) = binomial_band(n, 0.05);
    let pass = worst_id <= 1e-15 && worst_sym <= 1e-15 && worst_oracle <= 1e-12 && (lo..=hi).contains(&(k as u64));
    outcome(
        pass,
        format!(" identity {worst_id:.1e}, symmetry {worst_sym:.1e}, oracle {worst_oracle:.1e}; H0 rejections {k}/{n} in [{lo}, {hi}]"),
    )
}

/// Ljung-Box statistic of the demeaned squares of `z`.
fn ljung_box_squares(z: &[f64], lags: usize) -> f64 {
    let n = z.len();
    let sq: Vec<f64> = z.iter().map(|v| v * v).collect();
    let mean = sq.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = sq.iter().map(|v| v - mean).collect();
    let denom: f64 = d.iter().map(|v| v * v).sum();
    (1..=lags)
        .map(|k| {
            let ac = (k..n).map(|t| d[t] * d[t - k]).sum::<f64>() / denom;
            ac * ac / (n - k) as f64
        })
        .sum::<f64>()
        * (n * (n + 2)) as f64
}

fn garch_recovery(exec: &RayonExecutor) -> Outcome {
    let truth = GarchParams::new(0.070, 0.011, 0.097, 0.901, 5.106).unwrap();
    let reps = 50;
    let fits = exec.map(reps, |rep| {
        let seed = derive_seed(707, rep as u64);
        let x = garch::simulate(&truth, 9000, &mut rng::stream(seed, 0)).unwrap().0;
        let p = fit_garch(&x, &GarchOptions { seed: derive_seed(seed, 1), ..GarchOptions::default() })?;
        let z = standardized_residuals(&x, &p)?;
        Ok::<_, lgc_regime::Error>((p, ljung_box_squares(&z, 10)))
    });
    let critical = ChiSquared::new(10.0).unwrap().inverse_cdf(0.95);
    let t = [truth.mu, truth.omega, truth.alpha, truth.beta, truth.shape];
    let mut covered = [0usize; 5];
    let (mut lb_pass, mut failed, mut boundary) = (0, 0, 0);
    for f in &fits {
        let (p, q) = match f {
            Ok(v) => v,
            Err(e) => {
                failed += 1;
                boundary += e.to_string().contains("stationarity") as usize;
                continue;
            }
        };
        lb_pass += (*q < critical) as usize;
        let Some(se) = p.std_errors else {
            failed += 1;
            continue;
        };
        let e = [p.mu, p.omega, p.alpha, p.beta, p.shape];
        for i in 0..5 {
            covered[i] += ((e[i] - t[i]).abs() <= 3.0 * se[i]) as usize;
        }
    }
    let need = (0.95 * reps as f64).ceil() as usize;
    let pass = failed == 0 && covered.iter().all(|&c| c >= need) && lb_pass * 10 >= 9 * reps;
    outcome(
        pass,
        format!(
            " coverage (mu, omega, alpha, beta, shape) = {covered:?}/{reps} (need {need}); Ljung-Box passes {lb_pass}/{reps}; failed fits {failed}, of which {boundary} at alpha + beta = 1"
        ),
    )
}

fn file_hashes(dir: &Path, files: &[String]) -> BTreeMap<String, String> {
    files
        .iter()
        .map(|f| {
            let bytes = std::fs::read(dir.join(f)).unwrap();
            (f.clone(), Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
        })
        .collect()
}

fn reproducibility(exec: &RayonExecutor) -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("returns.csv");
    let chain = HmmModel::new(vec![[0.0; 2]; 2], vec![[[1.0, 0.0], [0.0, 1.0]]; 2], vec![vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
    let states = hmm::simulate(&chain, 1000, &mut rng::stream(808, 1)).1;
    let specs = [CopulaSpec::gaussian(0.5).with_marginals(1.0, 1.0), CopulaSpec::clayton(3.0).with_marginals(-1.0, 1.5)];
    let mut r = rng::stream(808, 0);
    let mut text = String::from("date,a,b\n");
    for (t, &s) in states.iter().enumerate() {
        let p = sample_points(&specs[s - 1], 1, &mut r).unwrap()[0];
        writeln!(text, "{},{},{}", format_timestamp(946684800 + 86400 * t as i64), p[0], p[1]).unwrap();
    }
    std::fs::write(&input, text).unwrap();
    let run = |name: &str| {
        let mut c = PipelineConfig::default();
        c.input.path = input.clone();
        c.input.mode = Mode::Returns;
        c.output_dir = tmp.path().join(name);
        c.test.n_boot = 200;
        run_pipeline(&c, exec, &NoClock, exec.threads()).map(|s| s.manifest)
    };
    let (a, b) = match (run("first"), run("second")) {
        (Ok(a), Ok(b)) => (a, b),
        (a, b) => return outcome(false, format!(" run failed: {:?} / {:?}", a.err(), b.err())),
    };
    let ha: BTreeMap<String, String> = a.artifacts.iter().map(|x| (x.file.clone(), x.sha256.clone())).collect();
    let hb: BTreeMap<String, String> = b.artifacts.iter().map(|x| (x.file.clone(), x.sha256.clone())).collect();
    let files: Vec<String> = ha.keys().cloned().collect();
    let on_disk = file_hashes(&tmp.path().join("second"), &files);
    let pass = !ha.is_empty() && ha == hb && on_disk == hb;
    outcome(pass, format!(" {} artifacts, manifests equal: {}, manifest matches disk: {}", ha.len(), ha == hb, on_disk == hb))
}

type Criterion = (&'static str, fn(&RayonExecutor) -> Outcome);

fn main() {
    let exec = RayonExecutor::from_env().expect("thread pool");
    let criteria: [Criterion; 8] = [
        ("level study", level_study),
        ("power study", power_study),
        ("misclassification study", misclassification_study),
        ("HMM correctness", hmm_correctness),
        ("LGC correctness", lgc_correctness),
        ("D1 correctness", d1_correctness),
        ("GARCH recovery", garch_recovery),
        ("pipeline reproducibility", reproducibility),
    ];
    // Numeric arguments select criteria; anything else (harness flags) is ignored.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    let mut run = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        run += 1;
        let t0 = Instant::now();
        let o = f(&exec);
        failures += !o.pass as usize;
        println!("{} criterion {} ({name}, {:.0}s):{}", if o.pass { "PASS" } else { "FAIL" }, i + 1, t0.elapsed().as_secs_f64(), o.detail);
    }
    println!("acceptance: {} of {run} criteria passed", run - failures);
    // FAIL lines are reported, not fatal, unless strict mode is requested.
    if failures > 0 && std::env::var_os("LGC_ACCEPTANCE_STRICT").is_some_and(|v| v != "0") {
        std::process::exit(1);
    }
}
