//! Acceptance suite. Prints one PASS/FAIL/SKIPPED line per criterion and
//! exits non-zero if any criterion fails.
//!
//! The released-data criterion runs only when `DEPTHSIM_RELEASED_MANIFEST`
//! points at a run manifest for the released human responses and model
//! predictions.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use clap::Parser;
use depthsim::affine::{decompose_all, fit_affine, A_Z_FLOOR};
use depthsim::data::{
    mean_by_point, DepthMap, EvaluationPoint, LabelMap, ObserverKind, OutputType, PointSet, ResponseRecord,
    ResponseTable, Scene,
};
use depthsim::par;
use depthsim::sampler::{check_constraints, sample_points, SamplerConfig};
use depthsim::scale::{recover_scale, scene_rmse, ssi_rmse};
use depthsim::screening::{derive_cohorts, observer_reliability, screen, Reference};
use depthsim::similarity::{
    half_split_similarity, parse_similarity, HumanPanel, SimilarityConfig, SimilarityRun,
    Subject, Track,
};
use depthsim::stats::partial_corr;
use depthsim::synth::{generate, AffineParams, SynthSpec};
use depthsim::tradeoff::{build_tradeoff, Group, HumanBaseline, Measure, ModelEntry};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const RELEASED_ENV: &str = "DEPTHSIM_RELEASED_MANIFEST";

enum Status {
    Pass,
    Fail,
    Skipped,
}

type Check = fn() -> (Status, String);

fn verdict(ok: bool, detail: String) -> (Status, String) {
    (if ok { Status::Pass } else { Status::Fail }, detail)
}

fn main() {
    let checks: [(&str, Check); 9] = [
        ("affine recovery", affine_recovery),
        ("constrained fit", constrained_fit),
        ("partial correlation", partial_correlation),
        ("half-split statistics", half_split_statistics),
        ("screening", screening_rates),
        ("scale recovery", scale_recovery),
        ("trade-off signs", tradeoff_signs),
        ("sampler", sampler),
        ("released data", released_data),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let (status, detail) = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (Status::Fail, format!("panicked: {msg}"))
            });
        let tag = match status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::Skipped => "SKIPPED",
        };
        println!("{tag:<7} {name}: {detail}");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------

fn affine_recovery() -> (Status, String) {
    let spec = SynthSpec {
        scenes: 1000,
        shared_bias_mean: AffineParams {
            a_z: 0.8,
            b: 12.0,
            a_x: -2.0,
            a_y: 3.0,
        },
        shared_bias_sd: AffineParams {
            a_z: 0.2,
            b: 1.0,
            a_x: 0.5,
            a_y: 0.5,
        },
        shared_residual_sd: 0.0,
        observer_noise_sd: 0.0,
        observers_per_scene: 2,
        models: Vec::new(),
        seed: 11,
        ..SynthSpec::default()
    };
    let data = generate(&spec).unwrap();
    // noise-free: every observer reports the planted affine depth
    let est = data
        .points
        .align(&mean_by_point(&data.responses, None).unwrap())
        .unwrap();
    let start = Instant::now();
    let d = decompose_all(&est, &data.points).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let mut worst = 0.0f64;
    for (f, t) in d.fits.iter().zip(&data.truth.scenes) {
        assert_eq!(f.scene_id, t.scene_id);
        for (a, b) in [
            (f.a_z, t.params.a_z),
            (f.b, t.params.b),
            (f.a_x, t.params.a_x),
            (f.a_y, t.params.a_y),
        ] {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(
        d.fits.len() == 1000 && worst <= 1e-9 && elapsed < 5.0,
        format!(
            "{} scenes, max |error| {worst:.2e} (tol 1e-9), {elapsed:.3} s (limit 5 s)",
            d.fits.len()
        ),
    )
}

/// Gauss-Jordan solve with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// Least squares via normal equations over the given columns.
fn normal_ls(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = cols.len();
    let a = (0..k)
        .map(|i| (0..k).map(|j| dot(&cols[i], &cols[j])).collect())
        .collect();
    let b = (0..k).map(|i| dot(&cols[i], y)).collect();
    solve(a, b)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_scene(rng: &mut ChaCha8Rng, n: usize) -> Vec<EvaluationPoint> {
    (0..n as u32)
        .map(|i| EvaluationPoint {
            scene_id: "s".into(),
            point_id: i,
            group_id: i / 4,
            px_raw: 0,
            py_raw: 0,
            px_norm: rng.random_range(-1.0..1.0),
            py_norm: rng.random_range(-1.0..1.0),
            gt_depth: rng.random_range(2.0..80.0),
        })
        .collect()
}

fn constrained_fit() -> (Status, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let noise = Normal::new(0.0, 2.0).unwrap();
    let mut worst = 0.0f64;
    let mut pinned = 0;
    let trials = 1000;
    for _ in 0..trials {
        let pts = random_scene(&mut rng, 16);
        let slope = rng.random_range(-1.0..-0.05);
        let (bx, by, c) = (
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(20.0..60.0),
        );
        let y: Vec<f64> = pts
            .iter()
            .map(|p| slope * p.gt_depth + bx * p.px_norm + by * p.py_norm + c + noise.sample(&mut rng))
            .collect();
        let z: Vec<f64> = pts.iter().map(|p| p.gt_depth).collect();
        let px: Vec<f64> = pts.iter().map(|p| p.px_norm).collect();
        let py: Vec<f64> = pts.iter().map(|p| p.py_norm).collect();
        let one = vec![1.0; 16];

        // Exhaustive oracle over the two active sets of the single bound.
        let ssr = |coef: [f64; 4]| -> f64 {
            (0..16)
                .map(|i| {
                    let r = coef[0] * z[i] + coef[1] * px[i] + coef[2] * py[i] + coef[3] - y[i];
                    r * r
                })
                .sum()
        };
        let free = normal_ls(&[z.clone(), px.clone(), py.clone(), one.clone()], &y);
        let shifted: Vec<f64> = y.iter().zip(&z).map(|(v, zz)| v - A_Z_FLOOR * zz).collect();
        let red = normal_ls(&[px.clone(), py.clone(), one.clone()], &shifted);
        let mut candidates = vec![[A_Z_FLOOR, red[0], red[1], red[2]]];
        if free[0] >= A_Z_FLOOR {
            candidates.push([free[0], free[1], free[2], free[3]]);
        }
        let best = candidates
            .into_iter()
            .min_by(|a, b| ssr(*a).total_cmp(&ssr(*b)))
            .unwrap();

        let f = fit_affine(&y, &pts).unwrap();
        if f.a_z == A_Z_FLOOR {
            pinned += 1;
        }
        for (a, b) in [(f.a_z, best[0]), (f.a_x, best[1]), (f.a_y, best[2]), (f.b, best[3])] {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(
        pinned == trials && worst <= 1e-9,
        format!("{pinned}/{trials} fits pinned at a_z = {A_Z_FLOOR:e}, max |Δ| vs exhaustive oracle {worst:.2e} (tol 1e-9)"),
    )
}

fn plain_r(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn partial_correlation() -> (Status, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.random_range(5..60);
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let z: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let x: Vec<f64> = z.iter().map(|v| a * v + normal.sample(&mut rng)).collect();
        let y: Vec<f64> = z
            .iter()
            .zip(&x)
            .map(|(v, xx)| b * v + 0.3 * xx + normal.sample(&mut rng))
            .collect();
        let (rxy, rxz, ryz) = (plain_r(&x, &y), plain_r(&x, &z), plain_r(&y, &z));
        let formula = (rxy - rxz * ryz) / ((1.0 - rxz * rxz) * (1.0 - ryz * ryz)).sqrt();
        worst = worst.max((partial_corr(&x, &y, &z).unwrap().r - formula).abs());
    }

    // Permutation oracle at n = 16: shuffle x, recompute the partial
    // correlation, count |r*| >= |r|.
    let mut max_dp = 0.0f64;
    let mut ps = Vec::new();
    for k in 0..10 {
        let n = 16;
        let z: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let x: Vec<f64> = z.iter().map(|v| v + normal.sample(&mut rng)).collect();
        let y: Vec<f64> = z
            .iter()
            .zip(&x)
            .map(|(v, xx)| v + 0.1 * k as f64 * xx + normal.sample(&mut rng))
            .collect();
        let obs = partial_corr(&x, &y, &z).unwrap();
        let perms = 20_000;
        let mut xs = x.clone();
        let mut hits = 0;
        for _ in 0..perms {
            xs.shuffle(&mut rng);
            if partial_corr(&xs, &y, &z).unwrap().r.abs() >= obs.r.abs() - 1e-12 {
                hits += 1;
            }
        }
        let p_perm = hits as f64 / perms as f64;
        max_dp = max_dp.max((p_perm - obs.p_value).abs());
        ps.push(format!("{:.3}/{:.3}", obs.p_value, p_perm));
    }
    verdict(
        worst <= 1e-10 && max_dp <= 0.02,
        format!(
            "10000 triples max |Δr| {worst:.2e} (tol 1e-10); n=16 p t-test/permutation [{}], max |Δp| {max_dp:.4} (tol 0.02)",
            ps.join(" ")
        ),
    )
}

struct Population {
    points: PointSet,
    table: ResponseTable,
    shared: Vec<f64>,
}

fn population(
    seed: u64,
    scenes: usize,
    per_scene: usize,
    observers: usize,
    shared_sd: f64,
    noise_sd: f64,
) -> Population {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::new();
    for s in 0..scenes {
        for p in 0..per_scene as u32 {
            pts.push(EvaluationPoint {
                scene_id: format!("s{s:03}"),
                point_id: p,
                group_id: p / 4,
                px_raw: 0,
                py_raw: 0,
                px_norm: rng.random_range(-1.0..1.0),
                py_norm: rng.random_range(-1.0..1.0),
                gt_depth: rng.random_range(20.0..80.0),
            });
        }
    }
    let points = PointSet::new(pts).unwrap();
    let sd = Normal::new(0.0, shared_sd).unwrap();
    let shared: Vec<f64> = (0..points.len()).map(|_| sd.sample(&mut rng)).collect();
    let noise = Normal::new(0.0, noise_sd).unwrap();
    let mut records = Vec::new();
    for (scene_id, range) in points.scenes() {
        for o in 0..observers {
            for i in range.clone() {
                let p = &points.points()[i];
                records.push(ResponseRecord {
                    observer_id: format!("{scene_id}-o{o:02}"),
                    scene_id: scene_id.clone(),
                    point_id: p.point_id,
                    estimate: (p.gt_depth + shared[i] + noise.sample(&mut rng)).max(0.0),
                });
            }
        }
    }
    Population {
        table: ResponseTable::new(ObserverKind::Human, OutputType::Absolute, records).unwrap(),
        points,
        shared,
    }
}

fn half_split_statistics() -> (Status, String) {
    // (a) Monte-Carlo oracle: draw half means directly with fresh ground
    // truth, bias field and noise; the engine is averaged over independent
    // populations so both estimate the same expectation.
    let (shared_sd, noise_sd, observers) = (1.0, 2.0, 20usize);
    let (scenes, per_scene) = (10, 10);
    let n = scenes * per_scene;
    let m = (observers / 2) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let s_dist = Normal::new(0.0, shared_sd).unwrap();
    let h_dist = Normal::new(0.0, noise_sd / m.sqrt()).unwrap();
    let oracle_iters = 100_000;
    let mut acc = 0.0;
    for _ in 0..oracle_iters {
        let gt: Vec<f64> = (0..n).map(|_| rng.random_range(20.0..80.0)).collect();
        let base: Vec<f64> = gt.iter().map(|g| g + s_dist.sample(&mut rng)).collect();
        let a: Vec<f64> = base.iter().map(|v| v + h_dist.sample(&mut rng)).collect();
        let b: Vec<f64> = base.iter().map(|v| v + h_dist.sample(&mut rng)).collect();
        acc += partial_corr(&a, &b, &gt).unwrap().r;
    }
    let oracle = acc / oracle_iters as f64;
    let pops = 50;
    let mut engine = 0.0;
    for k in 0..pops {
        let pop = population(500 + k, scenes, per_scene, observers, shared_sd, noise_sd);
        let panel = HumanPanel::new(&pop.table, &pop.points).unwrap();
        let cfg = SimilarityConfig {
            iterations: 200,
            seed: k,
            ..SimilarityConfig::default()
        };
        engine += half_split_similarity(&panel, &pop.points, &[], &cfg)
            .unwrap()
            .human
            .r_mean;
    }
    engine /= pops as f64;
    let analytic = shared_sd.powi(2) / (shared_sd.powi(2) + noise_sd.powi(2) / m);
    let mc_ok = (engine - oracle).abs() <= 0.02;

    // (b) bit reproducibility across pool sizes and (c) runtime at 328
    // scenes x 20 observers with B = 1000 and 36 model subjects.
    let pop = population(15, 328, 16, 20, 2.0, 4.0);
    let panel = HumanPanel::new(&pop.table, &pop.points).unwrap();
    let mut srng = ChaCha8Rng::seed_from_u64(16);
    let subjects: Vec<Subject> = (0..36)
        .map(|k| {
            let w = srng.random_range(0.0..1.0);
            let values = pop
                .points
                .points()
                .iter()
                .zip(&pop.shared)
                .map(|(p, s)| p.gt_depth + w * s + srng.random_range(-3.0..3.0))
                .collect();
            Subject::new(format!("m{k:02}"), values, OutputType::Absolute)
        })
        .collect();
    let run = |jobs: usize, track: Track| -> (SimilarityRun, f64) {
        let cfg = SimilarityConfig {
            iterations: 1000,
            seed: 2024,
            track,
            ..SimilarityConfig::default()
        };
        let t = Instant::now();
        let r = par::with_jobs(Some(jobs), || {
            half_split_similarity(&panel, &pop.points, &subjects, &cfg).unwrap()
        });
        (r, t.elapsed().as_secs_f64())
    };
    let bits = |r: &SimilarityRun| -> Vec<(u64, u64)> {
        std::iter::once(&r.human)
            .chain(&r.subjects)
            .map(|s| (s.r_mean.to_bits(), s.r_sd.to_bits()))
            .collect()
    };
    let mut identical = true;
    let mut times = Vec::new();
    for track in Track::ALL {
        let (a, ta) = run(1, track);
        let (b, tb) = run(8, track);
        identical &= bits(&a) == bits(&b);
        times.push((track, ta, tb));
    }
    let slowest = times
        .iter()
        .map(|(_, a, b)| a.max(*b))
        .fold(0.0f64, f64::max);
    let timing: Vec<String> = times
        .iter()
        .map(|(t, a, b)| format!("{t} {a:.1}s/{b:.1}s"))
        .collect();
    verdict(
        mc_ok && identical && slowest < 60.0,
        format!(
            "engine r {engine:.4} vs oracle {oracle:.4} (|Δ| {:.4}, tol 0.02; analytic {analytic:.4}); jobs 1 vs 8 bit-identical: {identical}; 328x20, B=1000, 36 subjects: {} (limit 60 s)",
            (engine - oracle).abs(),
            timing.join(", ")
        ),
    )
}

fn screening_rates() -> (Status, String) {
    let (mut out_rate, mut gen_rate) = (0.0, 0.0);
    let seeds = 20;
    for seed in 0..seeds {
        let spec = SynthSpec {
            scenes: 16,
            observers_per_scene: 50,
            outlier_fraction: 0.2,
            models: Vec::new(),
            seed,
            ..SynthSpec::default()
        };
        let data = generate(&spec).unwrap();
        let cohorts = derive_cohorts(&data.responses);
        let rel = observer_reliability(&data.responses, &cohorts, Reference::Mean);
        let kept = screen(&rel).unwrap().kept_ids();
        let t = &data.truth;
        out_rate += t.outlier_observers.iter().filter(|o| !kept.contains(*o)).count() as f64
            / t.outlier_observers.len() as f64;
        gen_rate += t.genuine_observers.iter().filter(|o| !kept.contains(*o)).count() as f64
            / t.genuine_observers.len() as f64;
    }
    out_rate /= seeds as f64;
    gen_rate /= seeds as f64;
    verdict(
        out_rate >= 0.90 && gen_rate <= 0.05,
        format!(
            "over {seeds} seeds: outliers excluded {:.1}% (need >= 90%), genuine excluded {:.1}% (need <= 5%)",
            100.0 * out_rate,
            100.0 * gen_rate
        ),
    )
}

fn scale_recovery() -> (Status, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst_inv = 0.0f64;
    let mut checked = 0;
    let mut projection_violations = 0;
    let mut scenes_checked = 0;
    for seed in 0..5 {
        let data = generate(&SynthSpec {
            scenes: 40,
            seed,
            ..SynthSpec::default()
        })
        .unwrap();
        let points = &data.points;
        for ((_, table), meta) in data.predictions.iter().zip(&data.models) {
            let values = points
                .align(&mean_by_point(table, None).unwrap())
                .unwrap();
            let cap = meta.depth_range.1;
            let base = ssi_rmse(&values, points, meta.output_type, cap).unwrap();
            for _ in 0..5 {
                let alpha = rng.random_range(0.05..20.0);
                let beta = rng.random_range(-20.0..20.0);
                let moved: Vec<f64> = values.iter().map(|v| alpha * v + beta).collect();
                let other = ssi_rmse(&moved, points, meta.output_type, cap).unwrap();
                worst_inv = worst_inv.max((other - base).abs());
                checked += 1;
            }
            if meta.output_type == OutputType::Absolute {
                let rec = recover_scale(&values, points, meta.output_type, cap).unwrap();
                let aligned = points.align(&rec.aligned).unwrap();
                for ((_, s), (_, r)) in scene_rmse(&aligned, points)
                    .iter()
                    .zip(scene_rmse(&values, points))
                {
                    scenes_checked += 1;
                    if *s > r + 1e-12 {
                        projection_violations += 1;
                    }
                }
            }
        }
        // human observers, absolute
        for obs in data.truth.genuine_observers.iter().take(5) {
            let est = data.responses.estimates_of(obs);
            let keep: std::collections::BTreeSet<String> =
                est.iter().map(|(k, _)| k.scene_id.clone()).collect();
            let sub = points.subset(&keep);
            let values = sub.align(&est).unwrap();
            let rec = recover_scale(&values, &sub, OutputType::Absolute, f64::INFINITY).unwrap();
            let aligned = sub.align(&rec.aligned).unwrap();
            for ((_, s), (_, r)) in scene_rmse(&aligned, &sub).iter().zip(scene_rmse(&values, &sub)) {
                scenes_checked += 1;
                if *s > r + 1e-12 {
                    projection_violations += 1;
                }
            }
        }
    }
    verdict(
        worst_inv <= 1e-9 && projection_violations == 0,
        format!(
            "{checked} transformed outputs, max |Δ ssi_rmse| {worst_inv:.2e} (tol 1e-9); ssi <= raw on {}/{scenes_checked} scenes",
            scenes_checked - projection_violations
        ),
    )
}

fn tradeoff_signs() -> (Status, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let human = HumanBaseline {
        ssi_rmse: 6.0,
        similarity: 0.8,
    };
    let log_h = human.ssi_rmse.ln();
    let models: Vec<ModelEntry> = (0..20)
        .map(|i| {
            let log_r = log_h + rng.random_range(-1.0..1.0);
            let peak = 0.6 - (log_r - log_h).abs();
            let similarity: BTreeMap<Measure, f64> = Measure::ALL
                .iter()
                .map(|m| (*m, peak + rng.random_range(-0.05..0.05)))
                .collect();
            ModelEntry {
                meta: depthsim::data::ModelMeta {
                    model_id: format!("m{i:02}"),
                    strategy: depthsim::data::Strategy::Supervised,
                    backbone: depthsim::data::Backbone::Cnn,
                    dataset_tags: vec!["kitti".into()],
                    param_count: 1,
                    output_type: OutputType::Relative,
                    depth_range: (0.0, 80.0),
                },
                ssi_rmse: log_r.exp(),
                similarity,
            }
        })
        .collect();
    let rep = build_tradeoff(Track::ScaleRecovered, &models, human).unwrap();
    let inf = *rep.correlations[&(Group::HumanInferior, Measure::Raw)].stat().unwrap();
    let sup = *rep.correlations[&(Group::HumanSuperior, Measure::Raw)].stat().unwrap();
    verdict(
        inf.r < 0.0 && inf.p_value < 0.01 && sup.r > 0.0 && sup.p_value < 0.01,
        format!(
            "inferior r {:.3} (p {:.1e}, n {}), superior r {:.3} (p {:.1e}, n {})",
            inf.r, inf.p_value, inf.n, sup.r, sup.p_value, sup.n
        ),
    )
}

fn random_scene_map(rng: &mut ChaCha8Rng, id: usize) -> Scene {
    let w = rng.random_range(200..600);
    // a group spans at least 3 x min_pair_sep rows inside the border, so
    // heights near 100 px are infeasible by geometry alone
    let h = rng.random_range(130..376);
    let seeds: Vec<(f64, f64)> = (0..rng.random_range(1..6))
        .map(|_| (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64)))
        .collect();
    let valid_fraction = rng.random_range(0.3..1.0);
    let mut labels = Vec::with_capacity(w * h);
    let mut depths = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let nearest = seeds
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    let da = (a.1 .0 - x as f64).powi(2) + (a.1 .1 - y as f64).powi(2);
                    let db = (b.1 .0 - x as f64).powi(2) + (b.1 .1 - y as f64).powi(2);
                    da.total_cmp(&db)
                })
                .unwrap()
                .0;
            labels.push(nearest as u32);
            depths.push((rng.random::<f64>() < valid_fraction).then(|| 2.0 + y as f64 * 0.2));
        }
    }
    Scene::new(
        format!("rand{id:03}"),
        DepthMap::from_depths(w, h, &depths, depthsim::data::KITTI_ENCODING_SCALE).unwrap(),
        Some(LabelMap::new(w, h, labels).unwrap()),
    )
    .unwrap()
}

fn sampler() -> (Status, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let cfg = SamplerConfig::default();
    let mut clean = 0;
    let mut failures = Vec::new();
    for k in 0..200 {
        let scene = random_scene_map(&mut rng, k);
        match sample_points(&scene, &SamplerConfig { seed: k as u64, ..cfg.clone() }) {
            Ok(pts) if pts.len() == cfg.total_points() && check_constraints(&pts, &scene, &cfg).is_empty() => {
                clean += 1
            }
            Ok(pts) => failures.push(format!("{}: {:?}", scene.scene_id, check_constraints(&pts, &scene, &cfg))),
            Err(e) => failures.push(format!("{} {}x{}: {e}", scene.scene_id, scene.width(), scene.height())),
        }
    }
    let tiny = Scene::new(
        "tiny",
        DepthMap::from_depths(41, 41, &vec![Some(10.0); 41 * 41], depthsim::data::KITTI_ENCODING_SCALE)
            .unwrap(),
        Some(LabelMap::uniform(41, 41)),
    )
    .unwrap();
    let exhausted = matches!(
        sample_points(&tiny, &cfg),
        Err(depthsim::Error::SamplingExhausted { .. })
    );
    verdict(
        clean == 200 && exhausted,
        format!(
            "{clean}/200 random scenes satisfy every constraint{}; 41x41 scene raises SamplingExhausted: {exhausted}",
            if failures.is_empty() { String::new() } else { format!(" (failures {})", failures.join("; ")) }
        ),
    )
}

/// Table B1, scale-recovered columns.
const TABLE_B1_SCALE_RECOVERED: [(&str, &str, f64); 12] = [
    ("human_superior", "raw", 0.69),
    ("human_superior", "a_z", 0.33),
    ("human_superior", "b", 0.42),
    ("human_superior", "a_x", 0.47),
    ("human_superior", "a_y", 0.48),
    ("human_superior", "residual", 0.64),
    ("human_inferior", "raw", -0.56),
    ("human_inferior", "a_z", -0.56),
    ("human_inferior", "b", -0.44),
    ("human_inferior", "a_x", -0.68),
    ("human_inferior", "a_y", -0.50),
    ("human_inferior", "residual", -0.66),
];

fn released_data() -> (Status, String) {
    let Some(manifest) = std::env::var_os(RELEASED_ENV) else {
        return (
            Status::Skipped,
            format!("set {RELEASED_ENV} to a manifest for the released dataset"),
        );
    };
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let cli = depthsim_cli::Cli::parse_from([
        "depthsim".as_ref(),
        "run-all".as_ref(),
        "--manifest".as_ref(),
        manifest.as_os_str(),
        "--out".as_ref(),
        out.as_os_str(),
        "--B".as_ref(),
        "1000".as_ref(),
    ]);
    if let Err(e) = depthsim_cli::run(cli) {
        return (Status::Fail, format!("pipeline failed: {e}"));
    }
    let read = |name: &str| std::fs::read_to_string(out.join(name)).unwrap();
    let kept = depthsim::screening::parse_screening_kept(Path::new("screening.csv"), &read("screening.csv"))
        .unwrap()
        .len();
    let sims = parse_similarity(Path::new("similarity.csv"), &read("similarity.csv")).unwrap();
    let abs: Vec<_> = sims.iter().filter(|s| s.track == Track::Absolute).collect();
    let human = abs.iter().find(|s| s.subject_id == "human").unwrap().r_mean;
    let models: Vec<_> = abs.iter().filter(|s| s.subject_id != "human").collect();
    let positive = models.iter().filter(|s| s.r_mean > 0.0).count();
    let below_human = models.iter().all(|s| s.r_mean < human);

    let mut cells = BTreeMap::new();
    let corr = read("tradeoff_correlations.csv");
    for line in corr.lines().skip(1).filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split(',').collect();
        if f[0] == "scale_recovered" {
            cells.insert((f[1].to_string(), f[2].to_string()), f[4].parse::<f64>().unwrap_or(f64::NAN));
        }
    }
    let mut worst = 0.0f64;
    for (g, m, r) in TABLE_B1_SCALE_RECOVERED {
        let got = cells.get(&(g.to_string(), m.to_string())).copied().unwrap_or(f64::NAN);
        worst = worst.max((got - r).abs());
    }
    let worst_ok = worst <= 0.05;
    verdict(
        kept == 733 && models.len() == 36 && positive == 36 && below_human && worst_ok,
        format!(
            "kept {kept} (need 733); absolute models positive {positive}/{} (need 36/36), all below human: {below_human}; max |Δr| vs Table B1 scale-recovered {worst:.3} (tol 0.05)",
            models.len()
        ),
    )
}
