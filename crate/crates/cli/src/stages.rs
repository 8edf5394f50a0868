use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use depthsim::affine::{self, AffineFit, Component, FitRows};
use depthsim::data::{mean_by_point, ModelMeta, OutputType, PointSet, ResponseTable, Scene};
use depthsim::io::{self, Provenance};
use depthsim::numeric::rmse;
use depthsim::sampler::{check_constraints, sample_points as sample_scene};
use depthsim::scale::{self, ScaleRecovery};
use depthsim::screening::{self, derive_cohorts, observer_reliability};
use depthsim::similarity::{
    half_split_similarity, parse_similarity, similarity_to_csv, HumanPanel, SimilarityConfig,
    SplitLabels, Subject, Track, HUMAN_ID,
};
use depthsim::synth::{self, SynthSpec};
use depthsim::tradeoff::{build_tradeoff, emit_report, HumanBaseline, Measure, ModelEntry};
use depthsim::{par, Error};

use crate::context::{CliError, CliResult, Context};
use crate::GlobalOpts;

pub fn sample_points(ctx: &Context) -> CliResult<()> {
    let m = &ctx.manifest.manifest;
    if m.scenes.is_empty() {
        return Err(CliError::Config("manifest lists no scenes".into()));
    }
    let mut cfg = m.sampler.clone().unwrap_or_default();
    cfg.seed = ctx.seed;
    let results = par::map_slice(&m.scenes, |entry| -> CliResult<_> {
        let depth = io::load_depth_map(&ctx.manifest.resolve(&entry.depth), m.encoding_scale)?;
        let labels = match &entry.labels {
            Some(p) => Some(io::load_label_map(&ctx.manifest.resolve(p))?),
            None => None,
        };
        let scene = Scene::new(entry.scene_id.clone(), depth, labels)?;
        let pts = sample_scene(&scene, &cfg)?;
        let violations = check_constraints(&pts, &scene, &cfg);
        if !violations.is_empty() {
            return Err(CliError::ConstraintViolation {
                scene: entry.scene_id.clone(),
                detail: format!("{violations:?}"),
            });
        }
        Ok(pts)
    });
    let mut all = Vec::new();
    for r in results {
        all.extend(r?);
    }
    let set = PointSet::new(all)?;
    ctx.write(
        "points.csv",
        &io::points_to_csv(set.points(), Some(&ctx.provenance)),
    )
}

pub fn screen(ctx: &Context) -> CliResult<()> {
    let table = ctx.responses()?;
    let cohorts = derive_cohorts(&table);
    let records = observer_reliability(&table, &cohorts, ctx.manifest.manifest.screening_reference);
    let outcome = screening::screen(&records)?;
    println!(
        "kept {} of {} observers (cutoff {:.4})",
        outcome.kept.len(),
        records.len(),
        outcome.cutoff
    );
    ctx.write(
        "screening.csv",
        &screening::screening_to_csv(&outcome, Some(&ctx.provenance)),
    )
}

/// Screened all-observer mean per point, in point order.
fn human_mean(ctx: &Context, points: &PointSet) -> CliResult<(ResponseTable, Vec<f64>)> {
    let kept = ctx.kept_observers()?;
    let table = ctx.responses()?.filter_observers(&kept);
    let mean = mean_by_point(&table, None)?;
    Ok((table, points.align(&mean)?))
}

fn model_values(points: &PointSet, table: &ResponseTable) -> CliResult<Vec<f64>> {
    Ok(points.align(&mean_by_point(table, None)?)?)
}

fn in_track(track: Track, meta: &ModelMeta) -> bool {
    track == Track::ScaleRecovered || meta.output_type == OutputType::Absolute
}

/// Points of the scenes a recovery retained, and the aligned values on
/// them.
fn retained(points: &PointSet, rec: &ScaleRecovery) -> CliResult<(PointSet, Vec<f64>)> {
    let sub = if rec.dropped.is_empty() {
        points.clone()
    } else {
        let keep: BTreeSet<String> = rec.fits.iter().map(|f| f.scene_id.clone()).collect();
        points.subset(&keep)
    };
    let values = sub.align(&rec.aligned)?;
    Ok((sub, values))
}

pub fn recover_scale(ctx: &Context) -> CliResult<()> {
    let points = ctx.points()?;
    let (_, human) = human_mean(ctx, &points)?;
    let models = ctx.models()?;

    let mut subjects: Vec<(String, Vec<f64>, OutputType, f64)> =
        vec![(HUMAN_ID.to_string(), human, OutputType::Absolute, f64::INFINITY)];
    for (meta, table) in &models {
        subjects.push((
            meta.model_id.clone(),
            model_values(&points, table)?,
            meta.output_type,
            meta.depth_range.1,
        ));
    }

    let mut fit_rows = Vec::new();
    let mut table =
        String::from("subject_id,output_type,ssi_rmse,raw_rmse,scenes_dropped,scenes_negative_scale\n");
    for (id, values, output_type, cap) in &subjects {
        let rec = scale::recover_scale(values, &points, *output_type, *cap)?;
        let (sub, aligned) = retained(&points, &rec)?;
        if sub.is_empty() {
            return Err(Error::RankDeficient { columns: vec![0] }.into());
        }
        let ssi = rmse(&aligned, &sub.gt());
        let raw = match output_type {
            OutputType::Absolute => scale::raw_rmse(values, &points, *output_type)?.to_string(),
            _ => "NA".into(),
        };
        let _ = writeln!(
            table,
            "{id},{output_type},{ssi},{raw},{},{}",
            rec.dropped.len(),
            rec.negative_scale.len()
        );
        fit_rows.extend(rec.fits.into_iter().map(|f| (id.clone(), f)));
    }
    table.push_str(&ctx.provenance.footer());
    ctx.write(
        "scale_fits.csv",
        &scale::scale_fits_to_csv(&fit_rows, Some(&ctx.provenance)),
    )?;
    ctx.write("rmse.csv", &table)
}

/// `subject_id -> ssi_rmse` from `rmse.csv`.
pub fn parse_rmse(path: &Path, text: &str) -> CliResult<BTreeMap<String, f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_error(path, e.to_string()))?;
        let v: f64 = rec
            .get(2)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| parse_error(path, "bad ssi_rmse".into()))?;
        out.insert(rec[0].to_string(), v);
    }
    Ok(out)
}

fn parse_error(path: &Path, reason: String) -> CliError {
    Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason,
    }
    .into()
}

pub fn similarity(ctx: &Context) -> CliResult<()> {
    let points = ctx.points()?;
    let (table, _) = human_mean(ctx, &points)?;
    let panel = HumanPanel::new(&table, &points)?;
    let models = ctx.models()?;
    let mut scores = Vec::new();
    for &track in &ctx.tracks {
        let mut subjects = Vec::new();
        for (meta, t) in models.iter().filter(|(m, _)| in_track(track, m)) {
            let mut s = Subject::new(meta.model_id.clone(), model_values(&points, t)?, meta.output_type);
            s.depth_cap = meta.depth_range.1;
            subjects.push(s);
        }
        let cfg = SimilarityConfig {
            iterations: ctx.iterations,
            seed: ctx.seed,
            track,
            labels: SplitLabels::Normal,
        };
        let run = half_split_similarity(&panel, &points, &subjects, &cfg)?;
        println!(
            "{track}: human-human r = {:.4} over {} iterations",
            run.human.r_mean, run.human.b_effective
        );
        scores.push(run.human);
        scores.extend(run.subjects);
    }
    ctx.write(
        "similarity.csv",
        &similarity_to_csv(&scores, Some(&ctx.provenance)),
    )
}

pub fn affine(ctx: &Context) -> CliResult<()> {
    let points = ctx.points()?;
    let (_, human) = human_mean(ctx, &points)?;
    let models = ctx.models()?;

    let mut all_fits: Vec<(String, Track, Vec<AffineFit>)> = Vec::new();
    let mut comp = String::from("subject_id,track,component,n,r,p_value\n");
    for &track in &ctx.tracks {
        let mut subjects: Vec<(String, Vec<f64>, OutputType, f64)> =
            vec![(HUMAN_ID.into(), human.clone(), OutputType::Absolute, f64::INFINITY)];
        for (meta, t) in models.iter().filter(|(m, _)| in_track(track, m)) {
            subjects.push((
                meta.model_id.clone(),
                model_values(&points, t)?,
                meta.output_type,
                meta.depth_range.1,
            ));
        }
        let mut fits = Vec::with_capacity(subjects.len());
        for (id, values, output_type, cap) in subjects {
            let decomposition = match track {
                Track::Absolute => affine::decompose_all(&values, &points)?,
                Track::ScaleRecovered => {
                    let rec = scale::recover_scale(&values, &points, output_type, cap)?;
                    let (sub, aligned) = retained(&points, &rec)?;
                    affine::decompose_all(&aligned, &sub)?
                }
            };
            fits.push((id, decomposition.fits));
        }
        let human_fits = &fits[0].1;
        for (id, model_fits) in &fits[1..] {
            let (h, s) = affine::common_scenes(human_fits, model_fits);
            for c in Component::ALL {
                match affine::component_similarity(id, &h, &s, c) {
                    Ok(cs) => {
                        let _ = writeln!(
                            comp,
                            "{id},{track},{c},{},{},{}",
                            cs.stat.n, cs.stat.r, cs.stat.p_value
                        );
                    }
                    Err(Error::ZeroVariance | Error::InsufficientData { .. }) => {
                        let _ = writeln!(comp, "{id},{track},{c},{},NA,NA", h.len());
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        all_fits.extend(fits.into_iter().map(|(id, f)| (id, track, f)));
    }
    comp.push_str(&ctx.provenance.footer());

    let rows: Vec<FitRows<'_>> = all_fits
        .iter()
        .map(|(id, track, fits)| FitRows {
            subject_id: id,
            track: track.as_str(),
            fits,
        })
        .collect();
    ctx.write(
        "affine_fits.csv",
        &affine::affine_fits_to_csv(&rows, Some(&ctx.provenance)),
    )?;
    ctx.write(
        "affine_residuals.csv",
        &affine::affine_residuals_to_csv(&rows, &points, Some(&ctx.provenance)),
    )?;
    ctx.write("component_similarity.csv", &comp)
}

/// `(track, subject, component) -> r`; undefined cells become NaN.
pub fn parse_component_similarity(
    path: &Path,
    text: &str,
) -> CliResult<BTreeMap<(Track, String, String), f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_error(path, e.to_string()))?;
        let track: Track = rec[1].parse()?;
        let r = match rec[4].trim() {
            "NA" => f64::NAN,
            v => v
                .parse()
                .map_err(|_| parse_error(path, format!("bad r `{v}`")))?,
        };
        out.insert((track, rec[0].to_string(), rec[2].to_string()), r);
    }
    Ok(out)
}

pub fn tradeoff(ctx: &Context, json: bool) -> CliResult<()> {
    let (sim_path, sim_text) = ctx.artifact("similarity.csv", "similarity")?;
    let (comp_path, comp_text) = ctx.artifact("component_similarity.csv", "affine")?;
    let (rmse_path, rmse_text) = ctx.artifact("rmse.csv", "recover-scale")?;
    let scores = parse_similarity(&sim_path, &sim_text)?;
    let components = parse_component_similarity(&comp_path, &comp_text)?;
    let rmses = parse_rmse(&rmse_path, &rmse_text)?;
    let metas = match &ctx.manifest.manifest.models {
        Some(p) => io::load_models(&ctx.manifest.resolve(p))?,
        None => Vec::new(),
    };
    let raw: BTreeMap<(Track, &str), f64> = scores
        .iter()
        .map(|s| ((s.track, s.subject_id.as_str()), s.r_mean))
        .collect();
    let rmse_of = |id: &str| {
        rmses.get(id).copied().ok_or_else(|| {
            CliError::Config(format!("rmse.csv has no row for `{id}`; rerun `depthsim recover-scale`"))
        })
    };

    let mut reports = Vec::new();
    for &track in &ctx.tracks {
        let human_sim = *raw.get(&(track, HUMAN_ID)).ok_or_else(|| {
            CliError::Config(format!(
                "similarity.csv has no {track} rows; rerun `depthsim similarity`"
            ))
        })?;
        let mut entries = Vec::new();
        for meta in metas.iter().filter(|m| in_track(track, m)) {
            let id = meta.model_id.as_str();
            let mut similarity = BTreeMap::new();
            for measure in Measure::ALL {
                let v = match measure {
                    Measure::Raw => raw.get(&(track, id)).copied(),
                    Measure::Component(c) => components
                        .get(&(track, id.to_string(), c.as_str().to_string()))
                        .copied(),
                };
                let v = v.ok_or_else(|| {
                    CliError::Config(format!(
                        "no {track} `{measure}` similarity for model {id}; rerun `depthsim {}`",
                        if measure == Measure::Raw { "similarity" } else { "affine" }
                    ))
                })?;
                similarity.insert(measure, v);
            }
            entries.push(ModelEntry {
                meta: meta.clone(),
                ssi_rmse: rmse_of(id)?,
                similarity,
            });
        }
        let human = HumanBaseline {
            ssi_rmse: rmse_of(HUMAN_ID)?,
            similarity: human_sim,
        };
        reports.push(build_tradeoff(track, &entries, human)?);
    }
    for p in emit_report(&reports, &ctx.out_dir, Some(&ctx.provenance), json)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

pub fn run_all(ctx: &Context, json: bool) -> CliResult<()> {
    let m = &ctx.manifest.manifest;
    if m.points.is_none() {
        sample_points(ctx)?;
    }
    screen(ctx)?;
    recover_scale(ctx)?;
    similarity(ctx)?;
    affine(ctx)?;
    tradeoff(ctx, json)
}

pub fn synth(
    opts: &GlobalOpts,
    spec_path: Option<&Path>,
    scenes: Option<usize>,
    observers: Option<usize>,
    outlier_fraction: Option<f64>,
) -> CliResult<()> {
    let mut spec: SynthSpec = match spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            serde_json::from_str(&text).map_err(Error::from)?
        }
        None => SynthSpec::default(),
    };
    if let Some(s) = opts.seed {
        spec.seed = s;
    }
    if let Some(n) = scenes {
        spec.scenes = n;
    }
    if let Some(n) = observers {
        spec.observers_per_scene = n;
    }
    if let Some(f) = outlier_fraction {
        spec.outlier_fraction = f;
    }
    let out = opts.out.clone().unwrap_or_else(|| "synth".into());
    let spec_json = serde_json::to_string(&spec).map_err(Error::from)?;
    let provenance = Provenance::new(spec.seed, format!("sha256:{}", io::sha256_hex(spec_json.as_bytes())));
    let data = depthsim::par::with_jobs(opts.jobs, || synth::generate(&spec))?;
    let files = synth::write_synth(&data, &out, &provenance)?;
    println!("wrote {}", files.manifest.display());
    println!("wrote {}", files.truth.display());
    Ok(())
}
