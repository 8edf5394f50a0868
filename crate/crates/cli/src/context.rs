use std::path::{Path, PathBuf};

use depthsim::data::{ModelMeta, PointSet, ResponseTable};
use depthsim::io::{self, LoadedManifest, Provenance};
use depthsim::similarity::Track;

use crate::{GlobalOpts, TrackSel};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] depthsim::Error),
    #[error("missing {file}; run `depthsim {producer}` first")]
    MissingArtifact { file: PathBuf, producer: &'static str },
    #[error("{0}")]
    Config(String),
    #[error("sampled points violate constraints in scene {scene}: {detail}")]
    ConstraintViolation { scene: String, detail: String },
}

impl CliError {
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.class(),
            CliError::MissingArtifact { .. } => "MissingArtifact",
            CliError::Config(_) => "Config",
            CliError::ConstraintViolation { .. } => "ConstraintViolation",
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Resolved settings for one invocation.
pub struct Context {
    pub manifest: LoadedManifest,
    pub seed: u64,
    pub iterations: usize,
    pub tracks: Vec<Track>,
    pub out_dir: PathBuf,
    pub jobs: Option<usize>,
    pub provenance: Provenance,
}

impl Context {
    pub fn from_opts(opts: &GlobalOpts) -> CliResult<Self> {
        let path = opts.manifest.as_ref().ok_or_else(|| {
            CliError::Config(format!(
                "no manifest given; pass --manifest or set {}",
                crate::MANIFEST_ENV
            ))
        })?;
        let manifest = io::load_manifest(path)?;
        let m = &manifest.manifest;
        let seed = opts.seed.unwrap_or(m.seed);
        let iterations = opts.iterations.unwrap_or(m.bootstrap_iterations);
        let sel = match opts.track {
            Some(t) => t,
            None => match m.track.as_str() {
                "both" => TrackSel::Both,
                other => match other.parse::<Track>()? {
                    Track::Absolute => TrackSel::Absolute,
                    Track::ScaleRecovered => TrackSel::ScaleRecovered,
                },
            },
        };
        let tracks = match sel {
            TrackSel::Absolute => vec![Track::Absolute],
            TrackSel::ScaleRecovered => vec![Track::ScaleRecovered],
            TrackSel::Both => Track::ALL.to_vec(),
        };
        let out_dir = match (&opts.out, &m.out_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => manifest.resolve(o),
            (None, None) => manifest.base_dir.join("out"),
        };
        let provenance = Provenance::new(seed, manifest.digest.clone());
        Ok(Self {
            manifest,
            seed,
            iterations,
            tracks,
            out_dir,
            jobs: opts.jobs,
            provenance,
        })
    }

    pub fn with_pool<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        depthsim::par::with_jobs(self.jobs, f)
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write(&self, name: &str, text: &str) -> CliResult<()> {
        let path = self.out(name);
        io::write_text(&path, text)?;
        println!("wrote {}", path.display());
        Ok(())
    }

    /// Input path named by a manifest field.
    pub fn input(&self, field: Option<&PathBuf>, name: &str) -> CliResult<PathBuf> {
        let p = field.ok_or_else(|| CliError::Config(format!("manifest has no `{name}` entry")))?;
        Ok(self.manifest.resolve(p))
    }

    /// Reads a file produced by an earlier stage.
    pub fn artifact(&self, name: &str, producer: &'static str) -> CliResult<(PathBuf, String)> {
        let path = self.out(name);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok((path, text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(CliError::MissingArtifact { file: path, producer })
            }
            Err(e) => Err(depthsim::Error::Io { path, source: e }.into()),
        }
    }

    pub fn points(&self) -> CliResult<PointSet> {
        let pts = match &self.manifest.manifest.points {
            Some(p) => io::load_points(&self.manifest.resolve(p))?,
            None => {
                let (path, text) = self.artifact("points.csv", "sample-points")?;
                io::parse_points(&path, &text)?
            }
        };
        Ok(PointSet::new(pts)?)
    }

    pub fn responses(&self) -> CliResult<ResponseTable> {
        let path = self.input(self.manifest.manifest.responses.as_ref(), "responses")?;
        Ok(io::load_responses(&path)?)
    }

    pub fn kept_observers(&self) -> CliResult<std::collections::BTreeSet<String>> {
        let (path, text) = self.artifact("screening.csv", "screen")?;
        Ok(depthsim::screening::parse_screening_kept(&path, &text)?)
    }

    /// Models with their predictions, in `models.csv` order.
    pub fn models(&self) -> CliResult<Vec<(ModelMeta, ResponseTable)>> {
        let m = &self.manifest.manifest;
        let Some(models_path) = m.models.as_ref() else {
            return Ok(Vec::new());
        };
        let metas = io::load_models(&self.manifest.resolve(models_path))?;
        let dir = self.input(m.predictions_dir.as_ref(), "predictions_dir")?;
        let mut out = Vec::with_capacity(metas.len());
        for meta in metas {
            let table = io::load_responses(&dir.join(format!("{}.csv", meta.model_id)))?;
            if table.output_type() != meta.output_type {
                return Err(CliError::Config(format!(
                    "model {}: predictions declare `{}` but models.csv says `{}`",
                    meta.model_id,
                    table.output_type(),
                    meta.output_type
                )));
            }
            out.push((meta, table));
        }
        Ok(out)
    }
}

pub fn display(p: &Path) -> String {
    p.display().to_string()
}
