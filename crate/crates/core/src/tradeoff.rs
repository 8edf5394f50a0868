//! Accuracy versus human-likeness analysis.
//!
//! Models are split at the human baseline error into a human-superior group
//! (lower error than humans) and a human-inferior group. Within each group
//! log-RMSE is correlated with every similarity measure, and the rankings
//! the measures induce over models are compared with Spearman's rho.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::affine::Component;
use crate::data::{DatasetCategory, ModelMeta};
use crate::error::{Error, Result};
use crate::io::{write_text, Provenance};
use crate::similarity::Track;
use crate::stats::{pearson, spearman, CorrelationStat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    Raw,
    Component(Component),
}

impl Measure {
    pub const ALL: [Measure; 6] = [
        Measure::Raw,
        Measure::Component(Component::AZ),
        Measure::Component(Component::B),
        Measure::Component(Component::AX),
        Measure::Component(Component::AY),
        Measure::Component(Component::Residual),
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Measure::Raw => "raw",
            Measure::Component(c) => c.as_str(),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    HumanSuperior,
    HumanInferior,
}

impl Group {
    pub const ALL: [Group; 2] = [Group::HumanInferior, Group::HumanSuperior];

    pub fn as_str(&self) -> &'static str {
        match self {
            Group::HumanSuperior => "human_superior",
            Group::HumanInferior => "human_inferior",
        }
    }

    /// Strict comparison: a tie with the human baseline is inferior.
    pub fn classify(model_rmse: f64, human_rmse: f64) -> Self {
        if model_rmse < human_rmse {
            Group::HumanSuperior
        } else {
            Group::HumanInferior
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct ModelEntry {
    pub meta: ModelMeta,
    pub ssi_rmse: f64,
    /// Every measure must be present; NaN marks an undefined similarity
    /// and makes the cells that use it undefined.
    pub similarity: BTreeMap<Measure, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumanBaseline {
    pub ssi_rmse: f64,
    /// Human–human raw similarity.
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub model_id: String,
    pub ssi_rmse: f64,
    pub log_rmse: f64,
    pub similarity: BTreeMap<Measure, f64>,
    pub group: Group,
    pub category: DatasetCategory,
    pub strategy: crate::data::Strategy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Defined(CorrelationStat),
    /// Too few models, or a constant series.
    Undefined { n: usize },
}

impl Cell {
    pub fn stat(&self) -> Option<&CorrelationStat> {
        match self {
            Cell::Defined(s) => Some(s),
            Cell::Undefined { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffReport {
    pub track: Track,
    /// Sorted by model id.
    pub rows: Vec<TradeoffRow>,
    pub correlations: BTreeMap<(Group, Measure), Cell>,
    pub human: HumanBaseline,
    /// Spearman rho between the model rankings of two measures, indexed as
    /// `Measure::ALL`. `None` when undefined.
    pub rank_matrix: [[Option<f64>; 6]; 6],
}

impl TradeoffReport {
    pub fn group_size(&self, group: Group) -> usize {
        self.rows.iter().filter(|r| r.group == group).count()
    }
}

pub const MIN_GROUP_MODELS: usize = 3;

pub fn build_tradeoff(
    track: Track,
    models: &[ModelEntry],
    human: HumanBaseline,
) -> Result<TradeoffReport> {
    if !(human.ssi_rmse > 0.0) {
        return Err(Error::Invalid("human baseline RMSE must be positive".into()));
    }
    let mut rows = Vec::with_capacity(models.len());
    for m in models {
        for measure in Measure::ALL {
            if !m.similarity.get(&measure).is_some_and(|v| !v.is_infinite()) {
                return Err(Error::Invalid(format!(
                    "model {} lacks a `{measure}` similarity",
                    m.meta.model_id
                )));
            }
        }
        if !(m.ssi_rmse > 0.0) {
            return Err(Error::Invalid(format!(
                "model {} has non-positive RMSE",
                m.meta.model_id
            )));
        }
        rows.push(TradeoffRow {
            model_id: m.meta.model_id.clone(),
            ssi_rmse: m.ssi_rmse,
            log_rmse: m.ssi_rmse.ln(),
            similarity: m.similarity.clone(),
            group: Group::classify(m.ssi_rmse, human.ssi_rmse),
            category: DatasetCategory::from_tags(&m.meta.dataset_tags),
            strategy: m.meta.strategy,
        });
    }
    rows.sort_by(|a, b| a.model_id.cmp(&b.model_id));
    if rows.windows(2).any(|w| w[0].model_id == w[1].model_id) {
        return Err(Error::Invalid("duplicate model id".into()));
    }

    let mut correlations = BTreeMap::new();
    for group in Group::ALL {
        let members: Vec<&TradeoffRow> = rows.iter().filter(|r| r.group == group).collect();
        let x: Vec<f64> = members.iter().map(|r| r.log_rmse).collect();
        for measure in Measure::ALL {
            let y: Vec<f64> = members.iter().map(|r| r.similarity[&measure]).collect();
            let cell = if members.len() < MIN_GROUP_MODELS || y.iter().any(|v| v.is_nan()) {
                Cell::Undefined { n: members.len() }
            } else {
                match pearson(&x, &y) {
                    Ok(s) => Cell::Defined(s),
                    Err(_) => Cell::Undefined { n: members.len() },
                }
            };
            correlations.insert((group, measure), cell);
        }
    }

    let mut rank_matrix = [[None; 6]; 6];
    let series: Vec<Vec<f64>> = Measure::ALL
        .iter()
        .map(|m| rows.iter().map(|r| r.similarity[m]).collect())
        .collect();
    for i in 0..6 {
        rank_matrix[i][i] = Some(1.0);
        for j in (i + 1)..6 {
            let defined = !series[i].iter().chain(&series[j]).any(|v| v.is_nan());
            let rho = if defined {
                spearman(&series[i], &series[j]).ok().map(|s| s.r)
            } else {
                None
            };
            rank_matrix[i][j] = rho;
            rank_matrix[j][i] = rho;
        }
    }

    Ok(TradeoffReport {
        track,
        rows,
        correlations,
        human,
        rank_matrix,
    })
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Rendered report files keyed by file name.
pub fn render_report(
    reports: &[TradeoffReport],
    provenance: Option<&Provenance>,
    with_json: bool,
) -> BTreeMap<&'static str, String> {
    let footer = provenance.map(|p| p.footer()).unwrap_or_default();
    let measure_cols: Vec<String> = Measure::ALL.iter().map(|m| format!("sim_{m}")).collect();

    let mut table = format!(
        "model_id,track,group,ssi_rmse,log_rmse,{},dataset_category,strategy\n",
        measure_cols.join(",")
    );
    let mut corr = String::from("track,group,measure,n,r,p_value\n");
    let mut rank = format!(
        "track,measure,{}\n",
        Measure::ALL.map(|m| m.as_str()).join(",")
    );
    let mut scatter = format!(
        "track,subject_id,kind,log_rmse,{},group,color_category,strategy_marker\n",
        measure_cols.join(",")
    );
    let mut summary = String::new();

    for rep in reports {
        for r in &rep.rows {
            let sims: Vec<String> = Measure::ALL.iter().map(|m| r.similarity[m].to_string()).collect();
            let _ = writeln!(
                table,
                "{},{},{},{},{},{},{},{}",
                r.model_id, rep.track, r.group, r.ssi_rmse, r.log_rmse, sims.join(","), r.category, r.strategy
            );
            let _ = writeln!(
                scatter,
                "{},{},model,{},{},{},{},{}",
                rep.track, r.model_id, r.log_rmse, sims.join(","), r.group, r.category, r.strategy
            );
        }
        let human_sims: Vec<String> = Measure::ALL
            .iter()
            .map(|m| match m {
                Measure::Raw => rep.human.similarity.to_string(),
                _ => "NA".into(),
            })
            .collect();
        let _ = writeln!(
            scatter,
            "{},human,human,{},{},human,human,human",
            rep.track,
            rep.human.ssi_rmse.ln(),
            human_sims.join(",")
        );
        for ((g, m), cell) in &rep.correlations {
            let (n, r, p) = match cell {
                Cell::Defined(s) => (s.n, Some(s.r), Some(s.p_value)),
                Cell::Undefined { n } => (*n, None, None),
            };
            let _ = writeln!(corr, "{},{g},{m},{n},{},{}", rep.track, num(r), num(p));
        }
        for (i, m) in Measure::ALL.iter().enumerate() {
            let cells: Vec<String> = rep.rank_matrix[i].iter().map(|v| num(*v)).collect();
            let _ = writeln!(rank, "{},{m},{}", rep.track, cells.join(","));
        }

        let _ = writeln!(summary, "track: {}", rep.track);
        let _ = writeln!(
            summary,
            "human baseline: ssi_rmse={} log_rmse={} human-human r={}",
            rep.human.ssi_rmse,
            rep.human.ssi_rmse.ln(),
            rep.human.similarity
        );
        let _ = writeln!(
            summary,
            "models: {} (human_superior {}, human_inferior {})",
            rep.rows.len(),
            rep.group_size(Group::HumanSuperior),
            rep.group_size(Group::HumanInferior)
        );
        let _ = writeln!(summary, "{:<16}{:<10}{:>4}{:>10}{:>12}", "group", "measure", "n", "r", "p");
        for ((g, m), cell) in &rep.correlations {
            match cell {
                Cell::Defined(s) => {
                    let _ = writeln!(
                        summary,
                        "{:<16}{:<10}{:>4}{:>10.3}{:>12.3e}",
                        g.as_str(),
                        m.as_str(),
                        s.n,
                        s.r,
                        s.p_value
                    );
                }
                Cell::Undefined { n } => {
                    let _ = writeln!(
                        summary,
                        "{:<16}{:<10}{:>4}{:>10}{:>12}",
                        g.as_str(),
                        m.as_str(),
                        n,
                        "undefined",
                        "-"
                    );
                }
            }
        }
        summary.push('\n');
    }

    let mut out = BTreeMap::new();
    out.insert("tradeoff.csv", table + &footer);
    out.insert("tradeoff_correlations.csv", corr + &footer);
    out.insert("rank_matrix.csv", rank + &footer);
    out.insert("scatter.csv", scatter + &footer);
    out.insert("summary.txt", summary + &footer);
    if with_json {
        let value: Vec<serde_json::Value> = reports.iter().map(report_json).collect();
        let mut text = serde_json::to_string_pretty(&value).unwrap_or_default();
        text.push('\n');
        out.insert("tradeoff.json", text);
    }
    out
}

fn report_json(rep: &TradeoffReport) -> serde_json::Value {
    let rows: Vec<_> = rep
        .rows
        .iter()
        .map(|r| {
            let sims: serde_json::Map<String, serde_json::Value> = r
                .similarity
                .iter()
                .map(|(m, v)| (m.as_str().to_string(), json!(v)))
                .collect();
            json!({
                "model_id": r.model_id,
                "group": r.group.as_str(),
                "ssi_rmse": r.ssi_rmse,
                "log_rmse": r.log_rmse,
                "similarity": sims,
                "dataset_category": r.category.as_str(),
                "strategy": r.strategy.as_str(),
            })
        })
        .collect();
    let cells: Vec<_> = rep
        .correlations
        .iter()
        .map(|((g, m), c)| match c {
            Cell::Defined(s) => json!({"group": g.as_str(), "measure": m.as_str(), "n": s.n, "r": s.r, "p_value": s.p_value}),
            Cell::Undefined { n } => json!({"group": g.as_str(), "measure": m.as_str(), "n": n, "r": null, "p_value": null}),
        })
        .collect();
    json!({
        "track": rep.track.as_str(),
        "human": {"ssi_rmse": rep.human.ssi_rmse, "similarity": rep.human.similarity},
        "rows": rows,
        "correlations": cells,
        "measures": Measure::ALL.map(|m| m.as_str()),
        "rank_matrix": rep.rank_matrix,
    })
}

pub fn emit_report(
    reports: &[TradeoffReport],
    out_dir: &Path,
    provenance: Option<&Provenance>,
    with_json: bool,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, text) in render_report(reports, provenance, with_json) {
        let path = out_dir.join(name);
        write_text(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}
