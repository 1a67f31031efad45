use std::fs;
use std::path::{Path, PathBuf};

use agentplan_core::dsl::{parse_graph, DslError};
use agentplan_core::hw::{builtin_catalog, HardwareCatalog, HwError};
use agentplan_core::opt::AssignmentProblem;
use agentplan_core::perf::{builtin_models, ModelCatalog, ModelSpec, PerfError};
use agentplan_core::planner::PlacementPlan;
use agentplan_core::TaskGraph;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Environment variable naming a catalog file used in place of the builtin one.
pub const CATALOG_ENV: &str = "AGENTPLAN_CATALOG";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Dsl { path: PathBuf, source: DslError },
    #[error("{path}: {source}")]
    Catalog { path: PathBuf, source: HwError },
    #[error("{path}: {source}")]
    Models { path: PathBuf, source: PerfError },
    #[error("{path}: expected schema {expected}, found {found}")]
    Schema { path: PathBuf, expected: String, found: String },
}

impl IoError {
    /// True when the file could not be read at all, as opposed to being malformed.
    pub fn is_missing(&self) -> bool {
        matches!(self, IoError::Read { .. })
    }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Read { path: path.into(), source })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.into(), source })
}

pub fn load_graph(path: &Path) -> Result<TaskGraph, IoError> {
    parse_graph(&read_text(path)?).map_err(|source| IoError::Dsl { path: path.into(), source })
}

/// Catalog from `explicit`, else from `env`, else the builtin one.
pub fn load_catalog(explicit: Option<&Path>, env: Option<&Path>) -> Result<HardwareCatalog, IoError> {
    let Some(path) = explicit.or(env) else {
        return Ok(builtin_catalog());
    };
    let c: HardwareCatalog = read_json(path)?;
    c.validate().map_err(|source| IoError::Catalog { path: path.into(), source })?;
    Ok(c)
}

/// A JSON array of model specs, or the builtin models.
pub fn load_models(path: Option<&Path>) -> Result<ModelCatalog, IoError> {
    let Some(path) = path else {
        return Ok(builtin_models());
    };
    let models: Vec<ModelSpec> = read_json(path)?;
    let c = ModelCatalog { models };
    c.validate().map_err(|source| IoError::Models { path: path.into(), source })?;
    Ok(c)
}

pub fn load_plan(path: &Path) -> Result<PlacementPlan, IoError> {
    let plan: PlacementPlan = read_json(path)?;
    if plan.schema != agentplan_core::planner::PLAN_SCHEMA {
        return Err(IoError::Schema {
            path: path.into(),
            expected: agentplan_core::planner::PLAN_SCHEMA.into(),
            found: plan.schema,
        });
    }
    Ok(plan)
}

pub fn load_problem(path: &Path) -> Result<AssignmentProblem, IoError> {
    read_json(path)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

/// CSV with a header row from `header` and one record per row.
pub fn to_csv<R, I>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Empty string for `None`, so optional CSV cells stay blank.
pub fn cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
