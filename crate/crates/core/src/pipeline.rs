//! Config-driven batch pipeline: ingest, offline training, online
//! evaluation and a plain-text report. Each stage reads what the previous
//! one wrote under the output directory.
//!
//! Layout of the output directory:
//!
//! ```text
//! ingest/   grid.*, <field>.*, summary.json
//! offline/  split.json, basis.*, svals.csv, {eim,geim}/..., sgreedy/..., indirect/...
//! online/   <method>/errors.csv, <method>/noise_sweep.csv, summary.csv, residual_*.vtk
//! report.txt
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{compute_errors, noise_sweep, pod_interpolate, residual_field, sweep_csv, ErrorReport, IndirectModel, DEFAULT_NOISE_LEVELS};
use crate::grid::{Extent, Grid};
use crate::interpolation::{eim_fit, geim_fit, greedy_errors_csv, lebesgue_csv, EimModel};
use crate::io::bundle;
use crate::io::openfoam::OpenFoamCase;
use crate::io::vtk::{read_vtk, write_vtk_file, VtkField};
use crate::pbdw::PbdwModel;
use crate::reduction::{energy_csv, pod_fit, rsvd_fit, singular_value_report, svd_fit, ReducedBasis, RsvdOptions};
use crate::sensors::{accept_all, default_stride, gaussian_dictionary, point_dictionary, sensors_csv, sensors_from_csv, SensorFunctional};
use crate::sgreedy::{sgreedy, sgreedy_csv, SGreedyOptions};
use crate::snapshots::{split_indices, ParameterTable, SnapshotCollection};
use crate::surrogate::SurrogateSpec;
use crate::toy::{linspace, toy_dataset, ToyVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub source: SourceConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub reduction: ReductionConfig,
    #[serde(default)]
    pub eim: Option<EimConfig>,
    #[serde(default)]
    pub geim: Option<GeimConfig>,
    #[serde(default)]
    pub sgreedy: Option<SGreedyConfig>,
    #[serde(default)]
    pub pbdw: Option<PbdwConfig>,
    #[serde(default)]
    pub surrogate: SurrogateSpec,
    #[serde(default)]
    pub indirect: Option<IndirectConfig>,
    #[serde(default)]
    pub online: OnlineConfig,
    /// Output directory; `--output` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceConfig {
    /// Synthetic fields `u` (chosen variant) and `v` (the other variant) on a
    /// unit-square grid of `nx × ny` elements.
    Toy {
        #[serde(default = "default_elements")]
        nx: usize,
        #[serde(default = "default_elements")]
        ny: usize,
        #[serde(default = "default_toy_count")]
        count: usize,
        #[serde(default = "default_mu_min")]
        mu_min: f64,
        #[serde(default = "default_mu_max")]
        mu_max: f64,
        #[serde(default)]
        variant: ToyVariant,
    },
    /// One legacy VTK file per snapshot, all on the same grid.
    Vtk {
        files: Vec<PathBuf>,
        fields: Vec<String>,
        #[serde(default)]
        parameters: Option<Vec<Vec<f64>>>,
    },
    Openfoam {
        case: PathBuf,
        fields: Vec<String>,
        #[serde(default = "yes")]
        skip_zero_time: bool,
    },
    Bundle {
        grid: PathBuf,
        snapshots: Vec<PathBuf>,
    },
}

fn default_elements() -> usize {
    50
}
fn default_toy_count() -> usize {
    100
}
fn default_mu_min() -> f64 {
    -5.0
}
fn default_mu_max() -> f64 {
    5.0
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub test_size: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { test_size: 0.2, seed: 42 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReductionMethod {
    Svd,
    Rsvd,
    Pod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReductionConfig {
    pub method: ReductionMethod,
    pub rank: usize,
    pub oversampling: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        let o = RsvdOptions::default();
        Self {
            method: ReductionMethod::Pod,
            rank: 20,
            oversampling: o.oversampling,
            power_iters: o.power_iters,
            seed: o.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EimConfig {
    pub mmax: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DictionaryConfig {
    Point {
        #[serde(default)]
        stride: Option<usize>,
    },
    Gaussian {
        width: f64,
        #[serde(default)]
        stride: Option<usize>,
    },
}

impl DictionaryConfig {
    pub fn build(&self, grid: &Grid, components: usize) -> Result<Vec<SensorFunctional>> {
        match *self {
            DictionaryConfig::Point { stride } => {
                point_dictionary(grid, components, stride.unwrap_or_else(|| default_stride(grid.len())), &accept_all)
            }
            DictionaryConfig::Gaussian { width, stride } => gaussian_dictionary(
                grid,
                components,
                width,
                stride.unwrap_or_else(|| default_stride(grid.len())),
                &accept_all,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeimConfig {
    pub mmax: usize,
    pub dictionary: DictionaryConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SGreedyConfig {
    pub n: usize,
    pub mmax: usize,
    #[serde(default)]
    pub tol: f64,
    pub dictionary: DictionaryConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PbdwConfig {
    #[serde(default)]
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndirectConfig {
    pub observed: String,
    pub target: String,
    pub mmax: usize,
    pub rank: usize,
    #[serde(default)]
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "pod-i")]
    PodI,
    #[serde(rename = "eim")]
    Eim,
    #[serde(rename = "geim")]
    Geim,
    #[serde(rename = "tr-geim")]
    TrGeim,
    #[serde(rename = "pbdw")]
    Pbdw,
    #[serde(rename = "indirect")]
    Indirect,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::PodI, Method::Eim, Method::Geim, Method::TrGeim, Method::Pbdw, Method::Indirect];

    pub fn name(self) -> &'static str {
        match self {
            Method::PodI => "pod-i",
            Method::Eim => "eim",
            Method::Geim => "geim",
            Method::TrGeim => "tr-geim",
            Method::Pbdw => "pbdw",
            Method::Indirect => "indirect",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub levels: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Measurement counts; each method keeps the ones it supports and
    /// falls back to its full sensor set.
    pub m: Vec<usize>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            levels: DEFAULT_NOISE_LEVELS.to_vec(),
            seeds: (0..5).collect(),
            m: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualConfig {
    pub method: Method,
    /// Position in the test set.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OnlineConfig {
    /// Empty means every method whose offline artifacts are configured.
    pub methods: Vec<Method>,
    pub noise: Option<NoiseConfig>,
    pub residual: Option<ResidualConfig>,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses a config file; relative paths inside it are resolved against
    /// its directory and must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.source {
            SourceConfig::Toy { .. } => {}
            SourceConfig::Vtk { files, .. } => files.iter_mut().for_each(fix),
            SourceConfig::Openfoam { case, .. } => fix(case),
            SourceConfig::Bundle { grid, snapshots } => {
                fix(grid);
                snapshots.iter_mut().for_each(fix);
            }
        }
        if let Some(o) = &mut self.output {
            fix(o);
        }
    }

    /// Checks that can be made without touching the data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let exists = |p: &Path| -> Result<()> {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::Config(format!("path {} does not exist", p.display())))
            }
        };
        match &self.source {
            SourceConfig::Toy { nx, ny, count, mu_min, mu_max, .. } => {
                if *nx == 0 || *ny == 0 || *count == 0 {
                    return bad("toy source needs nx, ny and count ≥ 1".into());
                }
                if !(mu_min.is_finite() && mu_max.is_finite()) {
                    return bad("toy parameter range must be finite".into());
                }
            }
            SourceConfig::Vtk { files, fields, parameters } => {
                if files.is_empty() || fields.is_empty() {
                    return bad("vtk source needs files and fields".into());
                }
                files.iter().try_for_each(|f| exists(f))?;
                if let Some(p) = parameters {
                    if p.len() != files.len() {
                        return bad(format!("{} parameter rows for {} files", p.len(), files.len()));
                    }
                }
            }
            SourceConfig::Openfoam { case, fields, .. } => {
                if fields.is_empty() {
                    return bad("openfoam source needs fields".into());
                }
                exists(case)?;
            }
            SourceConfig::Bundle { grid, snapshots } => {
                if snapshots.is_empty() {
                    return bad("bundle source needs snapshot bundles".into());
                }
                for p in std::iter::once(grid).chain(snapshots) {
                    exists(&bundle::bundle_paths(p).0)?;
                }
            }
        }
        if !(self.split.test_size > 0.0 && self.split.test_size < 1.0) {
            return bad(format!("split.test_size must lie in (0, 1), got {}", self.split.test_size));
        }
        if self.reduction.rank == 0 {
            return bad("reduction.rank must be ≥ 1".into());
        }
        if let Some(e) = &self.eim {
            if e.mmax == 0 {
                return bad("eim.mmax must be ≥ 1".into());
            }
        }
        if let Some(g) = &self.geim {
            if g.mmax == 0 {
                return bad("geim.mmax must be ≥ 1".into());
            }
        }
        if let Some(s) = &self.sgreedy {
            if s.n == 0 || s.n > self.reduction.rank {
                return bad(format!("sgreedy.n must lie in 1..={}", self.reduction.rank));
            }
            if s.mmax < s.n {
                return bad("sgreedy.mmax must be ≥ sgreedy.n".into());
            }
        }
        if let Some(p) = &self.pbdw {
            if self.sgreedy.is_none() {
                return bad("pbdw needs an sgreedy block for its sensors".into());
            }
            if !(p.xi >= 0.0) {
                return bad("pbdw.xi must be ≥ 0".into());
            }
        }
        if let Some(i) = &self.indirect {
            if i.mmax == 0 || i.rank == 0 {
                return bad("indirect.mmax and indirect.rank must be ≥ 1".into());
            }
            if !(i.lambda >= 0.0) {
                return bad("indirect.lambda must be ≥ 0".into());
            }
        }
        if let Some(n) = &self.online.noise {
            if n.levels.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                return bad("noise levels must be finite and ≥ 0".into());
            }
        }
        for m in &self.online.methods {
            let configured = self.method_configured(*m);
            if !configured {
                return bad(format!("online method `{}` has no matching offline block", m.name()));
            }
        }
        Ok(())
    }

    fn method_configured(&self, m: Method) -> bool {
        match m {
            Method::PodI => true,
            Method::Eim => self.eim.is_some(),
            Method::Geim | Method::TrGeim => self.geim.is_some(),
            Method::Pbdw => self.pbdw.is_some(),
            Method::Indirect => self.indirect.is_some(),
        }
    }

    /// Methods run by the online stage.
    pub fn online_methods(&self) -> Vec<Method> {
        if self.online.methods.is_empty() {
            Method::ALL.into_iter().filter(|m| self.method_configured(*m)).collect()
        } else {
            self.online.methods.clone()
        }
    }
}

/// One line of the per-stage status table.
#[derive(Debug, Clone, PartialEq)]
pub struct StageStatus {
    pub stage: String,
    pub ok: bool,
    pub detail: String,
}

impl StageStatus {
    fn ok(stage: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            ok: true,
            detail: detail.into(),
        }
    }

    fn failed(stage: impl Into<String>, err: &Error) -> Self {
        Self {
            stage: stage.into(),
            ok: false,
            detail: err.to_string(),
        }
    }
}

pub fn status_table(rows: &[StageStatus]) -> String {
    let w = rows.iter().map(|r| r.stage.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<w$}  status  detail\n", "stage");
    for r in rows {
        let s = if r.ok { "ok" } else { "FAILED" };
        out.push_str(&format!("{:<w$}  {:<6}  {}\n", r.stage, s, r.detail));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSummary {
    pub fields: Vec<String>,
    pub points: usize,
    pub dofs: BTreeMap<String, usize>,
    pub snapshots: usize,
    pub parameter_names: Vec<String>,
    pub parameter_min: Vec<f64>,
    pub parameter_max: Vec<f64>,
}

/// Reduced dimension the sensor greedy reached within its budget; PBDW
/// uses this many modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SGreedyRecord {
    pub n_reached: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRecord {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

struct Dataset {
    grid: Grid,
    fields: Vec<(SnapshotCollection, ParameterTable)>,
}

impl Dataset {
    fn field(&self, name: &str) -> Result<&(SnapshotCollection, ParameterTable)> {
        self.fields.iter().find(|(s, _)| s.varname() == name).ok_or_else(|| Error::MissingField {
            name: name.into(),
            available: self.fields.iter().map(|(s, _)| s.varname().to_string()).collect(),
        })
    }

    fn primary(&self) -> &(SnapshotCollection, ParameterTable) {
        &self.fields[0]
    }
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub output: PathBuf,
    pub verbose: bool,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn index_table(n: usize) -> ParameterTable {
    let mut t = ParameterTable::scalar(&(0..n).map(|i| i as f64).collect::<Vec<_>>());
    t.names = vec!["index".into()];
    t
}

impl Pipeline {
    /// `output` overrides the directory named in the config.
    pub fn new(config: PipelineConfig, output: Option<PathBuf>, verbose: bool) -> Result<Self> {
        let output = output
            .or_else(|| config.output.clone())
            .ok_or_else(|| Error::Config("no output directory: pass --output or set `output`".into()))?;
        Ok(Self { config, output, verbose })
    }

    fn say(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[romkit] {}", msg.as_ref());
        }
    }

    fn dir(&self, stage: &str) -> PathBuf {
        self.output.join(stage)
    }

    // ---------------------------------------------------------------- ingest

    fn load_source(&self) -> Result<Dataset> {
        match &self.config.source {
            SourceConfig::Toy { nx, ny, count, mu_min, mu_max, variant } => {
                let grid = Grid::image(*nx, *ny, Extent::UNIT)?;
                let mus = linspace(*mu_min, *mu_max, *count);
                let other = match variant {
                    ToyVariant::Snippet => ToyVariant::Prose,
                    ToyVariant::Prose => ToyVariant::Snippet,
                };
                let (params, mut u) = toy_dataset(&grid, &mus, *variant)?;
                let (_, mut v) = toy_dataset(&grid, &mus, other)?;
                u.set_varname("u");
                v.set_varname("v");
                Ok(Dataset {
                    grid,
                    fields: vec![(u, params.clone()), (v, params)],
                })
            }
            SourceConfig::Vtk { files, fields, parameters } => {
                let first = read_vtk(&files[0])?;
                let grid = first.grid.clone();
                let mut out: Vec<Option<SnapshotCollection>> = vec![None; fields.len()];
                for (k, path) in files.iter().enumerate() {
                    self.say(format!("reading {}", path.display()));
                    let ds = if k == 0 { first.clone() } else { read_vtk(path)? };
                    if ds.grid.len() != grid.len() {
                        return Err(Error::invalid(format!(
                            "{} has {} points, expected {}",
                            path.display(),
                            ds.grid.len(),
                            grid.len()
                        )));
                    }
                    for (slot, name) in out.iter_mut().zip(fields) {
                        let f = ds.field(name)?;
                        let coll = match slot {
                            Some(c) => c,
                            None => slot.insert(SnapshotCollection::new(name.clone(), f.values.len(), f.components)?),
                        };
                        coll.push(f.values.clone()).map_err(|e| {
                            Error::invalid(format!("{}: field `{name}`: {e}", path.display()))
                        })?;
                    }
                }
                let params = match parameters {
                    Some(rows) => ParameterTable::from_rows(rows.clone())?,
                    None => index_table(files.len()),
                };
                Ok(Dataset {
                    grid,
                    fields: out.into_iter().map(|c| (c.expect("one file at least"), params.clone())).collect(),
                })
            }
            SourceConfig::Openfoam { case, fields, skip_zero_time } => {
                let case = OpenFoamCase::new(case.clone(), *skip_zero_time);
                let grid = case.read_grid()?;
                let mut out = Vec::new();
                for name in fields {
                    self.say(format!("importing field {name}"));
                    let (snaps, times) = case.import_field(name)?;
                    let mut params = ParameterTable::scalar(&times);
                    params.names = vec!["time".into()];
                    out.push((snaps, params));
                }
                Ok(Dataset { grid, fields: out })
            }
            SourceConfig::Bundle { grid, snapshots } => {
                let grid = bundle::read_grid(grid)?;
                let mut out = Vec::new();
                for p in snapshots {
                    let (snaps, params) = bundle::read_snapshots(p)?;
                    snaps.check_grid(&grid)?;
                    let params = params.unwrap_or_else(|| index_table(snaps.len()));
                    out.push((snaps, params));
                }
                Ok(Dataset { grid, fields: out })
            }
        }
    }

    pub fn ingest(&self) -> Result<Vec<StageStatus>> {
        let ds = self.load_source()?;
        let count = ds.primary().0.len();
        for (s, _) in &ds.fields {
            if s.len() != count {
                return Err(Error::invalid(format!(
                    "field `{}` has {} snapshots, `{}` has {count}",
                    s.varname(),
                    s.len(),
                    ds.primary().0.varname()
                )));
            }
        }
        let mut names = Vec::new();
        for (s, _) in &ds.fields {
            if names.contains(&s.varname().to_string()) {
                return Err(Error::invalid(format!("field `{}` listed twice", s.varname())));
            }
            names.push(s.varname().to_string());
        }
        let dir = self.dir("ingest");
        bundle::write_grid(dir.join("grid"), &ds.grid)?;
        for (s, p) in &ds.fields {
            bundle::write_snapshots(dir.join(s.varname()), s, Some(p))?;
        }
        let params = &ds.primary().1;
        let (pmin, pmax): (Vec<f64>, Vec<f64>) = (0..params.p)
            .map(|k| {
                let col = params.rows.iter().map(|r| r[k]);
                (col.clone().fold(f64::INFINITY, f64::min), col.fold(f64::NEG_INFINITY, f64::max))
            })
            .unzip();
        let summary = IngestSummary {
            fields: names,
            points: ds.grid.len(),
            dofs: ds.fields.iter().map(|(s, _)| (s.varname().to_string(), s.dofs())).collect(),
            snapshots: count,
            parameter_names: params.names.clone(),
            parameter_min: pmin,
            parameter_max: pmax,
        };
        write_json(&dir.join("summary.json"), &summary)?;
        let range: Vec<String> = summary
            .parameter_min
            .iter()
            .zip(&summary.parameter_max)
            .map(|(a, b)| format!("[{a}, {b}]"))
            .collect();
        let label = if summary.parameter_names.is_empty() {
            "parameter".to_string()
        } else {
            summary.parameter_names.join(",")
        };
        let dofs: Vec<String> = summary.dofs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        Ok(vec![StageStatus::ok(
            "ingest",
            format!(
                "{} snapshots, {} points, dofs {}, {label} range {}",
                count,
                summary.points,
                dofs.join(" "),
                range.join(" ")
            ),
        )])
    }

    fn load_ingested(&self) -> Result<Dataset> {
        let dir = self.dir("ingest");
        let summary: IngestSummary = serde_json::from_str(&read_text(&dir.join("summary.json"))?)?;
        let grid = bundle::read_grid(dir.join("grid"))?;
        let mut fields = Vec::new();
        for name in &summary.fields {
            let (s, p) = bundle::read_snapshots(dir.join(name))?;
            fields.push((s, p.unwrap_or_else(|| index_table(summary.snapshots))));
        }
        if fields.is_empty() {
            return Err(Error::invalid("ingested data holds no fields"));
        }
        Ok(Dataset { grid, fields })
    }

    // --------------------------------------------------------------- offline

    pub fn offline(&self) -> Result<Vec<StageStatus>> {
        let cfg = &self.config;
        let ds = self.load_ingested()?;
        let (snaps, _) = ds.primary();
        let (train_idx, test_idx) = split_indices(snaps.len(), cfg.split.test_size, cfg.split.seed)?;
        let train = snaps.select(&train_idx);
        let comps = snaps.components();
        let grid = &ds.grid;

        // Everything that can be checked against the data is checked before
        // any fitting starts.
        if train.is_empty() {
            return Err(Error::Config("empty training set".into()));
        }
        let max_rank = train.len().min(train.dofs());
        if cfg.reduction.rank > max_rank {
            return Err(Error::Config(format!(
                "reduction.rank {} exceeds min(training snapshots, dofs) = {max_rank}",
                cfg.reduction.rank
            )));
        }
        if let Some(e) = &cfg.eim {
            if e.mmax > max_rank {
                return Err(Error::Config(format!("eim.mmax {} exceeds {max_rank}", e.mmax)));
            }
        }
        let geim_dict = match &cfg.geim {
            Some(g) => {
                let d = g.dictionary.build(grid, comps)?;
                if g.mmax > max_rank.min(d.len()) {
                    return Err(Error::Config(format!(
                        "geim.mmax {} exceeds min(training snapshots, dofs, dictionary size) = {}",
                        g.mmax,
                        max_rank.min(d.len())
                    )));
                }
                Some(d)
            }
            None => None,
        };
        let sg_dict = match &cfg.sgreedy {
            Some(s) => {
                let d = s.dictionary.build(grid, comps)?;
                if s.mmax > d.len() {
                    return Err(Error::Config(format!("sgreedy.mmax {} exceeds dictionary size {}", s.mmax, d.len())));
                }
                Some(d)
            }
            None => None,
        };
        if let Some(i) = &cfg.indirect {
            let obs = &ds.field(&i.observed)?.0;
            let tgt = &ds.field(&i.target)?.0;
            if i.mmax > train.len().min(obs.dofs()) || i.rank > train.len().min(tgt.dofs()) {
                return Err(Error::Config(format!(
                    "indirect.mmax / indirect.rank exceed the {} training snapshots or the field size",
                    train.len()
                )));
            }
        }

        let dir = self.dir("offline");
        write_json(&dir.join("split.json"), &SplitRecord { train: train_idx.clone(), test: test_idx })?;
        let mut status = Vec::new();

        let basis = {
            let r = &cfg.reduction;
            self.say(format!("fitting {:?} basis of rank {}", r.method, r.rank));
            let fit = match r.method {
                ReductionMethod::Svd => svd_fit(&train, r.rank).map(|f| f.basis),
                ReductionMethod::Rsvd => rsvd_fit(
                    &train,
                    r.rank,
                    RsvdOptions {
                        oversampling: r.oversampling,
                        power_iters: r.power_iters,
                        seed: r.seed,
                    },
                ),
                ReductionMethod::Pod => pod_fit(&train, grid, r.rank),
            };
            match fit.and_then(|b| {
                bundle::write_basis(dir.join("basis"), &b)?;
                write_text(&dir.join("svals.csv"), &energy_csv(&singular_value_report(&b)))?;
                Ok(b)
            }) {
                Ok(b) => {
                    status.push(StageStatus::ok("offline/basis", format!("{} modes", b.len())));
                    Some(b)
                }
                Err(e) => {
                    status.push(StageStatus::failed("offline/basis", &e));
                    None
                }
            }
        };

        let save_interp = |sub: &str, model: &EimModel| -> Result<String> {
            let lam = model.lebesgue_constants()?;
            bundle::write_eim(dir.join(sub).join("model"), model)?;
            write_text(&dir.join(sub).join("greedy_errors.csv"), &greedy_errors_csv(model.max_abs_err(), &lam))?;
            write_text(&dir.join(sub).join("lebesgue.csv"), &lebesgue_csv(&lam))?;
            write_text(&dir.join(sub).join("sensors.csv"), &sensors_csv(model.sensors()))?;
            Ok(format!(
                "M = {}, final max_abs_err {:e}, status {:?}",
                model.len(),
                model.max_abs_err().last().copied().unwrap_or(0.0),
                model.status()
            ))
        };

        if let Some(e) = &cfg.eim {
            self.say(format!("EIM greedy, Mmax = {}", e.mmax));
            let r = eim_fit(&train, grid, e.mmax).and_then(|f| save_interp("eim", &f.model));
            status.push(match r {
                Ok(d) => StageStatus::ok("offline/eim", d),
                Err(e) => StageStatus::failed("offline/eim", &e),
            });
        }
        if let (Some(g), Some(dict)) = (&cfg.geim, &geim_dict) {
            self.say(format!("GEIM greedy over {} sensors, Mmax = {}", dict.len(), g.mmax));
            let r = geim_fit(&train, grid, dict, g.mmax).and_then(|f| save_interp("geim", &f.model));
            status.push(match r {
                Ok(d) => StageStatus::ok("offline/geim", d),
                Err(e) => StageStatus::failed("offline/geim", &e),
            });
        }
        if let (Some(s), Some(dict)) = (&cfg.sgreedy, &sg_dict) {
            let r = match &basis {
                None => Err(Error::invalid("no basis to place sensors for")),
                Some(b) => {
                    self.say(format!("SGreedy over {} sensors, N = {}, Mmax = {}", dict.len(), s.n, s.mmax));
                    sgreedy(b, dict, grid, SGreedyOptions { n: s.n, mmax: s.mmax, tol: s.tol }).and_then(|res| {
                        write_text(&dir.join("sgreedy_beta.csv"), &sgreedy_csv(&res, dict))?;
                        write_text(&dir.join("sgreedy").join("sensors.csv"), &sensors_csv(&res.sensors))?;
                        let n_reached = res.trace.last().map_or(0, |t| t.n);
                        write_json(&dir.join("sgreedy").join("result.json"), &SGreedyRecord { n_reached })?;
                        Ok(format!(
                            "M = {}, final beta {:e}, status {:?}",
                            res.sensors.len(),
                            res.trace.last().map_or(0.0, |t| t.beta),
                            res.status
                        ))
                    })
                }
            };
            status.push(match r {
                Ok(d) => StageStatus::ok("offline/sgreedy", d),
                Err(e) => StageStatus::failed("offline/sgreedy", &e),
            });
        }
        if let Some(i) = &cfg.indirect {
            self.say(format!("indirect models: {} observed, {} target", i.observed, i.target));
            let r = (|| -> Result<String> {
                let obs = ds.field(&i.observed)?.0.select(&train_idx);
                let tgt = ds.field(&i.target)?.0.select(&train_idx);
                let model = eim_fit(&obs, grid, i.mmax)?.model;
                let target = pod_fit(&tgt, grid, i.rank)?;
                let d = save_interp("indirect/observed", &model)?;
                bundle::write_basis(dir.join("indirect").join("target"), &target)?;
                write_text(&dir.join("indirect").join("svals.csv"), &energy_csv(&singular_value_report(&target)))?;
                Ok(format!("{d}, target rank {}", target.len()))
            })();
            status.push(match r {
                Ok(d) => StageStatus::ok("offline/indirect", d),
                Err(e) => StageStatus::failed("offline/indirect", &e),
            });
        }
        Ok(status)
    }

    // ---------------------------------------------------------------- online

    pub fn online(&self) -> Result<Vec<StageStatus>> {
        let ds = self.load_ingested()?;
        let off = self.dir("offline");
        let split: SplitRecord = serde_json::from_str(&read_text(&off.join("split.json"))?)?;
        let dir = self.dir("online");
        let mut status = Vec::new();
        let mut summary = String::from("method,snapshots,mean_abs_err,max_abs_err,mean_rel_err,max_rel_err,rel_undefined\n");
        for method in self.config.online_methods() {
            self.say(format!("online: {}", method.name()));
            let stage = format!("online/{}", method.name());
            match self.run_method(method, &ds, &split, &dir) {
                Ok(rep) => {
                    summary.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        method.name(),
                        rep.rows.len(),
                        rep.mean_abs(),
                        rep.max_abs(),
                        rep.mean_rel(),
                        rep.max_rel(),
                        rep.rows.iter().filter(|r| r.rel_undefined).count()
                    ));
                    status.push(StageStatus::ok(
                        stage,
                        format!("{} test snapshots, mean rel err {:e}", rep.rows.len(), rep.mean_rel()),
                    ));
                }
                Err(e) => status.push(StageStatus::failed(stage, &e)),
            }
        }
        write_text(&dir.join("summary.csv"), &summary)?;
        if let Some(r) = self.config.online.residual {
            let stage = format!("online/residual-{}", r.method.name());
            status.push(match self.export_residual(r, &ds, &split, &dir) {
                Ok(p) => StageStatus::ok(stage, format!("wrote {}", p.display())),
                Err(e) => StageStatus::failed(stage, &e),
            });
        }
        Ok(status)
    }

    fn run_method(&self, method: Method, ds: &Dataset, split: &SplitRecord, dir: &Path) -> Result<ErrorReport> {
        let est = Estimator::build(self, method, ds, split)?;
        let grid = &ds.grid;
        let truth = est.truth(ds, split)?;
        let report = compute_errors(grid, &truth, |i| est.clean(ds, split, i))?;
        let sub = dir.join(method.name());
        write_text(&sub.join("errors.csv"), &report.to_csv())?;
        if let (Some(noise), Some(full_m)) = (&self.config.online.noise, est.measurements()) {
            let clean: Vec<Vec<f64>> = (0..truth.len()).map(|i| est.measure(ds, split, i)).collect::<Result<_>>()?;
            let mut ms: Vec<usize> = noise.m.iter().copied().filter(|&m| est.supports_prefix(m, full_m)).collect();
            if ms.is_empty() {
                ms.push(full_m);
            }
            let mut cache = BTreeMap::new();
            let rows = noise_sweep(grid, &truth, &clean, &noise.levels, &noise.seeds, &ms, |y, sigma| {
                est.noisy(y, sigma, grid, &mut cache)
            })?;
            write_text(&sub.join("noise_sweep.csv"), &sweep_csv(&rows))?;
        }
        Ok(report)
    }

    fn export_residual(&self, r: ResidualConfig, ds: &Dataset, split: &SplitRecord, dir: &Path) -> Result<PathBuf> {
        let est = Estimator::build(self, r.method, ds, split)?;
        let truth = est.truth(ds, split)?;
        let u = truth.get(r.index).ok_or_else(|| {
            Error::invalid(format!("residual index {} outside the {} test snapshots", r.index, truth.len()))
        })?;
        let estimate = est.clean(ds, split, r.index)?;
        let res = residual_field(u, &estimate)?;
        let comps = truth.components();
        let field = |name: &str, values: Vec<f64>| VtkField {
            name: name.into(),
            components: comps,
            values,
        };
        let path = dir.join(format!("residual_{}_{}.vtk", r.method.name(), r.index));
        write_vtk_file(
            &path,
            &ds.grid,
            &format!("{} residual, test snapshot {}", r.method.name(), r.index),
            &[field("truth", u.to_vec()), field("estimate", estimate), field("residual", res)],
        )?;
        Ok(path)
    }

    // ---------------------------------------------------------------- report

    pub fn report(&self) -> Result<Vec<StageStatus>> {
        let mut out = String::new();
        let ingest = self.dir("ingest").join("summary.json");
        let summary: IngestSummary = serde_json::from_str(&read_text(&ingest)?)?;
        out.push_str("# dataset\n");
        out.push_str(&format!(
            "fields {}; {} snapshots on {} points\n",
            summary.fields.join(", "),
            summary.snapshots,
            summary.points
        ));
        let off = self.dir("offline");
        if let Ok(svals) = read_csv(&off.join("svals.csv")) {
            out.push_str("\n# basis\n");
            if let (Some(first), Some(last)) = (svals.first(), svals.last()) {
                out.push_str(&format!(
                    "{} modes; sigma_1 = {}, sigma_N = {}, residual energy {}\n",
                    svals.len(),
                    sci(&first[1]),
                    sci(&last[1]),
                    sci(&last[3])
                ));
            }
        }
        for sub in ["eim", "geim", "indirect/observed"] {
            if let Ok(rows) = read_csv(&off.join(sub).join("greedy_errors.csv")) {
                if let Some(last) = rows.last() {
                    out.push_str(&format!(
                        "\n# {sub}\nM = {}; max_abs_err {}; Lebesgue {}\n",
                        last[0],
                        sci(&last[1]),
                        sci(&last[2])
                    ));
                }
            }
        }
        if let Ok(rows) = read_csv(&off.join("sgreedy_beta.csv")) {
            if let Some(last) = rows.last() {
                out.push_str(&format!("\n# sgreedy\nN = {}; M = {}; beta {}\n", last[0], last[1], sci(&last[2])));
            }
        }
        let on = self.dir("online");
        if let Ok(rows) = read_csv(&on.join("summary.csv")) {
            out.push_str("\n# online errors\nmethod      mean_rel_err  max_rel_err\n");
            for r in &rows {
                out.push_str(&format!("{:<10}  {:<12}  {}\n", r[0], sci(&r[4]), sci(&r[5])));
            }
            for r in &rows {
                if let Ok(sweep) = read_csv(&on.join(&r[0]).join("noise_sweep.csv")) {
                    out.push_str(&format!("\n# noise sweep: {}\nlevel     m    mean_rel_err (over seeds)\n", r[0]));
                    let mut acc: BTreeMap<(String, usize), (f64, usize)> = BTreeMap::new();
                    let mut order = Vec::new();
                    for s in &sweep {
                        let key = (s[0].clone(), s[2].parse().unwrap_or(0));
                        if !acc.contains_key(&key) {
                            order.push(key.clone());
                        }
                        let e = acc.entry(key).or_insert((0.0, 0));
                        e.0 += s[3].parse::<f64>().unwrap_or(f64::NAN);
                        e.1 += 1;
                    }
                    for key in order {
                        let (sum, n) = acc[&key];
                        out.push_str(&format!("{:<8}  {:<3}  {:.6e}\n", key.0, key.1, sum / n as f64));
                    }
                }
            }
        }
        let path = self.output.join("report.txt");
        write_text(&path, &out)?;
        if self.verbose {
            eprint!("{out}");
        }
        Ok(vec![StageStatus::ok("report", format!("wrote {}", path.display()))])
    }
}

fn sci(v: &str) -> String {
    v.parse::<f64>().map_or_else(|_| v.to_string(), |x| format!("{x:.6e}"))
}

fn read_csv(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = read_text(path)?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

/// Online state for one method.
enum Estimator {
    PodI {
        basis: ReducedBasis,
        map: Box<dyn crate::surrogate::SurrogateModel>,
    },
    Interp {
        model: EimModel,
        tikhonov: bool,
    },
    Pbdw {
        basis: ReducedBasis,
        sensors: Vec<SensorFunctional>,
        full: PbdwModel,
    },
    Indirect {
        model: IndirectModel,
        lambda: f64,
    },
}

impl Estimator {
    fn build(p: &Pipeline, method: Method, ds: &Dataset, split: &SplitRecord) -> Result<Self> {
        let cfg = &p.config;
        let off = p.dir("offline");
        let grid = &ds.grid;
        let (snaps, params) = ds.primary();
        let read_basis = |path: PathBuf| bundle::read_basis(path, Some(grid));
        Ok(match method {
            Method::PodI => {
                let basis = read_basis(off.join("basis"))?;
                let train = snaps.select(&split.train);
                let alpha = basis.project_all(&train)?;
                let inputs = params.select(&split.train).rows;
                let map = cfg.surrogate.fit(&inputs, &alpha)?;
                Estimator::PodI { basis, map }
            }
            Method::Eim => Estimator::Interp {
                model: bundle::read_eim(off.join("eim").join("model"), grid)?,
                tikhonov: false,
            },
            Method::Geim | Method::TrGeim => Estimator::Interp {
                model: bundle::read_eim(off.join("geim").join("model"), grid)?,
                tikhonov: method == Method::TrGeim,
            },
            Method::Pbdw => {
                let pb = cfg.pbdw.ok_or_else(|| Error::Config("no pbdw block".into()))?;
                let rec: SGreedyRecord = serde_json::from_str(&read_text(&off.join("sgreedy").join("result.json"))?)?;
                let basis = read_basis(off.join("basis"))?.truncated(rec.n_reached);
                let csv = read_text(&off.join("sgreedy").join("sensors.csv"))?;
                let sensors = sensors_from_csv(grid, snaps.components(), &csv)?;
                let full = PbdwModel::new(basis.clone(), sensors.clone(), grid, pb.xi)?;
                Estimator::Pbdw { basis, sensors, full }
            }
            Method::Indirect => {
                let ic = cfg.indirect.clone().ok_or_else(|| Error::Config("no indirect block".into()))?;
                let observed = bundle::read_eim(off.join("indirect").join("observed").join("model"), grid)?;
                let target = read_basis(off.join("indirect").join("target"))?;
                let obs_train = ds.field(&ic.observed)?.0.select(&split.train);
                let tgt_train = ds.field(&ic.target)?.0.select(&split.train);
                let spec = cfg.surrogate;
                let model = IndirectModel::fit(observed, target, &obs_train, &tgt_train, |x, y| spec.fit(x, y))?;
                Estimator::Indirect { model, lambda: ic.lambda }
            }
        })
    }

    /// Test snapshots of the field this method reconstructs.
    fn truth(&self, ds: &Dataset, split: &SplitRecord) -> Result<SnapshotCollection> {
        let (snaps, _) = match self {
            Estimator::Indirect { model, .. } => ds.field(model.target().varname())?,
            _ => ds.primary(),
        };
        Ok(snaps.select(&split.test))
    }

    /// Full sensor count of measurement-driven methods.
    fn measurements(&self) -> Option<usize> {
        match self {
            Estimator::PodI { .. } => None,
            Estimator::Interp { model, .. } => Some(model.len()),
            Estimator::Pbdw { sensors, .. } => Some(sensors.len()),
            Estimator::Indirect { model, .. } => Some(model.observed().len()),
        }
    }

    fn supports_prefix(&self, m: usize, full: usize) -> bool {
        match self {
            Estimator::Interp { .. } => (1..=full).contains(&m),
            Estimator::Pbdw { basis, .. } => (basis.len()..=full).contains(&m),
            _ => m == full,
        }
    }

    /// Clean measurements of test snapshot `i` by every sensor.
    fn measure(&self, ds: &Dataset, split: &SplitRecord, i: usize) -> Result<Vec<f64>> {
        match self {
            Estimator::PodI { .. } => Err(Error::invalid("pod-i takes parameters, not measurements")),
            Estimator::Interp { model, .. } => model.measure(ds.primary().0.get(split.test[i]).unwrap()),
            Estimator::Pbdw { full, .. } => full.measure(ds.primary().0.get(split.test[i]).unwrap()),
            Estimator::Indirect { model, .. } => {
                let obs = &ds.field(model.observed().varname())?.0;
                model.observed().measure(obs.get(split.test[i]).unwrap())
            }
        }
    }

    /// Noise-free estimate of test snapshot `i`.
    fn clean(&self, ds: &Dataset, split: &SplitRecord, i: usize) -> Result<Vec<f64>> {
        match self {
            Estimator::PodI { basis, map } => {
                let mu = ds.primary().1.rows[split.test[i]].clone();
                Ok(pod_interpolate(basis, map.as_ref(), &[mu])?.remove(0))
            }
            Estimator::Interp { model, .. } => Ok(model.reconstruct(&self.measure(ds, split, i)?)?.1),
            Estimator::Pbdw { full, .. } => Ok(full.estimate(&self.measure(ds, split, i)?)?.field),
            Estimator::Indirect { model, lambda } => Ok(model.reconstruct(&self.measure(ds, split, i)?, *lambda)?.field),
        }
    }

    fn noisy(&self, y: &[f64], sigma: f64, grid: &Grid, cache: &mut BTreeMap<usize, PbdwModel>) -> Result<Vec<f64>> {
        match self {
            Estimator::PodI { .. } => Err(Error::invalid("pod-i takes parameters, not measurements")),
            Estimator::Interp { model, tikhonov } => {
                let lambda = if *tikhonov { y.len() as f64 * sigma * sigma } else { 0.0 };
                Ok(model.reconstruct_tikhonov(y, lambda)?.1)
            }
            Estimator::Pbdw { basis, sensors, full } => {
                let m = y.len();
                if m == sensors.len() {
                    return Ok(full.estimate(y)?.field);
                }
                if let std::collections::btree_map::Entry::Vacant(e) = cache.entry(m) {
                    let sub = PbdwModel::new(basis.clone(), sensors[..m].to_vec(), grid, full.xi())?;
                    e.insert(sub);
                }
                Ok(cache[&m].estimate(y)?.field)
            }
            Estimator::Indirect { model, .. } => Ok(model.reconstruct(y, y.len() as f64 * sigma * sigma)?.field),
        }
    }
}
