//! Run configuration, benchmark presets, solver dispatch and result files.
//!
//! A run writes three files into its output directory:
//!
//! * `bundle.json`: the complete [`ResultBundle`];
//! * `fields.csv`: `element, cx, cy, v, e1111, e1122, e2222, e1212, phi`;
//! * `convergence.csv`: `iteration, compliance, lambda, volume_residual, merit, max_density_change`
//!   (empty cells where a solver does not report a column).

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hsfmo::fem2d::{build_mesh, cantilever, multiload, LoadCase, Mesh, PointLoad, Problem};
use hsfmo::hs_bounds::VolumeEstimatorKind;
use hsfmo::laminate_am::{am_solve, AmConfig};
use hsfmo::setgeom::{
    envelope_projected, laminate_cloud, midpoint_nonconvexity, product_space_sweep, sample_strains, Projection,
    SetLabel,
};
use hsfmo::sgp_solver::{sgp_solve, SgpConfig};
use hsfmo::tensor_core::{energy, OrthoTensor, PhasePair, StrainM, Tensor4};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("solver failed: {0}")]
    Solver(#[from] hsfmo::Error),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Cantilever,
    Multiload,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Zo,
    Voigt,
    HsFomo,
    LaminateAm,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Zo => "ZO-FMO",
            Self::Voigt => "V-FMO",
            Self::HsFomo => "HS-FOMO",
            Self::LaminateAm => "laminate-AM",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSpec {
    pub nx: usize,
    pub ny: usize,
    pub width: f64,
    pub height: f64,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self { nx: 30, ny: 30, width: 1.0, height: 1.0 }
    }
}

/// Strong phase `(E, ν)`; the weak phase is the strong one scaled by `contrast`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialSpec {
    pub young: f64,
    pub poisson: f64,
    pub contrast: f64,
}

impl Default for MaterialSpec {
    fn default() -> Self {
        Self { young: 1.0, poisson: 0.3, contrast: 1e-2 }
    }
}

impl MaterialSpec {
    fn check(&self, errs: &mut Vec<String>) {
        if !(self.contrast > 0.0 && self.contrast < 1.0) {
            errs.push(format!("material.contrast must lie in (0,1), got {}", self.contrast));
        }
        if !(self.young > 0.0) {
            errs.push(format!("material.young must be > 0, got {}", self.young));
        }
        if !(self.poisson > -1.0 && self.poisson < 1.0) {
            errs.push(format!("material.poisson must lie in (-1,1), got {}", self.poisson));
        }
    }

    pub fn phases(&self) -> Result<PhasePair> {
        Ok(PhasePair::from_contrast(self.young, self.poisson, self.contrast)?)
    }
}

/// Node nearest to `(x, y)` with the fixed directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Support {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub fix_x: bool,
    #[serde(default)]
    pub fix_y: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub fx: f64,
    #[serde(default)]
    pub fy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CustomSpec {
    /// Clamp every node on the left edge.
    pub clamp_left: bool,
    pub supports: Vec<Support>,
    pub loadcases: Vec<Vec<Load>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub model: ModelKind,
    pub vbar: f64,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub mesh: MeshSpec,
    pub material: MaterialSpec,
    pub sgp: SgpConfig,
    pub am: AmConfig,
    pub custom: Option<CustomSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Cantilever,
            model: ModelKind::HsFomo,
            vbar: 0.2,
            seed: 0,
            output_dir: None,
            mesh: MeshSpec::default(),
            material: MaterialSpec::default(),
            sgp: SgpConfig::default(),
            am: AmConfig::default(),
            custom: None,
        }
    }
}

impl RunConfig {
    /// Benchmark presets: `cantilever` (30×30 unit square) and `multiload`
    /// (40×20 on a 2×1 rectangle), both at `V̄ = 0.2`, `E = 1`, `ν = 0.3`.
    pub fn preset(name: &str, model: ModelKind) -> Result<Self> {
        let (problem, mesh) = match name {
            "cantilever" => (ProblemKind::Cantilever, MeshSpec::default()),
            "multiload" => (ProblemKind::Multiload, MeshSpec { nx: 40, ny: 20, width: 2.0, height: 1.0 }),
            other => return Err(CliError::Parse(format!("unknown preset '{other}'"))),
        };
        Ok(Self { problem, model, mesh, ..Self::default() })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Parse(e.to_string()))
    }

    fn n_loadcases(&self) -> usize {
        match self.problem {
            ProblemKind::Cantilever => 1,
            ProblemKind::Multiload => 2,
            ProblemKind::Custom => self.custom.as_ref().map_or(0, |c| c.loadcases.len()),
        }
    }

    /// Every violated constraint, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(0.0..=1.0).contains(&self.vbar) {
            errs.push(format!("vbar must lie in [0,1], got {}", self.vbar));
        }
        if self.mesh.nx == 0 || self.mesh.ny == 0 {
            errs.push("mesh.nx and mesh.ny must be >= 1".into());
        }
        if !(self.mesh.width > 0.0 && self.mesh.height > 0.0) {
            errs.push("mesh.width and mesh.height must be > 0".into());
        }
        self.material.check(&mut errs);
        if let Err(e) = self.sgp.validate() {
            errs.push(format!("sgp: {e}"));
        }
        if let Err(e) = self.am.validate() {
            errs.push(format!("am: {e}"));
        }
        match (self.problem, &self.custom) {
            (ProblemKind::Custom, None) => errs.push("problem = \"custom\" needs a [custom] section".into()),
            (ProblemKind::Custom, Some(c)) => {
                if c.loadcases.is_empty() || c.loadcases.iter().any(|l| l.is_empty()) {
                    errs.push("custom.loadcases must be non-empty lists of loads".into());
                }
                if !c.clamp_left && c.supports.is_empty() {
                    errs.push("custom problem needs supports or clamp_left".into());
                }
            }
            (_, Some(_)) => errs.push("[custom] section given but problem is not \"custom\"".into()),
            _ => {}
        }
        if self.model == ModelKind::LaminateAm && self.n_loadcases() != 1 {
            errs.push("model laminate-am requires exactly one loadcase".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(errs))
        }
    }

    pub fn build_problem(&self) -> Result<Problem> {
        self.validate()?;
        let MeshSpec { nx, ny, width, height } = self.mesh;
        let (mesh, loadcases) = match self.problem {
            ProblemKind::Cantilever => cantilever(nx, ny, width, height)?,
            ProblemKind::Multiload => multiload(nx, ny, width, height)?,
            ProblemKind::Custom => custom_problem(self.custom.as_ref().expect("validated"), &self.mesh)?,
        };
        Ok(Problem { mesh, loadcases, phases: self.material.phases()?, vbar: self.vbar })
    }
}

fn custom_problem(c: &CustomSpec, m: &MeshSpec) -> Result<(Mesh, Vec<LoadCase>)> {
    let mesh = build_mesh(m.nx, m.ny, m.width, m.height)?;
    let mut fixed: Vec<usize> = Vec::new();
    if c.clamp_left {
        fixed.extend(mesh.nodes_on_vertical_line(0.0).iter().flat_map(|&n| [2 * n, 2 * n + 1]));
    }
    for s in &c.supports {
        let n = mesh.nearest_node(s.x, s.y);
        if s.fix_x {
            fixed.push(2 * n);
        }
        if s.fix_y {
            fixed.push(2 * n + 1);
        }
    }
    fixed.sort_unstable();
    fixed.dedup();
    let lcs = c
        .loadcases
        .iter()
        .map(|loads| {
            let point_loads = loads
                .iter()
                .flat_map(|l| {
                    let node = mesh.nearest_node(l.x, l.y);
                    [PointLoad { node, dir: 0, magnitude: l.fx }, PointLoad { node, dir: 1, magnitude: l.fy }]
                })
                .filter(|p| p.magnitude != 0.0)
                .collect();
            LoadCase { fixed_dofs: fixed.clone(), point_loads }
        })
        .collect();
    Ok((mesh, lcs))
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    RunConfig::from_toml_str(&text)
}

/// Element tensor as orthotropic base plus angle, with the global Mandel
/// upper triangle `(M11, M12, M13, M22, M23, M33)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementTensor {
    pub e1111: f64,
    pub e1122: f64,
    pub e2222: f64,
    pub e1212: f64,
    pub phi: f64,
    pub mandel: [f64; 6],
}

impl ElementTensor {
    fn new(base: &OrthoTensor, t: &Tensor4) -> Self {
        let m = &t.m;
        Self {
            e1111: base.e1111,
            e1122: base.e1122,
            e2222: base.e2222,
            e1212: base.e1212,
            phi: base.phi,
            mandel: [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 1)], m[(1, 2)], m[(2, 2)]],
        }
    }

    pub fn tensor(&self) -> Tensor4 {
        let [a, b, c, d, e, f] = self.mandel;
        Tensor4::new(hsfmo::tensor_core::Mat3::new(a, b, c, b, d, e, c, e, f))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: usize,
    pub compliance: f64,
    pub lambda: f64,
    pub volume_residual: Option<f64>,
    pub merit: Option<f64>,
    pub max_density_change: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub version: String,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub config: RunConfig,
    pub volumes: Vec<f64>,
    pub tensors: Vec<ElementTensor>,
    pub compliance: Vec<f64>,
    pub total_compliance: f64,
    pub lambda: f64,
    pub log: Vec<LogRecord>,
    pub meta: RunMeta,
}

impl ResultBundle {
    pub fn n_elems(&self) -> usize {
        self.volumes.len()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let b: Self = serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        let n = b.config.mesh.nx * b.config.mesh.ny;
        if b.volumes.len() != n || b.tensors.len() != n {
            return Err(CliError::Parse(format!("bundle fields do not match the {n}-element mesh")));
        }
        Ok(b)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(io_err(path))?)
    }
}

fn base_or_identity(bases: Option<&Vec<OrthoTensor>>, e: usize, t: &Tensor4) -> OrthoTensor {
    match bases {
        Some(b) => b[e],
        None => {
            let m = &t.m;
            OrthoTensor::from_mandel(m[(0, 0)], m[(0, 1)], m[(1, 1)], m[(2, 2)], 0.0)
        }
    }
}

/// Solve the configured problem. The bundle carries no wall-clock data so
/// that identical configurations give identical bundles.
pub fn run(cfg: &RunConfig) -> Result<ResultBundle> {
    let problem = cfg.build_problem()?;
    let (design, compliance, lambda, log, converged) = match cfg.model {
        ModelKind::LaminateAm => {
            let out = am_solve(&problem, &cfg.am)?;
            let log: Vec<LogRecord> = out
                .log
                .iter()
                .map(|l| LogRecord {
                    iteration: l.iteration,
                    compliance: l.compliance,
                    lambda: l.lambda,
                    volume_residual: None,
                    merit: None,
                    max_density_change: l.max_density_change.is_finite().then_some(l.max_density_change),
                })
                .collect();
            (out.design, vec![out.compliance], out.lambda, log, out.converged)
        }
        m => {
            let kind = match m {
                ModelKind::Zo => VolumeEstimatorKind::ZeroOrder,
                ModelKind::Voigt => VolumeEstimatorKind::Voigt,
                _ => VolumeEstimatorKind::HashinShtrikman,
            };
            let out = sgp_solve(&problem, kind, &cfg.sgp)?;
            let log: Vec<LogRecord> = out
                .log
                .iter()
                .map(|l| LogRecord {
                    iteration: l.iteration,
                    compliance: l.compliance,
                    lambda: l.lambda,
                    volume_residual: Some(l.volume_residual),
                    merit: Some(l.merit),
                    max_density_change: None,
                })
                .collect();
            let it = out.iterate;
            (it.design, it.compliance, it.lambda, log, out.converged)
        }
    };
    let tensors = design
        .tensors
        .iter()
        .enumerate()
        .map(|(e, t)| ElementTensor::new(&base_or_identity(design.bases.as_ref(), e, t), t))
        .collect();
    let iterations = log.len().saturating_sub(1);
    Ok(ResultBundle {
        config: cfg.clone(),
        volumes: design.volumes,
        tensors,
        total_compliance: compliance.iter().sum(),
        compliance,
        lambda,
        log,
        meta: RunMeta { version: env!("CARGO_PKG_VERSION").into(), iterations, converged },
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Other(format!("csv: {e}"))
}

/// Write `bundle.json`, `fields.csv` and `convergence.csv` into `dir`.
pub fn write_bundle(bundle: &ResultBundle, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let path = dir.join("bundle.json");
    fs::write(&path, bundle.to_json()?).map_err(io_err(&path))?;
    let m = &bundle.config.mesh;
    let (dx, dy) = (m.width / m.nx as f64, m.height / m.ny as f64);
    let mut w = csv_writer(&dir.join("fields.csv"))?;
    w.write_record(["element", "cx", "cy", "v", "e1111", "e1122", "e2222", "e1212", "phi"]).map_err(csv_err)?;
    for (e, (t, v)) in bundle.tensors.iter().zip(&bundle.volumes).enumerate() {
        let (ex, ey) = (e % m.nx, e / m.nx);
        let row = [(ex as f64 + 0.5) * dx, (ey as f64 + 0.5) * dy, *v, t.e1111, t.e1122, t.e2222, t.e1212, t.phi];
        let mut rec = vec![e.to_string()];
        rec.extend(row.iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(dir))?;
    let mut w = csv_writer(&dir.join("convergence.csv"))?;
    w.write_record(["iteration", "compliance", "lambda", "volume_residual", "merit", "max_density_change"])
        .map_err(csv_err)?;
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    for l in &bundle.log {
        w.write_record([
            l.iteration.to_string(),
            l.compliance.to_string(),
            l.lambda.to_string(),
            opt(l.volume_residual),
            opt(l.merit),
            opt(l.max_density_change),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(dir))
}

/// Directional energy `⟨E(d⊗d), d⊗d⟩` for `d = (cos a, sin a)` at `n_angles`
/// equally spaced `a ∈ [0, 2π)`, per element.
pub fn rosettes(bundle: &ResultBundle, n_angles: usize) -> Vec<Vec<(f64, f64)>> {
    let strains: Vec<(f64, StrainM)> = (0..n_angles)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n_angles as f64;
            let (s, c) = a.sin_cos();
            (a, StrainM::from_components(c * c, s * s, s * c))
        })
        .collect();
    bundle
        .tensors
        .iter()
        .map(|t| {
            let t = t.tensor();
            strains.iter().map(|(a, e)| (*a, energy(&t, e))).collect()
        })
        .collect()
}

pub fn export_rosettes<W: Write>(bundle: &ResultBundle, n_angles: usize, out: W) -> Result<()> {
    if n_angles == 0 {
        return Err(CliError::Validation(vec!["n_angles must be >= 1".into()]));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["element", "angle", "energy"]).map_err(csv_err)?;
    for (e, r) in rosettes(bundle, n_angles).iter().enumerate() {
        for (a, v) in r {
            w.write_record([e.to_string(), a.to_string(), v.to_string()]).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| CliError::Other(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub problem: ProblemKind,
    pub discretization: String,
    pub contrast: f64,
    pub model: ModelKind,
    pub compliance: f64,
    pub lambda: f64,
    pub converged: bool,
}

/// Rows sorted by problem, discretization, contrast (descending) and model.
pub fn table_rows(bundles: &[ResultBundle]) -> Result<Vec<TableRow>> {
    if bundles.is_empty() {
        return Err(CliError::Validation(vec!["at least one bundle is required".into()]));
    }
    let mut rows: Vec<TableRow> = bundles
        .iter()
        .map(|b| TableRow {
            problem: b.config.problem,
            discretization: format!("{}x{}", b.config.mesh.nx, b.config.mesh.ny),
            contrast: b.config.material.contrast,
            model: b.config.model,
            compliance: b.total_compliance,
            lambda: b.lambda,
            converged: b.meta.converged,
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &TableRow| (r.problem as u8, r.discretization.clone());
        key(a).cmp(&key(b)).then(b.contrast.total_cmp(&a.contrast)).then(a.model.cmp(&b.model))
    });
    Ok(rows)
}

pub fn export_table<W: Write>(bundles: &[ResultBundle], out: W) -> Result<()> {
    let rows = table_rows(bundles)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["problem", "discretization", "contrast", "model", "compliance", "lambda", "converged"])
        .map_err(csv_err)?;
    for r in rows {
        let problem = match r.problem {
            ProblemKind::Cantilever => "cantilever",
            ProblemKind::Multiload => "multiload",
            ProblemKind::Custom => "custom",
        };
        w.write_record([
            problem.to_string(),
            r.discretization,
            format!("{:e}", r.contrast),
            r.model.label().to_string(),
            format!("{:.3}", r.compliance),
            format!("{:.2}", r.lambda),
            r.converged.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Other(e.to_string()))
}

/// Settings of `sample-sets`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSetsConfig {
    pub material: MaterialSpec,
    pub n_strains: usize,
    pub seed: u64,
    pub v: f64,
    pub v_samples: Vec<f64>,
    pub n_cloud: usize,
    pub nonconvexity_pairs: usize,
    pub projection: Projection,
    pub output_dir: Option<PathBuf>,
}

impl Default for SampleSetsConfig {
    fn default() -> Self {
        Self {
            material: MaterialSpec::default(),
            n_strains: 750,
            seed: 0,
            v: 0.5,
            v_samples: (0..=10).map(|k| k as f64 / 10.0).collect(),
            n_cloud: 5000,
            nonconvexity_pairs: 100,
            projection: Projection::default(),
            output_dir: None,
        }
    }
}

impl SampleSetsConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.material.check(&mut errs);
        if self.n_strains == 0 {
            errs.push("n_strains must be >= 1".into());
        }
        if !(self.v > 0.0 && self.v < 1.0) {
            errs.push(format!("v must lie in (0,1), got {}", self.v));
        }
        if self.v_samples.iter().any(|v| !(0.0..=1.0).contains(v)) {
            errs.push("v_samples must lie in [0,1]".into());
        }
        if let Err(e) = self.projection.validate() {
            errs.push(e.to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(errs))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub n_strains: usize,
    pub v: f64,
    pub voigt_point_excess: Vec<(f64, f64)>,
    pub cloud_size: usize,
    pub midpoint_nonconvexity: Option<f64>,
}

/// Writes `envelopes.csv` (set, v, strain, normal, value, foot),
/// `sweep.csv` (same columns per `v` layer), `cloud.csv` (Mandel upper
/// triangle per laminate) and `summary.json`.
pub fn run_sample_sets(cfg: &SampleSetsConfig, dir: &Path) -> Result<SetSummary> {
    cfg.validate()?;
    create_dir(dir)?;
    let p = cfg.material.phases()?;
    let strains = sample_strains(cfg.n_strains, cfg.seed);
    let header = ["set", "v", "strain", "n1", "n2", "n3", "value", "x1", "x2", "x3"];
    let write_env = |w: &mut csv::Writer<fs::File>, env: &hsfmo::setgeom::EnvelopeSurface| -> Result<()> {
        for (k, pl) in env.planes.iter().enumerate() {
            let mut rec = vec![format!("{:?}", env.set), env.v.to_string(), k.to_string()];
            rec.extend(pl.normal.iter().chain([pl.value].iter()).chain(pl.foot.iter()).map(|x| x.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        Ok(())
    };
    let mut w = csv_writer(&dir.join("envelopes.csv"))?;
    w.write_record(header).map_err(csv_err)?;
    for set in [SetLabel::A0, SetLabel::A1, SetLabel::A2] {
        write_env(&mut w, &envelope_projected(set, cfg.v, &strains, &p, cfg.projection)?)?;
    }
    w.flush().map_err(io_err(dir))?;
    let layers = product_space_sweep(&cfg.v_samples, &strains, &p)?;
    let mut w = csv_writer(&dir.join("sweep.csv"))?;
    w.write_record(header).map_err(csv_err)?;
    for l in &layers {
        write_env(&mut w, &l.voigt)?;
        write_env(&mut w, &l.hs)?;
    }
    w.flush().map_err(io_err(dir))?;
    let cloud = if cfg.n_cloud > 0 { laminate_cloud(cfg.n_cloud, cfg.v, &p, cfg.seed)? } else { Vec::new() };
    let mut w = csv_writer(&dir.join("cloud.csv"))?;
    w.write_record(["m11", "m12", "m13", "m22", "m23", "m33"]).map_err(csv_err)?;
    for t in &cloud {
        let m = &t.m;
        w.write_record([m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 1)], m[(1, 2)], m[(2, 2)]].map(|x| x.to_string()))
            .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(dir))?;
    let nonconvex = if cloud.len() >= 2 && cfg.nonconvexity_pairs > 0 {
        Some(midpoint_nonconvexity(&cloud, cfg.v, &p, cfg.nonconvexity_pairs, cfg.seed, 1e-6)?)
    } else {
        None
    };
    let summary = SetSummary {
        n_strains: cfg.n_strains,
        v: cfg.v,
        voigt_point_excess: layers.iter().map(|l| (l.v, l.voigt_point_excess)).collect(),
        cloud_size: cloud.len(),
        midpoint_nonconvexity: nonconvex,
    };
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Parse(e.to_string()))?;
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(summary)
}
