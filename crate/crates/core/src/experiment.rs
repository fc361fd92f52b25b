//! Experiment configurations and the end-to-end runner that writes frames,
//! deformation grids, the energy log and a result summary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curve::{curve_frame, PolygonalCurve};
use crate::curve_metrics::{CurveMetricKind, CurveMetricSpec, DEFAULT_METRIC_WEIGHT};
use crate::datasets::{gen_cardioids, gen_half_circles, gen_nested_ellipses, gen_rays, gen_three_ellipsoids, CARDIOID_LONG_AXIS, HALF_CIRCLE_RADIUS, RAY_LENGTH};
use crate::error::{Error, Result};
use crate::io;
use crate::kernels::KernelSpec;
use crate::solver::{
    flow_points, forward_shoot, register, Backend, ControlTrajectory, GeodesicResult, HybridProblem, OptimizerSettings, RegistrationStatus, ShapeMetric,
    ShapeState,
};
use crate::surface_metrics::SurfaceMetricSpec;
use crate::varifold::VarifoldSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    Cardioids,
    NestedEllipses,
    Rays,
    HalfCircles,
    ThreeEllipsoids,
    /// Template and target read from the configured files.
    Files,
}

impl std::str::FromStr for Dataset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| Error::UnknownExperiment(s.into()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    #[default]
    None,
    H1General,
    H1RotInvariant,
    H1RotScaleInvariant,
    /// Stiffness seminorm on triangle meshes.
    SurfaceH1,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub kind: MetricKind,
    pub alpha: f64,
    pub weight: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { kind: MetricKind::None, alpha: 0.0, weight: DEFAULT_METRIC_WEIGHT }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarifoldConfig {
    pub width: f64,
    pub normal_weight: f64,
}

impl Default for VarifoldConfig {
    fn default() -> Self {
        Self { width: 2.0, normal_weight: 1.0 }
    }
}

fn default_lambda() -> f64 {
    1.0
}
fn default_weight() -> f64 {
    1.0
}
fn default_timesteps() -> usize {
    10
}
fn default_grid() -> usize {
    21
}
fn default_level() -> u32 {
    2
}

/// Template, target and optional component pairing.
pub type ShapeSet = (ShapeState, ShapeState, Option<Vec<(usize, usize)>>);

/// Everything needed to reproduce one registration run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: Dataset,
    pub kernel: KernelSpec,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub metric: MetricConfig,
    #[serde(default)]
    pub varifold: VarifoldConfig,
    /// Multiplier on the end-point distance.
    #[serde(default = "default_weight")]
    pub endpoint_weight: f64,
    #[serde(default = "default_timesteps")]
    pub timesteps: usize,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    /// `(template component, target component)` pairs; when absent the
    /// dataset's own pairing is used, or all components are pooled.
    #[serde(default)]
    pub pairing: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub template: Option<PathBuf>,
    #[serde(default)]
    pub target: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Lines per direction of the flowed grid (curves only); 0 disables it.
    #[serde(default = "default_grid")]
    pub grid_resolution: usize,
    /// Icosphere subdivision level of the synthetic surfaces.
    #[serde(default = "default_level")]
    pub mesh_level: u32,
}

pub const PRESETS: &[&str] = &[
    "cardioids_plain",
    "cardioids_hybrid",
    "ellipses_rot",
    "ellipses_rot_scale",
    "rays_plain",
    "rays_hybrid",
    "half_circles_plain",
    "half_circles_hybrid",
    "surfaces_plain_small",
    "surfaces_plain_large",
    "surfaces_hybrid",
];

impl ExperimentConfig {
    pub fn new(name: &str, dataset: Dataset, kernel: KernelSpec) -> Self {
        Self {
            name: name.into(),
            dataset,
            kernel,
            lambda: default_lambda(),
            metric: MetricConfig::default(),
            varifold: VarifoldConfig::default(),
            endpoint_weight: default_weight(),
            timesteps: default_timesteps(),
            optimizer: OptimizerSettings::default(),
            pairing: None,
            template: None,
            target: None,
            output_dir: None,
            grid_resolution: default_grid(),
            mesh_level: default_level(),
        }
    }

    /// Named configuration of one of the reference experiments.
    pub fn preset(name: &str) -> Result<Self> {
        let kernel = |a: f64| KernelSpec::new(a, 3).expect("valid kernel");
        let (dataset, a, kind) = match name {
            "cardioids_plain" => (Dataset::Cardioids, 0.02 * CARDIOID_LONG_AXIS, MetricKind::None),
            "cardioids_hybrid" => (Dataset::Cardioids, 0.02 * CARDIOID_LONG_AXIS, MetricKind::H1RotScaleInvariant),
            "ellipses_rot" => (Dataset::NestedEllipses, 0.2, MetricKind::H1RotInvariant),
            "ellipses_rot_scale" => (Dataset::NestedEllipses, 0.2, MetricKind::H1RotScaleInvariant),
            "rays_plain" => (Dataset::Rays, RAY_LENGTH / 5.0, MetricKind::None),
            "rays_hybrid" => (Dataset::Rays, RAY_LENGTH / 25.0, MetricKind::H1RotInvariant),
            "half_circles_plain" => (Dataset::HalfCircles, HALF_CIRCLE_RADIUS / 5.0, MetricKind::None),
            "half_circles_hybrid" => (Dataset::HalfCircles, HALF_CIRCLE_RADIUS / 25.0, MetricKind::H1RotScaleInvariant),
            "surfaces_plain_small" => (Dataset::ThreeEllipsoids, 1.0 / 45.0, MetricKind::None),
            "surfaces_plain_large" => (Dataset::ThreeEllipsoids, 1.0 / 6.0, MetricKind::None),
            "surfaces_hybrid" => (Dataset::ThreeEllipsoids, 1.0 / 45.0, MetricKind::SurfaceH1),
            _ => return Err(Error::UnknownExperiment(name.into())),
        };
        let mut c = Self::new(name, dataset, kernel(a));
        c.metric.kind = kind;
        c.endpoint_weight = 10.0;
        c.optimizer.backend = Backend::Lbfgs;
        if dataset == Dataset::ThreeEllipsoids {
            // unit-height shapes: the varifold width is a fifth of the
            // reference size as for the curves, and the much smaller
            // distances call for a heavier end-point weight
            c.varifold.width = 0.2;
            c.endpoint_weight = 300.0;
            c.grid_resolution = 0;
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::InvalidParameter(format!("experiment name `{}` must be a plain nonempty word", self.name)));
        }
        if self.dataset == Dataset::Files && (self.template.is_none() || self.target.is_none()) {
            return Err(Error::InvalidParameter("dataset `files` needs both template and target paths".into()));
        }
        if self.grid_resolution == 1 {
            return Err(Error::InvalidParameter("grid resolution must be 0 or at least 2".into()));
        }
        VarifoldSpec::new(self.varifold.width, self.varifold.normal_weight)?;
        self.optimizer.validate()
    }

    /// Template and target, from files when given, otherwise from the
    /// dataset generator. Also returns the dataset's default pairing.
    pub fn shapes(&self) -> Result<ShapeSet> {
        let curves = |p: (Vec<PolygonalCurve>, Vec<PolygonalCurve>)| (ShapeState::Curves(p.0), ShapeState::Curves(p.1));
        let (mut template, mut target, pairing) = match self.dataset {
            Dataset::Cardioids => {
                let p = gen_cardioids();
                let (a, b) = curves((p.template, p.target));
                (a, b, None)
            }
            Dataset::NestedEllipses => {
                let p = gen_nested_ellipses();
                let (a, b) = curves((p.template, p.target));
                (a, b, Some(p.pairing))
            }
            Dataset::Rays => {
                let p = gen_rays();
                let (a, b) = curves((p.template, p.target));
                (a, b, None)
            }
            Dataset::HalfCircles => {
                let p = gen_half_circles();
                let (a, b) = curves((p.template, p.target));
                (a, b, None)
            }
            Dataset::ThreeEllipsoids => {
                let p = gen_three_ellipsoids(self.mesh_level);
                (ShapeState::Mesh(p.template), ShapeState::Mesh(p.target), None)
            }
            Dataset::Files => (ShapeState::Curves(vec![]), ShapeState::Curves(vec![]), None),
        };
        if let Some(p) = &self.template {
            template = io::read_shape(p)?;
        }
        if let Some(p) = &self.target {
            target = io::read_shape(p)?;
        }
        if template.dim() != target.dim() {
            return Err(Error::DimensionMismatch { expected: template.dim(), found: target.dim() });
        }
        Ok((template, target, self.pairing.clone().or(pairing)))
    }

    pub fn shape_metric(&self, template: &ShapeState) -> Result<ShapeMetric> {
        let m = &self.metric;
        let curve = |kind| Ok(ShapeMetric::uniform_curves(CurveMetricSpec::new(kind, m.alpha, m.weight)?, template.component_count()));
        match (m.kind, template) {
            (MetricKind::None, _) => Ok(ShapeMetric::None),
            (MetricKind::SurfaceH1, ShapeState::Mesh(_)) => Ok(ShapeMetric::Surface(SurfaceMetricSpec::new(m.weight)?)),
            (MetricKind::H1General, ShapeState::Curves(_)) => curve(CurveMetricKind::H1General),
            (MetricKind::H1RotInvariant, ShapeState::Curves(_)) => curve(CurveMetricKind::H1RotInvariant),
            (MetricKind::H1RotScaleInvariant, ShapeState::Curves(_)) => curve(CurveMetricKind::H1RotScaleInvariant),
            (kind, _) => Err(Error::InvalidParameter(format!("metric kind {kind:?} does not apply to this shape type"))),
        }
    }

    pub fn problem(&self) -> Result<HybridProblem> {
        self.validate()?;
        let (template, target, pairing) = self.shapes()?;
        let metric = self.shape_metric(&template)?;
        let varifold = VarifoldSpec::new(self.varifold.width, self.varifold.normal_weight)?;
        let mut p = HybridProblem::new(template, &target, self.kernel, metric, varifold)?;
        if let Some(pairs) = pairing {
            p = p.with_pairing(&target, &pairs)?;
        }
        p.lambda = self.lambda;
        p.endpoint_weight = self.endpoint_weight;
        p.timesteps = self.timesteps;
        p.optimizer = self.optimizer.clone();
        p.validate()?;
        Ok(p)
    }

    /// Reads a JSON config; relative shape paths are taken relative to the
    /// config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut c: Self = serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), msg: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut c.template, &mut c.target].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalEnergy {
    pub kinetic: f64,
    pub endpoint: f64,
    pub total: f64,
}

/// Contents of `result.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub status: RegistrationStatus,
    pub iterations: usize,
    /// Unweighted end-point distance before and after registration.
    pub initial_distance: f64,
    pub final_distance: f64,
    pub final_energy: FinalEnergy,
    pub frame_count: usize,
    /// Per frame; `null` for single-component shapes.
    pub min_component_distance: Vec<Option<f64>>,
    /// Edge-length coefficient of variation per curve at `t = 0` and `t = 1`.
    pub edge_length_cv_initial: Option<Vec<f64>>,
    pub edge_length_cv_final: Option<Vec<f64>>,
    pub config: ExperimentConfig,
}

pub struct RunOutput {
    pub problem: HybridProblem,
    pub result: GeodesicResult,
    pub summary: RunSummary,
    pub dir: PathBuf,
}

/// Standard deviation over mean of the edge lengths.
pub fn edge_length_cv(c: &PolygonalCurve) -> Result<f64> {
    let l = curve_frame(c)?.edge_lengths;
    let n = l.len() as f64;
    let mean = l.iter().sum::<f64>() / n;
    Ok((l.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt() / mean)
}

fn curves_cv(s: &ShapeState) -> Result<Option<Vec<f64>>> {
    match s {
        ShapeState::Curves(c) => c.iter().map(edge_length_cv).collect::<Result<Vec<_>>>().map(Some),
        ShapeState::Mesh(_) => Ok(None),
    }
}

/// Square grid of polylines covering both shapes with a 10% margin.
pub fn initial_grid(template: &ShapeState, target: &ShapeState, resolution: usize) -> Vec<Vec<[f64; 2]>> {
    if resolution < 2 {
        return vec![];
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for s in [template, target] {
        for p in s.coords().chunks(2) {
            for i in 0..2 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
    }
    let side = (hi[0] - lo[0]).max(hi[1] - lo[1]) * 1.2;
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let start = [mid[0] - side / 2.0, mid[1] - side / 2.0];
    let samples = 4 * (resolution - 1) + 1;
    let at = |i: usize, n: usize| side * i as f64 / (n - 1) as f64;
    let mut lines = Vec::with_capacity(2 * resolution);
    for j in 0..resolution {
        lines.push((0..samples).map(|i| [start[0] + at(i, samples), start[1] + at(j, resolution)]).collect());
    }
    for j in 0..resolution {
        lines.push((0..samples).map(|i| [start[0] + at(j, resolution), start[1] + at(i, samples)]).collect());
    }
    lines
}

/// Carries grid polylines along the flow; one set of polylines per frame.
pub fn flow_grid(lines: &[Vec<[f64; 2]>], result: &GeodesicResult, problem: &HybridProblem) -> Result<Vec<Vec<PolygonalCurve>>> {
    let flat: Vec<f64> = lines.iter().flatten().flatten().copied().collect();
    let frames = flow_points(&flat, result, problem)?;
    frames
        .iter()
        .map(|pts| {
            let mut off = 0;
            lines
                .iter()
                .map(|l| {
                    let v = pts[off..off + 2 * l.len()].chunks(2).map(|p| [p[0], p[1]]).collect();
                    off += 2 * l.len();
                    PolygonalCurve::new(v, false)
                })
                .collect()
        })
        .collect()
}

fn write_grid(dir: &Path, grids: &[Vec<PolygonalCurve>]) -> Result<()> {
    let gdir = dir.join("grid");
    fs::create_dir_all(&gdir)?;
    for (k, g) in grids.iter().enumerate() {
        io::write_curves(&gdir.join(format!("grid_{k:04}.curves")), g)?;
    }
    Ok(())
}

/// Registers and writes `frames/`, `grid/`, `energy.csv`, `controls.json`
/// and `result.json` into `out` (default: the configured output directory,
/// else `out/<name>`).
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<RunOutput> {
    let problem = config.problem()?;
    let dir = out.map(Path::to_path_buf).or_else(|| config.output_dir.clone()).unwrap_or_else(|| Path::new("out").join(&config.name));
    let result = register(&problem)?;

    let fdir = dir.join("frames");
    fs::create_dir_all(&fdir)?;
    let ext = io::shape_extension(&problem.template);
    for (k, f) in result.frames.iter().enumerate() {
        io::write_shape(&fdir.join(format!("frame_{k:04}.{ext}")), f)?;
    }
    if matches!(problem.template, ShapeState::Curves(_)) && config.grid_resolution >= 2 {
        let (_, target, _) = config.shapes()?;
        let lines = initial_grid(&problem.template, &target, config.grid_resolution);
        write_grid(&dir, &flow_grid(&lines, &result, &problem)?)?;
    }
    fs::write(dir.join("energy.csv"), io::energy_csv(&result.energy_log))?;
    io::write_controls(&dir.join("controls.json"), &result.controls)?;

    let last = result.energy_log.last().expect("energy log starts with iteration 0");
    let summary = RunSummary {
        name: config.name.clone(),
        status: result.status,
        iterations: result.iterations,
        initial_distance: result.initial_distance,
        final_distance: result.final_distance,
        final_energy: FinalEnergy { kinetic: last.kinetic, endpoint: last.endpoint, total: last.total },
        frame_count: result.frames.len(),
        min_component_distance: result.min_component_distance.clone(),
        edge_length_cv_initial: curves_cv(&result.frames[0])?,
        edge_length_cv_final: curves_cv(result.frames.last().unwrap())?,
        config: config.clone(),
    };
    fs::write(dir.join("result.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(RunOutput { problem, result, summary, dir })
}

/// Rebuilds the flow of a finished run from its `result.json`, first frame
/// and `controls.json`, and writes a fresh grid at the given resolution.
/// Returns the number of grid frames written.
pub fn reflow_grid(run_dir: &Path, resolution: usize) -> Result<usize> {
    let path = run_dir.join("result.json");
    let text = fs::read_to_string(&path)?;
    let summary: RunSummary = serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.clone(), msg: e.to_string() })?;
    let controls: ControlTrajectory = io::read_controls(&run_dir.join("controls.json"))?;
    let mut config = summary.config;
    let first = run_dir.join("frames").join("frame_0000.curves");
    config.template = Some(first);
    let problem = config.problem()?;
    if !matches!(problem.template, ShapeState::Curves(_)) {
        return Err(Error::InvalidParameter("deformation grids are only drawn for curves".into()));
    }
    let frames = forward_shoot(&problem.template, &controls, &problem)?;
    let result = GeodesicResult {
        frames,
        controls,
        energy_log: vec![],
        initial_distance: summary.initial_distance,
        final_distance: summary.final_distance,
        iterations: summary.iterations,
        status: summary.status,
        min_component_distance: summary.min_component_distance,
    };
    let (_, target, _) = config.shapes()?;
    let grids = flow_grid(&initial_grid(&problem.template, &target, resolution), &result, &problem)?;
    let gdir = run_dir.join("grid");
    if gdir.exists() {
        fs::remove_dir_all(&gdir)?;
    }
    write_grid(run_dir, &grids)?;
    Ok(grids.len())
}
