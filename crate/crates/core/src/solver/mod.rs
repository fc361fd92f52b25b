//! Time-discretised hybrid registration.
//!
//! Controls `α_k` (one covector per vertex and time step) drive the forward
//! Euler recursion `q_{k+1} = q_k + dt·K(q_k) α_k`, `dt = 1/T`. The energy is
//!
//! ```text
//! E(α) = dt/2 Σ_k [λ α_kᵀ K(q_k) α_k + u_kᵀ G(q_k) u_k] + w·Σ_groups D(q_T, target)
//! ```
//!
//! with `u_k = K(q_k) α_k` and `G` the block-diagonal shape seminorm. Its exact
//! gradient is computed by a backward adjoint sweep through the recursion.

mod adjoint;
mod optim;

use serde::{Deserialize, Serialize};

use crate::curve::PolygonalCurve;
use crate::curve_metrics::CurveMetricSpec;
use crate::error::{Error, Result};
use crate::kernels::{gram_apply_unchecked, KernelSpec};
use crate::mesh::TriangleMesh;
use crate::surface_metrics::SurfaceMetricSpec;
use crate::varifold::{atoms_from_curves, atoms_from_mesh, VarifoldAtoms, VarifoldSpec};

pub(crate) use adjoint::Evaluator;
pub use optim::{register, register_from};

/// Shape being deformed: planar curves or one (possibly disconnected) mesh.
#[derive(Clone, Debug, PartialEq)]
pub enum ShapeState {
    Curves(Vec<PolygonalCurve>),
    Mesh(TriangleMesh),
}

impl ShapeState {
    pub fn dim(&self) -> usize {
        match self {
            ShapeState::Curves(_) => 2,
            ShapeState::Mesh(_) => 3,
        }
    }

    pub fn vertex_count(&self) -> usize {
        match self {
            ShapeState::Curves(c) => c.iter().map(|c| c.len()).sum(),
            ShapeState::Mesh(m) => m.vertex_count(),
        }
    }

    /// Number of components addressable by endpoint groups: one per curve,
    /// and a single one for a mesh.
    pub fn component_count(&self) -> usize {
        match self {
            ShapeState::Curves(c) => c.len(),
            ShapeState::Mesh(_) => 1,
        }
    }

    /// All vertex coordinates, concatenated in component order.
    pub fn coords(&self) -> Vec<f64> {
        match self {
            ShapeState::Curves(c) => c.iter().flat_map(|c| c.coords().iter().copied()).collect(),
            ShapeState::Mesh(m) => m.coords().to_vec(),
        }
    }

    /// Same topology with new (validated) coordinates.
    pub fn with_coords(&self, coords: &[f64]) -> Result<Self> {
        if coords.len() != self.dim() * self.vertex_count() {
            return Err(Error::LengthMismatch { expected: self.dim() * self.vertex_count(), found: coords.len() });
        }
        match self {
            ShapeState::Curves(curves) => {
                let mut off = 0;
                let mut out = Vec::with_capacity(curves.len());
                for c in curves {
                    let v = coords[2 * off..2 * (off + c.len())].chunks_exact(2).map(|p| [p[0], p[1]]).collect();
                    out.push(c.with_vertices(v)?);
                    off += c.len();
                }
                Ok(ShapeState::Curves(out))
            }
            ShapeState::Mesh(m) => m.with_vertices(coords.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect()).map(ShapeState::Mesh),
        }
    }

    /// Varifold atoms of the selected components, pooled.
    pub fn atoms(&self, components: &[usize]) -> Result<VarifoldAtoms> {
        match self {
            ShapeState::Curves(curves) => {
                let sel = components
                    .iter()
                    .map(|&i| curves.get(i).cloned().ok_or_else(|| Error::InvalidParameter(format!("no component {i}"))))
                    .collect::<Result<Vec<_>>>()?;
                atoms_from_curves(&sel)
            }
            ShapeState::Mesh(m) => {
                if components != [0] {
                    return Err(Error::InvalidParameter("a mesh has the single component 0".into()));
                }
                atoms_from_mesh(m)
            }
        }
    }

    pub fn all_atoms(&self) -> Result<VarifoldAtoms> {
        self.atoms(&(0..self.component_count()).collect::<Vec<_>>())
    }

    /// Per-vertex label of the connected piece it belongs to.
    fn vertex_labels(&self) -> Vec<usize> {
        match self {
            ShapeState::Curves(c) => c.iter().enumerate().flat_map(|(i, c)| std::iter::repeat(i).take(c.len())).collect(),
            ShapeState::Mesh(m) => m.component_labels(),
        }
    }
}

/// Smallest distance between two vertices lying on different connected
/// pieces (curves, or connected parts of a mesh). `None` for a single piece.
pub fn min_component_distance(state: &ShapeState) -> Option<f64> {
    let labels = state.vertex_labels();
    let coords = state.coords();
    let d = state.dim();
    let mut best: Option<f64> = None;
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] != labels[j] {
                let r = crate::kernels::sq_dist(&coords[i * d..(i + 1) * d], &coords[j * d..(j + 1) * d]).sqrt();
                best = Some(best.map_or(r, |b| b.min(r)));
            }
        }
    }
    best
}

/// Shape-intrinsic part of the metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeMetric {
    /// Plain kernel norm.
    None,
    /// One spec per curve.
    Curves(Vec<CurveMetricSpec>),
    Surface(SurfaceMetricSpec),
}

impl ShapeMetric {
    pub fn uniform_curves(spec: CurveMetricSpec, count: usize) -> Self {
        ShapeMetric::Curves(vec![spec; count])
    }
}

/// Components of the deformed shape compared, pooled, against one target.
#[derive(Clone, Debug, PartialEq)]
pub struct EndpointGroup {
    pub components: Vec<usize>,
    pub target: VarifoldAtoms,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Gradient in the kernel metric, with a raw-gradient fallback.
    #[default]
    Precond,
    Lbfgs,
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "precond" => Ok(Backend::Precond),
            "lbfgs" => Ok(Backend::Lbfgs),
            _ => Err(Error::InvalidParameter(format!("unknown backend `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    /// Stop once the gradient norm falls below this fraction of its initial value.
    pub gradient_tolerance: f64,
    pub initial_step: f64,
    pub shrink: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
    pub backend: Backend,
    pub lbfgs_memory: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            initial_step: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
            max_backtracks: 50,
            backend: Backend::Precond,
            lbfgs_memory: 10,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.gradient_tolerance >= 0.0) {
            return bad("gradient tolerance must be nonnegative");
        }
        if !(self.initial_step > 0.0) {
            return bad("initial step must be positive");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink factor must lie in (0, 1)");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("armijo constant must lie in (0, 1)");
        }
        if self.lbfgs_memory == 0 {
            return bad("lbfgs memory must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct HybridProblem {
    pub template: ShapeState,
    pub endpoint: Vec<EndpointGroup>,
    pub kernel: KernelSpec,
    pub lambda: f64,
    pub shape_metric: ShapeMetric,
    pub varifold: VarifoldSpec,
    /// Multiplier on the summed varifold distances.
    pub endpoint_weight: f64,
    pub timesteps: usize,
    pub optimizer: OptimizerSettings,
}

impl HybridProblem {
    /// Problem whose end point compares all template components against all
    /// target components at once. Defaults: `λ = 1`, unit end-point weight,
    /// ten time steps.
    pub fn new(template: ShapeState, target: &ShapeState, kernel: KernelSpec, shape_metric: ShapeMetric, varifold: VarifoldSpec) -> Result<Self> {
        let group = EndpointGroup { components: (0..template.component_count()).collect(), target: target.all_atoms()? };
        let p = Self {
            template,
            endpoint: vec![group],
            kernel,
            lambda: 1.0,
            shape_metric,
            varifold,
            endpoint_weight: 1.0,
            timesteps: 10,
            optimizer: OptimizerSettings::default(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Replaces the end point by one group per `(template component, target
    /// component)` pair.
    pub fn with_pairing(mut self, target: &ShapeState, pairs: &[(usize, usize)]) -> Result<Self> {
        self.endpoint = pairs
            .iter()
            .map(|&(a, b)| Ok(EndpointGroup { components: vec![a], target: target.atoms(&[b])? }))
            .collect::<Result<_>>()?;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.timesteps == 0 {
            return Err(Error::InvalidParameter("at least one time step is required".into()));
        }
        if !(self.endpoint_weight > 0.0 && self.endpoint_weight.is_finite()) {
            return Err(Error::InvalidParameter(format!("endpoint weight must be positive, got {}", self.endpoint_weight)));
        }
        self.varifold.validate()?;
        self.optimizer.validate()?;
        let dim = self.template.dim();
        let ncomp = self.template.component_count();
        for g in &self.endpoint {
            if g.components.is_empty() || g.components.iter().any(|&c| c >= ncomp) {
                return Err(Error::InvalidParameter(format!("endpoint group {:?} references missing components", g.components)));
            }
            if !g.target.is_empty() && g.target.dim != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: g.target.dim });
            }
        }
        match (&self.shape_metric, &self.template) {
            (ShapeMetric::None, _) => {}
            (ShapeMetric::Curves(specs), ShapeState::Curves(curves)) => {
                if specs.len() != curves.len() {
                    return Err(Error::LengthMismatch { expected: curves.len(), found: specs.len() });
                }
                specs.iter().try_for_each(|s| s.validate())?;
            }
            (ShapeMetric::Surface(s), ShapeState::Mesh(_)) => s.validate()?,
            _ => return Err(Error::InvalidParameter("shape metric does not match the template type".into())),
        }
        Ok(())
    }
}

/// Per-time-step flattened covectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlTrajectory {
    pub dim: usize,
    pub steps: Vec<Vec<f64>>,
}

impl ControlTrajectory {
    pub fn zeros(timesteps: usize, vertex_count: usize, dim: usize) -> Self {
        Self { dim, steps: vec![vec![0.0; vertex_count * dim]; timesteps] }
    }

    pub fn zeros_for(problem: &HybridProblem) -> Self {
        Self::zeros(problem.timesteps, problem.template.vertex_count(), problem.template.dim())
    }

    pub fn timesteps(&self) -> usize {
        self.steps.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.steps.concat()
    }

    pub fn from_flat(dim: usize, timesteps: usize, flat: &[f64]) -> Self {
        let per = flat.len() / timesteps.max(1);
        Self { dim, steps: flat.chunks(per.max(1)).map(|c| c.to_vec()).collect() }
    }

    pub fn norm(&self) -> f64 {
        self.steps.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn check(&self, problem: &HybridProblem) -> Result<()> {
        if self.steps.len() != problem.timesteps {
            return Err(Error::LengthMismatch { expected: problem.timesteps, found: self.steps.len() });
        }
        let len = problem.template.vertex_count() * problem.template.dim();
        if self.dim != problem.template.dim() {
            return Err(Error::DimensionMismatch { expected: problem.template.dim(), found: self.dim });
        }
        if let Some(s) = self.steps.iter().find(|s| s.len() != len) {
            return Err(Error::LengthMismatch { expected: len, found: s.len() });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    /// Weighted end-point term.
    pub endpoint: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub iteration: usize,
    pub kinetic: f64,
    pub endpoint: f64,
    pub total: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegistrationStatus {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct GeodesicResult {
    pub frames: Vec<ShapeState>,
    pub controls: ControlTrajectory,
    pub energy_log: Vec<EnergyRecord>,
    /// Unweighted summed varifold distance at `α = 0`.
    pub initial_distance: f64,
    /// Unweighted summed varifold distance of the last frame.
    pub final_distance: f64,
    pub iterations: usize,
    pub status: RegistrationStatus,
    pub min_component_distance: Vec<Option<f64>>,
}

/// `λ αᵀ K α + uᵀ G u` with `u = K(q) α`, where `q` must share the template's
/// topology.
pub fn control_norm(q: &ShapeState, alpha: &[f64], problem: &HybridProblem) -> Result<f64> {
    let ev = Evaluator::new(problem)?;
    ev.check_state(q)?;
    if alpha.len() != q.coords().len() {
        return Err(Error::LengthMismatch { expected: q.coords().len(), found: alpha.len() });
    }
    Ok(ev.step_terms(&q.coords(), alpha)?.value)
}

/// Frames `q_0, …, q_T` of the Euler recursion started at `q0`.
pub fn forward_shoot(q0: &ShapeState, controls: &ControlTrajectory, problem: &HybridProblem) -> Result<Vec<ShapeState>> {
    let ev = Evaluator::new(problem)?;
    ev.check_state(q0)?;
    controls.check(problem)?;
    ev.shoot(&q0.coords(), &controls.steps).iter().map(|c| q0.with_coords(c)).collect()
}

pub fn energy(controls: &ControlTrajectory, problem: &HybridProblem) -> Result<EnergyBreakdown> {
    controls.check(problem)?;
    Evaluator::new(problem)?.energy(&controls.steps)
}

/// Exact gradient of [`energy`] with respect to every control entry.
pub fn energy_gradient(controls: &ControlTrajectory, problem: &HybridProblem) -> Result<ControlTrajectory> {
    controls.check(problem)?;
    let g = Evaluator::new(problem)?.gradient(&controls.steps)?;
    Ok(ControlTrajectory { dim: controls.dim, steps: g.raw })
}

/// Gradient in the kernel metric: `d_k` with `dt·K(q_k) d_k` equal to the raw
/// gradient at step `k`; obtained without solving any linear system.
pub fn metric_gradient(controls: &ControlTrajectory, problem: &HybridProblem) -> Result<ControlTrajectory> {
    controls.check(problem)?;
    let g = Evaluator::new(problem)?.gradient(&controls.steps)?;
    Ok(ControlTrajectory { dim: controls.dim, steps: g.metric })
}

/// Carries arbitrary ambient points (flattened, same dimension as the shape)
/// along the optimal flow. Returns one point set per frame.
pub fn flow_points(points: &[f64], result: &GeodesicResult, problem: &HybridProblem) -> Result<Vec<Vec<f64>>> {
    let dim = problem.template.dim();
    if points.len() % dim != 0 {
        return Err(Error::DimensionMismatch { expected: dim, found: points.len() % dim });
    }
    if result.frames.len() != result.controls.timesteps() + 1 {
        return Err(Error::LengthMismatch { expected: result.controls.timesteps() + 1, found: result.frames.len() });
    }
    let dt = 1.0 / result.controls.timesteps() as f64;
    let mut out = vec![points.to_vec()];
    for (frame, alpha) in result.frames.iter().zip(&result.controls.steps) {
        let q = frame.coords();
        if alpha.len() != q.len() {
            return Err(Error::LengthMismatch { expected: q.len(), found: alpha.len() });
        }
        let x = out.last().unwrap();
        let v = gram_apply_unchecked(x, &q, alpha, dim, &problem.kernel);
        out.push(x.iter().zip(&v).map(|(a, b)| a + dt * b).collect());
    }
    Ok(out)
}
