//! Diffeomorphic shape matching with a hybrid metric: the usual kernel
//! (LDDMM) norm on the velocity field plus a Sobolev seminorm measured on the
//! shape itself.

pub mod curve;
pub mod curve_metrics;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod io;
pub mod kernels;
pub mod mesh;
pub mod surface_metrics;
pub mod solver;
pub mod varifold;

pub use curve::{curve_frame, CurveFrame, Point2, PolygonalCurve};
pub use curve_metrics::{seminorm_matrix, seminorm_shape_gradient, seminorm_value, CurveMetricKind, CurveMetricSpec};
pub use error::{Error, Result};
pub use experiment::{run_experiment, Dataset, ExperimentConfig, MetricKind, RunOutput, RunSummary};
pub use kernels::{gaussian_eval, gram_apply, kernel_profile, GaussianKernelSpec, KernelSpec};
pub use mesh::{icosphere, Point3, TriangleMesh};
pub use surface_metrics::{stiffness_form, stiffness_shape_gradient, stiffness_value, SurfaceMetricSpec};
pub use varifold::{atoms_from_curve, atoms_from_curves, atoms_from_mesh, varifold_distance, varifold_inner, VarifoldAtoms, VarifoldSpec};
pub use solver::{
    control_norm, energy, energy_gradient, flow_points, forward_shoot, metric_gradient, min_component_distance, register, register_from, Backend,
    ControlTrajectory, EndpointGroup, EnergyBreakdown, EnergyRecord, GeodesicResult, HybridProblem, OptimizerSettings, RegistrationStatus,
    ShapeMetric, ShapeState,
};
