use std::collections::VecDeque;

use crate::error::Result;
use crate::kernels::dot;

use super::adjoint::{Evaluator, Gradients};
use super::{min_component_distance, Backend, ControlTrajectory, EnergyRecord, GeodesicResult, HybridProblem, RegistrationStatus};

/// Minimises the energy from `α ≡ 0`.
pub fn register(problem: &HybridProblem) -> Result<GeodesicResult> {
    register_from(problem, ControlTrajectory::zeros_for(problem))
}

/// Minimises the energy from the given controls.
pub fn register_from(problem: &HybridProblem, initial: ControlTrajectory) -> Result<GeodesicResult> {
    initial.check(problem)?;
    let ev = Evaluator::new(problem)?;
    let settings = &problem.optimizer;
    let dim = ev.dim();
    let t_steps = problem.timesteps;

    let mut alpha = initial.flatten();
    let mut grads = ev.gradient(&unflatten(&alpha, t_steps))?;
    let mut raw = grads.raw.concat();
    let g0 = norm(&raw);
    let mut log = vec![record(0, &grads, g0)];
    let mut lbfgs = Lbfgs::new(settings.lbfgs_memory);
    let mut status = RegistrationStatus::MaxIterations;
    let mut iterations = 0;

    for it in 1..=settings.max_iterations {
        let gn = norm(&raw);
        if gn == 0.0 || gn <= settings.gradient_tolerance * g0 {
            status = RegistrationStatus::Converged;
            break;
        }
        let metric = grads.metric.concat();
        let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(2);
        match settings.backend {
            Backend::Precond => dirs.push(metric.iter().map(|v| -v).collect()),
            Backend::Lbfgs => {
                if lbfgs.is_empty() {
                    dirs.push(metric.iter().map(|v| -v).collect());
                } else {
                    dirs.push(lbfgs.direction(&raw));
                }
            }
        }
        dirs.push(raw.iter().map(|v| -v).collect());

        let mut accepted = None;
        for dir in dirs {
            let slope = dot(&raw, &dir);
            if !(slope < 0.0) {
                continue;
            }
            if let Some(found) = line_search(&ev, &alpha, &dir, slope, grads.energy.total, problem) {
                accepted = Some(found);
                break;
            }
        }
        let Some(next) = accepted else {
            status = RegistrationStatus::LineSearchFailed;
            break;
        };
        let next_grads = ev.gradient(&unflatten(&next, t_steps))?;
        let next_raw = next_grads.raw.concat();
        if settings.backend == Backend::Lbfgs {
            let s: Vec<f64> = next.iter().zip(&alpha).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = next_raw.iter().zip(&raw).map(|(a, b)| a - b).collect();
            lbfgs.push(s, y);
        }
        alpha = next;
        grads = next_grads;
        raw = next_raw;
        iterations = it;
        log.push(record(it, &grads, norm(&raw)));
    }

    let controls = ControlTrajectory { dim, steps: unflatten(&alpha, t_steps) };
    let frames_coords = ev.shoot(ev.q0(), &controls.steps);
    let frames = frames_coords.iter().map(|c| problem.template.with_coords(c)).collect::<Result<Vec<_>>>()?;
    let min_component_distance = frames.iter().map(min_component_distance).collect();
    Ok(GeodesicResult {
        initial_distance: ev.distance(ev.q0())?,
        final_distance: ev.distance(frames_coords.last().unwrap())?,
        frames,
        controls,
        energy_log: log,
        iterations,
        status,
        min_component_distance,
    })
}

/// Armijo backtracking; evaluation failures (collapsed elements) count as
/// rejected steps.
fn line_search(ev: &Evaluator, alpha: &[f64], dir: &[f64], slope: f64, e0: f64, problem: &HybridProblem) -> Option<Vec<f64>> {
    let s = &problem.optimizer;
    let mut step = s.initial_step;
    for _ in 0..=s.max_backtracks {
        let trial: Vec<f64> = alpha.iter().zip(dir).map(|(a, d)| a + step * d).collect();
        if let Ok(e) = ev.energy(&unflatten(&trial, problem.timesteps)) {
            if e.total.is_finite() && e.total <= e0 + s.armijo * step * slope && e.total < e0 {
                return Some(trial);
            }
        }
        step *= s.shrink;
    }
    None
}

fn unflatten(flat: &[f64], steps: usize) -> Vec<Vec<f64>> {
    let per = flat.len() / steps;
    flat.chunks(per.max(1)).map(|c| c.to_vec()).collect()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn record(iteration: usize, g: &Gradients, grad_norm: f64) -> EnergyRecord {
    EnergyRecord { iteration, kinetic: g.energy.kinetic, endpoint: g.energy.endpoint, total: g.energy.total, grad_norm }
}

/// Limited-memory BFGS inverse-Hessian approximation.
struct Lbfgs {
    memory: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl Lbfgs {
    fn new(memory: usize) -> Self {
        Self { memory, pairs: VecDeque::new() }
    }

    fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        // skip pairs violating the curvature condition
        if !(sy > 1e-12 * norm(&s) * norm(&y)) {
            return;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// `-H g` by the two-loop recursion.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut a = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let ai = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= ai * yi;
            }
            a.push(ai);
        }
        let (s, y, _) = self.pairs.back().expect("nonempty memory");
        let gamma = dot(s, y) / dot(y, y);
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for ((s, y, rho), ai) in self.pairs.iter().zip(a.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (ai - b) * si;
            }
        }
        q.iter().map(|v| -v).collect()
    }
}
