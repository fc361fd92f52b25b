use crate::curve_metrics::{self, CurveForm};
use crate::error::{Error, Result};
use crate::kernels::{dot, gram_apply_unchecked, gram_bilinear_grad};
use crate::surface_metrics::{self, StiffnessForm};
use crate::varifold::{curve_atoms, curve_pullback_add, distance_atom_gradient, distance_unchecked, mesh_atoms, mesh_pullback_add, VarifoldAtoms};

use super::{EnergyBreakdown, HybridProblem, ShapeMetric, ShapeState};

enum Topology {
    /// `(first vertex, vertex count, closed)` per curve.
    Curves(Vec<(usize, usize, bool)>),
    Mesh(Vec<[usize; 3]>),
}

/// Kinetic contribution of one time step.
pub(crate) struct StepTerms {
    /// `λ αᵀu + uᵀGu`.
    pub value: f64,
    pub u: Vec<f64>,
    pub gu: Vec<f64>,
}

pub(crate) struct Gradients {
    pub energy: EnergyBreakdown,
    pub raw: Vec<Vec<f64>>,
    pub metric: Vec<Vec<f64>>,
}

/// Precomputed topology plus the energy, its gradient, and the forward sweep.
pub(crate) struct Evaluator<'a> {
    problem: &'a HybridProblem,
    topo: Topology,
    dim: usize,
    len: usize,
    q0: Vec<f64>,
    dt: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(problem: &'a HybridProblem) -> Result<Self> {
        problem.validate()?;
        let topo = match &problem.template {
            ShapeState::Curves(curves) => {
                let mut off = 0;
                let mut t = Vec::with_capacity(curves.len());
                for c in curves {
                    t.push((off, c.len(), c.is_closed()));
                    off += c.len();
                }
                Topology::Curves(t)
            }
            ShapeState::Mesh(m) => Topology::Mesh(m.triangles().to_vec()),
        };
        let q0 = problem.template.coords();
        Ok(Self { problem, topo, dim: problem.template.dim(), len: q0.len(), q0, dt: 1.0 / problem.timesteps as f64 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn q0(&self) -> &[f64] {
        &self.q0
    }

    pub fn check_state(&self, q: &ShapeState) -> Result<()> {
        let same = match (&self.topo, q) {
            (Topology::Curves(t), ShapeState::Curves(c)) => {
                t.len() == c.len() && t.iter().zip(c).all(|(&(_, n, closed), c)| n == c.len() && closed == c.is_closed())
            }
            (Topology::Mesh(t), ShapeState::Mesh(m)) => t.as_slice() == m.triangles(),
            _ => false,
        };
        if !same {
            return Err(Error::InvalidParameter("shape topology differs from the template".into()));
        }
        Ok(())
    }

    fn curve_range(&self, c: usize) -> (std::ops::Range<usize>, bool) {
        match &self.topo {
            Topology::Curves(t) => {
                let (off, n, closed) = t[c];
                (2 * off..2 * (off + n), closed)
            }
            Topology::Mesh(_) => unreachable!(),
        }
    }

    fn group_atoms(&self, components: &[usize], q: &[f64]) -> Result<VarifoldAtoms> {
        match &self.topo {
            Topology::Curves(_) => {
                let mut atoms = VarifoldAtoms { dim: 2, ..Default::default() };
                for &c in components {
                    let (r, closed) = self.curve_range(c);
                    atoms.extend(&curve_atoms(&q[r], closed)?);
                }
                Ok(atoms)
            }
            Topology::Mesh(t) => mesh_atoms(q, t),
        }
    }

    /// Unweighted sum of the group distances.
    pub fn distance(&self, q: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for g in &self.problem.endpoint {
            let a = self.group_atoms(&g.components, q)?;
            total += distance_unchecked(&a, &g.target, &self.problem.varifold);
        }
        Ok(total)
    }

    fn distance_grad_add(&self, q: &[f64], scale: f64, out: &mut [f64]) -> Result<()> {
        for g in &self.problem.endpoint {
            let a = self.group_atoms(&g.components, q)?;
            let mut ag = distance_atom_gradient(&a, &g.target, &self.problem.varifold);
            for v in ag.centers.iter_mut().chain(ag.normals.iter_mut()).chain(ag.masses.iter_mut()) {
                *v *= scale;
            }
            match &self.topo {
                Topology::Curves(t) => {
                    let mut atom_off = 0;
                    for &c in &g.components {
                        let (r, closed) = self.curve_range(c);
                        curve_pullback_add(&q[r.clone()], closed, &ag, atom_off, &mut out[r])?;
                        let n = t[c].1;
                        atom_off += if closed { n } else { n - 1 };
                    }
                }
                Topology::Mesh(t) => mesh_pullback_add(q, t, &ag, out)?,
            }
        }
        Ok(())
    }

    /// `G(q) h`, zero for the plain metric.
    fn metric_apply(&self, q: &[f64], h: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; h.len()];
        match (&self.problem.shape_metric, &self.topo) {
            (ShapeMetric::None, _) => {}
            (ShapeMetric::Curves(specs), Topology::Curves(_)) => {
                for (c, spec) in specs.iter().enumerate() {
                    if spec.is_none() {
                        continue;
                    }
                    let (r, closed) = self.curve_range(c);
                    CurveForm::from_coords(&q[r.clone()], closed, spec)?.apply_add(&h[r.clone()], &mut out[r]);
                }
            }
            (ShapeMetric::Surface(spec), Topology::Mesh(t)) => StiffnessForm::from_coords(q, t, spec)?.apply_add(h, &mut out),
            _ => unreachable!("validated"),
        }
        Ok(out)
    }

    /// Adds `scale · ∂_q (hᵀ G(q) h)` with `h` fixed.
    fn metric_shape_grad_add(&self, q: &[f64], h: &[f64], scale: f64, out: &mut [f64]) -> Result<()> {
        match (&self.problem.shape_metric, &self.topo) {
            (ShapeMetric::None, _) => {}
            (ShapeMetric::Curves(specs), Topology::Curves(_)) => {
                for (c, spec) in specs.iter().enumerate() {
                    let (r, closed) = self.curve_range(c);
                    curve_metrics::shape_gradient_add(&q[r.clone()], closed, &h[r.clone()], spec, scale, &mut out[r])?;
                }
            }
            (ShapeMetric::Surface(spec), Topology::Mesh(t)) => surface_metrics::shape_gradient_add(q, t, h, spec, scale, out)?,
            _ => unreachable!("validated"),
        }
        Ok(())
    }

    fn has_metric(&self) -> bool {
        !matches!(self.problem.shape_metric, ShapeMetric::None)
    }

    pub fn step_terms(&self, q: &[f64], alpha: &[f64]) -> Result<StepTerms> {
        let u = gram_apply_unchecked(q, q, alpha, self.dim, &self.problem.kernel);
        let gu = if self.has_metric() { self.metric_apply(q, &u)? } else { vec![0.0; u.len()] };
        let value = self.problem.lambda * dot(alpha, &u) + dot(&u, &gu);
        Ok(StepTerms { value, u, gu })
    }

    /// Forward Euler frames `q_0..q_T` from the given start.
    pub fn shoot(&self, q0: &[f64], controls: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut frames = Vec::with_capacity(controls.len() + 1);
        frames.push(q0.to_vec());
        for alpha in controls {
            let q = frames.last().unwrap();
            let v = gram_apply_unchecked(q, q, alpha, self.dim, &self.problem.kernel);
            let next = q.iter().zip(&v).map(|(a, b)| a + self.dt * b).collect();
            frames.push(next);
        }
        frames
    }

    pub fn energy(&self, controls: &[Vec<f64>]) -> Result<EnergyBreakdown> {
        let frames = self.shoot(&self.q0, controls);
        let mut kinetic = 0.0;
        for (q, a) in frames.iter().zip(controls) {
            kinetic += self.step_terms(q, a)?.value;
        }
        kinetic *= 0.5 * self.dt;
        let endpoint = self.problem.endpoint_weight * self.distance(frames.last().unwrap())?;
        Ok(EnergyBreakdown { kinetic, endpoint, total: kinetic + endpoint })
    }

    /// Energy, raw gradient and kernel-metric gradient in one forward and one
    /// backward sweep.
    pub fn gradient(&self, controls: &[Vec<f64>]) -> Result<Gradients> {
        let p = self.problem;
        let dt = self.dt;
        let frames = self.shoot(&self.q0, controls);
        let terms = frames.iter().zip(controls).map(|(q, a)| self.step_terms(q, a)).collect::<Result<Vec<_>>>()?;
        let kinetic = 0.5 * dt * terms.iter().map(|t| t.value).sum::<f64>();
        let q_end = frames.last().unwrap();
        let endpoint = p.endpoint_weight * self.distance(q_end)?;

        // P_{k} = dE/dq_k, total derivative through later steps
        let mut costate = vec![0.0; self.len];
        self.distance_grad_add(q_end, p.endpoint_weight, &mut costate)?;

        let t_steps = controls.len();
        let mut raw = vec![Vec::new(); t_steps];
        let mut metric = vec![Vec::new(); t_steps];
        for k in (0..t_steps).rev() {
            let q = &frames[k];
            let alpha = &controls[k];
            let st = &terms[k];
            let d: Vec<f64> = (0..self.len).map(|i| costate[i] + p.lambda * alpha[i] + st.gu[i]).collect();
            let kd = gram_apply_unchecked(q, q, &d, self.dim, &p.kernel);
            raw[k] = kd.iter().map(|v| dt * v).collect();

            let w: Vec<f64> = (0..self.len).map(|i| costate[i] + 0.5 * p.lambda * alpha[i] + st.gu[i]).collect();
            let kg = gram_bilinear_grad(q, &w, alpha, self.dim, &p.kernel);
            for (c, g) in costate.iter_mut().zip(&kg) {
                *c += dt * g;
            }
            if self.has_metric() {
                self.metric_shape_grad_add(q, &st.u, 0.5 * dt, &mut costate)?;
            }
            metric[k] = d;
        }
        Ok(Gradients { energy: EnergyBreakdown { kinetic, endpoint, total: kinetic + endpoint }, raw, metric })
    }
}
