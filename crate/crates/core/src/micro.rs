//! Time stepping of the two-scale model on the perforated domain.
//!
//! Per step: the precipitate `w` is advanced on the interface vertices with
//! the rate frozen at the old concentrations. Its increment then drives one
//! implicit Euler diffusion step for each species as interface flux. Sharing the discrete flux makes the totals
//! `1'M u + eps * 1'M_G w` telescope exactly.

use std::time::Instant;

use crate::expr::InitialData;
use crate::fem::{
    assemble_mass, assemble_stiffness, lumped_interface_weights, solve_factored, CgOptions,
    Conductivity, CsrMatrix, EnvelopeCholesky, Interpolator, MissPolicy,
};
use crate::kinetics::{advance_precipitate, psi_reg, reaction_rate, ModelParams};
use crate::mesh::{Mesh2D, TagKind};
use crate::trace::{max_of, min_of, Sample, Trace, TraceRequest};
use crate::{Error, Result};

/// Mesh and parameters with the operators assembled once per run.
#[derive(Clone, Debug)]
pub struct MicroSetup {
    pub mesh: Mesh2D,
    pub params: ModelParams,
    pub cg: CgOptions,
    pub mass: CsrMatrix,
    /// Stiffness for the identity tensor.
    pub stiffness: CsrMatrix,
    system_u: CsrMatrix,
    system_v: CsrMatrix,
    factor_u: EnvelopeCholesky,
    factor_v: EnvelopeCholesky,
    mass_rows: Vec<f64>,
    /// Interface vertices in increasing order; `w` and `z` are stored in this order.
    pub gamma_nodes: Vec<usize>,
    /// Lumped interface mass per entry of `gamma_nodes`.
    pub gamma_weights: Vec<f64>,
}

impl MicroSetup {
    pub fn new(mesh: Mesh2D, params: ModelParams, cg: CgOptions) -> Result<Self> {
        params.validate()?;
        let mass = assemble_mass(&mesh);
        let stiffness = assemble_stiffness(&mesh, &Conductivity::isotropic(1.0))?;
        let system_u = mass.add_scaled(params.dt * params.d1, &stiffness);
        let system_v = mass.add_scaled(params.dt * params.d2, &stiffness);
        let mass_rows = mass.mul_vec(&vec![1.0; mesh.n_vertices()]);
        let gamma_nodes = mesh.interface_vertices();
        let gamma_weights = if gamma_nodes.is_empty() {
            Vec::new()
        } else {
            let w = lumped_interface_weights(&mesh, TagKind::Interface)?;
            gamma_nodes.iter().map(|&i| w[i]).collect()
        };
        Ok(MicroSetup {
            mesh,
            params,
            cg,
            mass,
            stiffness,
            factor_u: EnvelopeCholesky::factor(&system_u)?,
            factor_v: EnvelopeCholesky::factor(&system_v)?,
            system_u,
            system_v,
            mass_rows,
            gamma_nodes,
            gamma_weights,
        })
    }

    /// `1' M f` for a volume field.
    pub fn volume_total(&self, f: &[f64]) -> f64 {
        self.mass_rows.iter().zip(f).map(|(m, x)| m * x).sum()
    }

    /// `eps * 1' M_G f` for a field on the interface vertices.
    pub fn surface_total(&self, f: &[f64]) -> f64 {
        self.params.epsilon
            * self
                .gamma_weights
                .iter()
                .zip(f)
                .map(|(m, x)| m * x)
                .sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MicroState {
    pub step: usize,
    pub time: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Precipitate on the interface vertices.
    pub w: Vec<f64>,
    pub z: Vec<f64>,
}

/// Nodal interpolation of the initial data.
pub fn init_micro(setup: &MicroSetup, init: &InitialData) -> Result<MicroState> {
    let pts = setup.mesh.vertices();
    let eval = |name: &str, f: &crate::expr::Polynomial, nodes: &mut dyn Iterator<Item = usize>| {
        nodes
            .map(|i| {
                let x = f.eval(pts[i]);
                if !(x >= 0.0) {
                    Err(Error::InitialData(format!(
                        "{name} = {x} < 0 at ({}, {})",
                        pts[i][0], pts[i][1]
                    )))
                } else {
                    Ok(x)
                }
            })
            .collect::<Result<Vec<f64>>>()
    };
    let n = setup.mesh.n_vertices();
    let u = eval("u", &init.u, &mut (0..n))?;
    let v = eval("v", &init.v, &mut (0..n))?;
    let w = eval("w", &init.w, &mut setup.gamma_nodes.iter().copied())?;
    let z = w.iter().map(|&x| psi_reg(x, setup.params.delta)).collect();
    Ok(MicroState {
        step: 0,
        time: 0.0,
        u,
        v,
        w,
        z,
    })
}

pub(crate) fn check_finite(field: &'static str, values: &[f64], time: f64) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { field, time, index }),
        None => Ok(()),
    }
}

/// Advances `state` by one step and returns the precipitate increment
/// `w^{n+1} - w^n` on the interface vertices.
pub fn step_micro(setup: &MicroSetup, state: &mut MicroState) -> Result<Vec<f64>> {
    let p = &setup.params;
    let dw: Vec<f64> = setup
        .gamma_nodes
        .iter()
        .zip(state.w.iter_mut())
        .map(|(&i, w)| {
            let rate = reaction_rate(state.u[i], state.v[i], p);
            let next = advance_precipitate(*w, rate, p);
            let d = next - *w;
            *w = next;
            d
        })
        .collect();

    // dt * M_G g with g = eps * dw / dt
    let mut rhs_u = setup.mass.mul_vec(&state.u);
    let mut rhs_v = setup.mass.mul_vec(&state.v);
    for ((&i, &m), &d) in setup.gamma_nodes.iter().zip(&setup.gamma_weights).zip(&dw) {
        let s = m * p.epsilon * d;
        rhs_u[i] -= s;
        rhs_v[i] -= s;
    }
    let (ru, rv) = rayon::join(
        || {
            solve_factored(
                &setup.system_u,
                &setup.factor_u,
                &rhs_u,
                &mut state.u,
                setup.cg,
            )
        },
        || {
            solve_factored(
                &setup.system_v,
                &setup.factor_v,
                &rhs_v,
                &mut state.v,
                setup.cg,
            )
        },
    );
    ru?;
    rv?;
    for (z, &w) in state.z.iter_mut().zip(&state.w) {
        *z = psi_reg(w, p.delta);
    }
    state.step += 1;
    state.time = state.step as f64 * p.dt;
    check_finite("u", &state.u, state.time)?;
    check_finite("v", &state.v, state.time)?;
    check_finite("w", &state.w, state.time)?;
    Ok(dw)
}

#[derive(Clone, Debug)]
pub struct MicroRun {
    pub trace: Trace,
    pub final_state: MicroState,
    /// Seconds spent stepping and sampling, excluding the observer.
    pub wall_time: f64,
}

pub fn run_micro(
    setup: &MicroSetup,
    init: &InitialData,
    request: &TraceRequest,
) -> Result<MicroRun> {
    run_micro_observed(setup, init, request, |_, _| Ok(()))
}

/// Runs to `t_final`, calling `observer` at every sampled step.
pub fn run_micro_observed<F>(
    setup: &MicroSetup,
    init: &InitialData,
    request: &TraceRequest,
    mut observer: F,
) -> Result<MicroRun>
where
    F: FnMut(&Sample, &MicroState) -> Result<()>,
{
    request.validate()?;
    let start = Instant::now();
    let mut observer_time = 0.0;
    let p = &setup.params;
    let probes = Interpolator::new(&setup.mesh, &request.points, MissPolicy::Error)?;
    let schedule = request.schedule(p);
    let mut trace = Trace::new(&request.points);
    let mut state = init_micro(setup, init)?;

    let e0 = 0.5 * setup.mass.quadratic(&state.u);
    let mut dissipation = 0.0;
    let mut work = 0.0;
    let mut next = schedule.iter().peekable();
    for step in 0..=p.n_steps() {
        if step > 0 {
            let dw = step_micro(setup, &mut state)?;
            dissipation += p.dt * p.d1 * setup.stiffness.quadratic(&state.u);
            work += setup
                .gamma_nodes
                .iter()
                .zip(&setup.gamma_weights)
                .zip(&dw)
                .map(|((&i, &m), &d)| m * state.u[i] * p.epsilon * d)
                .sum::<f64>();
        }
        let Some(sample) = next.next_if(|s| s.step == step) else {
            continue;
        };
        let pu = probes.apply(&state.u);
        let pv = probes.apply(&state.v);
        for (k, s) in trace.points.iter_mut().enumerate() {
            s.u.push(pu[k]);
            s.v.push(pv[k]);
        }
        let tw = setup.surface_total(&state.w);
        trace.times.push(sample.time);
        trace.steps.push(step);
        trace.regular.push(sample.regular);
        trace.total_u.push(setup.volume_total(&state.u) + tw);
        trace.total_v.push(setup.volume_total(&state.v) + tw);
        trace.total_w.push(tw);
        trace.min_u.push(min_of(&state.u));
        trace.min_v.push(min_of(&state.v));
        trace.min_w.push(min_of(&state.w));
        trace.min_z.push(min_of(&state.z));
        trace.max_z.push(max_of(&state.z));
        trace
            .energy_dissipation
            .push(0.5 * setup.mass.quadratic(&state.u) + dissipation);
        trace.energy_flux.push(e0 - work);
        let t = Instant::now();
        observer(sample, &state)?;
        observer_time += t.elapsed().as_secs_f64();
    }
    Ok(MicroRun {
        trace,
        final_state: state,
        wall_time: start.elapsed().as_secs_f64() - observer_time,
    })
}

/// `1' M f` for a volume species or `eps * 1' M_G f` for the precipitate.
pub fn total_mass(setup: &MicroSetup, field: &[f64], surface: bool) -> f64 {
    if surface {
        setup.surface_total(field)
    } else {
        setup.volume_total(field)
    }
}
