//! Time stepping of the homogenized model on the unperforated domain.
//!
//! The precipitate `w0` does not depend on the cell variable for the initial
//! data used here, so it is stored once per macro vertex and the interface
//! integral in the coupling term reduces to the factor `|Gamma|`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cell::{effective_tensor, CellSolution, EffectiveTensor};
use crate::expr::InitialData;
use crate::fem::{
    assemble_mass, assemble_stiffness, solve_factored, CgOptions, Conductivity, CsrMatrix,
    EnvelopeCholesky, Interpolator, MissPolicy,
};
use crate::kinetics::{advance_precipitate, psi_reg, reaction_rate, ModelParams};
use crate::mesh::Mesh2D;
use crate::micro::check_finite;
use crate::trace::{max_of, min_of, Sample, Trace, TraceRequest};
use crate::{Error, Result};

/// Everything the macro model needs from the cell problems.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedCoefficients {
    pub a: EffectiveTensor,
    pub b: EffectiveTensor,
    /// `|Y^p|`
    pub porosity: f64,
    /// `|Gamma|`
    pub interface_measure: f64,
}

impl HomogenizedCoefficients {
    pub fn from_cell(cell: &CellSolution, p: &ModelParams) -> Self {
        HomogenizedCoefficients {
            a: effective_tensor(cell, p.d1),
            b: effective_tensor(cell, p.d2),
            porosity: cell.porosity,
            interface_measure: cell.interface_measure,
        }
    }

    /// `|Gamma| / |Y^p|`
    pub fn coupling(&self) -> f64 {
        self.interface_measure / self.porosity
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.porosity > 0.0 && self.porosity <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "porosity must lie in (0, 1], got {}",
                self.porosity
            )));
        }
        if !(self.interface_measure >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "interface measure must be non-negative, got {}",
                self.interface_measure
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MacroSetup {
    pub mesh: Mesh2D,
    pub params: ModelParams,
    pub coeffs: HomogenizedCoefficients,
    pub cg: CgOptions,
    pub mass: CsrMatrix,
    pub stiffness_a: CsrMatrix,
    pub stiffness_b: CsrMatrix,
    system_u: CsrMatrix,
    system_v: CsrMatrix,
    factor_u: EnvelopeCholesky,
    factor_v: EnvelopeCholesky,
    mass_rows: Vec<f64>,
}

impl MacroSetup {
    pub fn new(
        mesh: Mesh2D,
        params: ModelParams,
        coeffs: HomogenizedCoefficients,
        cg: CgOptions,
    ) -> Result<Self> {
        params.validate()?;
        coeffs.validate()?;
        let mass = assemble_mass(&mesh);
        let stiffness_a = assemble_stiffness(&mesh, &Conductivity::Constant(coeffs.a.matrix))?;
        let stiffness_b = assemble_stiffness(&mesh, &Conductivity::Constant(coeffs.b.matrix))?;
        let system_u = mass.add_scaled(params.dt, &stiffness_a);
        let system_v = mass.add_scaled(params.dt, &stiffness_b);
        let mass_rows = mass.mul_vec(&vec![1.0; mesh.n_vertices()]);
        Ok(MacroSetup {
            mesh,
            params,
            coeffs,
            cg,
            mass,
            stiffness_a,
            stiffness_b,
            factor_u: EnvelopeCholesky::factor(&system_u)?,
            factor_v: EnvelopeCholesky::factor(&system_v)?,
            system_u,
            system_v,
            mass_rows,
        })
    }

    /// `1' M f`
    pub fn volume_total(&self, f: &[f64]) -> f64 {
        self.mass_rows.iter().zip(f).map(|(m, x)| m * x).sum()
    }

    /// `(|Gamma| / |Y^p|) 1' M w0`
    pub fn precipitate_total(&self, w: &[f64]) -> f64 {
        self.coeffs.coupling() * self.volume_total(w)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacroState {
    pub step: usize,
    pub time: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
}

pub fn init_macro(setup: &MacroSetup, init: &InitialData) -> Result<MacroState> {
    let pts = setup.mesh.vertices();
    let eval = |name: &str, f: &crate::expr::Polynomial| {
        pts.iter()
            .map(|&p| {
                let x = f.eval(p);
                if !(x >= 0.0) {
                    Err(Error::InitialData(format!(
                        "{name} = {x} < 0 at ({}, {})",
                        p[0], p[1]
                    )))
                } else {
                    Ok(x)
                }
            })
            .collect::<Result<Vec<f64>>>()
    };
    let u = eval("u", &init.u)?;
    let v = eval("v", &init.v)?;
    let w = eval("w", &init.w)?;
    let z = w.iter().map(|&x| psi_reg(x, setup.params.delta)).collect();
    Ok(MacroState {
        step: 0,
        time: 0.0,
        u,
        v,
        w,
        z,
    })
}

/// Advances one step and returns `w0^{n+1} - w0^n` per vertex.
pub fn step_macro(setup: &MacroSetup, state: &mut MacroState) -> Result<Vec<f64>> {
    let p = &setup.params;
    let frozen = setup.coeffs.interface_measure == 0.0;
    let dw: Vec<f64> = state
        .w
        .iter_mut()
        .enumerate()
        .map(|(i, w)| {
            if frozen {
                return 0.0;
            }
            let rate = reaction_rate(state.u[i], state.v[i], p);
            let next = advance_precipitate(*w, rate, p);
            let d = next - *w;
            *w = next;
            d
        })
        .collect();
    // dt * M P with P = coupling * dw / dt
    let c = setup.coeffs.coupling();
    let source = setup.mass.mul_vec(&dw);
    let mut rhs_u = setup.mass.mul_vec(&state.u);
    let mut rhs_v = setup.mass.mul_vec(&state.v);
    for i in 0..rhs_u.len() {
        rhs_u[i] -= c * source[i];
        rhs_v[i] -= c * source[i];
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
    check_finite("u0", &state.u, state.time)?;
    check_finite("v0", &state.v, state.time)?;
    check_finite("w0", &state.w, state.time)?;
    Ok(dw)
}

/// Nodal fields at one sampled step.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroSnapshot {
    pub step: usize,
    pub time: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MacroRun {
    pub trace: Trace,
    pub final_state: MacroState,
    /// Present when requested; one per entry of the trace.
    pub snapshots: Vec<MacroSnapshot>,
    pub wall_time: f64,
}

pub fn run_macro(
    setup: &MacroSetup,
    init: &InitialData,
    request: &TraceRequest,
    keep_snapshots: bool,
) -> Result<MacroRun> {
    run_macro_observed(setup, init, request, keep_snapshots, |_, _| Ok(()))
}

pub fn run_macro_observed<F>(
    setup: &MacroSetup,
    init: &InitialData,
    request: &TraceRequest,
    keep_snapshots: bool,
    mut observer: F,
) -> Result<MacroRun>
where
    F: FnMut(&Sample, &MacroState) -> Result<()>,
{
    request.validate()?;
    let start = Instant::now();
    let mut observer_time = 0.0;
    let p = &setup.params;
    let probes = Interpolator::new(&setup.mesh, &request.points, MissPolicy::Error)?;
    let schedule = request.schedule(p);
    let mut trace = Trace::new(&request.points);
    let mut snapshots = Vec::new();
    let mut state = init_macro(setup, init)?;
    let phi = setup.coeffs.porosity;
    let gamma = setup.coeffs.interface_measure;

    let e0 = 0.5 * phi * setup.mass.quadratic(&state.u);
    let mut dissipation = 0.0;
    let mut work = 0.0;
    let mut next = schedule.iter().peekable();
    for step in 0..=p.n_steps() {
        if step > 0 {
            let dw = step_macro(setup, &mut state)?;
            dissipation += p.dt * phi * setup.stiffness_a.quadratic(&state.u);
            work += gamma * setup.mass.bilinear(&state.u, &dw);
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
        let tw = setup.precipitate_total(&state.w);
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
            .push(0.5 * phi * setup.mass.quadratic(&state.u) + dissipation);
        trace.energy_flux.push(e0 - work);
        if keep_snapshots {
            snapshots.push(MacroSnapshot {
                step,
                time: sample.time,
                u: state.u.clone(),
                v: state.v.clone(),
                w: state.w.clone(),
            });
        }
        let t = Instant::now();
        observer(sample, &state)?;
        observer_time += t.elapsed().as_secs_f64();
    }
    Ok(MacroRun {
        trace,
        final_state: state,
        snapshots,
        wall_time: start.elapsed().as_secs_f64() - observer_time,
    })
}
