//! Energies, corrector norms, initial-data compatibility and the study over
//! a list of scales.
//!
//! The micro run is compared with a stored macro run sample by sample while
//! it is being computed, so no micro snapshots are kept in memory.

use serde::{Deserialize, Serialize};

use crate::cell::{cell_coordinate, corrector_at, CellSolution};
use crate::expr::Polynomial;
use crate::fem::{
    assemble_interface_mass, assemble_mass, field_norms, p1_gradients, Interpolator, MissPolicy,
    NodalField, TriangleSampler,
};
use crate::homogenized::{run_macro, HomogenizedCoefficients, MacroRun, MacroSetup};
use crate::io::config::RunConfig;
use crate::mesh::{build_perforated_mesh, Mesh2D, Point, TagKind};
use crate::micro::{run_micro_observed, MicroRun, MicroSetup, MicroState};
use crate::trace::Trace;
use crate::{Error, Result};

/// Species-1 energy by its two formulas at every sample.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergySeries {
    pub times: Vec<f64>,
    /// Quadratic term plus accumulated dissipation.
    pub via_dissipation: Vec<f64>,
    /// Initial quadratic term minus accumulated interface work.
    pub via_flux: Vec<f64>,
}

impl EnergySeries {
    fn from_trace(trace: &Trace) -> Self {
        EnergySeries {
            times: trace.times.clone(),
            via_dissipation: trace.energy_dissipation.clone(),
            via_flux: trace.energy_flux.clone(),
        }
    }

    /// `max_t |E_a - E_b| / |E_a|`
    pub fn max_relative_gap(&self) -> f64 {
        self.via_dissipation
            .iter()
            .zip(&self.via_flux)
            .map(|(a, b)| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Energy of the two-scale run; the work term carries the factor `eps`.
pub fn micro_energy(trace: &Trace) -> EnergySeries {
    EnergySeries::from_trace(trace)
}

/// Energy of the homogenized run, weighted by `|Y^p|`.
pub fn macro_energy(trace: &Trace) -> EnergySeries {
    EnergySeries::from_trace(trace)
}

/// Corrector-estimate quantities for one scale.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub epsilon: f64,
    /// `max_t ||u_eps - u_0||` over the pore domain.
    pub norm_u_c_l2: f64,
    /// `||grad u_eps - C^eps grad u_0||` over time and the pore domain.
    pub norm_grad_u: f64,
    pub norm_v_c_l2: f64,
    pub norm_grad_v: f64,
    /// `max_t (eps int_Gamma |w_eps - w_0|^2)^(1/2)`
    pub norm_w_c_l2: f64,
    /// `max_t |E_eps - E_0|` for species 1.
    pub energy_sup_diff: f64,
    pub wall_time_micro: f64,
    pub wall_time_macro: f64,
}

impl NormReport {
    pub const COLUMNS: [&'static str; 9] = [
        "epsilon",
        "norm_u_c_l2",
        "norm_grad_u",
        "norm_v_c_l2",
        "norm_grad_v",
        "norm_w_c_l2",
        "energy_sup_diff",
        "wall_time_micro",
        "wall_time_macro",
    ];

    pub fn values(&self) -> [f64; 9] {
        [
            self.epsilon,
            self.norm_u_c_l2,
            self.norm_grad_u,
            self.norm_v_c_l2,
            self.norm_grad_v,
            self.norm_w_c_l2,
            self.energy_sup_diff,
            self.wall_time_micro,
            self.wall_time_macro,
        ]
    }
}

/// How the reference gradient is corrected on the micro mesh.
#[derive(Clone, Copy, Debug)]
pub enum CorrectorField<'a> {
    Identity,
    /// Cell correctors evaluated at `((x - origin) / eps) mod 1`.
    Cell {
        cell: &'a CellSolution,
        origin: Point,
    },
}

/// Accumulates the corrector norms sample by sample.
pub struct NormAccumulator<'a> {
    micro: &'a Mesh2D,
    epsilon: f64,
    to_vertices: Interpolator,
    to_interface: Interpolator,
    gradients: TriangleSampler,
    corrector: Vec<[[f64; 2]; 2]>,
    elements: Vec<(f64, [[f64; 2]; 3])>,
    last_time: Option<f64>,
    last_rate: [f64; 2],
    sup: [f64; 3],
    integral: [f64; 2],
}

impl<'a> NormAccumulator<'a> {
    pub fn new(
        micro: &'a Mesh2D,
        reference: &Mesh2D,
        corrector: CorrectorField<'_>,
        epsilon: f64,
    ) -> Result<Self> {
        let gamma: Vec<Point> = micro
            .interface_vertices()
            .iter()
            .map(|&i| micro.vertices()[i])
            .collect();
        let bary: Vec<Point> = (0..micro.n_triangles())
            .map(|t| micro.barycenter(t))
            .collect();
        let corrector = match corrector {
            CorrectorField::Identity => vec![[[1.0, 0.0], [0.0, 1.0]]; bary.len()],
            CorrectorField::Cell { cell, origin } => bary
                .iter()
                .map(|&b| corrector_at(cell, cell_coordinate(b, origin, epsilon)))
                .collect::<Result<_>>()?,
        };
        Ok(NormAccumulator {
            micro,
            epsilon,
            to_vertices: Interpolator::new(reference, micro.vertices(), MissPolicy::Error)?,
            to_interface: Interpolator::new(reference, &gamma, MissPolicy::Error)?,
            gradients: TriangleSampler::new(reference, &bary)?,
            corrector,
            elements: (0..micro.n_triangles())
                .map(|t| p1_gradients(micro.triangle_points(t)))
                .collect(),
            last_time: None,
            last_rate: [0.0; 2],
            sup: [0.0; 3],
            integral: [0.0; 2],
        })
    }

    fn gradient_defect(&self, fine: &[f64], coarse: &[f64]) -> f64 {
        let g0 = self.gradients.gradients(coarse);
        let tris = self.micro.triangles();
        let mut s = 0.0;
        for (t, (area, g)) in self.elements.iter().enumerate() {
            let tri = tris[t];
            let mut ge = [0.0; 2];
            for k in 0..3 {
                ge[0] += fine[tri[k]] * g[k][0];
                ge[1] += fine[tri[k]] * g[k][1];
            }
            let c = &self.corrector[t];
            let d0 = ge[0] - (c[0][0] * g0[t][0] + c[0][1] * g0[t][1]);
            let d1 = ge[1] - (c[1][0] * g0[t][0] + c[1][1] * g0[t][1]);
            s += area * (d0 * d0 + d1 * d1);
        }
        s
    }

    fn volume_defect(&self, fine: &[f64], coarse: &[f64]) -> Result<f64> {
        let c = self.to_vertices.apply(coarse);
        let diff = fine.iter().zip(&c).map(|(a, b)| a - b).collect();
        Ok(
            field_norms(self.micro, &NodalField::volume(self.micro, diff)?)?
                .l2_volume
                .unwrap_or(0.0),
        )
    }

    /// Adds one sample: micro fields `u, v` (volume) and `w` (interface),
    /// reference fields `u0, v0, w0` on the reference mesh.
    pub fn add_sample(
        &mut self,
        time: f64,
        micro: [&[f64]; 3],
        reference: [&[f64]; 3],
    ) -> Result<()> {
        if let Some(t) = self.last_time {
            if !(time > t) {
                return Err(Error::SampleMismatch(format!(
                    "sample times must increase, got {time} after {t}"
                )));
            }
        }
        self.sup[0] = self.sup[0].max(self.volume_defect(micro[0], reference[0])?);
        self.sup[1] = self.sup[1].max(self.volume_defect(micro[1], reference[1])?);
        let w0 = self.to_interface.apply(reference[2]);
        let dw: Vec<f64> = micro[2].iter().zip(&w0).map(|(a, b)| a - b).collect();
        let surf = field_norms(self.micro, &NodalField::surface(self.micro, dw)?)?.l2_surface;
        self.sup[2] = self.sup[2].max(self.epsilon.sqrt() * surf);

        let rate = [
            self.gradient_defect(micro[0], reference[0]),
            self.gradient_defect(micro[1], reference[1]),
        ];
        if let Some(t) = self.last_time {
            for k in 0..2 {
                self.integral[k] += 0.5 * (time - t) * (self.last_rate[k] + rate[k]);
            }
        }
        self.last_rate = rate;
        self.last_time = Some(time);
        Ok(())
    }

    pub fn report(&self) -> NormReport {
        NormReport {
            epsilon: self.epsilon,
            norm_u_c_l2: self.sup[0],
            norm_grad_u: self.integral[0].sqrt(),
            norm_v_c_l2: self.sup[1],
            norm_grad_v: self.integral[1].sqrt(),
            norm_w_c_l2: self.sup[2],
            ..Default::default()
        }
    }
}

/// `max_t |E_a(t) - E_b(t)|` over samples taken at identical times.
pub fn energy_sup_diff(a: &Trace, b: &Trace) -> Result<f64> {
    if a.times != b.times {
        return Err(Error::SampleMismatch(format!(
            "energy series have {} and {} samples at different times",
            a.len(),
            b.len()
        )));
    }
    Ok(a.energy_dissipation
        .iter()
        .zip(&b.energy_dissipation)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Runs the micro model and compares it with a stored macro run.
pub fn corrector_norms(
    micro: &MicroSetup,
    macro_run: &MacroRun,
    macro_mesh: &Mesh2D,
    cell: &CellSolution,
    cfg: &RunConfig,
) -> Result<(NormReport, MicroRun)> {
    if macro_run.snapshots.len() != macro_run.trace.len() {
        return Err(Error::SampleMismatch(
            "macro run was stored without snapshots".into(),
        ));
    }
    let origin = [cfg.geometry.domain.x_min, cfg.geometry.domain.y_min];
    let eps = micro.params.epsilon;
    let mut acc = NormAccumulator::new(
        &micro.mesh,
        macro_mesh,
        CorrectorField::Cell { cell, origin },
        eps,
    )?;
    let run = run_micro_observed(
        micro,
        &cfg.initial,
        &cfg.trace,
        |sample, st: &MicroState| {
            let snap = macro_run.snapshots.get(sample.index).ok_or_else(|| {
                Error::SampleMismatch(format!("no macro sample {}", sample.index))
            })?;
            if snap.step != sample.step {
                return Err(Error::SampleMismatch(format!(
                    "macro sample {} is at step {}, micro at step {}",
                    sample.index, snap.step, sample.step
                )));
            }
            acc.add_sample(
                sample.time,
                [&st.u, &st.v, &st.w],
                [&snap.u, &snap.v, &snap.w],
            )
        },
    )?;
    let mut report = acc.report();
    report.energy_sup_diff = energy_sup_diff(&run.trace, &macro_run.trace)?;
    report.wall_time_micro = run.wall_time;
    report.wall_time_macro = macro_run.wall_time;
    Ok((report, run))
}

/// Left side `eps int_{Gamma_eps} w_I^2` for several scales and its limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityTable {
    pub rows: Vec<(f64, f64)>,
    /// `|Gamma| int_Omega w_I^2 dx`
    pub limit: f64,
}

pub fn initial_compatibility(
    eps_list: &[f64],
    w_init: &Polynomial,
    cfg: &RunConfig,
    template: &Mesh2D,
    interface_measure: f64,
) -> Result<CompatibilityTable> {
    let rows = eps_list
        .iter()
        .map(|&eps| {
            let mesh = build_perforated_mesh(cfg.geometry.domain, eps, template)?;
            let w: Vec<f64> = mesh.vertices().iter().map(|&p| w_init.eval(p)).collect();
            let m = assemble_interface_mass(&mesh, TagKind::Interface, false)?;
            Ok((eps, eps * m.quadratic(&w)))
        })
        .collect::<Result<Vec<_>>>()?;
    let macro_mesh = cfg.macro_mesh()?;
    let w: Vec<f64> = macro_mesh
        .vertices()
        .iter()
        .map(|&p| w_init.eval(p))
        .collect();
    let limit = interface_measure * assemble_mass(&macro_mesh).quadratic(&w);
    Ok(CompatibilityTable { rows, limit })
}

/// Cell solution, macro setup and the stored macro run shared by all scales.
pub struct Reference {
    pub cell: CellSolution,
    pub coeffs: HomogenizedCoefficients,
    pub setup: MacroSetup,
    pub run: MacroRun,
}

pub fn prepare_reference(cfg: &RunConfig) -> Result<Reference> {
    let cell = cfg.solve_cell()?;
    let coeffs = HomogenizedCoefficients::from_cell(&cell, &cfg.params);
    let setup = cfg.macro_setup(coeffs)?;
    let run = run_macro(&setup, &cfg.initial, &cfg.trace, true)?;
    Ok(Reference {
        cell,
        coeffs,
        setup,
        run,
    })
}

/// Result for one scale of the study.
pub struct ScaleResult {
    pub report: NormReport,
    pub micro: MicroRun,
    pub n_vertices: usize,
}

/// Runs every scale against one shared reference. `on_row` is called after
/// each completed scale.
pub fn convergence_study<F>(
    cfg: &RunConfig,
    eps_list: &[f64],
    mut on_row: F,
) -> Result<(Reference, Vec<ScaleResult>)>
where
    F: FnMut(&ScaleResult) -> Result<()>,
{
    if eps_list.is_empty() {
        return Err(Error::EmptyStudy);
    }
    for &eps in eps_list {
        crate::mesh::lattice_counts(cfg.geometry.domain, eps)?;
    }
    let reference = prepare_reference(cfg)?;
    let template = cfg.micro_template()?;
    let mut rows = Vec::new();
    for &eps in eps_list {
        let setup = cfg.micro_setup(eps, &template)?;
        let (report, micro) = corrector_norms(
            &setup,
            &reference.run,
            &reference.setup.mesh,
            &reference.cell,
            cfg,
        )?;
        let row = ScaleResult {
            report,
            micro,
            n_vertices: setup.mesh.n_vertices(),
        };
        on_row(&row)?;
        rows.push(row);
    }
    Ok((reference, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::ModelParams;
    use crate::micro::run_micro;
    use crate::trace::TraceRequest;

    fn small_config() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.params.t_final = 0.1;
        cfg.geometry.n_gamma = 32;
        cfg.geometry.h_cell = 0.1;
        cfg.geometry.h_micro = 0.2;
        cfg.geometry.h_macro = 0.1;
        cfg
    }

    #[test]
    fn self_comparison_is_zero() {
        let cfg = small_config();
        let template = cfg.micro_template().unwrap();
        let setup = cfg.micro_setup(0.2, &template).unwrap();
        let mut acc =
            NormAccumulator::new(&setup.mesh, &setup.mesh, CorrectorField::Identity, 0.2).unwrap();
        // interface values of a volume field restricted to the interface
        let gamma = setup.mesh.interface_vertices();
        let mut times = Vec::new();
        crate::micro::run_micro_observed(&setup, &cfg.initial, &cfg.trace, |s, st| {
            let mut wfull = vec![0.0; setup.mesh.n_vertices()];
            for (k, &i) in gamma.iter().enumerate() {
                wfull[i] = st.w[k];
            }
            times.push(s.time);
            acc.add_sample(s.time, [&st.u, &st.v, &st.w], [&st.u, &st.v, &wfull])
        })
        .unwrap();
        let r = acc.report();
        assert!(times.len() > 2);
        assert_eq!(r.norm_u_c_l2, 0.0);
        assert_eq!(r.norm_v_c_l2, 0.0);
        assert_eq!(r.norm_w_c_l2, 0.0);
        assert!(r.norm_grad_u < 1e-10 && r.norm_grad_v < 1e-10, "{r:?}");
    }

    #[test]
    fn energy_formulas_agree_at_start() {
        let cfg = small_config();
        let template = cfg.micro_template().unwrap();
        let setup = cfg.micro_setup(0.2, &template).unwrap();
        let run = run_micro(&setup, &cfg.initial, &cfg.trace).unwrap();
        let e = micro_energy(&run.trace);
        assert_eq!(e.via_dissipation[0], e.via_flux[0]);
        assert!(e.max_relative_gap() < 0.01);
    }

    #[test]
    fn frozen_precipitate_keeps_flux_energy() {
        let mut cfg = small_config();
        cfg.params = ModelParams {
            k_f: 0.0,
            k_d: 1e-300,
            ..cfg.params
        };
        let template = cfg.micro_template().unwrap();
        let setup = cfg.micro_setup(0.2, &template).unwrap();
        let run = run_micro(&setup, &cfg.initial, &TraceRequest::default()).unwrap();
        let e = micro_energy(&run.trace);
        assert!(e.via_flux.iter().all(|&x| x == e.via_flux[0]));
    }

    #[test]
    fn compatibility_of_zero_and_one() {
        let cfg = small_config();
        let template = cfg.micro_template().unwrap();
        let cell = cfg.solve_cell().unwrap();
        let zero = initial_compatibility(
            &[0.2],
            &Polynomial::constant(0.0),
            &cfg,
            &template,
            cell.interface_measure,
        )
        .unwrap();
        assert_eq!(zero.rows[0].1, 0.0);
        assert_eq!(zero.limit, 0.0);
        let one = initial_compatibility(
            &[0.2, 0.1],
            &Polynomial::constant(1.0),
            &cfg,
            &template,
            cell.interface_measure,
        )
        .unwrap();
        let perimeter = 2.0 * 32.0 * 0.25 * (std::f64::consts::PI / 32.0).sin();
        for (_, v) in &one.rows {
            assert!((v - 1.2 * perimeter).abs() < 1e-12);
        }
    }

    #[test]
    fn study_rejects_empty_list() {
        let cfg = small_config();
        assert!(matches!(
            convergence_study(&cfg, &[], |_| Ok(())),
            Err(Error::EmptyStudy)
        ));
    }

    #[test]
    fn single_scale_study_matches_direct_call() {
        let cfg = small_config();
        let (reference, rows) = convergence_study(&cfg, &[0.2], |_| Ok(())).unwrap();
        let template = cfg.micro_template().unwrap();
        let setup = cfg.micro_setup(0.2, &template).unwrap();
        let (direct, _) = corrector_norms(
            &setup,
            &reference.run,
            &reference.setup.mesh,
            &reference.cell,
            &cfg,
        )
        .unwrap();
        let a = rows[0].report.values();
        let b = direct.values();
        // wall times differ, everything else is deterministic
        assert_eq!(a[..7], b[..7]);
        assert!(a.iter().all(|x| x.is_finite() && *x >= 0.0));
    }
}
