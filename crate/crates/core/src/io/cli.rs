//! Command line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::output::{OutputDir, Plot, Series};
use crate::cell::{effective_tensor, CellSolution, EffectiveTensor};
use crate::homogenized::{run_macro_observed, HomogenizedCoefficients, MacroRun};
use crate::mesh::{Mesh2D, Point, TagKind};
use crate::micro::{run_micro_observed, MicroRun, MicroSetup};
use crate::trace::Trace;
use crate::verify::{
    convergence_study, initial_compatibility, CompatibilityTable, NormReport, Reference,
    ScaleResult,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "porehom",
    version,
    about = "Perforated-domain reactive transport and its homogenized limit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_point(s: &str) -> std::result::Result<Point, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let x = x.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let y = y.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok([x, y])
}

fn parse_tensor(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    <[f64; 3]>::try_from(v).map_err(|_| "expected a11,a12,a22".to_string())
}

#[derive(Debug, Args)]
struct Common {
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// Template edge length of the perforated mesh, in cell units.
    #[arg(long = "h-micro")]
    h_micro: Option<f64>,
    #[arg(long = "h-macro")]
    h_macro: Option<f64>,
    #[arg(long = "h-cell")]
    h_cell: Option<f64>,
    #[arg(long = "n-gamma")]
    n_gamma: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Traced point `x,y`; repeat for several points. Replaces the configured list.
    #[arg(long = "trace-point", value_parser = parse_point)]
    trace_point: Vec<Point>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build and export every mesh of a run.
    Mesh {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Solve the cell problems and report the effective tensors.
    Cell {
        #[command(flatten)]
        common: Common,
    },
    /// Run the two-scale model.
    Micro {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Run the homogenized model.
    Macro {
        #[command(flatten)]
        common: Common,
        /// Coefficients from a previous `cell` report instead of solving the cell problems.
        #[arg(long = "cell-report", conflicts_with = "tensor")]
        cell_report: Option<PathBuf>,
        /// Tensor override `a11,a12,a22` for species 1; species 2 is scaled by d2/d1.
        #[arg(long, value_parser = parse_tensor)]
        tensor: Option<[f64; 3]>,
    },
    /// Compare one two-scale run with the homogenized run.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Compare several scales with one homogenized run.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Comma separated scales; defaults to `study.eps`.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            1
        }
    }
}

fn load(common: &Common, eps: Option<f64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(v) = eps {
        cfg.params.epsilon = v;
    }
    if let Some(v) = common.dt {
        cfg.params.dt = v;
    }
    if let Some(v) = common.t_final {
        cfg.params.t_final = v;
    }
    if let Some(v) = common.h_micro {
        cfg.geometry.h_micro = v;
    }
    if let Some(v) = common.h_macro {
        cfg.geometry.h_macro = v;
    }
    if let Some(v) = common.h_cell {
        cfg.geometry.h_cell = v;
    }
    if let Some(v) = common.n_gamma {
        cfg.geometry.n_gamma = v;
    }
    if let Some(v) = &common.out {
        cfg.output_dir = v.clone();
    }
    if !common.trace_point.is_empty() {
        cfg.trace.points = common.trace_point.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Mesh { common, eps } => cmd_mesh(&load(&common, eps)?),
        Command::Cell { common } => cmd_cell(&load(&common, None)?),
        Command::Micro { common, eps } => cmd_micro(&load(&common, eps)?),
        Command::Macro {
            common,
            cell_report,
            tensor,
        } => cmd_macro(
            &load(&common, None)?,
            cell_report.as_deref(),
            tensor.as_ref(),
        ),
        Command::Verify { common, eps } => {
            let cfg = load(&common, eps)?;
            let eps = cfg.params.epsilon;
            run_study(&cfg, &[eps]).map(|_| ())
        }
        Command::Converge { common, eps } => {
            let cfg = load(&common, None)?;
            let list = if eps.is_empty() {
                cfg.study_eps.clone()
            } else {
                eps
            };
            run_study(&cfg, &list).map(|_| ())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub n_vertices: usize,
    pub n_triangles: usize,
    pub area: f64,
    pub interface_length: f64,
    pub outer_length: f64,
    pub max_edge: f64,
}

impl MeshStats {
    pub fn of(mesh: &Mesh2D) -> Self {
        MeshStats {
            n_vertices: mesh.n_vertices(),
            n_triangles: mesh.n_triangles(),
            area: mesh.total_area(),
            interface_length: mesh.boundary_length(TagKind::Interface),
            outer_length: mesh.boundary_length(TagKind::Outer),
            max_edge: mesh.max_edge_length(),
        }
    }
}

fn cmd_mesh(cfg: &RunConfig) -> Result<()> {
    let mut out = OutputDir::create(&cfg.output_dir)?;
    let cell = cfg.cell_template()?;
    let template = cfg.micro_template()?;
    let micro =
        crate::mesh::build_perforated_mesh(cfg.geometry.domain, cfg.params.epsilon, &template)?;
    let macro_mesh = cfg.macro_mesh()?;
    out.write_vtk("cell_mesh.vtk", "unit cell", &cell, &[])?;
    out.write_vtk("micro_mesh.vtk", "perforated domain", &micro, &[])?;
    out.write_vtk("macro_mesh.vtk", "macro domain", &macro_mesh, &[])?;
    let report = serde_json::json!({
        "epsilon": cfg.params.epsilon,
        "cell": MeshStats::of(&cell),
        "micro": MeshStats::of(&micro),
        "macro": MeshStats::of(&macro_mesh),
    });
    out.write_json("mesh_report.json", &report)?;
    out.finish()?;
    Ok(())
}

/// Contents of `cell_report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub a: EffectiveTensor,
    pub b: EffectiveTensor,
    pub d1: f64,
    pub d2: f64,
    pub porosity: f64,
    pub interface_measure: f64,
    pub rhs_compatibility: [f64; 2],
    pub n_gamma: usize,
    pub h_cell: f64,
    pub n_vertices: usize,
    pub wall_time: f64,
}

impl CellReport {
    pub fn coefficients(&self) -> HomogenizedCoefficients {
        HomogenizedCoefficients {
            a: self.a,
            b: self.b,
            porosity: self.porosity,
            interface_measure: self.interface_measure,
        }
    }
}

fn cell_report(cfg: &RunConfig, sol: &CellSolution, wall_time: f64) -> CellReport {
    CellReport {
        a: effective_tensor(sol, cfg.params.d1),
        b: effective_tensor(sol, cfg.params.d2),
        d1: cfg.params.d1,
        d2: cfg.params.d2,
        porosity: sol.porosity,
        interface_measure: sol.interface_measure,
        rhs_compatibility: sol.rhs_compatibility,
        n_gamma: cfg.geometry.n_gamma,
        h_cell: cfg.geometry.h_cell,
        n_vertices: sol.mesh.n_vertices(),
        wall_time,
    }
}

fn cmd_cell(cfg: &RunConfig) -> Result<()> {
    let mut out = OutputDir::create(&cfg.output_dir)?;
    let start = Instant::now();
    let sol = cfg.solve_cell()?;
    let report = cell_report(cfg, &sol, start.elapsed().as_secs_f64());
    out.write_json("cell_report.json", &report)?;
    out.write_vtk(
        "cell_correctors.vtk",
        "cell correctors",
        &sol.mesh,
        &[("l1", &sol.l[0]), ("l2", &sol.l[1])],
    )?;
    out.finish()?;
    Ok(())
}

fn surface_to_volume(n: usize, nodes: &[usize], values: &[f64]) -> Vec<f64> {
    let mut full = vec![0.0; n];
    for (&i, &x) in nodes.iter().zip(values) {
        full[i] = x;
    }
    full
}

/// Summary of a single run written as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: String,
    pub epsilon: Option<f64>,
    pub n_vertices: usize,
    pub n_steps: usize,
    pub n_samples: usize,
    pub wall_time: f64,
    pub drift_total_u: f64,
    pub drift_total_v: f64,
    pub min_u: f64,
    pub min_v: f64,
    pub min_w: f64,
    pub energy_gap: f64,
}

fn summary(
    model: &str,
    epsilon: Option<f64>,
    n_vertices: usize,
    trace: &Trace,
    wall_time: f64,
    n_steps: usize,
) -> RunSummary {
    let fold_min = |s: &[f64]| s.iter().copied().fold(f64::INFINITY, f64::min);
    RunSummary {
        model: model.into(),
        epsilon,
        n_vertices,
        n_steps,
        n_samples: trace.len(),
        wall_time,
        drift_total_u: Trace::relative_drift(&trace.total_u),
        drift_total_v: Trace::relative_drift(&trace.total_v),
        min_u: fold_min(&trace.min_u),
        min_v: fold_min(&trace.min_v),
        min_w: fold_min(&trace.min_w),
        energy_gap: crate::verify::micro_energy(trace).max_relative_gap(),
    }
}

fn trace_plot(title: &str, traces: &[(&str, &Trace)]) -> Plot {
    let mut series = Vec::new();
    for (label, t) in traces {
        for (k, p) in t.points.iter().enumerate() {
            let at = format!("({}, {})", p.point[0], p.point[1]);
            series.push(Series {
                name: format!("{label} u p{k} {at}"),
                x: t.times.clone(),
                y: p.u.clone(),
            });
            series.push(Series {
                name: format!("{label} v p{k} {at}"),
                x: t.times.clone(),
                y: p.v.clone(),
            });
        }
    }
    Plot {
        title: title.into(),
        x_label: "t".into(),
        y_label: "concentration".into(),
        series,
    }
}

fn energy_plot(title: &str, traces: &[(&str, &Trace)]) -> Plot {
    let mut series = Vec::new();
    for (label, t) in traces {
        series.push(Series {
            name: format!("{label} (dissipation)"),
            x: t.times.clone(),
            y: t.energy_dissipation.clone(),
        });
        series.push(Series {
            name: format!("{label} (interface work)"),
            x: t.times.clone(),
            y: t.energy_flux.clone(),
        });
    }
    Plot {
        title: title.into(),
        x_label: "t".into(),
        y_label: "energy".into(),
        series,
    }
}

fn micro_run_with_snapshots(
    setup: &MicroSetup,
    cfg: &RunConfig,
    out: &mut OutputDir,
) -> Result<MicroRun> {
    let n = setup.mesh.n_vertices();
    let mut k = 0;
    run_micro_observed(setup, &cfg.initial, &cfg.trace, |s, st| {
        if s.regular {
            let w = surface_to_volume(n, &setup.gamma_nodes, &st.w);
            let title = format!("micro t = {}", s.time);
            out.write_vtk(
                &format!("micro_{k:04}.vtk"),
                &title,
                &setup.mesh,
                &[("u", &st.u), ("v", &st.v), ("w", &w)],
            )?;
            k += 1;
        }
        Ok(())
    })
}

fn cmd_micro(cfg: &RunConfig) -> Result<()> {
    let mut out = OutputDir::create(&cfg.output_dir)?;
    let template = cfg.micro_template()?;
    let setup = cfg.micro_setup(cfg.params.epsilon, &template)?;
    let run = micro_run_with_snapshots(&setup, cfg, &mut out)?;
    out.write_trace_csv("micro_trace.csv", &run.trace)?;
    let s = summary(
        "micro",
        Some(cfg.params.epsilon),
        setup.mesh.n_vertices(),
        &run.trace,
        run.wall_time,
        cfg.params.n_steps(),
    );
    out.write_json("micro_summary.json", &s)?;
    out.write_svg(
        "micro_trace.svg",
        &trace_plot("two-scale point traces", &[("micro", &run.trace)]),
    )?;
    out.write_svg(
        "micro_energy.svg",
        &energy_plot("two-scale energy", &[("micro", &run.trace)]),
    )?;
    out.finish()?;
    Ok(())
}

fn coefficients_for(
    cfg: &RunConfig,
    cell_report: Option<&Path>,
    tensor: Option<&[f64; 3]>,
) -> Result<HomogenizedCoefficients> {
    if let Some(path) = cell_report {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let r: CellReport = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        return Ok(r.coefficients());
    }
    let sol = cfg.solve_cell()?;
    let mut c = HomogenizedCoefficients::from_cell(&sol, &cfg.params);
    if let Some(&[a11, a12, a22]) = tensor {
        let a = [[a11, a12], [a12, a22]];
        let s = cfg.params.d2 / cfg.params.d1;
        let b = [[s * a11, s * a12], [s * a12, s * a22]];
        c.a = EffectiveTensor {
            matrix: a,
            asymmetry: 0.0,
        };
        c.b = EffectiveTensor {
            matrix: b,
            asymmetry: 0.0,
        };
    }
    Ok(c)
}

fn cmd_macro(cfg: &RunConfig, cell_report: Option<&Path>, tensor: Option<&[f64; 3]>) -> Result<()> {
    let mut out = OutputDir::create(&cfg.output_dir)?;
    let coeffs = coefficients_for(cfg, cell_report, tensor)?;
    let setup = cfg.macro_setup(coeffs)?;
    let mut k = 0;
    let run: MacroRun = run_macro_observed(&setup, &cfg.initial, &cfg.trace, false, |s, st| {
        if s.regular {
            let title = format!("macro t = {}", s.time);
            out.write_vtk(
                &format!("macro_{k:04}.vtk"),
                &title,
                &setup.mesh,
                &[("u", &st.u), ("v", &st.v), ("w", &st.w)],
            )?;
            k += 1;
        }
        Ok(())
    })?;
    out.write_trace_csv("macro_trace.csv", &run.trace)?;
    let s = summary(
        "macro",
        None,
        setup.mesh.n_vertices(),
        &run.trace,
        run.wall_time,
        cfg.params.n_steps(),
    );
    out.write_json("macro_summary.json", &s)?;
    out.write_json("coefficients.json", &coeffs)?;
    out.write_svg(
        "macro_trace.svg",
        &trace_plot("homogenized point traces", &[("macro", &run.trace)]),
    )?;
    out.write_svg(
        "macro_energy.svg",
        &energy_plot("homogenized energy", &[("macro", &run.trace)]),
    )?;
    out.finish()?;
    Ok(())
}

/// Contents of `report.json` for `verify` and `converge`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub coefficients: HomogenizedCoefficients,
    pub rows: Vec<NormReport>,
    /// `wall_time_macro / wall_time_micro` per row.
    pub wall_time_ratio: Vec<f64>,
    /// Largest relative gap between the two energy formulas, per row.
    pub energy_gap_micro: Vec<f64>,
    pub energy_gap_macro: f64,
    pub n_vertices_micro: Vec<usize>,
    pub n_vertices_macro: usize,
    pub compatibility: CompatibilityTable,
}

fn write_norms(out: &mut OutputDir, rows: &[NormReport]) -> Result<()> {
    let data: Vec<Vec<f64>> = rows.iter().map(|r| r.values().to_vec()).collect();
    out.write_csv("norms.csv", &NormReport::COLUMNS, &data)?;
    Ok(())
}

fn write_energies(out: &mut OutputDir, eps: f64, micro: &Trace, reference: &Trace) -> Result<()> {
    let rows: Vec<Vec<f64>> = (0..micro.len())
        .map(|i| {
            vec![
                micro.times[i],
                micro.energy_dissipation[i],
                micro.energy_flux[i],
                reference.energy_dissipation[i],
                reference.energy_flux[i],
            ]
        })
        .collect();
    out.write_csv(
        &format!("energies_{eps:?}.csv"),
        &[
            "time",
            "micro_dissipation",
            "micro_flux",
            "macro_dissipation",
            "macro_flux",
        ],
        &rows,
    )?;
    Ok(())
}

/// Everything `converge` computes, after its files have been written.
pub struct StudyOutcome {
    pub reference: Reference,
    pub rows: Vec<ScaleResult>,
    pub report: StudyReport,
}

/// Runs the convergence study and writes its outputs under `cfg.output_dir`.
pub fn run_study(cfg: &RunConfig, eps_list: &[f64]) -> Result<StudyOutcome> {
    let mut out = OutputDir::create(&cfg.output_dir)?;
    let mut done: Vec<NormReport> = Vec::new();
    let (reference, rows): (Reference, Vec<ScaleResult>) =
        convergence_study(cfg, eps_list, |row| {
            done.push(row.report);
            write_norms(&mut out, &done)
        })?;
    let macro_trace = &reference.run.trace;
    out.write_trace_csv("macro_trace.csv", macro_trace)?;
    for row in &rows {
        let eps = row.report.epsilon;
        let t = &row.micro.trace;
        write_energies(&mut out, eps, t, macro_trace)?;
        out.write_trace_csv(&format!("micro_trace_{eps:?}.csv"), t)?;
        out.write_svg(
            &format!("energy_{eps:?}.svg"),
            &energy_plot(
                &format!("energy, eps = {eps}"),
                &[("micro", t), ("macro", macro_trace)],
            ),
        )?;
        out.write_svg(
            &format!("traces_{eps:?}.svg"),
            &trace_plot(
                &format!("point traces, eps = {eps}"),
                &[("micro", t), ("macro", macro_trace)],
            ),
        )?;
    }
    let template = cfg.micro_template()?;
    let compatibility = initial_compatibility(
        eps_list,
        &cfg.initial.w,
        cfg,
        &template,
        reference.cell.interface_measure,
    )?;
    let report = StudyReport {
        coefficients: reference.coeffs,
        rows: rows.iter().map(|r| r.report).collect(),
        wall_time_ratio: rows
            .iter()
            .map(|r| r.report.wall_time_macro / r.report.wall_time_micro)
            .collect(),
        energy_gap_micro: rows
            .iter()
            .map(|r| crate::verify::micro_energy(&r.micro.trace).max_relative_gap())
            .collect(),
        energy_gap_macro: crate::verify::macro_energy(macro_trace).max_relative_gap(),
        n_vertices_micro: rows.iter().map(|r| r.n_vertices).collect(),
        n_vertices_macro: reference.setup.mesh.n_vertices(),
        compatibility,
    };
    out.write_json("report.json", &report)?;
    out.finish()?;
    Ok(StudyOutcome {
        reference,
        rows,
        report,
    })
}
