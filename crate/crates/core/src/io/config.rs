//! Line-oriented run configuration: `section.key = value`, `#` comments.
//!
//! Missing keys keep their defaults. Unknown or repeated keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::cell::{solve_cell_problems, CellSolution};
use crate::expr::{InitialData, Polynomial};
use crate::fem::CgOptions;
use crate::homogenized::{HomogenizedCoefficients, MacroSetup};
use crate::kinetics::ModelParams;
use crate::mesh::{
    build_macro_mesh, build_perforated_mesh, build_unit_cell_mesh, lattice_counts, Inclusion,
    Mesh2D, Point, Rect,
};
use crate::micro::MicroSetup;
use crate::trace::TraceRequest;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GeometryConfig {
    pub domain: Rect,
    pub radius: f64,
    /// `false` meshes cells without an inclusion.
    pub inclusion: bool,
    pub n_gamma: usize,
    /// Target edge length of the cell-problem mesh.
    pub h_cell: f64,
    /// Target edge length of the tiled template, in cell units.
    pub h_micro: f64,
    pub h_macro: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            domain: Rect::new(0.0, 1.2, 0.0, 1.0),
            radius: 0.25,
            inclusion: true,
            n_gamma: 64,
            h_cell: 0.02,
            h_micro: 0.1,
            h_macro: 0.0125,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    /// Model constants; `epsilon`, `dt`, `t_final` and `sample_stride` are
    /// read from `geometry.epsilon` and the `run` section.
    pub params: ModelParams,
    pub initial: InitialData,
    pub trace: TraceRequest,
    pub output_dir: PathBuf,
    pub study_eps: Vec<f64>,
    pub solver: CgOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: GeometryConfig::default(),
            params: ModelParams::default(),
            initial: InitialData::default(),
            trace: TraceRequest::default(),
            output_dir: PathBuf::from("out"),
            study_eps: vec![0.2, 0.1],
            solver: CgOptions {
                rel_tol: 1e-12,
                max_iter: 20_000,
            },
        }
    }
}

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| format!("`{}` is not a number", v.trim()))
}

fn parse_usize(v: &str) -> std::result::Result<usize, String> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| format!("`{}` is not a non-negative integer", v.trim()))
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(parse_f64)
        .collect()
}

fn parse_points(v: &str) -> std::result::Result<Vec<Point>, String> {
    v.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|p| {
            let c: Vec<f64> = p
                .split_whitespace()
                .map(parse_f64)
                .collect::<std::result::Result<_, _>>()?;
            match c.as_slice() {
                [x, y] => Ok([*x, *y]),
                _ => Err(format!("trace point `{}` needs two coordinates", p.trim())),
            }
        })
        .collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}

const KEYS: &[&str] = &[
    "geometry.domain",
    "geometry.epsilon",
    "geometry.radius",
    "geometry.inclusion",
    "geometry.n_gamma",
    "geometry.h_cell",
    "geometry.h_micro",
    "geometry.h_macro",
    "params.d1",
    "params.d2",
    "params.k_f",
    "params.k_d",
    "params.k1",
    "params.k2",
    "params.delta",
    "initial.u",
    "initial.v",
    "initial.w",
    "run.dt",
    "run.t_final",
    "run.sample_stride",
    "run.burst_end",
    "run.burst_stride",
    "run.trace_points",
    "output.dir",
    "study.eps",
    "solver.rel_tol",
    "solver.max_iter",
];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let perr = |message: String| Error::ConfigParse { line, message };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| perr(format!("expected `key = value`, got `{content}`")))?;
            let key = key.trim();
            let value = value.trim();
            if !KEYS.contains(&key) {
                return Err(perr(format!("unknown key `{key}`")));
            }
            if !seen.insert(key.to_string()) {
                return Err(perr(format!("key `{key}` given twice")));
            }
            cfg.set(key, value).map_err(perr)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let g = &mut self.geometry;
        let p = &mut self.params;
        match key {
            "geometry.domain" => {
                let c = parse_list(v)?;
                let [x0, x1, y0, y1] = c[..] else {
                    return Err("domain needs x_min, x_max, y_min, y_max".into());
                };
                g.domain = Rect::new(x0, x1, y0, y1);
            }
            "geometry.epsilon" => p.epsilon = parse_f64(v)?,
            "geometry.radius" => g.radius = parse_f64(v)?,
            "geometry.inclusion" => {
                g.inclusion = match v {
                    "true" => true,
                    "false" => false,
                    _ => return Err(format!("`{v}` is not true or false")),
                }
            }
            "geometry.n_gamma" => g.n_gamma = parse_usize(v)?,
            "geometry.h_cell" => g.h_cell = parse_f64(v)?,
            "geometry.h_micro" => g.h_micro = parse_f64(v)?,
            "geometry.h_macro" => g.h_macro = parse_f64(v)?,
            "params.d1" => p.d1 = parse_f64(v)?,
            "params.d2" => p.d2 = parse_f64(v)?,
            "params.k_f" => p.k_f = parse_f64(v)?,
            "params.k_d" => p.k_d = parse_f64(v)?,
            "params.k1" => p.k1 = parse_f64(v)?,
            "params.k2" => p.k2 = parse_f64(v)?,
            "params.delta" => p.delta = parse_f64(v)?,
            "initial.u" | "initial.v" | "initial.w" => {
                let poly = Polynomial::parse(v).map_err(|e| e.to_string())?;
                match key {
                    "initial.u" => self.initial.u = poly,
                    "initial.v" => self.initial.v = poly,
                    _ => self.initial.w = poly,
                }
            }
            "run.dt" => p.dt = parse_f64(v)?,
            "run.t_final" => p.t_final = parse_f64(v)?,
            "run.sample_stride" => p.sample_stride = parse_usize(v)?,
            "run.burst_end" => self.trace.burst_end = parse_f64(v)?,
            "run.burst_stride" => self.trace.burst_stride = parse_usize(v)?,
            "run.trace_points" => self.trace.points = parse_points(v)?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            "study.eps" => self.study_eps = parse_list(v)?,
            "solver.rel_tol" => self.solver.rel_tol = parse_f64(v)?,
            "solver.max_iter" => self.solver.max_iter = parse_usize(v)?,
            _ => unreachable!("key list and setter disagree on `{key}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigValidation(m));
        self.params
            .validate()
            .map_err(|e| Error::ConfigValidation(e.to_string()))?;
        self.trace
            .validate()
            .map_err(|e| Error::ConfigValidation(e.to_string()))?;
        let g = &self.geometry;
        let d = g.domain;
        if !(d.x_max > d.x_min && d.y_max > d.y_min) {
            return bad(format!("domain {d:?} is empty"));
        }
        if g.inclusion && !(g.radius > 0.0 && g.radius < 0.45) {
            return bad(format!("radius must lie in (0, 0.45), got {}", g.radius));
        }
        if g.n_gamma < 16 || g.n_gamma % 8 != 0 {
            return bad(format!(
                "n_gamma must be a multiple of 8 and at least 16, got {}",
                g.n_gamma
            ));
        }
        for (name, h) in [
            ("h_cell", g.h_cell),
            ("h_micro", g.h_micro),
            ("h_macro", g.h_macro),
        ] {
            if !(h > 0.0) {
                return bad(format!("{name} must be positive, got {h}"));
            }
        }
        lattice_counts(d, self.params.epsilon)
            .map_err(|e| Error::ConfigValidation(e.to_string()))?;
        if let Some(p) = self.trace.points.iter().find(|&&p| !d.contains(p)) {
            return bad(format!(
                "trace point ({}, {}) lies outside the domain",
                p[0], p[1]
            ));
        }
        for &e in &self.study_eps {
            if !(e > 0.0) {
                return bad(format!("study scale must be positive, got {e}"));
            }
        }
        if !(self.solver.rel_tol > 0.0) || self.solver.max_iter == 0 {
            return bad("solver tolerance and iteration cap must be positive".into());
        }
        Ok(())
    }

    /// Text form that parses back to an identical configuration.
    pub fn to_text(&self) -> String {
        let g = &self.geometry;
        let p = &self.params;
        let d = g.domain;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv(
            "geometry.domain",
            fmt_list(&[d.x_min, d.x_max, d.y_min, d.y_max]),
        );
        kv("geometry.epsilon", format!("{:?}", p.epsilon));
        kv("geometry.radius", format!("{:?}", g.radius));
        kv("geometry.inclusion", g.inclusion.to_string());
        kv("geometry.n_gamma", g.n_gamma.to_string());
        kv("geometry.h_cell", format!("{:?}", g.h_cell));
        kv("geometry.h_micro", format!("{:?}", g.h_micro));
        kv("geometry.h_macro", format!("{:?}", g.h_macro));
        kv("params.d1", format!("{:?}", p.d1));
        kv("params.d2", format!("{:?}", p.d2));
        kv("params.k_f", format!("{:?}", p.k_f));
        kv("params.k_d", format!("{:?}", p.k_d));
        kv("params.k1", format!("{:?}", p.k1));
        kv("params.k2", format!("{:?}", p.k2));
        kv("params.delta", format!("{:?}", p.delta));
        kv("initial.u", self.initial.u.source().to_string());
        kv("initial.v", self.initial.v.source().to_string());
        kv("initial.w", self.initial.w.source().to_string());
        kv("run.dt", format!("{:?}", p.dt));
        kv("run.t_final", format!("{:?}", p.t_final));
        kv("run.sample_stride", p.sample_stride.to_string());
        kv("run.burst_end", format!("{:?}", self.trace.burst_end));
        kv("run.burst_stride", self.trace.burst_stride.to_string());
        kv(
            "run.trace_points",
            self.trace
                .points
                .iter()
                .map(|q| format!("{:?} {:?}", q[0], q[1]))
                .collect::<Vec<_>>()
                .join("; "),
        );
        kv("output.dir", self.output_dir.display().to_string());
        kv("study.eps", fmt_list(&self.study_eps));
        kv("solver.rel_tol", format!("{:?}", self.solver.rel_tol));
        kv("solver.max_iter", self.solver.max_iter.to_string());
        s
    }

    pub fn inclusion(&self) -> Inclusion {
        if self.geometry.inclusion {
            Inclusion::Circle {
                radius: self.geometry.radius,
            }
        } else {
            Inclusion::None
        }
    }

    pub fn cell_template(&self) -> Result<Mesh2D> {
        build_unit_cell_mesh(
            self.inclusion(),
            self.geometry.n_gamma,
            self.geometry.h_cell,
        )
    }

    pub fn micro_template(&self) -> Result<Mesh2D> {
        build_unit_cell_mesh(
            self.inclusion(),
            self.geometry.n_gamma,
            self.geometry.h_micro,
        )
    }

    pub fn solve_cell(&self) -> Result<CellSolution> {
        solve_cell_problems(self.cell_template()?, self.solver)
    }

    pub fn micro_setup(&self, epsilon: f64, template: &Mesh2D) -> Result<MicroSetup> {
        let mesh = build_perforated_mesh(self.geometry.domain, epsilon, template)?;
        let params = ModelParams {
            epsilon,
            ..self.params
        };
        MicroSetup::new(mesh, params, self.solver)
    }

    pub fn macro_mesh(&self) -> Result<Mesh2D> {
        build_macro_mesh(self.geometry.domain, self.geometry.h_macro)
    }

    pub fn macro_setup(&self, coeffs: HomogenizedCoefficients) -> Result<MacroSetup> {
        MacroSetup::new(self.macro_mesh()?, self.params, coeffs, self.solver)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHIPPED: &str = include_str!("../../../../configs/default.cfg");

    #[test]
    fn shipped_default() {
        let c = RunConfig::parse(SHIPPED).unwrap();
        assert_eq!(c.params.d1, 1.0);
        assert_eq!(c.params.d2, 2.0);
        assert_eq!(c.params.epsilon, 0.2);
        assert_eq!(c.params.t_final, 20.0);
        assert_eq!(c.params.k_f, 1.8);
        assert_eq!(c.params.k_d, 2.2);
        assert_eq!(c.params.delta, 0.01);
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn negative_delta_rejected() {
        let err = RunConfig::parse("params.delta = -1").unwrap_err();
        assert!(matches!(err, Error::ConfigValidation(_)), "{err}");
    }

    #[test]
    fn typo_rejected_with_line() {
        let err = RunConfig::parse("# header\n\nparams.detla = 0.01").unwrap_err();
        match err {
            Error::ConfigParse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("params.detla"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn other_errors() {
        assert!(RunConfig::parse("params.d1 = 1\nparams.d1 = 2").is_err());
        assert!(RunConfig::parse("params.d1 1").is_err());
        assert!(RunConfig::parse("geometry.epsilon = 0.07").is_err());
        assert!(RunConfig::parse("run.trace_points = 2 2").is_err());
        assert!(RunConfig::parse("initial.u = 3x1").is_err());
        assert!(RunConfig::parse("geometry.domain = 0, 1").is_err());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.params.k_f = 0.1 + 0.2;
        c.trace.points = vec![[0.6, 0.5], [1.0 / 3.0, 0.7]];
        c.study_eps = vec![0.4, 0.2, 0.1];
        c.initial.w = Polynomial::parse("x1^2 - 0.5*x1*x2 + 1").unwrap();
        let back = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }
}
