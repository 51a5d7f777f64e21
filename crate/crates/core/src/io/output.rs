//! CSV, legacy VTK, JSON and SVG writers plus the output manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::mesh::Mesh2D;
use crate::trace::Trace;
use crate::{Error, Result};

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

pub const MANIFEST: &str = "manifest.json";

/// One line series of a plot.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Output directory that records every file written through it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(OutputDir {
            root,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn record(&mut self, name: &str) {
        if !self.written.iter().any(|n| n == name) {
            self.written.push(name.to_string());
        }
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.record(name);
        Ok(path)
    }

    /// CSV with one header row; every value written at full precision.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf> {
        let path = self.path(name);
        let csv_err = |source| Error::Csv {
            path: path.clone(),
            source,
        };
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r.iter().map(|&x| fmt_f64(x)))
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        self.record(name);
        Ok(path)
    }

    /// `time` followed by every trace column.
    pub fn write_trace_csv(&mut self, name: &str, trace: &Trace) -> Result<PathBuf> {
        let cols = trace.columns();
        let mut header = vec!["time".to_string()];
        header.extend(cols.iter().map(|(n, _)| n.clone()));
        let rows: Vec<Vec<f64>> = (0..trace.len())
            .map(|i| {
                let mut r = vec![trace.times[i]];
                r.extend(cols.iter().map(|(_, c)| c[i]));
                r
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        self.write_csv(name, &header, &rows)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        self.write_text(name, &text)
    }

    pub fn write_vtk(
        &mut self,
        name: &str,
        title: &str,
        mesh: &Mesh2D,
        fields: &[(&str, &[f64])],
    ) -> Result<PathBuf> {
        let text = vtk_text(title, mesh, fields)?;
        self.write_text(name, &text)
    }

    pub fn write_svg(&mut self, name: &str, plot: &Plot) -> Result<PathBuf> {
        self.write_text(name, &svg_text(plot))
    }

    /// Writes `manifest.json` listing every recorded file with its size,
    /// the manifest itself included.
    pub fn finish(mut self) -> Result<Manifest> {
        self.record(MANIFEST);
        let mut own = 0u64;
        // the manifest's own size depends on its text; iterate to a fixed point
        for _ in 0..8 {
            let manifest = self.manifest(own)?;
            let text = serde_json::to_string_pretty(&manifest).map_err(|source| Error::Json {
                path: self.path(MANIFEST),
                source,
            })?;
            let len = text.len() as u64;
            if len == own {
                let path = self.path(MANIFEST);
                fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
                return Ok(manifest);
            }
            own = len;
        }
        Err(Error::io(
            self.path(MANIFEST),
            std::io::Error::other("manifest size did not settle"),
        ))
    }

    fn manifest(&self, own: u64) -> Result<Manifest> {
        let files = self
            .written
            .iter()
            .map(|n| {
                let bytes = if n == MANIFEST {
                    own
                } else {
                    let p = self.path(n);
                    fs::metadata(&p).map_err(|e| Error::io(&p, e))?.len()
                };
                Ok(ManifestEntry {
                    path: n.clone(),
                    bytes,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Manifest { files })
    }
}

/// Legacy ASCII VTK: triangles plus tagged boundary edges as line cells,
/// an integer `tag` cell array (0 for triangles) and one scalar point array
/// per field.
pub fn vtk_text(title: &str, mesh: &Mesh2D, fields: &[(&str, &[f64])]) -> Result<String> {
    for (name, f) in fields {
        if f.len() != mesh.n_vertices() {
            return Err(Error::FieldMismatch(format!(
                "field {name} has {} values for {} vertices",
                f.len(),
                mesh.n_vertices()
            )));
        }
    }
    let nt = mesh.n_triangles();
    let ne = mesh.boundary_edges().len();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 2.0");
    let _ = writeln!(s, "{}", title.replace('\n', " "));
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.n_vertices());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} 0", fmt_f64(p[0]), fmt_f64(p[1]));
    }
    let _ = writeln!(s, "CELLS {} {}", nt + ne, 4 * nt + 3 * ne);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    for e in mesh.boundary_edges() {
        let _ = writeln!(s, "2 {} {}", e.vertices[0], e.vertices[1]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", nt + ne);
    for _ in 0..nt {
        s.push_str("5\n");
    }
    for _ in 0..ne {
        s.push_str("3\n");
    }
    let _ = writeln!(s, "CELL_DATA {}", nt + ne);
    s.push_str("SCALARS tag int 1\nLOOKUP_TABLE default\n");
    for _ in 0..nt {
        s.push_str("0\n");
    }
    for e in mesh.boundary_edges() {
        let _ = writeln!(s, "{}", e.tag.code());
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", mesh.n_vertices());
        for (name, f) in fields {
            let _ = writeln!(s, "SCALARS {name} double 1");
            s.push_str("LOOKUP_TABLE default\n");
            for &x in f.iter() {
                let _ = writeln!(s, "{}", fmt_f64(x));
            }
        }
    }
    Ok(s)
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

fn escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Line plot on a fixed 800x600 canvas, one polyline per series.
pub fn svg_text(plot: &Plot) -> String {
    let (l, r, t, b) = (80.0, 40.0, 50.0, 60.0);
    let (x0, x1) = range(plot.series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = range(plot.series.iter().flat_map(|s| s.y.iter().copied()));
    let px = |x: f64| l + (x - x0) / (x1 - x0) * (WIDTH - l - r);
    let py = |y: f64| HEIGHT - b - (y - y0) / (y1 - y0) * (HEIGHT - t - b);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="30" text-anchor="middle" font-size="18">{}</text>"#,
        WIDTH / 2.0,
        escape(&plot.title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{l}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        HEIGHT - b,
        WIDTH - r,
        HEIGHT - b
    );
    let _ = writeln!(
        s,
        r#"<line x1="{l}" y1="{t}" x2="{l}" y2="{}" stroke="black"/>"#,
        HEIGHT - b
    );
    for (v, anchor, x) in [(x0, "start", l), (x1, "end", WIDTH - r)] {
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="{anchor}" font-size="12">{}</text>"#,
            HEIGHT - b + 16.0,
            fmt_tick(v)
        );
    }
    for (v, y) in [(y0, HEIGHT - b), (y1, t)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="12">{}</text>"#,
            l - 6.0,
            y + 4.0,
            fmt_tick(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        (l + WIDTH - r) / 2.0,
        HEIGHT - 15.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" text-anchor="middle" font-size="14" transform="rotate(-90 20 {})">{}</text>"#,
        (t + HEIGHT - b) / 2.0,
        (t + HEIGHT - b) / 2.0,
        escape(&plot.y_label)
    );
    for (k, series) in plot.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = series
            .x
            .iter()
            .zip(&series.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = t + 16.0 + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-size="12" fill="{color}">{}</text>"#,
            WIDTH - r - 150.0,
            escape(&series.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_macro_mesh, Rect};

    #[test]
    fn empty_trace_gives_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        let p = out
            .write_trace_csv("t.csv", &Trace::new(&[[0.6, 0.5]]))
            .unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("time,u_p0,v_p0,total_u"));
    }

    #[test]
    fn csv_values_round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        let vals = vec![0.1 + 0.2, 1.0 / 3.0, -2.5e-300, 6.02e23, 0.0];
        let p = out
            .write_csv("v.csv", &["a", "b", "c", "d", "e"], &[vals.clone()])
            .unwrap();
        let mut r = csv::Reader::from_path(p).unwrap();
        let rec = r.records().next().unwrap().unwrap();
        let back: Vec<f64> = rec.iter().map(|s| s.parse().unwrap()).collect();
        for (a, b) in vals.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn manifest_lists_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        let mesh = build_macro_mesh(Rect::new(0.0, 1.0, 0.0, 1.0), 0.5).unwrap();
        let f: Vec<f64> = mesh.vertices().iter().map(|p| p[0]).collect();
        out.write_vtk("m.vtk", "mesh", &mesh, &[("x", &f)]).unwrap();
        out.write_json("r.json", &vec![1.0, 2.0]).unwrap();
        out.write_svg(
            "p.svg",
            &Plot {
                title: "t".into(),
                x_label: "x".into(),
                y_label: "y".into(),
                series: vec![Series {
                    name: "s".into(),
                    x: vec![0.0, 1.0],
                    y: vec![1.0, 0.0],
                }],
            },
        )
        .unwrap();
        let manifest = out.finish().unwrap();
        let mut on_disk: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        on_disk.sort();
        let mut listed: Vec<String> = manifest.files.iter().map(|f| f.path.clone()).collect();
        listed.sort();
        assert_eq!(on_disk, listed);
        for f in &manifest.files {
            let len = std::fs::metadata(dir.path().join(&f.path)).unwrap().len();
            assert_eq!(len, f.bytes, "{}", f.path);
        }
    }

    #[test]
    fn vtk_layout() {
        let mesh = build_macro_mesh(Rect::new(0.0, 1.0, 0.0, 1.0), 0.5).unwrap();
        let f = vec![1.0; mesh.n_vertices()];
        let text = vtk_text("m", &mesh, &[("u", &f)]).unwrap();
        assert!(
            text.starts_with("# vtk DataFile Version 2.0\nm\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        );
        assert!(text.contains(&format!("POINT_DATA {}", mesh.n_vertices())));
        assert!(text.contains("SCALARS u double 1"));
        assert!(vtk_text("m", &mesh, &[("u", &f[1..])]).is_err());
    }

    #[test]
    fn svg_has_fixed_canvas() {
        let plot = Plot {
            title: "a < b".into(),
            x_label: "t".into(),
            y_label: "E".into(),
            series: vec![
                Series {
                    name: "one".into(),
                    x: vec![0.0, 1.0, 2.0],
                    y: vec![3.0, 3.0, 3.0],
                },
                Series {
                    name: "two".into(),
                    x: vec![],
                    y: vec![],
                },
            ],
        };
        let s = svg_text(&plot);
        assert!(s.contains(r#"viewBox="0 0 800 600""#));
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.contains("a &lt; b"));
    }
}
