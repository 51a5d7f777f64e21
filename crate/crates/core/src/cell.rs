//! Periodic cell problems on the pore part of the unit cell.
//!
//! For `j = 1, 2` the corrector `l_j` solves `div(grad l_j + e_j) = 0` in
//! `Y^p` with a homogeneous Neumann condition on the inclusion and periodic
//! conditions on the cell faces. Periodicity is imposed by identifying each
//! vertex on the faces `y1 = 1` / `y2 = 1` with its partner on the opposite
//! face, one degree of freedom is pinned during the solve and the zero-mean
//! representative is recovered afterwards.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::fem::{p1_gradients, solve_spd, CgOptions, CsrMatrix};
use crate::mesh::{EdgeTag, Mesh2D, Point, Side, TagKind};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct CellSolution {
    pub mesh: Mesh2D,
    /// Nodal correctors `l_1`, `l_2`, zero mean over the pore cell.
    pub l: [Vec<f64>; 2],
    /// Per-triangle gradients of `l_1`, `l_2`.
    pub grad: [Vec<[f64; 2]>; 2],
    /// `|Y^p|`
    pub porosity: f64,
    /// `|Gamma|`, length of the inclusion boundary inside one cell.
    pub interface_measure: f64,
    /// Sum of the assembled right-hand side; zero up to round-off when the
    /// periodic problem is solvable.
    pub rhs_compatibility: [f64; 2],
    pub iterations: [usize; 2],
}

/// Homogenized diffusion matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTensor {
    pub matrix: [[f64; 2]; 2],
    /// `|a_12 - a_21|` before symmetrization.
    pub asymmetry: f64,
}

impl EffectiveTensor {
    pub fn isotropic(d: f64) -> Self {
        EffectiveTensor {
            matrix: [[d, 0.0], [0.0, d]],
            asymmetry: 0.0,
        }
    }

    /// Symmetric, positive definite, diagonal in `(0, d]` up to `rel_slack`.
    pub fn check_bounds(&self, d: f64, rel_slack: f64) -> bool {
        let a = self.matrix;
        a[0][1] == a[1][0]
            && a[0][0] > 0.0
            && a[1][1] > 0.0
            && a[0][0] <= d * (1.0 + rel_slack)
            && a[1][1] <= d * (1.0 + rel_slack)
            && a[0][0] * a[1][1] - a[0][1] * a[1][0] > 0.0
    }
}

fn quantize(p: Point) -> (i64, i64) {
    ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64)
}

/// Maps every vertex to its periodic master (a vertex not on `y1 = 1` or `y2 = 1`).
fn periodic_masters(mesh: &Mesh2D) -> Result<Vec<usize>> {
    let mut sides = [false; 4];
    for e in mesh.edges_of_kind(TagKind::CellFace) {
        if let EdgeTag::CellFace { side, .. } = e.tag {
            sides[side as usize] = true;
        }
    }
    if let Some(k) = sides.iter().position(|s| !s) {
        let side = [Side::Left, Side::Right, Side::Bottom, Side::Top][k];
        return Err(Error::Periodicity(format!(
            "no {side:?} cell face on the mesh"
        )));
    }
    let index: HashMap<(i64, i64), usize> = mesh
        .vertices()
        .iter()
        .enumerate()
        .map(|(i, &p)| (quantize(p), i))
        .collect();
    mesh.vertices()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let target = [
                if p[0] == 1.0 { 0.0 } else { p[0] },
                if p[1] == 1.0 { 0.0 } else { p[1] },
            ];
            if target == p {
                Ok(i)
            } else {
                index.get(&quantize(target)).copied().ok_or_else(|| {
                    Error::Periodicity(format!(
                        "vertex ({}, {}) has no partner at ({}, {})",
                        p[0], p[1], target[0], target[1]
                    ))
                })
            }
        })
        .collect()
}

/// Solves both cell problems on a unit-cell mesh.
pub fn solve_cell_problems(mesh: Mesh2D, opts: CgOptions) -> Result<CellSolution> {
    let master = periodic_masters(&mesh)?;
    let mut dof = vec![usize::MAX; mesh.n_vertices()];
    let mut n_dof = 0;
    for (v, &m) in master.iter().enumerate() {
        if m == v {
            dof[v] = n_dof;
            n_dof += 1;
        }
    }
    let vdof: Vec<usize> = master.iter().map(|&m| dof[m]).collect();

    // Stiffness and right-hand sides on the periodic quotient; dof 0 is pinned
    // by dropping it from the system (reduced index = dof - 1).
    let mut trip = Vec::with_capacity(9 * mesh.n_triangles());
    let mut rhs = [vec![0.0; n_dof], vec![0.0; n_dof]];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (area, g) = p1_gradients(mesh.triangle_points(t));
        for a in 0..3 {
            let da = vdof[tri[a]];
            for (j, r) in rhs.iter_mut().enumerate() {
                r[da] -= area * g[a][j];
            }
            for b in 0..3 {
                let db = vdof[tri[b]];
                if da == 0 || db == 0 {
                    continue;
                }
                let k = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                trip.push((da - 1, db - 1, k));
            }
        }
    }
    let compat = [rhs[0].iter().sum::<f64>(), rhs[1].iter().sum::<f64>()];
    let (l, iterations) = if n_dof <= 1 {
        ([vec![0.0; n_dof], vec![0.0; n_dof]], [0, 0])
    } else {
        let k = CsrMatrix::from_triplets(n_dof - 1, trip, true);
        let solve = |r: &Vec<f64>| -> Result<Vec<f64>> {
            let mut x = vec![0.0];
            x.extend(solve_spd(&k, &r[1..], opts)?);
            Ok(x)
        };
        let (l1, l2) = rayon::join(|| solve(&rhs[0]), || solve(&rhs[1]));
        ([l1?, l2?], [0, 0])
    };

    let porosity = mesh.total_area();
    let expand = |x: &Vec<f64>| -> Vec<f64> {
        let nodal: Vec<f64> = vdof.iter().map(|&d| x[d]).collect();
        let integral: f64 = mesh
            .triangles()
            .iter()
            .zip(mesh.element_areas())
            .map(|(t, a)| a * (nodal[t[0]] + nodal[t[1]] + nodal[t[2]]) / 3.0)
            .sum();
        let mean = integral / porosity;
        nodal.into_iter().map(|v| v - mean).collect()
    };
    let l = [expand(&l[0]), expand(&l[1])];
    let grad = [
        element_gradients(&mesh, &l[0]),
        element_gradients(&mesh, &l[1]),
    ];
    let interface_measure = mesh.boundary_length(TagKind::Interface);
    Ok(CellSolution {
        mesh,
        l,
        grad,
        porosity,
        interface_measure,
        rhs_compatibility: compat,
        iterations,
    })
}

fn element_gradients(mesh: &Mesh2D, f: &[f64]) -> Vec<[f64; 2]> {
    (0..mesh.n_triangles())
        .map(|t| {
            let (_, g) = p1_gradients(mesh.triangle_points(t));
            let tri = mesh.triangles()[t];
            let mut out = [0.0; 2];
            for k in 0..3 {
                out[0] += f[tri[k]] * g[k][0];
                out[1] += f[tri[k]] * g[k][1];
            }
            out
        })
        .collect()
}

impl CellSolution {
    /// `int_{Y^p} C_ij dy`, accumulated triangle by triangle.
    pub fn corrector_integral(&self) -> [[f64; 2]; 2] {
        let mut s = [[0.0; 2]; 2];
        for (t, &area) in self.mesh.element_areas().iter().enumerate() {
            let c = self.corrector_on_triangle(t);
            for i in 0..2 {
                for j in 0..2 {
                    s[i][j] += area * c[i][j];
                }
            }
        }
        s
    }

    /// `C_ij = delta_ij + d l_j / d y_i` on triangle `t`.
    pub fn corrector_on_triangle(&self, t: usize) -> [[f64; 2]; 2] {
        let mut c = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] = if i == j { 1.0 } else { 0.0 } + self.grad[j][t][i];
            }
        }
        c
    }

    /// Mean of `l_j` over the pore cell.
    pub fn mean(&self, j: usize) -> f64 {
        let f = &self.l[j];
        self.mesh
            .triangles()
            .iter()
            .zip(self.mesh.element_areas())
            .map(|(t, a)| a * (f[t[0]] + f[t[1]] + f[t[2]]) / 3.0)
            .sum::<f64>()
            / self.porosity
    }
}

/// `a_ij = D / |Y^p| * int_{Y^p} (delta_ij + d l_j / d y_i) dy`, symmetrized.
pub fn effective_tensor(sol: &CellSolution, d: f64) -> EffectiveTensor {
    let s = sol.corrector_integral();
    let scale = d / sol.porosity;
    let raw = [
        [scale * s[0][0], scale * s[0][1]],
        [scale * s[1][0], scale * s[1][1]],
    ];
    let off = 0.5 * (raw[0][1] + raw[1][0]);
    EffectiveTensor {
        matrix: [[raw[0][0], off], [off, raw[1][1]]],
        asymmetry: (raw[0][1] - raw[1][0]).abs(),
    }
}

/// Corrector matrix at a point `y` of the pore cell.
pub fn corrector_at(sol: &CellSolution, y: Point) -> Result<[[f64; 2]; 2]> {
    let (t, _) = sol
        .mesh
        .locate_point(y)
        .ok_or(Error::PointNotFound { x: y[0], y: y[1] })?;
    Ok(sol.corrector_on_triangle(t))
}

/// Cell coordinate `y = ((x - origin) / epsilon) mod 1` of a physical point.
pub fn cell_coordinate(x: Point, origin: Point, epsilon: f64) -> Point {
    let wrap = |v: f64| {
        let f = v - v.floor();
        if f >= 1.0 {
            0.0
        } else {
            f
        }
    };
    [
        wrap((x[0] - origin[0]) / epsilon),
        wrap((x[1] - origin[1]) / epsilon),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_macro_mesh, build_unit_cell_mesh, Inclusion, Rect};

    fn opts() -> CgOptions {
        CgOptions {
            rel_tol: 1e-12,
            max_iter: 20_000,
        }
    }

    fn default_cell(h: f64) -> CellSolution {
        let m = build_unit_cell_mesh(Inclusion::Circle { radius: 0.25 }, 64, h).unwrap();
        solve_cell_problems(m, opts()).unwrap()
    }

    #[test]
    fn empty_cell_has_zero_correctors() {
        let m = build_unit_cell_mesh(Inclusion::None, 64, 0.1).unwrap();
        let sol = solve_cell_problems(m, opts()).unwrap();
        for j in 0..2 {
            assert!(sol.l[j].iter().all(|v| v.abs() < 1e-8));
        }
        let a = effective_tensor(&sol, 1.0);
        assert!((a.matrix[0][0] - 1.0).abs() < 1e-10);
        assert!((a.matrix[1][1] - 1.0).abs() < 1e-10);
        assert!(a.matrix[0][1].abs() < 1e-10);
        let c = corrector_at(&sol, [0.37, 0.81]).unwrap();
        assert!((c[0][0] - 1.0).abs() < 1e-10 && c[0][1].abs() < 1e-10);
    }

    #[test]
    fn default_cell_symmetries() {
        let sol = default_cell(0.05);
        let m = &sol.mesh;
        for j in 0..2 {
            assert!(sol.mean(j).abs() < 1e-10);
            assert!(sol.rhs_compatibility[j].abs() < 1e-10);
        }
        let index: HashMap<(i64, i64), usize> = m
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, &p)| (quantize(p), i))
            .collect();
        for (v, &[y1, y2]) in m.vertices().iter().enumerate() {
            let mirror = index[&quantize([1.0 - y1, y2])];
            let swap = index[&quantize([y2, y1])];
            assert!((sol.l[0][v] + sol.l[0][mirror]).abs() < 1e-8);
            assert!((sol.l[1][v] - sol.l[0][swap]).abs() < 1e-8);
        }
    }

    #[test]
    fn tensor_properties() {
        let sol = default_cell(0.05);
        let a = effective_tensor(&sol, 1.0);
        let b = effective_tensor(&sol, 2.0);
        assert!(a.check_bounds(1.0, 0.0));
        assert!(a.matrix[0][1].abs() <= 1e-8 * a.matrix[0][0]);
        assert!((a.matrix[0][0] - a.matrix[1][1]).abs() < 1e-8);
        for i in 0..2 {
            for j in 0..2 {
                assert!((b.matrix[i][j] - 2.0 * a.matrix[i][j]).abs() <= 1e-14 * b.matrix[0][0]);
            }
        }
        assert!((a.matrix[0][0] - 0.8358).abs() < 0.01 * 0.8358);
    }

    #[test]
    fn corrector_mean_identity() {
        let sol = default_cell(0.1);
        let a = effective_tensor(&sol, 1.0);
        let s = sol.corrector_integral();
        for i in 0..2 {
            for j in 0..2 {
                assert!((s[i][j] - sol.porosity * a.matrix[i][j]).abs() < 1e-10);
            }
        }
        let c = corrector_at(&sol, [0.5, 0.02]).unwrap();
        assert!(c.iter().flatten().all(|v| v.is_finite()));
        assert!(matches!(
            corrector_at(&sol, [0.5, 0.5]),
            Err(Error::PointNotFound { .. })
        ));
    }

    #[test]
    fn tensor_converges_under_refinement() {
        // the interface polygon bounds the tangential resolution, so n_gamma
        // is doubled together with the halving of h
        let a: Vec<f64> = [(32, 0.1), (64, 0.05), (128, 0.025), (256, 0.0125)]
            .iter()
            .map(|&(n, h)| {
                let m = build_unit_cell_mesh(Inclusion::Circle { radius: 0.25 }, n, h).unwrap();
                effective_tensor(&solve_cell_problems(m, opts()).unwrap(), 1.0).matrix[0][0]
            })
            .collect();
        let d: Vec<f64> = a.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]), "{a:?}");
        // Rayleigh's square-array formula for insulating cylinders of area
        // fraction f, divided by the porosity
        let f = std::f64::consts::PI / 16.0;
        let rayleigh = (1.0 - 2.0 * f / (1.0 + f - 0.3058 * f.powi(4))) / (1.0 - f);
        assert!((a[3] - rayleigh).abs() < 2e-4, "{} vs {rayleigh}", a[3]);
    }

    #[test]
    fn non_periodic_mesh_rejected() {
        let m = build_macro_mesh(Rect::new(0.0, 1.0, 0.0, 1.0), 0.25).unwrap();
        assert!(matches!(
            solve_cell_problems(m, opts()),
            Err(Error::Periodicity(_))
        ));
    }

    #[test]
    fn wraps_into_cell() {
        let y = cell_coordinate([0.65, 0.5], [0.0, 0.0], 0.2);
        assert!((y[0] - 0.25).abs() < 1e-12 && (y[1] - 0.5).abs() < 1e-12);
        let y = cell_coordinate([1.2, 1.0], [0.0, 0.0], 0.2);
        assert!(y[0] < 1.0 && y[1] < 1.0);
    }
}
