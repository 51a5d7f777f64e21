use super::CsrMatrix;
use crate::mesh::{Mesh2D, Point, TagKind};
use crate::{Error, Result};

/// Area and basis-function gradients of the P1 triangle `p`.
pub fn p1_gradients(p: [Point; 3]) -> (f64, [[f64; 2]; 3]) {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
    let mut g = [[0.0; 2]; 3];
    for k in 0..3 {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        g[k] = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
    }
    (0.5 * det, g)
}

/// Diffusion tensor of a stiffness assembly.
#[derive(Clone, Debug)]
pub enum Conductivity {
    Constant([[f64; 2]; 2]),
    PerElement(Vec<[[f64; 2]; 2]>),
}

impl Conductivity {
    pub fn isotropic(d: f64) -> Self {
        Conductivity::Constant([[d, 0.0], [0.0, d]])
    }

    fn tensor(&self, t: usize) -> [[f64; 2]; 2] {
        match self {
            Conductivity::Constant(a) => *a,
            Conductivity::PerElement(v) => v[t],
        }
    }
}

fn check_spd(a: &[[f64; 2]; 2]) -> Result<()> {
    let scale = a[0][0].abs().max(a[1][1].abs()).max(a[0][1].abs());
    if !a.iter().flatten().all(|v| v.is_finite()) {
        return Err(Error::InvalidTensor(format!("non-finite entries {a:?}")));
    }
    if (a[0][1] - a[1][0]).abs() > 1e-12 * scale {
        return Err(Error::InvalidTensor(format!("not symmetric: {a:?}")));
    }
    if !(a[0][0] > 0.0) || !(a[0][0] * a[1][1] - a[0][1] * a[1][0] > 0.0) {
        return Err(Error::InvalidTensor(format!(
            "not positive definite: {a:?}"
        )));
    }
    Ok(())
}

/// Consistent P1 mass matrix.
pub fn assemble_mass(mesh: &Mesh2D) -> CsrMatrix {
    let mut t = Vec::with_capacity(9 * mesh.n_triangles());
    for (tri, &area) in mesh.triangles().iter().zip(mesh.element_areas()) {
        for a in 0..3 {
            for b in 0..3 {
                let w = if a == b { area / 6.0 } else { area / 12.0 };
                t.push((tri[a], tri[b], w));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_vertices(), t, true)
}

/// P1 stiffness matrix of `-div(A grad u)`.
pub fn assemble_stiffness(mesh: &Mesh2D, conductivity: &Conductivity) -> Result<CsrMatrix> {
    match conductivity {
        Conductivity::Constant(a) => check_spd(a)?,
        Conductivity::PerElement(v) => {
            if v.len() != mesh.n_triangles() {
                return Err(Error::InvalidTensor(format!(
                    "{} tensors for {} triangles",
                    v.len(),
                    mesh.n_triangles()
                )));
            }
            v.iter().try_for_each(check_spd)?;
        }
    }
    let mut t = Vec::with_capacity(9 * mesh.n_triangles());
    for (e, tri) in mesh.triangles().iter().enumerate() {
        let (area, g) = p1_gradients(mesh.triangle_points(e));
        let a = conductivity.tensor(e);
        for i in 0..3 {
            let ag = [
                a[0][0] * g[i][0] + a[0][1] * g[i][1],
                a[1][0] * g[i][0] + a[1][1] * g[i][1],
            ];
            for j in 0..3 {
                t.push((tri[i], tri[j], area * (ag[0] * g[j][0] + ag[1] * g[j][1])));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(mesh.n_vertices(), t, true))
}

/// One-dimensional P1 mass matrix over the boundary edges of `kind`, as a
/// full vertex-indexed matrix. The lumped variant puts each row sum on the
/// diagonal.
pub fn assemble_interface_mass(mesh: &Mesh2D, kind: TagKind, lumped: bool) -> Result<CsrMatrix> {
    if lumped {
        return Ok(CsrMatrix::from_diagonal(&lumped_interface_weights(
            mesh, kind,
        )?));
    }
    let v = mesh.vertices();
    let mut t = Vec::new();
    for e in mesh.edges_of_kind(kind) {
        let [a, b] = e.vertices;
        let len = ((v[a][0] - v[b][0]).powi(2) + (v[a][1] - v[b][1]).powi(2)).sqrt();
        t.push((a, a, len / 3.0));
        t.push((b, b, len / 3.0));
        t.push((a, b, len / 6.0));
        t.push((b, a, len / 6.0));
    }
    if t.is_empty() {
        return Err(Error::MissingTag(format!("{kind:?}")));
    }
    Ok(CsrMatrix::from_triplets(mesh.n_vertices(), t, true))
}

/// Row sums of the interface mass matrix, one per mesh vertex.
pub fn lumped_interface_weights(mesh: &Mesh2D, kind: TagKind) -> Result<Vec<f64>> {
    let v = mesh.vertices();
    let mut w = vec![0.0; mesh.n_vertices()];
    let mut any = false;
    for e in mesh.edges_of_kind(kind) {
        let [a, b] = e.vertices;
        let len = ((v[a][0] - v[b][0]).powi(2) + (v[a][1] - v[b][1]).powi(2)).sqrt();
        w[a] += 0.5 * len;
        w[b] += 0.5 * len;
        any = true;
    }
    if !any {
        return Err(Error::MissingTag(format!("{kind:?}")));
    }
    Ok(w)
}
