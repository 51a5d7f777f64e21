use super::p1_gradients;
use crate::mesh::{Mesh2D, TagKind};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    /// One value per mesh vertex.
    Volume,
    /// One value per interface vertex, in the order of
    /// [`Mesh2D::interface_vertices`].
    Surface,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodalField {
    pub kind: FieldKind,
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn new(mesh: &Mesh2D, kind: FieldKind, values: Vec<f64>) -> Result<Self> {
        let expected = match kind {
            FieldKind::Volume => mesh.n_vertices(),
            FieldKind::Surface => mesh.interface_vertices().len(),
        };
        if values.len() != expected {
            return Err(Error::FieldMismatch(format!(
                "{kind:?} field has {} values, mesh needs {expected}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::FieldMismatch(format!("value {i} is not finite")));
        }
        Ok(NodalField { kind, values })
    }

    pub fn volume(mesh: &Mesh2D, values: Vec<f64>) -> Result<Self> {
        Self::new(mesh, FieldKind::Volume, values)
    }

    pub fn surface(mesh: &Mesh2D, values: Vec<f64>) -> Result<Self> {
        Self::new(mesh, FieldKind::Surface, values)
    }
}

/// L2 norms of a P1 field. The surface norm is taken over the interface
/// edges and carries no scaling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldNorms {
    pub l2_volume: Option<f64>,
    pub l2_gradient: Option<f64>,
    pub l2_surface: f64,
}

fn surface_sq(mesh: &Mesh2D, value: impl Fn(usize) -> f64) -> f64 {
    let v = mesh.vertices();
    mesh.edges_of_kind(TagKind::Interface)
        .map(|e| {
            let [a, b] = e.vertices;
            let len = ((v[a][0] - v[b][0]).powi(2) + (v[a][1] - v[b][1]).powi(2)).sqrt();
            let (fa, fb) = (value(a), value(b));
            len / 3.0 * (fa * fa + fa * fb + fb * fb)
        })
        .sum()
}

fn norms_of(mesh: &Mesh2D, kind: FieldKind, values: &[f64]) -> FieldNorms {
    match kind {
        FieldKind::Volume => {
            let mut vol = 0.0;
            let mut grad = 0.0;
            for (t, tri) in mesh.triangles().iter().enumerate() {
                let (area, g) = p1_gradients(mesh.triangle_points(t));
                let f = [values[tri[0]], values[tri[1]], values[tri[2]]];
                // edge-midpoint rule, exact for quadratics
                let m = [
                    0.5 * (f[0] + f[1]),
                    0.5 * (f[1] + f[2]),
                    0.5 * (f[2] + f[0]),
                ];
                vol += area / 3.0 * (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]);
                let gx = f[0] * g[0][0] + f[1] * g[1][0] + f[2] * g[2][0];
                let gy = f[0] * g[0][1] + f[1] * g[1][1] + f[2] * g[2][1];
                grad += area * (gx * gx + gy * gy);
            }
            FieldNorms {
                l2_volume: Some(vol.sqrt()),
                l2_gradient: Some(grad.sqrt()),
                l2_surface: surface_sq(mesh, |v| values[v]).sqrt(),
            }
        }
        FieldKind::Surface => {
            let iface = mesh.interface_vertices();
            let mut slot = vec![usize::MAX; mesh.n_vertices()];
            for (k, &v) in iface.iter().enumerate() {
                slot[v] = k;
            }
            FieldNorms {
                l2_volume: None,
                l2_gradient: None,
                l2_surface: surface_sq(mesh, |v| values[slot[v]]).sqrt(),
            }
        }
    }
}

pub fn field_norms(mesh: &Mesh2D, field: &NodalField) -> Result<FieldNorms> {
    let field = NodalField::new(mesh, field.kind, field.values.clone())?;
    Ok(norms_of(mesh, field.kind, &field.values))
}

/// Norms of `a - b`.
pub fn difference_norms(mesh: &Mesh2D, a: &NodalField, b: &NodalField) -> Result<FieldNorms> {
    if a.kind != b.kind {
        return Err(Error::FieldMismatch(format!(
            "cannot subtract a {:?} field from a {:?} field",
            b.kind, a.kind
        )));
    }
    let diff: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    if a.values.len() != b.values.len() {
        return Err(Error::FieldMismatch("length mismatch".into()));
    }
    field_norms(
        mesh,
        &NodalField {
            kind: a.kind,
            values: diff,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{
        build_macro_mesh, build_perforated_mesh, build_unit_cell_mesh, Inclusion, Rect,
    };

    #[test]
    fn constant_and_linear_fields() {
        let m = build_macro_mesh(Rect::new(0.0, 1.0, 0.0, 1.0), 0.1).unwrap();
        let c = NodalField::volume(&m, vec![3.0; m.n_vertices()]).unwrap();
        let n = field_norms(&m, &c).unwrap();
        assert!((n.l2_volume.unwrap().powi(2) - 9.0).abs() < 1e-12);
        assert_eq!(n.l2_gradient.unwrap(), 0.0);
        let x = NodalField::volume(&m, m.vertices().iter().map(|p| p[0]).collect()).unwrap();
        let n = field_norms(&m, &x).unwrap();
        assert!((n.l2_volume.unwrap().powi(2) - 1.0 / 3.0).abs() < 1e-12);
        assert!((n.l2_gradient.unwrap().powi(2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_fields_have_zero_difference() {
        let m = build_macro_mesh(Rect::new(0.0, 1.0, 0.0, 1.0), 0.2).unwrap();
        let f = NodalField::volume(&m, m.vertices().iter().map(|p| p[0] * p[1]).collect()).unwrap();
        let d = difference_norms(&m, &f, &f.clone()).unwrap();
        assert_eq!(d.l2_volume, Some(0.0));
        assert_eq!(d.l2_gradient, Some(0.0));
        assert_eq!(d.l2_surface, 0.0);
    }

    #[test]
    fn surface_field_norm_and_mismatch() {
        let t = build_unit_cell_mesh(Inclusion::Circle { radius: 0.25 }, 64, 0.1).unwrap();
        let m = build_perforated_mesh(Rect::new(0.0, 1.2, 0.0, 1.0), 0.2, &t).unwrap();
        let n_if = m.interface_vertices().len();
        let w = NodalField::surface(&m, vec![1.0; n_if]).unwrap();
        let n = field_norms(&m, &w).unwrap();
        let perim = m.boundary_length(crate::mesh::TagKind::Interface);
        assert!((n.l2_surface.powi(2) - perim).abs() < 1e-12);
        let u = NodalField::volume(&m, vec![1.0; m.n_vertices()]).unwrap();
        assert!(matches!(
            difference_norms(&m, &u, &w),
            Err(Error::FieldMismatch(_))
        ));
        assert!(NodalField::surface(&m, vec![1.0; 3]).is_err());
        assert!(NodalField::volume(&m, vec![f64::NAN; m.n_vertices()]).is_err());
    }
}
