use super::p1_gradients;
use crate::mesh::{Mesh2D, Point};
use crate::{Error, Result};

/// What to do with points that no triangle contains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MissPolicy {
    #[default]
    Error,
    NearestVertex,
}

/// Precomputed P1 evaluation of fields on `src` at a fixed point set.
#[derive(Clone, Debug)]
pub struct Interpolator {
    entries: Vec<([usize; 3], [f64; 3])>,
    n_src: usize,
}

impl Interpolator {
    pub fn new(src: &Mesh2D, points: &[Point], policy: MissPolicy) -> Result<Self> {
        let entries = points
            .iter()
            .map(|&p| match src.locate_point(p) {
                Some((t, l)) => Ok((src.triangles()[t], l)),
                None => match policy {
                    MissPolicy::Error => Err(Error::PointNotFound { x: p[0], y: p[1] }),
                    MissPolicy::NearestVertex => {
                        let v = src.nearest_vertex(p);
                        Ok(([v, v, v], [1.0, 0.0, 0.0]))
                    }
                },
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Interpolator {
            entries,
            n_src: src.n_vertices(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn apply_into(&self, values: &[f64], out: &mut [f64]) {
        assert_eq!(values.len(), self.n_src);
        for (o, (tri, l)) in out.iter_mut().zip(&self.entries) {
            *o = l[0] * values[tri[0]] + l[1] * values[tri[1]] + l[2] * values[tri[2]];
        }
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.entries.len()];
        self.apply_into(values, &mut out);
        out
    }
}

/// P1 interpolation of `values` (given on the vertices of `src`) at `points`.
pub fn interpolate(
    src: &Mesh2D,
    values: &[f64],
    points: &[Point],
    policy: MissPolicy,
) -> Result<Vec<f64>> {
    if values.len() != src.n_vertices() {
        return Err(Error::FieldMismatch(format!(
            "{} values for {} vertices",
            values.len(),
            src.n_vertices()
        )));
    }
    Ok(Interpolator::new(src, points, policy)?.apply(values))
}

/// Piecewise-constant gradient of P1 fields on `src`, sampled at fixed points.
#[derive(Clone, Debug)]
pub struct TriangleSampler {
    entries: Vec<([usize; 3], [[f64; 2]; 3])>,
}

impl TriangleSampler {
    pub fn new(src: &Mesh2D, points: &[Point]) -> Result<Self> {
        let entries = points
            .iter()
            .map(|&p| {
                let (t, _) = src
                    .locate_point(p)
                    .ok_or(Error::PointNotFound { x: p[0], y: p[1] })?;
                let (_, g) = p1_gradients(src.triangle_points(t));
                Ok((src.triangles()[t], g))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TriangleSampler { entries })
    }

    pub fn gradients(&self, values: &[f64]) -> Vec<[f64; 2]> {
        self.entries
            .iter()
            .map(|(tri, g)| {
                let mut out = [0.0; 2];
                for k in 0..3 {
                    out[0] += values[tri[k]] * g[k][0];
                    out[1] += values[tri[k]] * g[k][1];
                }
                out
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{
        build_macro_mesh, build_perforated_mesh, build_unit_cell_mesh, Inclusion, Rect,
    };

    #[test]
    fn reproduces_linear_fields() {
        let m = build_macro_mesh(Rect::new(0.0, 1.2, 0.0, 1.0), 0.07).unwrap();
        let f: Vec<f64> = m.vertices().iter().map(|p| 5.0 * (p[0] + p[1])).collect();
        let v = interpolate(&m, &f, &[[0.6, 0.5]], MissPolicy::Error).unwrap();
        assert!((v[0] - 5.5).abs() < 1e-12);
        let c = vec![2.5; m.n_vertices()];
        let v = interpolate(&m, &c, &[[0.31, 0.77], [1.2, 1.0]], MissPolicy::Error).unwrap();
        assert!(v.iter().all(|x| (x - 2.5).abs() < 1e-14));
        let g = TriangleSampler::new(&m, &[[0.3, 0.3]])
            .unwrap()
            .gradients(&f);
        assert!((g[0][0] - 5.0).abs() < 1e-12 && (g[0][1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn identity_on_own_vertices() {
        let m = build_unit_cell_mesh(Inclusion::Circle { radius: 0.2 }, 32, 0.1).unwrap();
        let f: Vec<f64> = m
            .vertices()
            .iter()
            .map(|p| (3.0 * p[0]).sin() + p[1])
            .collect();
        let v = interpolate(&m, &f, m.vertices(), MissPolicy::Error).unwrap();
        for (a, b) in v.iter().zip(&f) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn macro_field_on_micro_vertices() {
        let t = build_unit_cell_mesh(Inclusion::Circle { radius: 0.25 }, 64, 0.1).unwrap();
        let micro = build_perforated_mesh(Rect::new(0.0, 1.2, 0.0, 1.0), 0.2, &t).unwrap();
        let mac = build_macro_mesh(Rect::new(0.0, 1.2, 0.0, 1.0), 0.05).unwrap();
        let f: Vec<f64> = mac.vertices().iter().map(|p| p[0] * p[1]).collect();
        let v = interpolate(&mac, &f, micro.vertices(), MissPolicy::Error).unwrap();
        assert_eq!(v.len(), micro.n_vertices());
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn hole_policy() {
        let t = build_unit_cell_mesh(Inclusion::Circle { radius: 0.25 }, 64, 0.1).unwrap();
        let f = vec![1.0; t.n_vertices()];
        assert!(matches!(
            interpolate(&t, &f, &[[0.5, 0.5]], MissPolicy::Error),
            Err(Error::PointNotFound { .. })
        ));
        let v = interpolate(&t, &f, &[[0.5, 0.5]], MissPolicy::NearestVertex).unwrap();
        assert_eq!(v, vec![1.0]);
    }
}
