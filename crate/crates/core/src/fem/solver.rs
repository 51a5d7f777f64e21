use super::{CsrMatrix, EnvelopeCholesky};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            rel_tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// `||b - A x|| / ||b||` of the returned iterate.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Direct solve with a precomputed factor of `a`, followed by conjugate
/// gradient refinement if the residual still exceeds `opts.rel_tol`.
pub fn solve_factored(
    a: &CsrMatrix,
    factor: &EnvelopeCholesky,
    b: &[f64],
    x: &mut [f64],
    opts: CgOptions,
) -> Result<CgOutcome> {
    factor.solve_into(b, x);
    solve_spd_from(a, b, x, opts)
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], opts: CgOptions) -> Result<Vec<f64>> {
    let mut x = vec![0.0; b.len()];
    solve_spd_from(a, b, &mut x, opts)?;
    Ok(x)
}

/// Jacobi-preconditioned conjugate gradients starting from the contents of `x`.
///
/// Stops when the true residual satisfies `||b - A x|| <= rel_tol * ||b||`.
pub fn solve_spd_from(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    opts: CgOptions,
) -> Result<CgOutcome> {
    let n = a.dim();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let target = opts.rel_tol * b_norm;
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = a.mul_vec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut res = dot(&r, &r).sqrt();
    if res <= target {
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: res / b_norm,
        });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut it = 0;
    loop {
        while it < opts.max_iter {
            it += 1;
            a.mul_vec_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            res = dot(&r, &r).sqrt();
            if res <= target {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        // Guard against drift of the recursive residual.
        a.mul_vec_into(x, &mut ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        res = dot(&r, &r).sqrt();
        if res <= target {
            return Ok(CgOutcome {
                iterations: it,
                relative_residual: res / b_norm,
            });
        }
        if it >= opts.max_iter {
            return Err(Error::NonConvergence {
                iterations: it,
                residual: res / b_norm,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        p.copy_from_slice(&z);
        rz = dot(&r, &z);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble_mass;
    use crate::mesh::{build_macro_mesh, Rect};

    #[test]
    fn two_by_two() {
        let a = CsrMatrix::from_triplets(
            2,
            vec![(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 2.0)],
            true,
        );
        let x = solve_spd(&a, &[3.0, 3.0], CgOptions::default()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mass_matrix_recovers_ones() {
        let m = build_macro_mesh(Rect::new(0.0, 1.2, 0.0, 1.0), 0.05).unwrap();
        let a = assemble_mass(&m);
        let b = a.mul_vec(&vec![1.0; m.n_vertices()]);
        let x = solve_spd(&a, &b, CgOptions::default()).unwrap();
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-8));
    }

    #[test]
    fn zero_rhs_is_immediate() {
        let a = CsrMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let mut x = vec![5.0; 3];
        let out = solve_spd_from(&a, &[0.0; 3], &mut x, CgOptions::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(x, vec![0.0; 3]);
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let m = build_macro_mesh(Rect::new(0.0, 1.0, 0.0, 1.0), 0.05).unwrap();
        let a = crate::fem::assemble_stiffness(&m, &crate::fem::Conductivity::isotropic(1.0))
            .unwrap()
            .add_scaled(1e-3, &assemble_mass(&m));
        let b: Vec<f64> = (0..m.n_vertices()).map(|i| (i % 7) as f64 - 3.0).collect();
        let e = solve_spd(
            &a,
            &b,
            CgOptions {
                rel_tol: 1e-14,
                max_iter: 3,
            },
        )
        .unwrap_err();
        match e {
            Error::NonConvergence {
                iterations,
                residual,
            } => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-14);
            }
            other => panic!("unexpected {other}"),
        }
    }
}
