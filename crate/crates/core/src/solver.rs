//! Jacobi-preconditioned conjugate gradients for the massive divergence-form problem
//!
//! ```text
//! (1/T) u - div(a grad u) = div(g) + h   in the interior |x|_∞ ≤ R - 1,
//!                       u = bc           on |x|_∞ = R.
//! ```
//!
//! Unknowns are the interior values only; boundary data is lifted into the
//! right-hand side so the operator stays symmetric positive definite.

use crate::error::{Error, Result};
use crate::lattice::{div, BoxSpec, EdgeVectorField, VertexField};
use crate::media::CoefficientField;
use crate::par;

/// Dirichlet data on the boundary layer.
#[derive(Clone, Debug)]
pub enum Boundary<'a> {
    Zero,
    /// Boundary entries of the field are used; interior entries are ignored.
    Values(&'a VertexField),
}

#[derive(Clone, Debug)]
pub struct MassiveProblem<'a> {
    pub a: &'a CoefficientField,
    /// `1/T`; zero gives the plain Dirichlet problem.
    pub inv_t: f64,
    pub g: Option<&'a EdgeVectorField>,
    pub h: Option<&'a VertexField>,
    pub bc: Boundary<'a>,
}

impl<'a> MassiveProblem<'a> {
    pub fn new(a: &'a CoefficientField, inv_t: f64) -> Self {
        Self {
            a,
            inv_t,
            g: None,
            h: None,
            bc: Boundary::Zero,
        }
    }

    pub fn with_g(mut self, g: &'a EdgeVectorField) -> Self {
        self.g = Some(g);
        self
    }

    pub fn with_h(mut self, h: &'a VertexField) -> Self {
        self.h = Some(h);
        self
    }

    pub fn with_boundary(mut self, bc: &'a VertexField) -> Self {
        self.bc = Boundary::Values(bc);
        self
    }

    fn check(&self) -> Result<BoxSpec> {
        let bx = self.a.box_spec();
        let same = |other: BoxSpec| {
            if other == bx {
                Ok(())
            } else {
                Err(Error::BoxMismatch {
                    expected: bx.radius(),
                    found: other.radius(),
                })
            }
        };
        if let Some(g) = self.g {
            same(g.box_spec())?;
        }
        if let Some(h) = self.h {
            same(h.box_spec())?;
        }
        if let Boundary::Values(v) = self.bc {
            same(v.box_spec())?;
        }
        if !(self.inv_t >= 0.0) {
            return Err(Error::InvalidTolerance(self.inv_t));
        }
        Ok(bx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Relative residual target `‖b - A u‖ ≤ tol ‖b‖`.
    pub tol: f64,
    /// Iteration cap; `None` means `20 (2R + 1)`.
    pub max_iter: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            max_iter: None,
        }
    }

    pub fn iteration_cap(&self, bx: BoxSpec) -> usize {
        self.max_iter.unwrap_or(20 * bx.side())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

impl SolveReport {
    /// Turns a non-converged report into an error tagged with `stage`.
    pub fn require(self, stage: &str) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                stage: stage.to_string(),
                iterations: self.iterations,
                relative_residual: self.relative_residual,
            })
        }
    }
}

/// Interior action of the operator; boundary entries of `out` are set to 0.
fn apply_into(a: &[[f64; 3]], inv_t: f64, n: usize, u: &[f64], out: &mut [f64]) {
    let s = [1, n, n * n];
    par::for_each_plane(out, n * n, |k, plane| {
        if k == 0 || k + 1 == n {
            plane.fill(0.0);
            return;
        }
        let base = k * n * n;
        for j2 in 0..n {
            let row = &mut plane[j2 * n..(j2 + 1) * n];
            if j2 == 0 || j2 + 1 == n {
                row.fill(0.0);
                continue;
            }
            row[0] = 0.0;
            row[n - 1] = 0.0;
            for j1 in 1..n - 1 {
                let idx = base + j2 * n + j1;
                let uc = u[idx];
                let mut acc = inv_t * uc;
                for i in 0..3 {
                    let lo = idx - s[i];
                    acc += a[idx][i] * (uc - u[idx + s[i]]) + a[lo][i] * (uc - u[lo]);
                }
                row[j1] = acc;
            }
        }
    });
}

fn diagonal(a: &[[f64; 3]], inv_t: f64, bx: BoxSpec) -> Vec<f64> {
    let s = bx.strides();
    let mut d = vec![1.0; bx.len()];
    for (idx, di) in d.iter_mut().enumerate() {
        if bx.is_interior(bx.point(idx)) {
            *di = inv_t + (0..3).map(|i| a[idx][i] + a[idx - s[i]][i]).sum::<f64>();
        }
    }
    d
}

/// `inv_t u - div(a grad u)` at interior vertices, 0 on the boundary layer.
pub fn apply_operator(a: &CoefficientField, inv_t: f64, u: &VertexField) -> Result<VertexField> {
    let bx = a.box_spec();
    if u.box_spec() != bx {
        return Err(Error::BoxMismatch {
            expected: bx.radius(),
            found: u.box_spec().radius(),
        });
    }
    let mut out = vec![0.0; bx.len()];
    apply_into(a.values(), inv_t, bx.side(), u.values(), &mut out);
    VertexField::from_values(bx, out)
}

fn norm(v: &[f64]) -> f64 {
    par::dot(v, v).sqrt()
}

/// Solves the problem with Jacobi-preconditioned CG.
///
/// Non-convergence is reported through [`SolveReport::converged`], not as an error.
pub fn solve(problem: &MassiveProblem<'_>, config: &SolverConfig) -> Result<(VertexField, SolveReport)> {
    if !(config.tol > 0.0) {
        return Err(Error::InvalidTolerance(config.tol));
    }
    let bx = problem.check()?;
    let n = bx.side();
    let a = problem.a.values();
    let inv_t = problem.inv_t;

    // Lifted initial guess: boundary data, zero interior.
    let mut x = vec![0.0; bx.len()];
    if let Boundary::Values(bc) = problem.bc {
        for (idx, xi) in x.iter_mut().enumerate() {
            if !bx.is_interior(bx.point(idx)) {
                *xi = bc.values()[idx];
            }
        }
    }

    let mut rhs = match problem.g {
        Some(g) => div(g).into_values(),
        None => vec![0.0; bx.len()],
    };
    if let Some(h) = problem.h {
        for (r, v) in rhs.iter_mut().zip(h.values()) {
            *r += v;
        }
    }
    for (idx, r) in rhs.iter_mut().enumerate() {
        if !bx.is_interior(bx.point(idx)) {
            *r = 0.0;
        }
    }

    let mut ax = vec![0.0; bx.len()];
    apply_into(a, inv_t, n, &x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, q)| b - q).collect();
    let b_norm = norm(&r);
    let report = |iterations, rel: f64| SolveReport {
        iterations,
        relative_residual: rel,
        converged: rel <= config.tol,
    };
    if b_norm == 0.0 {
        return Ok((VertexField::from_values(bx, x)?, report(0, 0.0)));
    }

    let d = diagonal(a, inv_t, bx);
    let cap = config.iteration_cap(bx);
    let target = config.tol * b_norm;
    let mut z: Vec<f64> = r.iter().zip(&d).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; bx.len()];
    let mut rz = par::dot(&r, &z);
    let mut iterations = 0;
    let mut rel = 1.0;

    while iterations < cap {
        apply_into(a, inv_t, n, &p, &mut ap);
        let alpha = rz / par::dot(&p, &ap);
        {
            let (p, ap) = (&p, &ap);
            par::for_each_chunk(&mut x, |off, c| {
                for (j, xi) in c.iter_mut().enumerate() {
                    *xi += alpha * p[off + j];
                }
            });
            par::for_each_chunk(&mut r, |off, c| {
                for (j, ri) in c.iter_mut().enumerate() {
                    *ri -= alpha * ap[off + j];
                }
            });
        }
        iterations += 1;
        let r_norm = norm(&r);
        if r_norm <= target {
            // Confirm against the true residual; recursive residuals drift.
            apply_into(a, inv_t, n, &x, &mut ax);
            for (idx, ri) in r.iter_mut().enumerate() {
                *ri = rhs[idx] - ax[idx];
            }
            let true_norm = norm(&r);
            rel = true_norm / b_norm;
            if true_norm <= target {
                break;
            }
            // Restart from the true residual.
            for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&d) {
                *zi = ri / di;
            }
            p.copy_from_slice(&z);
            rz = par::dot(&r, &z);
            continue;
        }
        rel = r_norm / b_norm;
        {
            let (r, d) = (&r, &d);
            par::for_each_chunk(&mut z, |off, c| {
                for (j, zi) in c.iter_mut().enumerate() {
                    *zi = r[off + j] / d[off + j];
                }
            });
        }
        let rz_new = par::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        {
            let z = &z;
            par::for_each_chunk(&mut p, |off, c| {
                for (j, pi) in c.iter_mut().enumerate() {
                    *pi = z[off + j] + beta * *pi;
                }
            });
        }
    }
    Ok((VertexField::from_values(bx, x)?, report(iterations, rel)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{grad, Point};
    use crate::media::{sample, EnsembleSpec};

    fn bx(r: i32) -> BoxSpec {
        BoxSpec::new(r).unwrap()
    }

    #[test]
    fn constants_are_harmonic() {
        let a = sample(&EnsembleSpec::bernoulli(5), bx(3)).unwrap();
        let u = VertexField::constant(bx(3), 2.5);
        assert!(apply_operator(&a, 0.0, &u).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn laplacian_of_quadratic() {
        let b = bx(3);
        let a = CoefficientField::constant(b, 1.0);
        let u = VertexField::from_fn(b, |x| (x[0] * x[0]) as f64);
        let out = apply_operator(&a, 0.0, &u).unwrap();
        for x in b.points() {
            let expect = if b.is_interior(x) { -2.0 } else { 0.0 };
            assert_eq!(out.get(x), expect);
        }
    }

    #[test]
    fn zero_problem_takes_no_iterations() {
        let a = CoefficientField::constant(bx(4), 1.0);
        let (u, rep) = solve(&MassiveProblem::new(&a, 0.0), &SolverConfig::default()).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
    }

    #[test]
    fn linear_boundary_data_extends_linearly() {
        let b = bx(5);
        let a = CoefficientField::constant(b, 1.0);
        let bc = VertexField::from_fn(b, |x: Point| x[0] as f64);
        let cfg = SolverConfig::default();
        let (u, rep) = solve(&MassiveProblem::new(&a, 0.0).with_boundary(&bc), &cfg).unwrap();
        assert!(rep.converged && rep.relative_residual <= cfg.tol);
        for x in b.points() {
            assert!((u.get(x) - x[0] as f64).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let a = CoefficientField::constant(bx(2), 1.0);
        let p = MassiveProblem::new(&a, 0.0);
        assert!(matches!(
            solve(&p, &SolverConfig::with_tol(0.0)),
            Err(Error::InvalidTolerance(_))
        ));
        let h = VertexField::zeros(bx(3));
        assert!(matches!(
            solve(&p.clone().with_h(&h), &SolverConfig::default()),
            Err(Error::BoxMismatch { .. })
        ));
        assert!(apply_operator(&a, 0.0, &h).is_err());
    }

    #[test]
    fn symmetric_and_coercive() {
        let b = bx(3);
        let a = sample(&EnsembleSpec::bernoulli(9), b).unwrap();
        let interior = |seed: f64| {
            VertexField::from_fn(b, |x| {
                if b.is_interior(x) {
                    ((x[0] * 7 + x[1] * 3 + x[2]) as f64 * seed).sin()
                } else {
                    0.0
                }
            })
        };
        let (u, v) = (interior(0.37), interior(1.91));
        let inv_t = 0.05;
        let au = apply_operator(&a, inv_t, &u).unwrap();
        let av = apply_operator(&a, inv_t, &v).unwrap();
        let vau: f64 = v.values().iter().zip(au.values()).map(|(p, q)| p * q).sum();
        let uav: f64 = u.values().iter().zip(av.values()).map(|(p, q)| p * q).sum();
        assert!((vau - uav).abs() <= 1e-12 * vau.abs().max(1.0));

        let uau: f64 = u.values().iter().zip(au.values()).map(|(p, q)| p * q).sum();
        let gu = grad(&u);
        let mass: f64 = u.values().iter().map(|p| p * p).sum();
        let energy: f64 = gu.values().iter().flat_map(|c| c.iter()).map(|p| p * p).sum();
        assert!(uau >= inv_t * mass + energy - 1e-12);
    }
}
