//! Constant-coefficient objects built from a homogenized tensor `A`.
//!
//! The Green function of `-div(A grad)` in three dimensions is
//! `G(x) = c₀ Q(x)^{-1/2}` with `Q = x·Bx`, `B = A⁻¹`, `c₀ = 1/(4π √det A)`.
//! Derivatives follow from `∂_i Q = 2(Bx)_i` and `∂_ij Q = 2B_ij`: each
//! partition of the differentiation axes into singletons and pairs contributes
//! `f_m(Q) Π 2(Bx)_i Π 2B_ij`, where `m` is the number of blocks and
//! `f_m = d^m/dQ^m Q^{-1/2}`.

use std::ops::{Add, Mul};

use crate::correctors::{HomogenizedTensor, SecondOrder};
use crate::error::{Error, Result};
use crate::lattice::{EdgeVectorField, Point, VertexField, UNIT};

/// Quadrupole index set `{(1,2), (1,3), (2,3), (2,2), (3,3)}`, zero-based.
pub const QUADRUPOLE_INDEX: [(usize, usize); 5] = [(0, 1), (0, 2), (1, 2), (1, 1), (2, 2)];

pub const MAX_ORDER: usize = 4;

#[derive(Clone, Copy, Debug)]
pub struct GreenKernel {
    a: HomogenizedTensor,
    b: [[f64; 3]; 3],
    c0: f64,
}

impl GreenKernel {
    pub fn new(a: HomogenizedTensor) -> Result<Self> {
        let eig = a.eigenvalues();
        if !(eig[0] > 0.0) {
            return Err(Error::DegenerateTensor(format!(
                "smallest eigenvalue {} is not positive",
                eig[0]
            )));
        }
        let m = a.to_matrix();
        let inv = m
            .try_inverse()
            .ok_or_else(|| Error::DegenerateTensor("singular".into()))?;
        let mut b = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                // Symmetrize the inverse so B stays exactly symmetric.
                b[i][j] = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            }
        }
        let c0 = 1.0 / (4.0 * std::f64::consts::PI * m.determinant().sqrt());
        Ok(Self { a, b, c0 })
    }

    pub fn tensor(&self) -> &HomogenizedTensor {
        &self.a
    }

    pub fn inverse(&self) -> [[f64; 3]; 3] {
        self.b
    }

    pub fn prefactor(&self) -> f64 {
        self.c0
    }

    fn quadratic(&self, x: [f64; 3]) -> ([f64; 3], f64) {
        let mut y = [0.0; 3];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = (0..3).map(|j| self.b[i][j] * x[j]).sum();
        }
        let q = (0..3).map(|i| x[i] * y[i]).sum();
        (y, q)
    }

    /// `∂^α G(x)` with `α` given as a list of axes, e.g. `[0, 0, 2]` for `∂₁∂₁∂₃`.
    pub fn derivative(&self, x: [f64; 3], axes: &[usize]) -> Result<f64> {
        if axes.len() > MAX_ORDER {
            return Err(Error::DerivativeOrder(axes.len()));
        }
        let (y, q) = self.quadratic(x);
        if !(q > 0.0) {
            return Err(Error::SingularPoint);
        }
        Ok(self.derivative_with(&y, q, axes))
    }

    fn derivative_with(&self, y: &[f64; 3], q: f64, axes: &[usize]) -> f64 {
        // f_m(Q) for m = 0..=4.
        let mut f = [0.0; MAX_ORDER + 1];
        let mut coef = 1.0;
        let mut pow = q.powf(-0.5);
        for (m, fm) in f.iter_mut().enumerate() {
            *fm = coef * pow;
            coef *= -0.5 - m as f64;
            pow /= q;
        }
        let mut buf = [0usize; MAX_ORDER];
        buf[..axes.len()].copy_from_slice(axes);
        self.c0 * partitions(&buf[..axes.len()], 0, y, &self.b, &f)
    }

    pub fn value(&self, x: [f64; 3]) -> Result<f64> {
        self.derivative(x, &[])
    }

    /// `∂^β G` together with its gradient and Hessian at `x`.
    pub fn jet(&self, x: [f64; 3], base: &[usize]) -> Result<Jet> {
        if base.len() + 2 > MAX_ORDER {
            return Err(Error::DerivativeOrder(base.len() + 2));
        }
        let (y, q) = self.quadratic(x);
        if !(q > 0.0) {
            return Err(Error::SingularPoint);
        }
        let mut axes = [0usize; MAX_ORDER];
        let n = base.len();
        axes[..n].copy_from_slice(base);
        let mut jet = Jet {
            value: self.derivative_with(&y, q, base),
            ..Jet::default()
        };
        for k in 0..3 {
            axes[n] = k;
            jet.grad[k] = self.derivative_with(&y, q, &axes[..n + 1]);
            for l in k..3 {
                axes[n + 1] = l;
                let h = self.derivative_with(&y, q, &axes[..n + 2]);
                jet.hess[k][l] = h;
                jet.hess[l][k] = h;
            }
        }
        Ok(jet)
    }
}

// Sum over partitions of `axes` into blocks of size one or two.
fn partitions(axes: &[usize], blocks: usize, y: &[f64; 3], b: &[[f64; 3]; 3], f: &[f64]) -> f64 {
    let Some((&first, rest)) = axes.split_first() else {
        return f[blocks];
    };
    let mut sum = 2.0 * y[first] * partitions(rest, blocks + 1, y, b, f);
    for j in 0..rest.len() {
        let mut remaining = [0usize; MAX_ORDER];
        let mut n = 0;
        for (t, &ax) in rest.iter().enumerate() {
            if t != j {
                remaining[n] = ax;
                n += 1;
            }
        }
        sum += 2.0 * b[first][rest[j]] * partitions(&remaining[..n], blocks + 1, y, b, f);
    }
    sum
}

/// Value, gradient and Hessian of a scalar function at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, o: Jet) -> Jet {
        self.value += o.value;
        for k in 0..3 {
            self.grad[k] += o.grad[k];
            for l in 0..3 {
                self.hess[k][l] += o.hess[k][l];
            }
        }
        self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, mut j: Jet) -> Jet {
        j.value *= self;
        for k in 0..3 {
            j.grad[k] *= self;
            for l in 0..3 {
                j.hess[k][l] *= self;
            }
        }
        j
    }
}

fn to_real(x: Point) -> [f64; 3] {
    [x[0] as f64, x[1] as f64, x[2] as f64]
}

/// The nonzero entries of a compactly supported charge density.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCharges {
    charges: Vec<(Point, f64)>,
    lo: [i32; 3],
    hi: [i32; 3],
}

impl PointCharges {
    pub fn from_field(f: &VertexField) -> Self {
        let bx = f.box_spec();
        let charges: Vec<(Point, f64)> = f
            .values()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, &v)| (bx.point(i), v))
            .collect();
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        if let Some(((first, _), rest)) = charges.split_first() {
            lo = *first;
            hi = *first;
            for (p, _) in rest {
                for k in 0..3 {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
        }
        Self { charges, lo, hi }
    }

    pub fn charges(&self) -> &[(Point, f64)] {
        &self.charges
    }

    /// Whether `x` lies inside the support's bounding box inflated by 1.
    pub fn is_near(&self, x: [f64; 3]) -> bool {
        !self.charges.is_empty()
            && (0..3).all(|k| x[k] >= (self.lo[k] - 1) as f64 && x[k] <= (self.hi[k] + 1) as f64)
    }

    fn check(&self, x: [f64; 3]) -> Result<()> {
        if self.is_near(x) {
            Err(Error::NearSource(x))
        } else {
            Ok(())
        }
    }
}

/// Jet of `ũ_h(x) = Σ_y G(x - y) f(y)`.
pub fn utilde_jet(kernel: &GreenKernel, f: &PointCharges, x: [f64; 3]) -> Result<Jet> {
    f.check(x)?;
    let mut acc = Jet::default();
    for &(y, v) in f.charges() {
        let d = [x[0] - y[0] as f64, x[1] - y[1] as f64, x[2] - y[2] as f64];
        acc = acc + v * kernel.jet(d, &[])?;
    }
    Ok(acc)
}

/// `ũ_h(x)`, the lattice sum of the kernel against the charge density.
pub fn utilde(kernel: &GreenKernel, f: &VertexField, x: [f64; 3]) -> Result<f64> {
    Ok(utilde_jet(kernel, &PointCharges::from_field(f), x)?.value)
}

pub fn utilde_gradient(kernel: &GreenKernel, f: &VertexField, x: [f64; 3]) -> Result<[f64; 3]> {
    Ok(utilde_jet(kernel, &PointCharges::from_field(f), x)?.grad)
}

pub fn utilde_hessian(kernel: &GreenKernel, f: &VertexField, x: [f64; 3]) -> Result<[[f64; 3]; 3]> {
    Ok(utilde_jet(kernel, &PointCharges::from_field(f), x)?.hess)
}

fn ratio(a_h: &HomogenizedTensor, i: usize, j: usize) -> Result<f64> {
    let a11 = a_h.get(0, 0);
    if a11 == 0.0 {
        return Err(Error::DegenerateTensor("a_h,11 = 0".into()));
    }
    Ok(a_h.get(i, j) / a11)
}

/// `v_ij(x) = (1 - δ_ij/2)(x_i x_j - (a_ij/a_11) x_1²)`.
pub fn harmonic_polynomial(a_h: &HomogenizedTensor, (i, j): (usize, usize), x: [f64; 3]) -> Result<f64> {
    let r = ratio(a_h, i, j)?;
    let w = if i == j { 0.5 } else { 1.0 };
    Ok(w * (x[i] * x[j] - r * x[0] * x[0]))
}

pub fn harmonic_polynomial_gradient(
    a_h: &HomogenizedTensor,
    (i, j): (usize, usize),
    x: [f64; 3],
) -> Result<[f64; 3]> {
    let r = ratio(a_h, i, j)?;
    let w = if i == j { 0.5 } else { 1.0 };
    let mut g = [0.0; 3];
    g[i] += w * x[j];
    g[j] += w * x[i];
    g[0] -= w * 2.0 * r * x[0];
    Ok(g)
}

/// The constant Hessian of `v_ij`.
pub fn harmonic_polynomial_hessian(
    a_h: &HomogenizedTensor,
    (i, j): (usize, usize),
) -> Result<[[f64; 3]; 3]> {
    let r = ratio(a_h, i, j)?;
    let w = if i == j { 0.5 } else { 1.0 };
    let mut h = [[0.0; 3]; 3];
    h[i][j] += w;
    h[j][i] += w;
    h[0][0] -= w * 2.0 * r;
    Ok(h)
}

fn check_inside(g: &EdgeVectorField, radius: i32, what: &str) -> Result<()> {
    let rho = g.support_radius();
    if rho >= radius {
        return Err(Error::SupportViolation(format!(
            "source reaches radius {rho}, {what} box has radius {radius}"
        )));
    }
    Ok(())
}

fn nonzero_edges(g: &EdgeVectorField) -> impl Iterator<Item = (Point, usize, f64)> + '_ {
    let bx = g.box_spec();
    g.values().iter().enumerate().flat_map(move |(idx, v)| {
        let x = bx.point(idx);
        (0..3).filter(move |&k| v[k] != 0.0).map(move |k| (x, k, v[k]))
    })
}

fn shift(x: Point, k: usize) -> Point {
    [x[0] + UNIT[k][0], x[1] + UNIT[k][1], x[2] + UNIT[k][2]]
}

/// Dipole moments `ξ_i = Σ_x g(x) · (grad φ_i)(x)`.
pub fn dipole_xi(g: &EdgeVectorField, phi: &[VertexField; 3]) -> Result<[f64; 3]> {
    check_inside(g, phi[0].box_spec().radius(), "corrector")?;
    let mut xi = [0.0; 3];
    for (x, k, gk) in nonzero_edges(g) {
        let y = shift(x, k);
        for (i, p) in phi.iter().enumerate() {
            xi[i] += gk * (p.get(y) - p.get(x));
        }
    }
    Ok(xi)
}

/// Quadrupole moments `c_ij = -Σ_x g · grad W_ij` for `(i, j)` in [`QUADRUPOLE_INDEX`], with
/// `W_ij = Σ_k φ_k ∂_k v_ij + (2 - δ_ij)(ψ_ij - (a_ij/a_11) ψ_11)`.
pub fn quadrupole_c(
    g: &EdgeVectorField,
    phi: &[VertexField; 3],
    psi: &SecondOrder,
    a_h: &HomogenizedTensor,
) -> Result<[f64; 5]> {
    check_inside(g, phi[0].box_spec().radius(), "corrector")?;
    check_inside(g, psi.box_spec().radius(), "second-order corrector")?;
    let mut c = [0.0; 5];
    for (n, &(i, j)) in QUADRUPOLE_INDEX.iter().enumerate() {
        let r = ratio(a_h, i, j)?;
        let weight = if i == j { 1.0 } else { 2.0 };
        let w = |x: Point| -> Result<f64> {
            let dv = harmonic_polynomial_gradient(a_h, (i, j), to_real(x))?;
            let first: f64 = (0..3).map(|k| phi[k].get(x) * dv[k]).sum();
            let second = weight * (psi.field(i, j).get(x) - r * psi.field(0, 0).get(x));
            Ok(first + second)
        };
        let mut acc = 0.0;
        for (x, k, gk) in nonzero_edges(g) {
            acc += gk * (w(shift(x, k))? - w(x)?);
        }
        c[n] = -acc;
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MultipoleData {
    pub xi: [f64; 3],
    pub c: [f64; 5],
}

/// `u_h = ũ_h + Σ ξ_i ∂_i G + Σ_J c_ij ∂_ij G`.
#[derive(Clone, Debug)]
pub struct HomogenizedSolution {
    pub kernel: GreenKernel,
    pub source: PointCharges,
    pub multipoles: MultipoleData,
}

impl HomogenizedSolution {
    pub fn new(kernel: GreenKernel, f: &VertexField, multipoles: MultipoleData) -> Self {
        Self {
            kernel,
            source: PointCharges::from_field(f),
            multipoles,
        }
    }

    /// Value, gradient and Hessian of `u_h` at `x`.
    pub fn jet(&self, x: [f64; 3]) -> Result<Jet> {
        let mut acc = utilde_jet(&self.kernel, &self.source, x)?;
        for (i, &xi) in self.multipoles.xi.iter().enumerate() {
            if xi != 0.0 {
                acc = acc + xi * self.kernel.jet(x, &[i])?;
            }
        }
        for (&(i, j), &c) in QUADRUPOLE_INDEX.iter().zip(&self.multipoles.c) {
            if c != 0.0 {
                acc = acc + c * self.kernel.jet(x, &[i, j])?;
            }
        }
        Ok(acc)
    }
}

/// Derivative of `u_h` requested from [`uh_eval`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UhValue {
    Value(f64),
    Gradient([f64; 3]),
    Hessian([[f64; 3]; 3]),
}

/// `u_h`, its gradient (`order = 1`) or its Hessian (`order = 2`) at `x`.
pub fn uh_eval(solution: &HomogenizedSolution, x: [f64; 3], order: usize) -> Result<UhValue> {
    let jet = solution.jet(x)?;
    match order {
        0 => Ok(UhValue::Value(jet.value)),
        1 => Ok(UhValue::Gradient(jet.grad)),
        2 => Ok(UhValue::Hessian(jet.hess)),
        n => Err(Error::DerivativeOrder(n)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::BoxSpec;
    use std::f64::consts::PI;

    fn iso() -> GreenKernel {
        GreenKernel::new(HomogenizedTensor::identity()).unwrap()
    }

    #[test]
    fn isotropic_values() {
        let k = iso();
        assert!((k.value([1.0, 0.0, 0.0]).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!((k.derivative([1.0, 0.0, 0.0], &[0]).unwrap() + 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!(matches!(k.value([0.0; 3]), Err(Error::SingularPoint)));
        assert!(matches!(
            k.derivative([1.0, 0.0, 0.0], &[0; 5]),
            Err(Error::DerivativeOrder(5))
        ));
    }

    #[test]
    fn closed_form_second_derivative() {
        let a = HomogenizedTensor::from_raw([[2.0, 0.3, 0.1], [0.3, 3.0, -0.2], [0.1, -0.2, 4.0]]);
        let k = GreenKernel::new(a).unwrap();
        let b = k.inverse();
        let x = [1.3, -0.7, 2.1];
        let (y, q) = k.quadratic(x);
        for i in 0..3 {
            for j in 0..3 {
                let expect = k.prefactor()
                    * (3.0 * y[i] * y[j] * q.powf(-2.5) - b[i][j] * q.powf(-1.5));
                let got = k.derivative(x, &[i, j]).unwrap();
                assert!((got - expect).abs() < 1e-14 * expect.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn harmonic_polynomials_identity() {
        let id = HomogenizedTensor::identity();
        let x = [0.5, 2.0, -1.0];
        assert_eq!(harmonic_polynomial(&id, (0, 1), x).unwrap(), 1.0);
        assert_eq!(harmonic_polynomial(&id, (1, 1), x).unwrap(), 0.5 * (4.0 - 0.25));
        for &p in &QUADRUPOLE_INDEX {
            let h = harmonic_polynomial_hessian(&id, p).unwrap();
            assert_eq!(h[0][0] + h[1][1] + h[2][2], 0.0);
        }
        let zero = HomogenizedTensor::from_raw([[0.0; 3]; 3]);
        assert!(harmonic_polynomial(&zero, (0, 1), x).is_err());
    }

    #[test]
    fn single_charge_and_dipole() {
        let k = iso();
        let b = BoxSpec::new(2).unwrap();
        let mut f = VertexField::zeros(b);
        f.set([0, 0, 0], 1.0);
        let x = [3.0, 4.0, 0.0];
        assert!((utilde(&k, &f, x).unwrap() - 1.0 / (4.0 * PI * 5.0)).abs() < 1e-15);
        assert!(matches!(utilde(&k, &f, [1.0, 0.0, 0.0]), Err(Error::NearSource(_))));

        f.set([1, 0, 0], -1.0);
        let near = utilde(&k, &f, [-10.0, 0.0, 0.0]).unwrap();
        let far = utilde(&k, &f, [-20.0, 0.0, 0.0]).unwrap();
        let ratio = far / near;
        assert!((0.2..=0.3).contains(&ratio), "{ratio}");
    }

    #[test]
    fn pure_dipole_solution() {
        let sol = HomogenizedSolution::new(
            iso(),
            &VertexField::zeros(BoxSpec::new(1).unwrap()),
            MultipoleData {
                xi: [1.0, 0.0, 0.0],
                c: [0.0; 5],
            },
        );
        let x = [2.0, -1.0, 3.0];
        let r = (14.0f64).sqrt();
        let UhValue::Value(v) = uh_eval(&sol, x, 0).unwrap() else {
            unreachable!()
        };
        assert!((v + x[0] / (4.0 * PI * r.powi(3))).abs() < 1e-15);
    }

    #[test]
    fn dipole_of_linear_corrector() {
        let b = BoxSpec::new(4).unwrap();
        let phi: [VertexField; 3] = std::array::from_fn(|i| VertexField::from_fn(b, |x| x[i] as f64));
        let mut g = EdgeVectorField::zeros(b);
        g.set([0, 0, 0], 0, 0.5);
        g.set([-1, 1, 0], 1, 2.0);
        g.set([1, 1, 1], 2, -3.0);
        g.set([0, 1, 0], 0, 1.5);
        assert_eq!(dipole_xi(&g, &phi).unwrap(), [2.0, 2.0, -3.0]);
        let zero: [VertexField; 3] = std::array::from_fn(|_| VertexField::zeros(b));
        assert_eq!(dipole_xi(&g, &zero).unwrap(), [0.0; 3]);

        let mut wide = EdgeVectorField::zeros(b);
        wide.set([3, 0, 0], 0, 1.0);
        assert!(matches!(dipole_xi(&wide, &phi), Err(Error::SupportViolation(_))));
    }
}
