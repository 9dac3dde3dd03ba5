//! Integer boxes `Q_R = {x ∈ Z³ : |x|_∞ ≤ R}` and the discrete calculus on them.
//!
//! Vertex values are stored lexicographically with `x₁` fastest. Edge-vector
//! fields attach component `i` at `x` to the forward edge `(x, x + e_i)`; edges
//! whose head leaves the box always carry 0.

use crate::error::{Error, Result};
use crate::par;

/// A lattice point. Axis 0 is `x₁`.
pub type Point = [i32; 3];

pub const UNIT: [Point; 3] = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BoxSpec {
    radius: i32,
}

impl BoxSpec {
    pub fn new(radius: i32) -> Result<Self> {
        if radius < 1 {
            return Err(Error::InvalidRadius(radius));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> i32 {
        self.radius
    }

    /// Number of vertices along one axis, `2R + 1`.
    pub fn side(&self) -> usize {
        (2 * self.radius + 1) as usize
    }

    pub fn len(&self) -> usize {
        self.side().pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn strides(&self) -> [usize; 3] {
        let n = self.side();
        [1, n, n * n]
    }

    #[inline]
    pub fn index(&self, x: Point) -> usize {
        let n = self.side();
        let r = self.radius;
        (x[0] + r) as usize + n * ((x[1] + r) as usize + n * (x[2] + r) as usize)
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        let n = self.side();
        let r = self.radius;
        [
            (idx % n) as i32 - r,
            ((idx / n) % n) as i32 - r,
            (idx / (n * n)) as i32 - r,
        ]
    }

    #[inline]
    pub fn contains(&self, x: Point) -> bool {
        x.iter().all(|c| c.abs() <= self.radius)
    }

    #[inline]
    pub fn is_boundary(&self, x: Point) -> bool {
        self.contains(x) && x.iter().any(|c| c.abs() == self.radius)
    }

    #[inline]
    pub fn is_interior(&self, x: Point) -> bool {
        x.iter().all(|c| c.abs() < self.radius)
    }

    /// All points in storage order.
    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    pub fn boundary_count(&self) -> usize {
        let inner = (2 * self.radius - 1) as usize;
        self.len() - inner.pow(3)
    }
}

/// Points with `|x|_∞ = R`, each once, in storage order.
pub fn boundary_vertices(bx: BoxSpec) -> Vec<Point> {
    bx.points().filter(|&x| bx.is_boundary(x)).collect()
}

/// Scalar values on the vertices of a box.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexField {
    bx: BoxSpec,
    values: Vec<f64>,
}

impl VertexField {
    pub fn zeros(bx: BoxSpec) -> Self {
        Self {
            bx,
            values: vec![0.0; bx.len()],
        }
    }

    pub fn constant(bx: BoxSpec, c: f64) -> Self {
        Self {
            bx,
            values: vec![c; bx.len()],
        }
    }

    pub fn from_fn(bx: BoxSpec, f: impl Fn(Point) -> f64) -> Self {
        let values = bx.points().map(f).collect();
        Self { bx, values }
    }

    pub fn from_values(bx: BoxSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != bx.len() {
            return Err(Error::LengthMismatch {
                radius: bx.radius(),
                expected: bx.len(),
                found: values.len(),
            });
        }
        Ok(Self { bx, values })
    }

    pub fn box_spec(&self) -> BoxSpec {
        self.bx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at `x`; panics outside the box.
    #[inline]
    pub fn get(&self, x: Point) -> f64 {
        debug_assert!(self.bx.contains(x), "{x:?} outside radius {}", self.bx.radius());
        self.values[self.bx.index(x)]
    }

    /// Value at `x`, or `None` outside the box.
    pub fn at(&self, x: Point) -> Option<f64> {
        self.bx.contains(x).then(|| self.values[self.bx.index(x)])
    }

    #[inline]
    pub fn set(&mut self, x: Point, v: f64) {
        let i = self.bx.index(x);
        self.values[i] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn restrict(&self, target: BoxSpec) -> Result<VertexField> {
        restrict(self, target)
    }

    /// Zero-extends into a box at least as large.
    pub fn embed(&self, target: BoxSpec) -> Result<VertexField> {
        if target.radius() < self.bx.radius() {
            return Err(Error::RestrictToLarger {
                from: target.radius(),
                to: self.bx.radius(),
            });
        }
        let mut out = VertexField::zeros(target);
        for (i, x) in self.bx.points().enumerate() {
            out.set(x, self.values[i]);
        }
        Ok(out)
    }
}

/// Three components per vertex, component `i` living on the edge `(x, x + e_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeVectorField {
    bx: BoxSpec,
    values: Vec<[f64; 3]>,
}

impl EdgeVectorField {
    pub fn zeros(bx: BoxSpec) -> Self {
        Self {
            bx,
            values: vec![[0.0; 3]; bx.len()],
        }
    }

    /// Builds a field from `f(x, i)`, forcing box-leaving edges to 0.
    pub fn from_fn(bx: BoxSpec, f: impl Fn(Point, usize) -> f64) -> Self {
        let r = bx.radius();
        let values = bx
            .points()
            .map(|x| {
                let mut v = [0.0; 3];
                for (i, vi) in v.iter_mut().enumerate() {
                    if x[i] < r {
                        *vi = f(x, i);
                    }
                }
                v
            })
            .collect();
        Self { bx, values }
    }

    /// Wraps raw storage; box-leaving edges are zeroed.
    pub fn from_values(bx: BoxSpec, mut values: Vec<[f64; 3]>) -> Result<Self> {
        if values.len() != bx.len() {
            return Err(Error::LengthMismatch {
                radius: bx.radius(),
                expected: bx.len(),
                found: values.len(),
            });
        }
        let r = bx.radius();
        for (idx, v) in values.iter_mut().enumerate() {
            let x = bx.point(idx);
            for i in 0..3 {
                if x[i] == r {
                    v[i] = 0.0;
                }
            }
        }
        Ok(Self { bx, values })
    }

    pub fn box_spec(&self) -> BoxSpec {
        self.bx
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: Point, i: usize) -> f64 {
        self.values[self.bx.index(x)][i]
    }

    /// Component `i` at `x`, 0 for any point outside the box.
    #[inline]
    pub fn get_or_zero(&self, x: Point, i: usize) -> f64 {
        if self.bx.contains(x) {
            self.values[self.bx.index(x)][i]
        } else {
            0.0
        }
    }

    /// Sets component `i` at `x`. Writes to box-leaving edges are dropped.
    pub fn set(&mut self, x: Point, i: usize, v: f64) {
        if x[i] < self.bx.radius() {
            let idx = self.bx.index(x);
            self.values[idx][i] = v;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Restriction to a smaller box; edges leaving the smaller box become 0.
    pub fn restrict(&self, target: BoxSpec) -> Result<EdgeVectorField> {
        if target.radius() > self.bx.radius() {
            return Err(Error::RestrictToLarger {
                from: self.bx.radius(),
                to: target.radius(),
            });
        }
        Ok(EdgeVectorField::from_fn(target, |x, i| self.get(x, i)))
    }

    pub fn embed(&self, target: BoxSpec) -> Result<EdgeVectorField> {
        if target.radius() < self.bx.radius() {
            return Err(Error::RestrictToLarger {
                from: target.radius(),
                to: self.bx.radius(),
            });
        }
        Ok(EdgeVectorField::from_fn(target, |x, i| {
            self.get_or_zero(x, i)
        }))
    }

    /// Smallest radius `ρ` such that every nonzero edge has both endpoints in `Q_ρ`.
    pub fn support_radius(&self) -> i32 {
        let mut rho = 0;
        for (idx, v) in self.values.iter().enumerate() {
            let x = self.bx.point(idx);
            for (i, &vi) in v.iter().enumerate() {
                if vi != 0.0 {
                    let mut head = x;
                    head[i] += 1;
                    let m = x.iter().chain(head.iter()).map(|c| c.abs()).max().unwrap();
                    rho = rho.max(m);
                }
            }
        }
        rho
    }
}

/// Forward difference `(grad f)_i(x) = f(x + e_i) - f(x)`, 0 on box-leaving edges.
pub fn grad(f: &VertexField) -> EdgeVectorField {
    let bx = f.box_spec();
    let n = bx.side();
    let s = bx.strides();
    let u = f.values();
    let mut out = vec![[0.0; 3]; bx.len()];
    par::for_each_plane(&mut out, n * n, |k, plane| {
        let base = k * n * n;
        for (j, v) in plane.iter_mut().enumerate() {
            let idx = base + j;
            let c = [j % n, j / n, k];
            for i in 0..3 {
                if c[i] + 1 < n {
                    v[i] = u[idx + s[i]] - u[idx];
                }
            }
        }
    });
    EdgeVectorField { bx, values: out }
}

/// Backward divergence `(div F)(x) = Σ_i F_i(x) - F_i(x - e_i)`, out-of-box terms 0.
pub fn div(field: &EdgeVectorField) -> VertexField {
    let bx = field.box_spec();
    let n = bx.side();
    let s = bx.strides();
    let f = field.values();
    let mut out = vec![0.0; bx.len()];
    par::for_each_plane(&mut out, n * n, |k, plane| {
        let base = k * n * n;
        for (j, v) in plane.iter_mut().enumerate() {
            let idx = base + j;
            let c = [j % n, j / n, k];
            let mut acc = 0.0;
            for i in 0..3 {
                acc += f[idx][i];
                if c[i] > 0 {
                    acc -= f[idx - s[i]][i];
                }
            }
            *v = acc;
        }
    });
    VertexField { bx, values: out }
}

/// Copies `f` onto the smaller box `target`.
pub fn restrict(f: &VertexField, target: BoxSpec) -> Result<VertexField> {
    let src = f.box_spec();
    if target.radius() > src.radius() {
        return Err(Error::RestrictToLarger {
            from: src.radius(),
            to: target.radius(),
        });
    }
    let n = target.side();
    let r = target.radius();
    let mut values = Vec::with_capacity(target.len());
    for x3 in -r..=r {
        for x2 in -r..=r {
            let start = src.index([-r, x2, x3]);
            values.extend_from_slice(&f.values()[start..start + n]);
        }
    }
    Ok(VertexField { bx: target, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(r: i32) -> BoxSpec {
        BoxSpec::new(r).unwrap()
    }

    #[test]
    fn counts() {
        assert_eq!(bx(1).len(), 27);
        assert_eq!(bx(1).boundary_count(), 26);
        assert_eq!(bx(2).boundary_count(), 98);
        assert_eq!(boundary_vertices(bx(1)).len(), 26);
        let b2 = boundary_vertices(bx(2));
        assert_eq!(b2.len(), 98);
        assert!(b2.iter().all(|x| x.iter().map(|c| c.abs()).max() == Some(2)));
        assert!(BoxSpec::new(0).is_err());
    }

    #[test]
    fn index_round_trip() {
        let b = bx(3);
        for i in 0..b.len() {
            assert_eq!(b.index(b.point(i)), i);
        }
        assert_eq!(b.point(0), [-3, -3, -3]);
        assert_eq!(b.point(1), [-2, -3, -3]);
    }

    #[test]
    fn grad_of_constant_and_linear() {
        let b = bx(2);
        assert_eq!(grad(&VertexField::constant(b, 4.5)).max_abs(), 0.0);
        let g = grad(&VertexField::from_fn(b, |x| x[0] as f64));
        for x in b.points() {
            assert_eq!(g.get(x, 0), if x[0] < 2 { 1.0 } else { 0.0 });
            assert_eq!(g.get(x, 1), 0.0);
            assert_eq!(g.get(x, 2), 0.0);
        }
    }

    #[test]
    fn div_of_quadratic_gradient() {
        let b = bx(3);
        let f = VertexField::from_fn(b, |x| (x[0] * x[0]) as f64);
        let d = div(&grad(&f));
        for x in b.points().filter(|&x| b.is_interior(x)) {
            assert_eq!(d.get(x), 2.0);
        }
        assert_eq!(div(&EdgeVectorField::zeros(b)).max_abs(), 0.0);
    }

    #[test]
    fn restrict_behaviour() {
        let b = bx(4);
        let f = VertexField::from_fn(b, |x| (x[0] + 10 * x[1] + 100 * x[2]) as f64);
        assert_eq!(f.restrict(b).unwrap(), f);
        let small = f.restrict(bx(2)).unwrap();
        for x in bx(2).points() {
            assert_eq!(small.get(x), f.get(x));
        }
        assert_eq!(small.get([0, 0, 0]), f.get([0, 0, 0]));
        let c = VertexField::constant(b, 2.0).restrict(bx(1)).unwrap();
        assert!(c.values().iter().all(|&v| v == 2.0));
        assert_eq!(
            f.restrict(bx(3)).unwrap().restrict(bx(1)).unwrap(),
            f.restrict(bx(1)).unwrap()
        );
        assert!(matches!(
            small.restrict(b),
            Err(Error::RestrictToLarger { from: 2, to: 4 })
        ));
    }

    #[test]
    fn edge_restrict_zeroes_rim() {
        let b = bx(3);
        let e = EdgeVectorField::from_fn(b, |_, _| 1.0);
        let r = e.restrict(bx(2)).unwrap();
        for x in bx(2).points() {
            for i in 0..3 {
                assert_eq!(r.get(x, i), if x[i] == 2 { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn support_radius_of_single_edge() {
        let mut e = EdgeVectorField::zeros(bx(4));
        e.set([0, 0, 0], 0, 1.0);
        assert_eq!(e.support_radius(), 1);
        e.set([-2, 1, 0], 2, 1.0);
        assert_eq!(e.support_radius(), 2);
    }
}
