//! Independent oracles: a banded Cholesky direct solver assembled straight from the
//! stencil, closed-form Green derivatives expanded by hand, and a straight-line
//! re-implementation of the whole boundary construction.
#![allow(dead_code)]

use hom3::lattice::{BoxSpec, EdgeVectorField, Point, VertexField};
use hom3::media::CoefficientField;
use nalgebra::Matrix3;

pub fn bx(r: i32) -> BoxSpec {
    BoxSpec::new(r).unwrap()
}

pub fn shifted(x: Point, k: usize, d: i32) -> Point {
    let mut y = x;
    y[k] += d;
    y
}

fn inside(r: i32, x: Point) -> bool {
    x.iter().all(|c| c.abs() <= r)
}

fn interior(r: i32, x: Point) -> bool {
    x.iter().all(|c| c.abs() < r)
}

/// Lower-triangular band factor of an SPD matrix.
struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.bw + 1) + (j + self.bw - i)]
    }

    fn factor(n: usize, bw: usize, mut l: Vec<f64>) -> Self {
        let w = bw + 1;
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                let mut s = l[i * w + (j + bw - i)];
                let k0 = i.saturating_sub(bw).max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                l[i * w + (j + bw - i)] = if i == j {
                    assert!(s > 0.0, "matrix is not positive definite");
                    s.sqrt()
                } else {
                    s / l[j * w + bw]
                };
            }
        }
        Self { n, bw, l }
    }

    fn solve(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let mut s = b[i];
            for k in i.saturating_sub(self.bw)..i {
                s -= self.at(i, k) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + self.bw + 1).min(self.n) {
                s -= self.at(k, i) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
    }
}

/// Direct solver for `inv_t u - div(c grad u) = rhs` on the interior of `Q_r`
/// with Dirichlet data, factored once.
pub struct DirectSolver {
    r: i32,
    m: usize,
    coef: Vec<[f64; 3]>,
    chol: BandCholesky,
}

impl DirectSolver {
    /// `coef(x, k)` is the conductance of the edge `(x, x + e_k)`.
    pub fn new(r: i32, inv_t: f64, coef: impl Fn(Point, usize) -> f64) -> Self {
        let m = (2 * r - 1) as usize;
        let n = m * m * m;
        let bw = m * m;
        let full = bx(r);
        let mut c = vec![[0.0; 3]; full.len()];
        for x in full.points() {
            for k in 0..3 {
                if x[k] < r {
                    c[full.index(x)][k] = coef(x, k);
                }
            }
        }
        let idx = |x: Point| -> usize {
            let s = |v: i32| (v + r - 1) as usize;
            s(x[0]) + m * (s(x[1]) + m * s(x[2]))
        };
        let mut band = vec![0.0; n * (bw + 1)];
        for x in full.points().filter(|&x| interior(r, x)) {
            let i = idx(x);
            let mut diag = inv_t;
            for k in 0..3 {
                let fwd = c[full.index(x)][k];
                let back = c[full.index(shifted(x, k, -1))][k];
                diag += fwd + back;
                let y = shifted(x, k, -1);
                if interior(r, y) {
                    band[i * (bw + 1) + (idx(y) + bw - i)] = -back;
                }
            }
            band[i * (bw + 1) + bw] = diag;
        }
        Self {
            r,
            m,
            coef: c,
            chol: BandCholesky::factor(n, bw, band),
        }
    }

    pub fn solve(&self, rhs: impl Fn(Point) -> f64, bc: impl Fn(Point) -> f64) -> VertexField {
        let r = self.r;
        let m = self.m;
        let full = bx(r);
        let mut b = vec![0.0; m * m * m];
        let mut order = Vec::with_capacity(b.len());
        for x in full.points().filter(|&x| interior(r, x)) {
            let mut v = rhs(x);
            for k in 0..3 {
                for d in [-1, 1] {
                    let y = shifted(x, k, d);
                    if !interior(r, y) {
                        let e = if d == 1 { x } else { y };
                        v += self.coef[full.index(e)][k] * bc(y);
                    }
                }
            }
            b[order.len()] = v;
            order.push(x);
        }
        self.chol.solve(&mut b);
        let mut out = VertexField::from_fn(full, |x| if interior(r, x) { 0.0 } else { bc(x) });
        for (x, v) in order.into_iter().zip(b) {
            out.set(x, v);
        }
        out
    }
}

/// `Σ_k e(x, k) - e(x - e_k, k)`.
pub fn div_at(e: impl Fn(Point, usize) -> f64, x: Point) -> f64 {
    (0..3).map(|k| e(x, k) - e(shifted(x, k, -1), k)).sum()
}

/// Closed-form Green function of `-div(A grad)` and its derivatives up to order 4.
pub struct Green {
    pub b: [[f64; 3]; 3],
    pub c0: f64,
}

impl Green {
    pub fn new(a: [[f64; 3]; 3]) -> Self {
        let m = Matrix3::from_fn(|i, j| a[i][j]);
        let inv = m.try_inverse().unwrap();
        Self {
            b: std::array::from_fn(|i| std::array::from_fn(|j| inv[(i, j)])),
            c0: 1.0 / (4.0 * std::f64::consts::PI * m.determinant().sqrt()),
        }
    }

    fn yq(&self, x: [f64; 3]) -> ([f64; 3], f64) {
        let y: [f64; 3] = std::array::from_fn(|i| (0..3).map(|j| self.b[i][j] * x[j]).sum());
        let q = (0..3).map(|i| x[i] * y[i]).sum();
        (y, q)
    }

    pub fn value(&self, x: [f64; 3]) -> f64 {
        self.c0 * self.yq(x).1.powf(-0.5)
    }

    pub fn d1(&self, x: [f64; 3], i: usize) -> f64 {
        let (y, q) = self.yq(x);
        -self.c0 * y[i] * q.powf(-1.5)
    }

    pub fn d2(&self, x: [f64; 3], i: usize, j: usize) -> f64 {
        let (y, q) = self.yq(x);
        self.c0 * (3.0 * y[i] * y[j] * q.powf(-2.5) - self.b[i][j] * q.powf(-1.5))
    }

    pub fn d3(&self, x: [f64; 3], i: usize, j: usize, k: usize) -> f64 {
        let (y, q) = self.yq(x);
        let b = &self.b;
        self.c0
            * (3.0 * (b[i][k] * y[j] + y[i] * b[j][k] + b[i][j] * y[k]) * q.powf(-2.5)
                - 15.0 * y[i] * y[j] * y[k] * q.powf(-3.5))
    }

    pub fn d4(&self, x: [f64; 3], i: usize, j: usize, k: usize, l: usize) -> f64 {
        let (y, q) = self.yq(x);
        let b = &self.b;
        let pairs = b[i][k] * b[j][l] + b[i][l] * b[j][k] + b[i][j] * b[k][l];
        let mixed = b[i][k] * y[j] * y[l]
            + b[j][k] * y[i] * y[l]
            + b[i][j] * y[k] * y[l]
            + b[i][l] * y[j] * y[k]
            + b[j][l] * y[i] * y[k]
            + b[k][l] * y[i] * y[j];
        self.c0
            * (3.0 * pairs * q.powf(-2.5) - 15.0 * mixed * q.powf(-3.5)
                + 105.0 * y[i] * y[j] * y[k] * y[l] * q.powf(-4.5))
    }

    pub fn derivative(&self, x: [f64; 3], axes: &[usize]) -> f64 {
        match *axes {
            [] => self.value(x),
            [i] => self.d1(x, i),
            [i, j] => self.d2(x, i, j),
            [i, j, k] => self.d3(x, i, j, k),
            [i, j, k, l] => self.d4(x, i, j, k, l),
            _ => panic!("order above 4"),
        }
    }
}

pub fn real(x: Point) -> [f64; 3] {
    [x[0] as f64, x[1] as f64, x[2] as f64]
}

/// Everything the straight-line oracle produces.
pub struct OracleRun {
    pub t: f64,
    pub phi: Vec<VertexField>,
    pub a_h: [[f64; 3]; 3],
    pub psi: Vec<((usize, usize), VertexField)>,
    pub xi: [f64; 3],
    pub c: [f64; 5],
    pub boundary: Vec<(Point, f64)>,
    pub u: VertexField,
}

const QUAD: [(usize, usize); 5] = [(0, 1), (0, 2), (1, 2), (1, 1), (2, 2)];

/// The full construction at scale `l` from a medium on `Q_{2l}`, written out in one
/// routine with direct solves throughout.
pub fn oracle_full(a: &CoefficientField, g: &EdgeVectorField, l: i32, eps: f64) -> OracleRun {
    let r2 = 2 * l;
    let r7 = 7 * l / 4;
    let r3 = 3 * l / 2;
    let t = (l as f64).powf(2.0 * (1.0 - eps));
    let ac = |x: Point, k: usize| -> f64 { a.get(x, k) };

    // First-order correctors on Q_2L: (1/T)φ - div(a grad φ) = div(a e_i).
    let big = DirectSolver::new(r2, 1.0 / t, ac);
    let phi: Vec<VertexField> = (0..3)
        .map(|i| big.solve(|x| ac(x, i) - ac(shifted(x, i, -1), i), |_| 0.0))
        .collect();

    // Fluxes q_i on in-box edges, then vertex averages on Q_2L.
    let q = |i: usize, x: Point, k: usize| -> f64 {
        let y = shifted(x, k, 1);
        if !inside(r2, x) || !inside(r2, y) {
            return 0.0;
        }
        let d = if i == k { 1.0 } else { 0.0 };
        ac(x, k) * (d + phi[i].get(y) - phi[i].get(x))
    };
    let qbar = |i: usize, x: Point, k: usize| -> f64 {
        let has_fwd = x[k] < r2;
        let has_back = x[k] > -r2;
        match (has_fwd, has_back) {
            (true, true) => 0.5 * (q(i, x, k) + q(i, shifted(x, k, -1), k)),
            (true, false) => q(i, x, k),
            (false, true) => q(i, shifted(x, k, -1), k),
            _ => unreachable!(),
        }
    };

    // Weighted average over Q_L.
    let lf = l as f64;
    let w = |x: Point| {
        let s: f64 = x.iter().map(|&c| (c as f64 / lf).powi(2)).sum();
        if s < 1.0 {
            (1.0 - s).powi(2)
        } else {
            0.0
        }
    };
    let pts_l: Vec<Point> = bx(l).points().collect();
    let wsum: f64 = pts_l.iter().map(|&x| w(x)).sum();
    let mut raw = [[0.0; 3]; 3];
    for i in 0..3 {
        for k in 0..3 {
            raw[k][i] = pts_l.iter().map(|&x| w(x) / wsum * qbar(i, x, k)).sum();
        }
    }
    let a_h: [[f64; 3]; 3] =
        std::array::from_fn(|i| std::array::from_fn(|j| 0.5 * (raw[i][j] + raw[j][i])));

    // Flux correctors on Q_{7L/4} with unit conductances.
    let mid = DirectSolver::new(r7, 1.0 / t, |_, _| 1.0);
    let mut sigma = std::collections::HashMap::new();
    for i in 0..3 {
        for (j, k) in [(0, 1), (0, 2), (1, 2)] {
            let e = |x: Point, m: usize| -> f64 {
                let y = shifted(x, m, 1);
                if !inside(r7, x) || !inside(r7, y) {
                    return 0.0;
                }
                if m == j {
                    qbar(i, x, k)
                } else if m == k {
                    -qbar(i, x, j)
                } else {
                    0.0
                }
            };
            let s = mid.solve(|x| div_at(e, x), |_| 0.0);
            sigma.insert((i, j, k), s);
        }
    }
    let sig = |i: usize, j: usize, k: usize, x: Point| -> f64 {
        if j == k {
            0.0
        } else if j < k {
            sigma[&(i, j, k)].get(x)
        } else {
            -sigma[&(i, k, j)].get(x)
        }
    };

    // Second-order correctors on Q_{3L/2}.
    let small = DirectSolver::new(r3, 1.0 / t, ac);
    let h = |i: usize, j: usize, x: Point, k: usize| -> f64 {
        let y = shifted(x, k, 1);
        if !inside(r3, x) || !inside(r3, y) {
            return 0.0;
        }
        let d = if k == j { ac(x, j) * phi[i].get(x) } else { 0.0 };
        d - sig(i, k, j, x)
    };
    let mut psi = Vec::new();
    for i in 0..3 {
        for j in i..3 {
            let e = |x: Point, k: usize| 0.5 * (h(i, j, x, k) + h(j, i, x, k));
            psi.push(((i, j), small.solve(|x| div_at(e, x), |_| 0.0)));
        }
    }
    let psi_at = |i: usize, j: usize, x: Point| -> f64 {
        let key = (i.min(j), i.max(j));
        psi.iter().find(|(p, _)| *p == key).unwrap().1.get(x)
    };

    // Multipoles.
    let edges: Vec<(Point, usize, f64)> = g
        .box_spec()
        .points()
        .flat_map(|x| (0..3).map(move |k| (x, k)))
        .filter_map(|(x, k)| {
            let v = g.get_or_zero(x, k);
            (v != 0.0).then_some((x, k, v))
        })
        .collect();
    let mut xi = [0.0; 3];
    for &(x, k, v) in &edges {
        for i in 0..3 {
            xi[i] += v * (phi[i].get(shifted(x, k, 1)) - phi[i].get(x));
        }
    }
    let mut c = [0.0; 5];
    for (n, &(i, j)) in QUAD.iter().enumerate() {
        let ratio = a_h[i][j] / a_h[0][0];
        let half = if i == j { 0.5 } else { 1.0 };
        // Gradient of v_ij = half (x_i x_j - ratio x_1^2).
        let dv = |x: [f64; 3], m: usize| -> f64 {
            let mut s = 0.0;
            if m == i {
                s += x[j];
            }
            if m == j {
                s += x[i];
            }
            if m == 0 {
                s -= 2.0 * ratio * x[0];
            }
            half * s
        };
        let weight = if i == j { 1.0 } else { 2.0 };
        let wf = |x: Point| -> f64 {
            let xr = real(x);
            let first: f64 = (0..3).map(|m| phi[m].get(x) * dv(xr, m)).sum();
            first + weight * (psi_at(i, j, x) - ratio * psi_at(0, 0, x))
        };
        c[n] = -edges
            .iter()
            .map(|&(x, k, v)| v * (wf(shifted(x, k, 1)) - wf(x)))
            .sum::<f64>();
    }

    // Boundary data on ∂Q_L from u_h and its first two derivatives.
    let green = Green::new(a_h);
    let charge: Vec<(Point, f64)> = g
        .box_spec()
        .points()
        .map(|x| (x, div_at(|y, k| g.get_or_zero(y, k), x)))
        .filter(|&(_, v)| v != 0.0)
        .collect();
    let uh = |x: [f64; 3], axes: &[usize]| -> f64 {
        let mut s = 0.0;
        for &(y, f) in &charge {
            let d = [x[0] - y[0] as f64, x[1] - y[1] as f64, x[2] - y[2] as f64];
            s += f * green.derivative(d, axes);
        }
        for m in 0..3 {
            let mut ax = axes.to_vec();
            ax.push(m);
            s += xi[m] * green.derivative(x, &ax);
        }
        for (n, &(i, j)) in QUAD.iter().enumerate() {
            let mut ax = axes.to_vec();
            ax.extend([i, j]);
            s += c[n] * green.derivative(x, &ax);
        }
        s
    };
    let mut boundary = Vec::new();
    for x in bx(l).points().filter(|&x| !interior(l, x)) {
        let xr = real(x);
        let mut v = uh(xr, &[]);
        for i in 0..3 {
            v += phi[i].get(x) * uh(xr, &[i]);
            for j in 0..3 {
                v += psi_at(i, j, x) * uh(xr, &[i, j]);
            }
        }
        boundary.push((x, v));
    }

    // Final solve on Q_L without mass.
    let fin = DirectSolver::new(l, 0.0, ac);
    let bmap: std::collections::HashMap<Point, f64> = boundary.iter().copied().collect();
    let u = fin.solve(|x| div_at(|y, k| g.get_or_zero(y, k), x), |x| bmap[&x]);

    OracleRun {
        t,
        phi,
        a_h,
        psi,
        xi,
        c,
        boundary,
        u,
    }
}
