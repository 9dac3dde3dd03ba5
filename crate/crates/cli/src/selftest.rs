//! Fast invariant checks behind `hom3 selftest`.

use hom3::correctors::{compute_phi, CorrectorSet, HomogenizedTensor};
use hom3::experiments::{fit_slope, make_source};
use hom3::io;
use hom3::kernels::{dipole_xi, harmonic_polynomial_hessian, quadrupole_c, GreenKernel, QUADRUPOLE_INDEX};
use hom3::lattice::{div, grad, BoxSpec, EdgeVectorField, VertexField};
use hom3::media::{sample, CoefficientField, EnsembleSpec};
use hom3::pipeline::{run_with, AlgorithmKind};
use hom3::solver::{apply_operator, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Check {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

type Outcome = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Outcome {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s(e: hom3::Error) -> String {
    e.to_string()
}

fn bx(r: i32) -> BoxSpec {
    BoxSpec::new(r).expect("positive radius")
}

pub fn run(cfg: &SolverConfig) -> Vec<Check> {
    let checks: [(&'static str, &dyn Fn(&SolverConfig) -> Outcome); 10] = [
        ("summation by parts", &|_| summation_by_parts()),
        ("operator symmetry", &|_| operator_symmetry()),
        ("medium restriction", &|_| medium_restriction()),
        ("flux identity", &flux_identity),
        ("homogeneous degeneracy", &homogeneous_degeneracy),
        ("green derivatives", &|_| green_derivatives()),
        ("harmonic polynomials", &|_| harmonic_polynomials()),
        ("source telescoping", &|_| source_telescoping()),
        ("slope fit", &|_| slope_fit()),
        ("field round trip", &|_| field_round_trip()),
    ];
    checks
        .into_iter()
        .map(|(name, f)| Check {
            name,
            outcome: f(cfg),
        })
        .collect()
}

fn summation_by_parts() -> Outcome {
    let b = bx(4);
    let u = VertexField::from_fn(b, |x| ((7 * x[0] + 13 * x[1] - 5 * x[2]).rem_euclid(11) - 5) as f64);
    let v = EdgeVectorField::from_fn(b, |x, i| ((3 * x[0] - x[1] + 4 * x[2] + i as i32).rem_euclid(7) - 3) as f64);
    let gu = grad(&u);
    let lhs: f64 = gu.values().iter().zip(v.values()).map(|(p, q)| p[0] * q[0] + p[1] * q[1] + p[2] * q[2]).sum();
    let rhs: f64 = -u.values().iter().zip(div(&v).values()).map(|(p, q)| p * q).sum::<f64>();
    ensure(lhs == rhs, || format!("{lhs} != {rhs}"))
}

fn operator_symmetry() -> Outcome {
    let b = bx(5);
    let a = sample(&EnsembleSpec::bernoulli(3), b).map_err(e2s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut interior = |_: ()| {
        let vals: Vec<f64> = b
            .points()
            .map(|x| if b.is_interior(x) { rng.random::<f64>() - 0.5 } else { 0.0 })
            .collect();
        VertexField::from_values(b, vals).expect("sized")
    };
    let u = interior(());
    let v = interior(());
    let au = apply_operator(&a, 0.25, &u).map_err(e2s)?;
    let av = apply_operator(&a, 0.25, &v).map_err(e2s)?;
    let dot = |p: &VertexField, q: &VertexField| p.values().iter().zip(q.values()).map(|(s, t)| s * t).sum::<f64>();
    let (l, r) = (dot(&au, &v), dot(&u, &av));
    ensure((l - r).abs() <= 1e-12 * l.abs().max(r.abs()), || format!("{l} vs {r}"))
}

fn medium_restriction() -> Outcome {
    let spec = EnsembleSpec::bernoulli(9);
    let big = sample(&spec, bx(10)).map_err(e2s)?;
    let small = sample(&spec, bx(4)).map_err(e2s)?;
    ensure(big.restrict(bx(4)).map_err(e2s)? == small, || "restricted sample differs".into())
}

fn flux_identity(cfg: &SolverConfig) -> Outcome {
    let b = bx(6);
    let a = sample(&EnsembleSpec::bernoulli(4), b).map_err(e2s)?;
    let t = 20.0;
    let first = compute_phi(&a, t, cfg).map_err(e2s)?;
    let bound = 10.0 * cfg.tol * a.max_value();
    for i in 0..3 {
        let d = div(&first.q[i]);
        for x in b.points().filter(|&x| b.is_interior(x)) {
            let err = (d.get(x) - first.phi[i].get(x) / t).abs();
            if err > bound {
                return Err(format!("component {i} at {x:?}: {err:e}"));
            }
        }
    }
    Ok(())
}

fn homogeneous_degeneracy(cfg: &SolverConfig) -> Outcome {
    let l = 8;
    let a = CoefficientField::constant(bx(2 * l), 1.0);
    let set = CorrectorSet::compute(&a, l, 0.1, cfg).map_err(e2s)?;
    let worst = set
        .phi()
        .iter()
        .chain(set.sigma.fields())
        .chain(set.psi.fields())
        .map(|f| f.max_abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-8, || format!("corrector max {worst:e}"))?;
    let d = set.a_h.max_abs_diff(&HomogenizedTensor::identity());
    ensure(d <= 1e-10, || format!("a_h differs from identity by {d:e}"))?;
    let g = make_source(1).g;
    let xi = dipole_xi(&g, set.phi()).map_err(e2s)?;
    let c = quadrupole_c(&g, set.phi(), &set.psi, &set.a_h).map_err(e2s)?;
    let m = xi.iter().chain(&c).fold(0.0f64, |m, v| m.max(v.abs()));
    ensure(m <= 1e-10, || format!("multipoles {m:e}"))?;
    let u: Vec<VertexField> = [AlgorithmKind::NoMultipole, AlgorithmKind::DipoleOnly, AlgorithmKind::Full]
        .into_iter()
        .map(|k| run_with(Some(&set), &a, &g, l, k, cfg).map(|r| r.u))
        .collect::<hom3::Result<_>>()
        .map_err(e2s)?;
    agree(&u)?;
    // dirichlet_zero only matches the others when the far field vanishes.
    let zero = EdgeVectorField::zeros(g.box_spec());
    let u: Vec<VertexField> = AlgorithmKind::ALL
        .into_iter()
        .map(|k| run_with(Some(&set), &a, &zero, l, k, cfg).map(|r| r.u))
        .collect::<hom3::Result<_>>()
        .map_err(e2s)?;
    agree(&u)
}

fn agree(u: &[VertexField]) -> Outcome {
    for w in &u[1..] {
        let d = w.values().iter().zip(u[0].values()).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        ensure(d <= 1e-8, || format!("kinds disagree by {d:e}"))?;
    }
    Ok(())
}

fn green_derivatives() -> Outcome {
    let a = HomogenizedTensor::from_raw([[3.7, 0.2, -0.1], [0.2, 3.5, 0.15], [-0.1, 0.15, 4.1]]);
    let k = GreenKernel::new(a).map_err(e2s)?;
    let h = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(1.0..20.0) * if rng.random() { 1.0 } else { -1.0 });
        for order in 1..=4usize {
            let axes: Vec<usize> = (0..order).map(|_| rng.random_range(0..3)).collect();
            let (last, rest) = axes.split_last().expect("order >= 1");
            let fd = |h: f64| -> hom3::Result<f64> {
                let mut p = x;
                let mut m = x;
                p[*last] += h;
                m[*last] -= h;
                Ok((k.derivative(p, rest)? - k.derivative(m, rest)?) / (2.0 * h))
            };
            // Richardson extrapolation of the central difference.
            let approx = (4.0 * fd(h / 2.0).map_err(e2s)? - fd(h).map_err(e2s)?) / 3.0;
            let exact = k.derivative(x, &axes).map_err(e2s)?;
            let scale = k.prefactor() * (x.iter().map(|v| v * v).sum::<f64>()).sqrt().powi(-(order as i32) - 1);
            let err = (approx - exact).abs() / exact.abs().max(scale);
            ensure(err <= 1e-6, || format!("axes {axes:?} at {x:?}: relative error {err:e}"))?;
        }
        let mut tr = 0.0;
        let mut mag = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d = k.derivative(x, &[i, j]).map_err(e2s)?;
                tr += a.get(i, j) * d;
                mag += (a.get(i, j) * d).abs();
            }
        }
        ensure(tr.abs() <= 1e-10 * mag, || format!("A:D²G = {tr:e} at {x:?}"))?;
    }
    Ok(())
}

fn harmonic_polynomials() -> Outcome {
    let a = HomogenizedTensor::from_raw([[3.7, 0.2, -0.1], [0.2, 3.5, 0.15], [-0.1, 0.15, 4.1]]);
    for &p in &QUADRUPOLE_INDEX {
        let hess = harmonic_polynomial_hessian(&a, p).map_err(e2s)?;
        let tr: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| a.get(i, j) * hess[i][j]).sum();
        ensure(tr.abs() <= 1e-14, || format!("{p:?}: A:D²v = {tr:e}"))?;
    }
    Ok(())
}

fn source_telescoping() -> Outcome {
    for seed in 0..100 {
        let s = make_source(seed);
        ensure(div(&s.g) == s.f, || format!("seed {seed}: div g != f"))?;
        ensure(s.g.support_radius() <= 2, || format!("seed {seed}: g leaves Q_2"))?;
        let total: f64 = s.f.values().iter().sum();
        ensure(total.abs() < 1e-13, || format!("seed {seed}: mean {total:e}"))?;
    }
    Ok(())
}

fn slope_fit() -> Outcome {
    for p in [-3.0, -4.5] {
        let pts: Vec<(f64, f64)> = [8.0f64, 12.0, 16.0].iter().map(|&l| (l, 2.5 * l.powf(p))).collect();
        let s = fit_slope(&pts).map_err(e2s)?;
        ensure((s - p).abs() < 1e-10, || format!("slope {s} for power {p}"))?;
    }
    Ok(())
}

fn field_round_trip() -> Outcome {
    let f = VertexField::from_fn(bx(3), |x| (x[0] as f64).exp() - x[1] as f64 * 0.1 + x[2] as f64);
    let back = io::decode(&io::encode_vertex(&f)).map_err(e2s)?;
    ensure(back == io::Field::Vertex(f), || "vertex field changed".into())
}
