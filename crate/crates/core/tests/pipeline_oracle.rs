mod common;

use common::{bx, oracle_full};
use hom3::correctors::CorrectorSet;
use hom3::experiments::make_source;
use hom3::lattice::boundary_vertices;
use hom3::media::{sample, EnsembleSpec};
use hom3::pipeline::{run_with, AlgorithmKind};
use hom3::solver::SolverConfig;

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale
}

#[test]
fn full_pipeline_matches_straight_line_oracle_at_l8() {
    let l = 8;
    let a = sample(&EnsembleSpec::bernoulli(1), bx(2 * l)).unwrap();
    let g = make_source(1).g;
    let cfg = SolverConfig::with_tol(1e-12);
    let set = CorrectorSet::compute(&a, l, 0.1, &cfg).unwrap();
    let res = run_with(Some(&set), &a, &g, l, AlgorithmKind::Full, &cfg).unwrap();
    let want = oracle_full(&a, &g, l, 0.1);

    assert_eq!(set.t, want.t);
    let phi_scale = want.phi[0].max_abs();
    assert!(rel(set.phi()[0].get([0, 0, 0]), want.phi[0].get([0, 0, 0]), phi_scale) < 1e-9);
    for i in 0..3 {
        for x in bx(2 * l).points() {
            assert!(rel(set.phi()[i].get(x), want.phi[i].get(x), phi_scale) < 1e-9, "phi_{i} at {x:?}");
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            assert!((set.a_h.get(i, j) - want.a_h[i][j]).abs() < 1e-10, "a_h[{i}][{j}]");
        }
    }
    for ((i, j), p) in &want.psi {
        let scale = p.max_abs();
        for x in bx(3 * l / 2).points() {
            assert!(rel(set.psi.field(*i, *j).get(x), p.get(x), scale) < 1e-8, "psi_{i}{j} at {x:?}");
        }
    }
    let psi12 = &want.psi.iter().find(|(p, _)| *p == (0, 1)).unwrap().1;
    assert!(rel(set.psi.field(1, 0).get([0, 0, 0]), psi12.get([0, 0, 0]), psi12.max_abs()) < 1e-8);

    let xi = res.xi.unwrap();
    let c = res.c.unwrap();
    for i in 0..3 {
        assert!((xi[i] - want.xi[i]).abs() < 1e-8 * want.xi[i].abs().max(1.0));
    }
    for n in 0..5 {
        assert!((c[n] - want.c[n]).abs() < 1e-7 * want.c[n].abs().max(1.0), "c[{n}]");
    }

    let data_scale = want.boundary.iter().fold(0.0f64, |m, p| m.max(p.1.abs()));
    assert_eq!(boundary_vertices(bx(l)).len(), want.boundary.len());
    for ((x, v), (y, w)) in boundary_vertices(bx(l)).iter().zip(&res.boundary_data).zip(&want.boundary) {
        assert_eq!(x, y);
        assert!(rel(*v, *w, data_scale) < 1e-8, "boundary at {x:?}: {v} vs {w}");
        assert_eq!(res.u.get(*x), *v);
    }
    let u_scale = want.u.max_abs();
    assert!(rel(res.u.get([0, 0, 0]), want.u.get([0, 0, 0]), u_scale) < 1e-8);
    for x in bx(l).points() {
        assert!(rel(res.u.get(x), want.u.get(x), u_scale) < 1e-8, "u at {x:?}");
    }
}
