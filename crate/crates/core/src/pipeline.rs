//! Boundary data on `∂Q_L` and the final Dirichlet solve
//! `-div(a grad u) = div(g)` in `Q_L`.
//!
//! Four choices of boundary data are supported:
//!
//! | kind             | data on `∂Q_L`                                          |
//! |------------------|---------------------------------------------------------|
//! | `dirichlet_zero` | `0`                                                     |
//! | `no_multipole`   | `(1 + φ_i ∂_i + ψ_ij ∂_ij) ũ_h`                         |
//! | `dipole_only`    | `(1 + φ_k ∂_k)(ũ_h + ξ_i ∂_i G)`                        |
//! | `full`           | `(1 + φ_i ∂_i + ψ_ij ∂_ij)(ũ_h + ξ_i ∂_i G + c_ij ∂_ij G)` |
//!
//! `ψ_ij ∂_ij` runs over all nine ordered pairs with symmetric `ψ`. Derivatives of
//! the homogenized profile are analytic.

use crate::correctors::{CorrectorSet, HomogenizedTensor, StageRadii};
use crate::error::{Error, Result};
use crate::kernels::{dipole_xi, quadrupole_c, GreenKernel, HomogenizedSolution, MultipoleData};
use crate::lattice::{boundary_vertices, div, BoxSpec, EdgeVectorField, Point, VertexField};
use crate::media::CoefficientField;
use crate::par;
use crate::solver::{solve, MassiveProblem, SolveReport, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlgorithmKind {
    Full,
    DirichletZero,
    NoMultipole,
    DipoleOnly,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 4] = [
        AlgorithmKind::DirichletZero,
        AlgorithmKind::NoMultipole,
        AlgorithmKind::DipoleOnly,
        AlgorithmKind::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::DirichletZero => "dirichlet_zero",
            Self::NoMultipole => "no_multipole",
            Self::DipoleOnly => "dipole_only",
        }
    }

    pub fn needs_correctors(self) -> bool {
        self != Self::DirichletZero
    }
}

impl std::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AlgorithmKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

#[derive(Clone, Debug)]
pub struct PipelineResult {
    pub kind: AlgorithmKind,
    pub l: i32,
    pub radii: StageRadii,
    /// Solution on `Q_L`.
    pub u: VertexField,
    /// Dirichlet data, aligned with `boundary_vertices(Q_L)`.
    pub boundary_data: Vec<f64>,
    pub a_h: Option<HomogenizedTensor>,
    pub xi: Option<[f64; 3]>,
    pub c: Option<[f64; 5]>,
    pub t: Option<f64>,
    /// `(stage, report)` for every solve in execution order.
    pub reports: Vec<(String, SolveReport)>,
}

fn check_source(g: &EdgeVectorField) -> Result<()> {
    let rho = g.support_radius();
    if rho > 2 {
        return Err(Error::SupportViolation(format!(
            "g must live in Q_2, reaches radius {rho}"
        )));
    }
    Ok(())
}

/// Places `g` on `bx`; `g` must already be supported inside `bx`.
fn fit_edge(g: &EdgeVectorField, bx: BoxSpec) -> Result<EdgeVectorField> {
    if g.box_spec().radius() <= bx.radius() {
        g.embed(bx)
    } else {
        g.restrict(bx)
    }
}

/// Boundary data and the moments it used.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryData {
    pub values: Vec<f64>,
    pub xi: Option<[f64; 3]>,
    pub c: Option<[f64; 5]>,
}

/// Builds Dirichlet data on `∂Q_L` for `kind`. `correctors` may be `None` only for
/// `dirichlet_zero`.
pub fn boundary_data(
    correctors: Option<&CorrectorSet>,
    g: &EdgeVectorField,
    l: i32,
    kind: AlgorithmKind,
) -> Result<BoundaryData> {
    let fin = BoxSpec::new(l)?;
    let points = boundary_vertices(fin);
    let set = match (kind, correctors) {
        (AlgorithmKind::DirichletZero, _) => {
            return Ok(BoundaryData {
                values: vec![0.0; points.len()],
                xi: None,
                c: None,
            })
        }
        (_, Some(set)) => set,
        (_, None) => {
            return Err(Error::SupportViolation(format!(
                "{kind} boundary data needs correctors"
            )))
        }
    };
    let phi = set.phi();
    let f = div(g);
    let kernel = GreenKernel::new(set.a_h)?;

    let (xi, c) = match kind {
        AlgorithmKind::NoMultipole => (None, None),
        AlgorithmKind::DipoleOnly => (Some(dipole_xi(g, phi)?), None),
        AlgorithmKind::Full => (
            Some(dipole_xi(g, phi)?),
            Some(quadrupole_c(g, phi, &set.psi, &set.a_h)?),
        ),
        AlgorithmKind::DirichletZero => unreachable!(),
    };
    let solution = HomogenizedSolution::new(
        kernel,
        &f,
        MultipoleData {
            xi: xi.unwrap_or_default(),
            c: c.unwrap_or_default(),
        },
    );
    let with_psi = kind != AlgorithmKind::DipoleOnly;
    let psi = &set.psi;

    let eval = |x: Point| -> Result<f64> {
        let jet = solution.jet([x[0] as f64, x[1] as f64, x[2] as f64])?;
        let mut v = jet.value;
        for i in 0..3 {
            v += phi[i].get(x) * jet.grad[i];
        }
        if with_psi {
            for i in 0..3 {
                for j in 0..3 {
                    v += psi.field(i, j).get(x) * jet.hess[i][j];
                }
            }
        }
        Ok(v)
    };
    let values = par::map(points, eval).into_iter().collect::<Result<Vec<_>>>()?;
    Ok(BoundaryData { values, xi, c })
}

/// Solves `-div(a grad u) = div(g)` on `Q_L` with the given boundary data.
pub fn final_solve(
    a: &CoefficientField,
    g: &EdgeVectorField,
    l: i32,
    data: &[f64],
    cfg: &SolverConfig,
) -> Result<(VertexField, SolveReport)> {
    let fin = BoxSpec::new(l)?;
    let a = a.restrict(fin)?;
    let g = fit_edge(g, fin)?;
    let mut bc = VertexField::zeros(fin);
    for (x, &v) in boundary_vertices(fin).into_iter().zip(data) {
        bc.set(x, v);
    }
    let (u, rep) = solve(&MassiveProblem::new(&a, 0.0).with_g(&g).with_boundary(&bc), cfg)?;
    Ok((u, rep.require("final")?))
}

/// Final stage given precomputed correctors on the same realization.
pub fn run_with(
    correctors: Option<&CorrectorSet>,
    a: &CoefficientField,
    g: &EdgeVectorField,
    l: i32,
    kind: AlgorithmKind,
    cfg: &SolverConfig,
) -> Result<PipelineResult> {
    let radii = StageRadii::for_scale(l)?;
    check_source(g)?;
    if let Some(set) = correctors {
        if set.l != l {
            return Err(Error::InvalidScale(set.l));
        }
    }
    let data = boundary_data(correctors, g, l, kind)?;
    let (u, rep) = final_solve(a, g, l, &data.values, cfg)?;
    let mut reports = correctors.map(|s| s.reports()).unwrap_or_default();
    reports.push(("final".to_string(), rep));
    Ok(PipelineResult {
        kind,
        l,
        radii,
        u,
        boundary_data: data.values,
        a_h: correctors.map(|s| s.a_h),
        xi: data.xi,
        c: data.c,
        t: correctors.map(|s| s.t),
        reports,
    })
}

/// Runs one boundary construction from a medium on `Q_{2L}`.
pub fn run(
    a: &CoefficientField,
    g: &EdgeVectorField,
    l: i32,
    eps: f64,
    kind: AlgorithmKind,
    cfg: &SolverConfig,
) -> Result<PipelineResult> {
    let radii = StageRadii::for_scale(l)?;
    check_source(g)?;
    if a.box_spec().radius() < radii.phi {
        return Err(Error::RadiusOverflow {
            radius: radii.phi,
            available: a.box_spec().radius(),
        });
    }
    if !(a.min_value() > 0.0) || !a.max_value().is_finite() {
        return Err(Error::Ellipticity {
            lower: a.min_value(),
            upper: a.max_value(),
        });
    }
    let a = a.restrict(BoxSpec::new(radii.phi)?)?;
    let set = if kind.needs_correctors() {
        Some(CorrectorSet::compute(&a, l, eps, cfg)?)
    } else {
        None
    };
    run_with(set.as_ref(), &a, g, l, kind, cfg)
}

/// Forward discrete gradient of `u` at `x`.
pub fn observe_gradient(result: &PipelineResult, x: Point) -> Result<[f64; 3]> {
    gradient_at(&result.u, x)
}

pub fn gradient_at(u: &VertexField, x: Point) -> Result<[f64; 3]> {
    let bx = u.box_spec();
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        let mut y = x;
        y[i] += 1;
        if !bx.contains(x) || !bx.contains(y) {
            return Err(Error::RadiusOverflow {
                radius: x.iter().chain(y.iter()).map(|c| c.abs()).max().unwrap(),
                available: bx.radius(),
            });
        }
        *o = u.get(y) - u.get(x);
    }
    Ok(out)
}
