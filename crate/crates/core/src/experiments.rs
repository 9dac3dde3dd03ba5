//! Sources, the convergence and growth studies, slope fits and CSV tables.

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};

use crate::correctors::{CorrectorSet, StageRadii};
use crate::error::{Error, Result};
use crate::lattice::{div, BoxSpec, EdgeVectorField, Point, VertexField};
use crate::media::{sample, seeded_rng, CoefficientField, EnsembleSpec};
use crate::pipeline::{gradient_at, run_with, AlgorithmKind};
use crate::solver::SolverConfig;

/// Stream used for source draws, kept apart from every medium stream.
const SOURCE_STREAM: u64 = 0x5352_4345;

/// A compactly supported charge `f` together with a flux `g` such that `div(g) = f`.
#[derive(Clone, Debug, PartialEq)]
pub struct SourcePair {
    /// On `Q_2`, supported in `{-1, 0, 1}^3`.
    pub f: VertexField,
    /// On `Q_2`.
    pub g: EdgeVectorField,
}

/// Mean-zero standard normal charge on `{-1, 0, 1}^3`.
pub fn make_source(seed: u64) -> SourcePair {
    let mut rng = seeded_rng(seed, SOURCE_STREAM);
    let mut raw = [0.0f64; 27];
    for v in &mut raw {
        *v = StandardNormal.sample(&mut rng);
    }
    let mean = raw.iter().sum::<f64>() / 27.0;
    let bx = BoxSpec::new(2).expect("radius 2");
    let mut f = VertexField::zeros(bx);
    for (n, v) in raw.iter().enumerate() {
        let x = [(n % 3) as i32 - 1, (n / 3 % 3) as i32 - 1, (n / 9) as i32 - 1];
        f.set(x, v - mean);
    }
    source_from_charge(&f).expect("charge lives in Q_1")
}

/// Builds `g` from a charge supported in `{-1, 0, 1}^3` by telescoping along
/// `x_1`, then `x_2` on the plane `x_1 = 0`, then `x_3` on the line `x_1 = x_2 = 0`.
///
/// The returned `f` is `div(g)`, which agrees with the input up to rounding and
/// makes the identity exact.
pub fn source_from_charge(charge: &VertexField) -> Result<SourcePair> {
    let c = |x: Point| charge.at(x).unwrap_or(0.0);
    for x in charge.box_spec().points() {
        if x.iter().any(|v| v.abs() > 1) && charge.get(x) != 0.0 {
            return Err(Error::SupportViolation(format!(
                "charge at {x:?} is outside {{-1,0,1}}^3"
            )));
        }
    }
    let bx = BoxSpec::new(2)?;
    let mut g = EdgeVectorField::zeros(bx);
    let mut plane = [[0.0; 3]; 3];
    for x2 in -1..=1 {
        for x3 in -1..=1 {
            g.set([-1, x2, x3], 0, c([-1, x2, x3]));
            g.set([0, x2, x3], 0, -c([1, x2, x3]));
            plane[(x2 + 1) as usize][(x3 + 1) as usize] = (-1..=1).map(|x1| c([x1, x2, x3])).sum();
        }
    }
    let mut line = [0.0; 3];
    for x3 in -1..=1 {
        let a = |x2: i32| plane[(x2 + 1) as usize][(x3 + 1) as usize];
        g.set([0, -1, x3], 1, a(-1));
        g.set([0, 0, x3], 1, -a(1));
        line[(x3 + 1) as usize] = a(-1) + a(0) + a(1);
    }
    g.set([0, 0, -1], 2, line[0]);
    g.set([0, 0, 0], 2, -line[2]);
    let f = div(&g);
    Ok(SourcePair { f, g })
}

/// One entry of the convergence table. `value` is `NaN` when `error` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub seed: u64,
    pub l: i32,
    pub kind: AlgorithmKind,
    pub value: f64,
    pub error: Option<String>,
}

impl ConvergenceRow {
    pub fn is_valid(&self) -> bool {
        self.error.is_none() && self.value.is_finite()
    }
}

/// Convergence study parameters.
#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub ls: Vec<i32>,
    pub seeds: Vec<u64>,
    pub kinds: Vec<AlgorithmKind>,
    pub eps: f64,
    pub ensemble: EnsembleSpec,
    pub solver: SolverConfig,
}

/// Progress notifications from [`convergence_study_observed`].
#[derive(Clone, Copy, Debug)]
pub enum StudyEvent<'a> {
    Medium { seed: u64, radius: i32 },
    Stage { seed: u64, scale: i32, stage: &'a str },
    Final { seed: u64, scale: i32, kind: AlgorithmKind },
}

/// Scales a study needs: every `L` and `2L`, sorted and deduplicated.
pub fn study_scales(ls: &[i32]) -> Vec<i32> {
    let mut s: Vec<i32> = ls.iter().flat_map(|&l| [l, 2 * l]).collect();
    s.sort_unstable();
    s.dedup();
    s
}

fn validate_study(cfg: &StudyConfig) -> Result<()> {
    if cfg.ls.is_empty() || cfg.seeds.is_empty() || cfg.kinds.is_empty() {
        return Err(Error::InvalidEnsemble("empty study grid".into()));
    }
    for &l in &cfg.ls {
        StageRadii::for_scale(l)?;
    }
    if !(cfg.eps > 0.0 && cfg.eps < 1.0) {
        return Err(Error::InvalidTolerance(cfg.eps));
    }
    cfg.ensemble.validate()
}

pub fn convergence_study(cfg: &StudyConfig) -> Result<Vec<ConvergenceRow>> {
    convergence_study_observed(cfg, &mut |_| {})
}

/// Runs every `(seed, L, kind)` of the grid. Each seed's medium is sampled once
/// on `Q_{4 max L}`; each scale's correctors are computed once and shared by all
/// kinds. Stage failures invalidate the affected rows instead of aborting.
pub fn convergence_study_observed(
    cfg: &StudyConfig,
    on_event: &mut dyn FnMut(StudyEvent<'_>),
) -> Result<Vec<ConvergenceRow>> {
    validate_study(cfg)?;
    let scales = study_scales(&cfg.ls);
    let top = 2 * scales.last().copied().unwrap_or(0);
    let kinds: Vec<AlgorithmKind> = {
        let mut k = cfg.kinds.clone();
        k.sort_unstable();
        k.dedup();
        k
    };
    let needs_correctors = kinds.iter().any(|k| k.needs_correctors());

    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let medium = sample(&cfg.ensemble.with_seed(seed), BoxSpec::new(top)?)?;
        on_event(StudyEvent::Medium { seed, radius: top });
        let g = make_source(seed).g;

        // Gradients observed at (s/2, s/2, s/2) and (s/4, s/4, s/4) for each scale s.
        let mut observed: BTreeMap<(i32, AlgorithmKind), std::result::Result<Solved, String>> =
            BTreeMap::new();
        for &s in &scales {
            let a = medium.restrict(BoxSpec::new(2 * s)?)?;
            let set = if needs_correctors {
                let mut cb = |stage: &'static str| {
                    on_event(StudyEvent::Stage { seed, scale: s, stage })
                };
                Some(CorrectorSet::compute_observed(&a, s, cfg.eps, &cfg.solver, &mut cb))
            } else {
                None
            };
            for &kind in &kinds {
                let out = solve_scale(set.as_ref(), &a, &g, s, kind, &cfg.solver);
                on_event(StudyEvent::Final { seed, scale: s, kind });
                observed.insert((s, kind), out);
            }
        }

        for &l in &cfg.ls {
            for &kind in &kinds {
                let coarse = &observed[&(l, kind)];
                let fine = &observed[&(2 * l, kind)];
                let row = match (coarse, fine) {
                    (Ok(c), Ok(f)) => {
                        let gc = c.at_half;
                        let gf = f.at_quarter;
                        let d = (0..3).map(|i| (gf[i] - gc[i]).powi(2)).sum::<f64>().sqrt();
                        ConvergenceRow { seed, l, kind, value: d, error: None }
                    }
                    (Err(e), _) | (_, Err(e)) => ConvergenceRow {
                        seed,
                        l,
                        kind,
                        value: f64::NAN,
                        error: Some(e.clone()),
                    },
                };
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

struct Solved {
    at_half: [f64; 3],
    at_quarter: [f64; 3],
}

fn solve_scale(
    set: Option<&Result<CorrectorSet>>,
    a: &CoefficientField,
    g: &EdgeVectorField,
    s: i32,
    kind: AlgorithmKind,
    cfg: &SolverConfig,
) -> std::result::Result<Solved, String> {
    let set = match set {
        Some(Ok(set)) => Some(set),
        Some(Err(e)) if kind.needs_correctors() => return Err(e.to_string()),
        _ => None,
    };
    let res = run_with(set, a, g, s, kind, cfg).map_err(|e| e.to_string())?;
    let h = s / 2;
    let q = s / 4;
    Ok(Solved {
        at_half: gradient_at(&res.u, [h, h, h]).map_err(|e| e.to_string())?,
        at_quarter: gradient_at(&res.u, [q, q, q]).map_err(|e| e.to_string())?,
    })
}

/// Least-squares slope of `log(value)` against `log(L)`. With four or more points
/// the smallest `L` is dropped as pre-asymptotic.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<f64> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    if pts.len() != points.len() || pts.len() < 3 {
        return Err(Error::TooFewPoints(pts.len()));
    }
    for &(l, v) in &pts {
        if !(l > 0.0) {
            return Err(Error::NonPositiveValue(l));
        }
        if !(v > 0.0) {
            return Err(Error::NonPositiveValue(v));
        }
    }
    if pts.len() >= 4 {
        pts.remove(0);
    }
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlopeRow {
    pub kind: AlgorithmKind,
    pub seed: u64,
    pub slope: f64,
}

/// One slope per `(kind, seed)` from valid rows; groups that cannot be fitted get `NaN`.
pub fn slopes(rows: &[ConvergenceRow]) -> Vec<SlopeRow> {
    let mut groups: BTreeMap<(AlgorithmKind, u64), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        let e = groups.entry((r.kind, r.seed)).or_default();
        if r.is_valid() {
            e.push((r.l as f64, r.value));
        }
    }
    groups
        .into_iter()
        .map(|((kind, seed), pts)| SlopeRow {
            kind,
            seed,
            slope: fit_slope(&pts).unwrap_or(f64::NAN),
        })
        .collect()
}

/// Mean over seeds of the per-seed slopes for `kind`.
pub fn mean_slope(slopes: &[SlopeRow], kind: AlgorithmKind) -> f64 {
    let v: Vec<f64> = slopes.iter().filter(|s| s.kind == kind).map(|s| s.slope).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthRow {
    pub r: i32,
    pub phi_l2: f64,
    pub psi_fluct: f64,
}

/// Corrector growth statistics at scale `L` on one realization.
pub fn growth_study(
    ensemble: &EnsembleSpec,
    l: i32,
    seed: u64,
    radii: &[i32],
    eps: f64,
    cfg: &SolverConfig,
) -> Result<Vec<GrowthRow>> {
    let stage = StageRadii::for_scale(l)?;
    check_growth_radii(radii, stage.psi)?;
    let a = sample(&ensemble.with_seed(seed), BoxSpec::new(stage.phi)?)?;
    let set = CorrectorSet::compute(&a, l, eps, cfg)?;
    growth_from_correctors(&set, radii)
}

fn check_growth_radii(radii: &[i32], max: i32) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::TooFewPoints(0));
    }
    for &r in radii {
        if r < 1 {
            return Err(Error::InvalidRadius(r));
        }
        if r > max {
            return Err(Error::RadiusOverflow { radius: r, available: max });
        }
    }
    Ok(())
}

/// `phi_l2 = (avg_{Q_r} |φ|²)^{1/2}` and `psi_fluct = (avg_{Q_r} |ψ - avg_{Q_r} ψ|²)^{1/2}`,
/// where `|ψ|²` sums all nine entries.
pub fn growth_from_correctors(set: &CorrectorSet, radii: &[i32]) -> Result<Vec<GrowthRow>> {
    check_growth_radii(radii, set.radii.psi)?;
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let bx = BoxSpec::new(r)?;
        let n = bx.len() as f64;
        let mut phi_sq = 0.0;
        for p in set.phi() {
            phi_sq += bx.points().map(|x| p.get(x).powi(2)).sum::<f64>();
        }
        let mut psi_sq = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let f = set.psi.field(i, j);
                let mean = bx.points().map(|x| f.get(x)).sum::<f64>() / n;
                psi_sq += bx.points().map(|x| (f.get(x) - mean).powi(2)).sum::<f64>();
            }
        }
        rows.push(GrowthRow {
            r,
            phi_l2: (phi_sq / n).sqrt(),
            psi_fluct: (psi_sq / n).sqrt(),
        });
    }
    Ok(rows)
}

/// 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("seed,L,algorithm,grad_diff\n");
    for r in rows {
        out += &format!("{},{},{},{}\n", r.seed, r.l, r.kind, fmt_float(r.value));
    }
    out
}

pub fn growth_csv(rows: &[GrowthRow]) -> String {
    let mut out = String::from("r,phi_l2,psi_fluct\n");
    for r in rows {
        out += &format!("{},{},{}\n", r.r, fmt_float(r.phi_l2), fmt_float(r.psi_fluct));
    }
    out
}

pub fn slopes_csv(rows: &[SlopeRow]) -> String {
    let mut out = String::from("algorithm,seed,slope\n");
    for r in rows {
        out += &format!("{},{},{}\n", r.kind, r.seed, fmt_float(r.slope));
    }
    out
}
