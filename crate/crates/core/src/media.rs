//! Random conductances on lattice edges.
//!
//! Draws are counter-based: the three edges leaving vertex `x` read consecutive
//! words of the ChaCha stream selected by `x`, under a key derived from the master
//! seed. Sampling a large box and restricting it therefore gives exactly the field
//! sampled on the small box, which lets one realization serve every scale of a study.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::{BoxSpec, EdgeVectorField, Point};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnsembleKind {
    /// Each edge is `contrast` with probability `p`, else 1.
    BernoulliContrast,
    /// Every edge is 1.
    Constant,
}

impl std::str::FromStr for EnsembleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli" | "bernoulli_contrast" => Ok(Self::BernoulliContrast),
            "constant" => Ok(Self::Constant),
            other => Err(Error::InvalidEnsemble(format!("unknown ensemble `{other}`"))),
        }
    }
}

impl std::fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::BernoulliContrast => "bernoulli_contrast",
            Self::Constant => "constant",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub contrast: f64,
    pub probability: f64,
    pub master_seed: u64,
}

impl EnsembleSpec {
    /// Values 1 and 9 with probability 1/2 each.
    pub fn bernoulli(master_seed: u64) -> Self {
        Self {
            kind: EnsembleKind::BernoulliContrast,
            contrast: 9.0,
            probability: 0.5,
            master_seed,
        }
    }

    pub fn constant() -> Self {
        Self {
            kind: EnsembleKind::Constant,
            contrast: 1.0,
            probability: 0.0,
            master_seed: 0,
        }
    }

    pub fn with_seed(self, master_seed: u64) -> Self {
        Self { master_seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::InvalidEnsemble(format!(
                "probability {} outside [0, 1]",
                self.probability
            )));
        }
        if !(self.contrast >= 1.0) || !self.contrast.is_finite() {
            return Err(Error::InvalidEnsemble(format!(
                "contrast {} must be a finite value ≥ 1",
                self.contrast
            )));
        }
        Ok(())
    }

    /// Ellipticity bounds `[λ, Λ]` every realization satisfies.
    pub fn bounds(&self) -> (f64, f64) {
        match self.kind {
            EnsembleKind::Constant => (1.0, 1.0),
            EnsembleKind::BernoulliContrast => (1.0, self.contrast),
        }
    }
}

/// Per-edge conductances. Box-leaving edges are stored as 1 and never read by the
/// operator.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    bx: BoxSpec,
    values: Vec<[f64; 3]>,
}

impl CoefficientField {
    pub fn constant(bx: BoxSpec, value: f64) -> Self {
        Self::from_fn(bx, |_, _| value)
    }

    pub fn from_fn(bx: BoxSpec, f: impl Fn(Point, usize) -> f64) -> Self {
        let r = bx.radius();
        let values = bx
            .points()
            .map(|x| {
                let mut v = [1.0; 3];
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

    pub fn restrict(&self, target: BoxSpec) -> Result<CoefficientField> {
        if target.radius() > self.bx.radius() {
            return Err(Error::RestrictToLarger {
                from: self.bx.radius(),
                to: target.radius(),
            });
        }
        Ok(Self::from_fn(target, |x, i| self.get(x, i)))
    }

    pub fn scaled(&self, c: f64) -> CoefficientField {
        Self::from_fn(self.bx, |x, i| c * self.get(x, i))
    }

    /// The coefficient viewed as an edge field, i.e. zero on box-leaving edges.
    pub fn to_edge_field(&self) -> EdgeVectorField {
        EdgeVectorField::from_fn(self.bx, |x, i| self.get(x, i))
    }

    /// `a e_i` as an edge field.
    pub fn column(&self, i: usize) -> EdgeVectorField {
        EdgeVectorField::from_fn(self.bx, |x, k| if k == i { self.get(x, i) } else { 0.0 })
    }

    /// Iterates the conductances of all in-box edges.
    pub fn in_box_edges(&self) -> impl Iterator<Item = f64> + '_ {
        let r = self.bx.radius();
        self.values.iter().enumerate().flat_map(move |(idx, v)| {
            let x = self.bx.point(idx);
            (0..3).filter(move |&i| x[i] < r).map(move |i| v[i])
        })
    }

    pub fn max_value(&self) -> f64 {
        self.in_box_edges().fold(f64::MIN, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.in_box_edges().fold(f64::MAX, f64::min)
    }
}

// Offset keeps coordinates non-negative; 21 bits per axis covers |x| < 2^20.
fn vertex_stream(x: Point) -> u64 {
    const OFFSET: i64 = 1 << 20;
    let c = |v: i32| (v as i64 + OFFSET) as u64 & ((1 << 21) - 1);
    c(x[0]) | (c(x[1]) << 21) | (c(x[2]) << 42)
}

/// Uniform draw in `[0, 1)` for each of the three forward edges at `x`.
fn edge_uniforms(base: &ChaCha8Rng, x: Point) -> [f64; 3] {
    let mut rng = base.clone();
    rng.set_stream(vertex_stream(x));
    rng.set_word_pos(0);
    let mut u = [0.0; 3];
    for ui in &mut u {
        *ui = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    }
    u
}

/// Samples one realization on `bx`.
pub fn sample(spec: &EnsembleSpec, bx: BoxSpec) -> Result<CoefficientField> {
    spec.validate()?;
    if spec.kind == EnsembleKind::Constant {
        return Ok(CoefficientField::constant(bx, 1.0));
    }
    let base = ChaCha8Rng::seed_from_u64(spec.master_seed);
    let n = bx.side();
    let r = bx.radius();
    let mut values = vec![[1.0; 3]; bx.len()];
    par::for_each_plane(&mut values, n * n, |k, plane| {
        for (j, v) in plane.iter_mut().enumerate() {
            let x = [(j % n) as i32 - r, (j / n) as i32 - r, k as i32 - r];
            let u = edge_uniforms(&base, x);
            for i in 0..3 {
                if x[i] < r {
                    v[i] = if u[i] < spec.probability {
                        spec.contrast
                    } else {
                        1.0
                    };
                }
            }
        }
    });
    Ok(CoefficientField { bx, values })
}

/// True iff every in-box edge lies in `[lower, upper]`.
pub fn check_ellipticity(a: &CoefficientField, lower: f64, upper: f64) -> bool {
    a.in_box_edges().all(|v| (lower..=upper).contains(&v))
}

/// A ChaCha stream keyed by `seed`, used for source sampling.
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
