//! WebAssembly bindings for the demo page in `www/`.
//!
//! Everything runs single-threaded on the main thread, so keep `L` small.

use hom3::correctors::{compute_phi, estimate_ah, massive_time, StageRadii};
use hom3::experiments::make_source;
use hom3::lattice::{BoxSpec, VertexField};
use hom3::media::{sample, EnsembleSpec};
use hom3::pipeline::{gradient_at, run, AlgorithmKind};
use hom3::solver::SolverConfig;
use wasm_bindgen::prelude::*;

/// Largest scale the page offers.
pub const MAX_L: i32 = 12;

fn js(e: hom3::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn check_l(l: i32) -> Result<StageRadii, JsError> {
    if l > MAX_L {
        return Err(JsError::new(&format!("L = {l} is too large for the browser; use at most {MAX_L}")));
    }
    StageRadii::for_scale(l).map_err(js)
}

fn ensemble(seed: u64, contrast: f64) -> Result<EnsembleSpec, JsError> {
    let mut e = EnsembleSpec::bernoulli(seed);
    e.contrast = contrast;
    e.validate().map_err(js)?;
    Ok(e)
}

/// Row-major values of `f` on the plane `x_3 = 0`, `x_2` outer.
fn mid_plane(f: &VertexField) -> Vec<f64> {
    let r = f.box_spec().radius();
    let mut out = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
    for y in -r..=r {
        for x in -r..=r {
            out.push(f.get([x, y, 0]));
        }
    }
    out
}

/// First-order corrector `φ_i` (`component` in 0..3) at scale `L` on the plane
/// `x_3 = 0` of `Q_{2L}`.
#[wasm_bindgen]
pub fn corrector_plane(l: i32, seed: u64, contrast: f64, component: usize) -> Result<Vec<f64>, JsError> {
    let radii = check_l(l)?;
    if component > 2 {
        return Err(JsError::new("component must be 0, 1 or 2"));
    }
    let a = sample(&ensemble(seed, contrast)?, BoxSpec::new(radii.phi).map_err(js)?).map_err(js)?;
    let first = compute_phi(&a, massive_time(l, 0.1), &SolverConfig::default()).map_err(js)?;
    Ok(mid_plane(&first.phi[component]))
}

/// The nine entries of the estimated homogenized tensor, row-major.
#[wasm_bindgen]
pub fn homogenized_tensor(l: i32, seed: u64, contrast: f64) -> Result<Vec<f64>, JsError> {
    let radii = check_l(l)?;
    let a = sample(&ensemble(seed, contrast)?, BoxSpec::new(radii.phi).map_err(js)?).map_err(js)?;
    let first = compute_phi(&a, massive_time(l, 0.1), &SolverConfig::default()).map_err(js)?;
    Ok(estimate_ah(&first.q, l).map_err(js)?.entries().concat())
}

/// Solves on `Q_L` with boundary data from `algorithm` and returns the plane
/// `x_3 = 0` of `u` followed by the three components of `grad u(L/2, L/2, L/2)`.
#[wasm_bindgen]
pub fn solve_plane(l: i32, seed: u64, contrast: f64, algorithm: &str) -> Result<Vec<f64>, JsError> {
    let radii = check_l(l)?;
    let kind: AlgorithmKind = algorithm.parse().map_err(js)?;
    let a = sample(&ensemble(seed, contrast)?, BoxSpec::new(radii.phi).map_err(js)?).map_err(js)?;
    let g = make_source(seed).g;
    let res = run(&a, &g, l, 0.1, kind, &SolverConfig::default()).map_err(js)?;
    let h = l / 2;
    let mut out = mid_plane(&res.u);
    out.extend(gradient_at(&res.u, [h, h, h]).map_err(js)?);
    Ok(out)
}
