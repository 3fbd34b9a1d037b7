//! Browser demo bindings: phantom rendering, TV denoising, and a small
//! full-precision vs one-bit solver comparison, all on flat f64 buffers that
//! map directly onto canvas image data.

use wasm_bindgen::prelude::*;

use signprox::numerics::RngState;
use signprox::oracle::{MinibatchOracle, Problem};
use signprox::problem::make_lasso_instance;
use signprox::prox::prox_tv2d;
use signprox::solver::{run_signprox, run_spgm, Schedule};

/// Grayscale phantom image in [0, 1], row-major, length `side * side`.
#[wasm_bindgen]
pub fn phantom(side: usize) -> Result<Vec<f64>, JsError> {
    signprox::problem::shepp_logan(side).map_err(|e| JsError::new(&e.to_string()))
}

/// Adds Gaussian noise to an image; deterministic in the seed.
#[wasm_bindgen]
pub fn add_noise(image: Vec<f64>, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = RngState::new(seed);
    image
        .into_iter()
        .map(|v| v + sigma * rng.standard_normal())
        .collect()
}

/// Total-variation denoising of a `height x width` image.
#[wasm_bindgen]
pub fn tv_denoise(
    image: Vec<f64>,
    height: usize,
    width: usize,
    strength: f64,
) -> Result<Vec<f64>, JsError> {
    prox_tv2d(&image, height, width, strength, 200, 1e-7)
        .map_err(|e| JsError::new(&e.to_string()))
}

/// Runs the full-precision and the one-bit solver on a small sparse
/// regression instance and returns the two objective traces interleaved:
/// `[f_full_0, f_onebit_0, f_full_1, f_onebit_1, ...]`.
#[wasm_bindgen]
pub fn compare_traces(iterations: usize, gamma: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    let run = || -> signprox::Result<Vec<f64>> {
        let mut inst_rng = RngState::new(17);
        let instance = make_lasso_instance(12, 24, 4, 10.0, &mut inst_rng)?;
        let problem: Problem = instance.problem()?;
        let x0 = vec![0.0; problem.dimension];
        let schedule = Schedule::new(gamma, 1, iterations)?;
        let oracle = MinibatchOracle { batch: 1 };
        let fstar = Some(instance.fstar);
        let mut rng_a = RngState::new(seed);
        let full = run_spgm(&problem, &oracle, &x0, schedule.clone(), &mut rng_a, fstar)?;
        let mut rng_b = RngState::new(seed);
        let onebit = run_signprox(&problem, &oracle, &x0, schedule, &mut rng_b, fstar)?;
        let mut out = Vec::with_capacity(2 * full.records.len());
        for (a, b) in full.records.iter().zip(&onebit.records) {
            out.push(a.normalized.unwrap_or(f64::NAN));
            out.push(b.normalized.unwrap_or(f64::NAN));
        }
        Ok(out)
    };
    run().map_err(|e| JsError::new(&e.to_string()))
}
