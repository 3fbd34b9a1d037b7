//! The iterative algorithms: SPGM, signProx, signSGD, and the deterministic
//! reference proximal-gradient method.
//!
//! Every run is a serial recurrence in `t`; determinism is guaranteed by the
//! seeded [`RngState`] and fixed-order reductions. Each run produces a
//! [`Trace`] with per-iteration objective, gradient-mapping norms, and
//! cumulative communication cost.

use std::sync::Arc;

use crate::numerics::{
    all_finite, deterministic_mean, norm_l1, norm_l2, norm_l2_sq, sample_categorical, RngState,
};
use crate::oracle::{
    gradient_mapping_from_p, sign_vec, Problem, ProxGradOracle, SmoothTerm, StepCache,
};
use crate::{Error, Result};

/// Concrete step-size/batch/iteration schedule.
#[derive(Debug, Clone, Copy)]
pub struct Schedule {
    pub gamma: f64,
    pub batch: usize,
    pub iterations: usize,
}

impl Schedule {
    pub fn new(gamma: f64, batch: usize, iterations: usize) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive (got {gamma})"
            )));
        }
        if batch == 0 || iterations == 0 {
            return Err(Error::InvalidArgument(
                "batch and iteration counts must be >= 1".into(),
            ));
        }
        Ok(Self {
            gamma,
            batch,
            iterations,
        })
    }

    /// `γ = 1/(L√T)`, `B = 1`.
    pub fn theorem1(scalar_l: f64, iterations: usize) -> Result<Self> {
        if !(scalar_l > 0.0) {
            return Err(Error::InvalidArgument(
                "theorem1 schedule requires L > 0".into(),
            ));
        }
        Schedule::new(1.0 / (scalar_l * (iterations as f64).sqrt()), 1, iterations)
    }

    /// `γ = 1/(2‖L‖₁√T)`, `B = T`.
    pub fn theorem2(coord_l_norm1: f64, iterations: usize) -> Result<Self> {
        if !(coord_l_norm1 > 0.0) {
            return Err(Error::InvalidArgument(
                "theorem2 schedule requires ‖L‖₁ > 0".into(),
            ));
        }
        if iterations > 512 {
            eprintln!(
                "warning: theorem2 schedule with T = {iterations} costs O(T²) oracle calls"
            );
        }
        Schedule::new(
            1.0 / (2.0 * coord_l_norm1 * (iterations as f64).sqrt()),
            iterations,
            iterations,
        )
    }
}

/// Per-update communication encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Sign1Bit,
    Float64,
}

impl Encoding {
    pub fn bits_per_iteration(self, dimension: usize) -> u64 {
        match self {
            Encoding::Sign1Bit => dimension as u64,
            Encoding::Float64 => dimension as u64 * 64,
        }
    }
}

/// One row of a solver trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub objective: f64,
    pub gmap_l2_sq: f64,
    pub gmap_l1: f64,
    /// `(f(x^t) − f*)/(f(x⁰) − f*)` when `f*` was supplied.
    pub normalized: Option<f64>,
    pub bits_cumulative: u64,
}

/// Divergence diagnostic attached to a partial trace.
#[derive(Debug, Clone)]
pub struct Divergence {
    pub iteration: usize,
    pub reason: String,
}

/// Per-iteration log of a solver run, `T + 1` records including `t = 0`
/// unless the run diverged early.
#[derive(Debug, Clone)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub final_x: Vec<f64>,
    pub encoding: Encoding,
    pub divergence: Option<Divergence>,
}

impl Trace {
    pub fn final_record(&self) -> &TraceRecord {
        self.records.last().expect("trace has at least the t=0 record")
    }
}

fn run_with_update(
    problem: &Problem,
    x0: &[f64],
    schedule: Schedule,
    rng: &mut RngState,
    fstar: Option<f64>,
    encoding: Encoding,
    mut update: impl FnMut(&Problem, &[f64], &StepCache, &mut RngState) -> Result<Vec<f64>>,
) -> Result<Trace> {
    let gamma = schedule.gamma;
    let mut x = x0.to_vec();
    let mut records = Vec::with_capacity(schedule.iterations + 1);
    let mut divergence = None;
    let mut f0 = f64::NAN;
    let bits_per_iter = encoding.bits_per_iteration(problem.dimension);

    for t in 0..=schedule.iterations {
        if !all_finite(&x) {
            divergence = Some(Divergence {
                iteration: t,
                reason: "non-finite coordinate in iterate".into(),
            });
            break;
        }
        let cache = StepCache::compute(problem, &x, gamma)?;
        let f = problem.objective_from_cache(&cache, &x);
        if t == 0 {
            f0 = f;
        }
        let g = gradient_mapping_from_p(&x, &cache.p_full, gamma);
        let normalized = fstar.map(|fs| {
            let denom = f0 - fs;
            if denom != 0.0 {
                (f - fs) / denom
            } else {
                0.0
            }
        });
        records.push(TraceRecord {
            t,
            objective: f,
            gmap_l2_sq: norm_l2_sq(&g),
            gmap_l1: norm_l1(&g),
            normalized,
            bits_cumulative: t as u64 * bits_per_iter,
        });
        if !f.is_finite() || (t > 0 && f > 1e6 * f0.abs().max(1.0)) {
            divergence = Some(Divergence {
                iteration: t,
                reason: format!("objective {f} exceeds divergence guard"),
            });
            break;
        }
        if t < schedule.iterations {
            x = update(problem, &x, &cache, rng)?;
        }
    }

    Ok(Trace {
        records,
        final_x: x,
        encoding,
        divergence,
    })
}

/// SPGM: `x^t = P̂(x^{t−1})`. Each update transmits the full estimate.
pub fn run_spgm(
    problem: &Problem,
    oracle: &dyn ProxGradOracle,
    x0: &[f64],
    schedule: Schedule,
    rng: &mut RngState,
    fstar: Option<f64>,
) -> Result<Trace> {
    run_with_update(
        problem,
        x0,
        schedule,
        rng,
        fstar,
        Encoding::Float64,
        |problem, x, cache, rng| oracle.estimate(problem, x, schedule.gamma, cache, rng),
    )
}

/// signProx: `x^t = x^{t−1} − γ sgn(x^{t−1} − P̂(x^{t−1}))`. One bit per
/// coordinate per update.
pub fn run_signprox(
    problem: &Problem,
    oracle: &dyn ProxGradOracle,
    x0: &[f64],
    schedule: Schedule,
    rng: &mut RngState,
    fstar: Option<f64>,
) -> Result<Trace> {
    run_with_update(
        problem,
        x0,
        schedule,
        rng,
        fstar,
        Encoding::Sign1Bit,
        |problem, x, cache, rng| {
            let p_hat = oracle.estimate(problem, x, schedule.gamma, cache, rng)?;
            let diff: Vec<f64> = x.iter().zip(&p_hat).map(|(a, b)| a - b).collect();
            let s = sign_vec(&diff);
            Ok(x.iter()
                .zip(&s)
                .map(|(v, si)| v - schedule.gamma * si)
                .collect())
        },
    )
}

/// Result of the deterministic reference proximal-gradient run.
#[derive(Debug, Clone)]
pub struct ReferenceResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub gmap_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Full proximal gradient `x^t = P(x^{t−1})` until `‖G(x^t)‖₂ < tol` or
/// `max_iter`. Non-convergence is flagged in the result, not an error.
pub fn run_pgm_reference(
    problem: &Problem,
    x0: &[f64],
    gamma: f64,
    max_iter: usize,
    tol: f64,
) -> Result<ReferenceResult> {
    let mut x = x0.to_vec();
    let mut gnorm = f64::INFINITY;
    let mut iterations = 0;
    for t in 0..max_iter {
        let cache = StepCache::compute(problem, &x, gamma)?;
        let g = gradient_mapping_from_p(&x, &cache.p_full, gamma);
        gnorm = norm_l2(&g);
        iterations = t;
        if gnorm < tol {
            break;
        }
        x = cache.p_full;
        if !all_finite(&x) {
            return Err(Error::Divergence {
                iteration: t,
                reason: "non-finite iterate in reference run".into(),
            });
        }
    }
    let objective = problem.objective(&x);
    Ok(ReferenceResult {
        converged: gnorm < tol,
        gmap_norm: gnorm,
        iterations,
        objective,
        x,
    })
}

/// signSGD: `x^t = x^{t−1} − γ sgn(∇f̂(x^{t−1}))` with a mini-batch gradient
/// over components drawn from `weights`.
pub fn run_signsgd(
    components: &[Arc<dyn SmoothTerm>],
    weights: &[f64],
    x0: &[f64],
    schedule: Schedule,
    rng: &mut RngState,
    fstar: Option<f64>,
) -> Result<Trace> {
    crate::numerics::validate_weights(weights)?;
    if components.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: components.len(),
            got: weights.len(),
            context: "signSGD component/weight count",
        });
    }
    let gamma = schedule.gamma;
    let mut x = x0.to_vec();
    let mut records = Vec::with_capacity(schedule.iterations + 1);
    let mut divergence = None;
    let mut f0 = f64::NAN;
    let bits_per_iter = Encoding::Sign1Bit.bits_per_iteration(x0.len());

    let full_value = |x: &[f64]| -> f64 {
        let mut f = 0.0;
        for (c, &w) in components.iter().zip(weights) {
            f += w * c.value(x);
        }
        f
    };
    let full_grad = |x: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for (c, &w) in components.iter().zip(weights) {
            for (acc, v) in g.iter_mut().zip(c.grad(x)) {
                *acc += w * v;
            }
        }
        g
    };

    for t in 0..=schedule.iterations {
        if !all_finite(&x) {
            divergence = Some(Divergence {
                iteration: t,
                reason: "non-finite coordinate in iterate".into(),
            });
            break;
        }
        let f = full_value(&x);
        if t == 0 {
            f0 = f;
        }
        // With linearized regularizers the gradient mapping is the full
        // gradient itself.
        let g = full_grad(&x);
        let normalized = fstar.map(|fs| {
            let denom = f0 - fs;
            if denom != 0.0 {
                (f - fs) / denom
            } else {
                0.0
            }
        });
        records.push(TraceRecord {
            t,
            objective: f,
            gmap_l2_sq: norm_l2_sq(&g),
            gmap_l1: norm_l1(&g),
            normalized,
            bits_cumulative: t as u64 * bits_per_iter,
        });
        if !f.is_finite() || (t > 0 && f > 1e6 * f0.abs().max(1.0)) {
            divergence = Some(Divergence {
                iteration: t,
                reason: format!("objective {f} exceeds divergence guard"),
            });
            break;
        }
        if t < schedule.iterations {
            let indices = sample_categorical(weights, schedule.batch, rng)?;
            let grads: Vec<Vec<f64>> =
                indices.iter().map(|&k| components[k].grad(&x)).collect();
            let g_hat = deterministic_mean(&grads)?;
            let s = sign_vec(&g_hat);
            x = x.iter().zip(&s).map(|(v, si)| v - gamma * si).collect();
        }
    }

    Ok(Trace {
        records,
        final_x: x,
        encoding: Encoding::Sign1Bit,
        divergence,
    })
}
