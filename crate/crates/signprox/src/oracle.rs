//! Proximal-gradient mappings and their stochastic estimates.
//!
//! The deterministic building block is the component mapping
//! `P_k(x) = prox_{γ r_k}(x − γ ∇d(x))` and its convex combination
//! `P(x) = Σ θ_k P_k(x)`. Stochastic estimates of `P` come either from a
//! mini-batch average of sampled components or from Bernoulli-Gaussian noise
//! injected after the full mapping. The gradient mapping
//! `G(x) = (x − P(x))/γ` is the convergence measure used throughout.

use std::sync::Arc;

use crate::numerics::{deterministic_mean, sample_categorical, validate_weights, RngState};
use crate::prox::ProxOperator;
use crate::{Error, Result};

/// The smooth term `d` of an objective `f = d + r`.
pub trait SmoothTerm: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;

    /// Exact smoothness constants `(L, per-coordinate L)` when the problem
    /// knows them in closed form.
    fn exact_lipschitz(&self) -> Option<(f64, Vec<f64>)> {
        None
    }

    /// Value and gradient together; override when both share work.
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.value(x), self.grad(x))
    }
}

/// `d = 0`, used by the signSGD reduction.
pub struct ZeroSmooth {
    pub dimension: usize,
}

impl SmoothTerm for ZeroSmooth {
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn grad(&self, _x: &[f64]) -> Vec<f64> {
        vec![0.0; self.dimension]
    }

    fn exact_lipschitz(&self) -> Option<(f64, Vec<f64>)> {
        Some((0.0, vec![0.0; self.dimension]))
    }
}

/// A smooth term plus a weighted family of component regularizers.
pub struct Problem {
    pub smooth: Arc<dyn SmoothTerm>,
    pub components: Vec<Arc<dyn ProxOperator>>,
    pub weights: Vec<f64>,
    pub dimension: usize,
}

impl Problem {
    pub fn new(
        smooth: Arc<dyn SmoothTerm>,
        components: Vec<Arc<dyn ProxOperator>>,
        weights: Vec<f64>,
        dimension: usize,
    ) -> Result<Self> {
        validate_weights(&weights)?;
        if components.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                got: weights.len(),
                context: "component/weight count",
            });
        }
        Ok(Self {
            smooth,
            components,
            weights,
            dimension,
        })
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    /// `f(x) = d(x) + Σ θ_k r_k(x)`, summed in component order.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.penalty_sum(x) + self.smooth.value(x)
    }

    /// Objective using the smooth value already stored in the cache.
    pub fn objective_from_cache(&self, cache: &StepCache, x: &[f64]) -> f64 {
        self.penalty_sum(x) + cache.smooth_value
    }

    fn penalty_sum(&self, x: &[f64]) -> f64 {
        let mut r = 0.0;
        for (op, &w) in self.components.iter().zip(&self.weights) {
            r += w * op.value(x);
        }
        r
    }
}

/// Quantities shared by every mapping evaluated at the same `(x, γ)`:
/// the gradient of `d`, the gradient-step point, and the full mapping `P(x)`.
pub struct StepCache {
    pub smooth_value: f64,
    pub gradient: Vec<f64>,
    pub base: Vec<f64>,
    pub p_full: Vec<f64>,
}

impl StepCache {
    pub fn compute(problem: &Problem, x: &[f64], gamma: f64) -> Result<Self> {
        check_step(gamma)?;
        let (smooth_value, gradient) = problem.smooth.value_grad(x);
        let base: Vec<f64> = x.iter().zip(&gradient).map(|(v, g)| v - gamma * g).collect();
        let p_full = full_from_base(problem, &base, gamma)?;
        Ok(Self {
            smooth_value,
            gradient,
            base,
            p_full,
        })
    }
}

fn check_step(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step size must be positive (got {gamma})"
        )));
    }
    Ok(())
}

fn full_from_base(problem: &Problem, base: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; base.len()];
    for (op, &w) in problem.components.iter().zip(&problem.weights) {
        let p = op.prox(base, gamma)?;
        for (a, v) in acc.iter_mut().zip(p) {
            *a += w * v;
        }
    }
    Ok(acc)
}

/// `P_k(x) = prox_{γ r_k}(x − γ ∇d(x))` for the `k`-th component (0-based).
pub fn prox_grad_component(problem: &Problem, k: usize, x: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_step(gamma)?;
    if k >= problem.num_components() {
        return Err(Error::InvalidArgument(format!(
            "component index {k} out of range (K = {})",
            problem.num_components()
        )));
    }
    let gradient = problem.smooth.grad(x);
    let base: Vec<f64> = x.iter().zip(&gradient).map(|(v, g)| v - gamma * g).collect();
    problem.components[k].prox(&base, gamma)
}

/// `P(x) = Σ θ_k P_k(x)`, summed in fixed component order.
pub fn prox_grad_full(problem: &Problem, x: &[f64], gamma: f64) -> Result<Vec<f64>> {
    Ok(StepCache::compute(problem, x, gamma)?.p_full)
}

/// Mini-batch estimate `(1/B) Σ_b P_{k_b}(x)` with `k_b ~ θ` i.i.d.
pub fn prox_grad_minibatch(
    problem: &Problem,
    x: &[f64],
    gamma: f64,
    batch: usize,
    rng: &mut RngState,
) -> Result<Vec<f64>> {
    check_step(gamma)?;
    let gradient = problem.smooth.grad(x);
    let base: Vec<f64> = x.iter().zip(&gradient).map(|(v, g)| v - gamma * g).collect();
    minibatch_from_base(problem, &base, gamma, batch, rng)
}

fn minibatch_from_base(
    problem: &Problem,
    base: &[f64],
    gamma: f64,
    batch: usize,
    rng: &mut RngState,
) -> Result<Vec<f64>> {
    if batch == 0 {
        return Err(Error::InvalidArgument("mini-batch size must be >= 1".into()));
    }
    let indices = sample_categorical(&problem.weights, batch, rng)?;
    let samples: Vec<Vec<f64>> = indices
        .iter()
        .map(|&k| problem.components[k].prox(base, gamma))
        .collect::<Result<_>>()?;
    deterministic_mean(&samples)
}

/// Bernoulli-Gaussian noise injected after the full mapping.
///
/// Each element of the noise is zero with probability `1 − ρ` and Gaussian
/// with per-draw standard deviation `σ_e = γσ/√ρ` with probability `ρ`, so
/// the elementwise noise standard deviation equals `γσ` for every `ρ`.
#[derive(Debug, Clone, Copy)]
pub struct NoiseModel {
    pub rho: f64,
    pub sigma: f64,
}

impl NoiseModel {
    pub fn new(rho: f64, sigma: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rho must be in (0, 1] (got {rho})"
            )));
        }
        if !(sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma must be nonnegative (got {sigma})"
            )));
        }
        Ok(Self { rho, sigma })
    }

    /// Per-draw standard deviation `σ_e = γσ/√ρ`.
    pub fn sigma_e(&self, gamma: f64) -> f64 {
        gamma * self.sigma / self.rho.sqrt()
    }

    fn add_noise(&self, p: &mut [f64], gamma: f64, rng: &mut RngState) {
        if self.sigma == 0.0 {
            return;
        }
        let sigma_e = self.sigma_e(gamma);
        for v in p.iter_mut() {
            if rng.uniform() < self.rho {
                *v += sigma_e * rng.standard_normal();
            }
        }
    }
}

/// `P(x)` plus Bernoulli-Gaussian noise; unbiased for `P(x)`.
pub fn noisy_prox_oracle(
    problem: &Problem,
    noise: &NoiseModel,
    x: &[f64],
    gamma: f64,
    rng: &mut RngState,
) -> Result<Vec<f64>> {
    let mut p = prox_grad_full(problem, x, gamma)?;
    noise.add_noise(&mut p, gamma, rng);
    Ok(p)
}

/// Gradient mapping `G(x) = (x − P(x))/γ`.
pub fn gradient_mapping(problem: &Problem, x: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let p = prox_grad_full(problem, x, gamma)?;
    Ok(gradient_mapping_from_p(x, &p, gamma))
}

pub(crate) fn gradient_mapping_from_p(x: &[f64], p: &[f64], gamma: f64) -> Vec<f64> {
    x.iter().zip(p).map(|(a, b)| (a - b) / gamma).collect()
}

/// Elementwise sign with `sgn(0) = 0`.
///
/// The zero convention matters: coordinates that have exactly converged stop
/// moving, which keeps the fixed-point set of the one-bit update sensible.
pub fn sign_vec(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Any source of stochastic estimates of the full mapping `P(x)`.
///
/// `estimate` receives the per-iteration [`StepCache`] so implementations can
/// reuse the already-computed gradient step and full mapping.
pub trait ProxGradOracle: Send + Sync {
    fn estimate(
        &self,
        problem: &Problem,
        x: &[f64],
        gamma: f64,
        cache: &StepCache,
        rng: &mut RngState,
    ) -> Result<Vec<f64>>;

    fn unbiased(&self) -> bool {
        true
    }

    fn name(&self) -> &str;
}

/// Returns `P(x)` exactly (zero-variance oracle).
pub struct ExactOracle;

impl ProxGradOracle for ExactOracle {
    fn estimate(
        &self,
        _problem: &Problem,
        _x: &[f64],
        _gamma: f64,
        cache: &StepCache,
        _rng: &mut RngState,
    ) -> Result<Vec<f64>> {
        Ok(cache.p_full.clone())
    }

    fn name(&self) -> &str {
        "exact"
    }
}

/// Mini-batch component oracle of batch size `B`.
pub struct MinibatchOracle {
    pub batch: usize,
}

impl ProxGradOracle for MinibatchOracle {
    fn estimate(
        &self,
        problem: &Problem,
        _x: &[f64],
        gamma: f64,
        cache: &StepCache,
        rng: &mut RngState,
    ) -> Result<Vec<f64>> {
        minibatch_from_base(problem, &cache.base, gamma, self.batch, rng)
    }

    fn name(&self) -> &str {
        "minibatch"
    }
}

/// Full mapping plus Bernoulli-Gaussian noise.
pub struct NoisyOracle {
    pub noise: NoiseModel,
}

impl ProxGradOracle for NoisyOracle {
    fn estimate(
        &self,
        _problem: &Problem,
        _x: &[f64],
        gamma: f64,
        cache: &StepCache,
        rng: &mut RngState,
    ) -> Result<Vec<f64>> {
        let mut p = cache.p_full.clone();
        self.noise.add_noise(&mut p, gamma, rng);
        Ok(p)
    }

    fn name(&self) -> &str {
        "noisy"
    }
}

/// Component regularizer built from the linear approximation of a smooth
/// function around the evaluation point: its prox is a plain gradient step,
/// which is what turns the one-bit proximal update into signSGD.
pub struct LinearizedComponent {
    pub inner: Arc<dyn SmoothTerm>,
}

impl ProxOperator for LinearizedComponent {
    fn name(&self) -> &str {
        "linearized"
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x)
    }

    fn prox(&self, y: &[f64], gamma: f64) -> Result<Vec<f64>> {
        let g = self.inner.grad(y);
        Ok(y.iter().zip(&g).map(|(v, gi)| v - gamma * gi).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{norm_l2, norm_linf, sub};
    use crate::prox::{LinearPenalty, SoftThreshold, ZeroPenalty};

    /// `d(x) = ½‖x‖²`.
    struct HalfSquared;
    impl SmoothTerm for HalfSquared {
        fn value(&self, x: &[f64]) -> f64 {
            0.5 * crate::numerics::norm_l2_sq(x)
        }
        fn grad(&self, x: &[f64]) -> Vec<f64> {
            x.to_vec()
        }
        fn exact_lipschitz(&self) -> Option<(f64, Vec<f64>)> {
            None
        }
    }

    fn l1_problem(dim: usize, lambda: f64) -> Problem {
        Problem::new(
            Arc::new(ZeroSmooth { dimension: dim }),
            vec![Arc::new(SoftThreshold { lambda })],
            vec![1.0],
            dim,
        )
        .unwrap()
    }

    #[test]
    fn component_reduces_to_sgd_for_linear_regularizer() {
        let g = Arc::new(vec![2.0, -1.0]);
        let problem = Problem::new(
            Arc::new(ZeroSmooth { dimension: 2 }),
            vec![Arc::new(LinearPenalty { gradient: g.clone() })],
            vec![1.0],
            2,
        )
        .unwrap();
        let x = vec![1.0, 1.0];
        let p = prox_grad_component(&problem, 0, &x, 0.5).unwrap();
        assert_eq!(p, vec![1.0 - 0.5 * 2.0, 1.0 + 0.5 * 1.0]);
    }

    #[test]
    fn component_gradient_step_only() {
        let problem = Problem::new(
            Arc::new(HalfSquared),
            vec![Arc::new(ZeroPenalty)],
            vec![1.0],
            2,
        )
        .unwrap();
        let p = prox_grad_component(&problem, 0, &[1.0, 1.0], 0.1).unwrap();
        assert_eq!(p, vec![0.9, 0.9]);
        assert!(prox_grad_component(&problem, 1, &[1.0, 1.0], 0.1).is_err());
        assert!(prox_grad_component(&problem, 0, &[1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn component_soft_threshold() {
        let problem = l1_problem(2, 1.0);
        let p = prox_grad_component(&problem, 0, &[2.0, -0.5], 1.0).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn full_single_component_and_average() {
        let problem = l1_problem(1, 1.0);
        let x = vec![2.0];
        assert_eq!(
            prox_grad_full(&problem, &x, 1.0).unwrap(),
            prox_grad_component(&problem, 0, &x, 1.0).unwrap()
        );

        let mixed = Problem::new(
            Arc::new(ZeroSmooth { dimension: 1 }),
            vec![
                Arc::new(SoftThreshold { lambda: 1.0 }),
                Arc::new(ZeroPenalty),
            ],
            vec![0.5, 0.5],
            1,
        )
        .unwrap();
        // Hand average of soft-threshold output 1 and identity output 2.
        assert_eq!(prox_grad_full(&mixed, &[2.0], 1.0).unwrap(), vec![1.5]);
    }

    #[test]
    fn minibatch_forced_sample() {
        let mixed = Problem::new(
            Arc::new(ZeroSmooth { dimension: 1 }),
            vec![
                Arc::new(SoftThreshold { lambda: 1.0 }),
                Arc::new(ZeroPenalty),
            ],
            vec![0.0, 1.0],
            1,
        )
        .unwrap();
        let mut rng = RngState::new(0);
        let p = prox_grad_minibatch(&mixed, &[2.0], 1.0, 1, &mut rng).unwrap();
        assert_eq!(p, prox_grad_component(&mixed, 1, &[2.0], 1.0).unwrap());
        assert!(prox_grad_minibatch(&mixed, &[2.0], 1.0, 0, &mut rng).is_err());
    }

    #[test]
    fn minibatch_unbiased() {
        let problem = Problem::new(
            Arc::new(HalfSquared),
            vec![
                Arc::new(SoftThreshold { lambda: 0.5 }),
                Arc::new(SoftThreshold { lambda: 2.0 }),
            ],
            vec![0.4, 0.6],
            3,
        )
        .unwrap();
        let x = vec![3.0, -2.0, 0.7];
        let gamma = 0.3;
        let target = prox_grad_full(&problem, &x, gamma).unwrap();
        let mut rng = RngState::new(21);
        let n = 10_000usize;
        let mut acc = vec![0.0; 3];
        let mut acc_sq = vec![0.0; 3];
        for _ in 0..n {
            let p = prox_grad_minibatch(&problem, &x, gamma, 1, &mut rng).unwrap();
            for i in 0..3 {
                acc[i] += p[i];
                acc_sq[i] += p[i] * p[i];
            }
        }
        let mut max_std = 0.0f64;
        for i in 0..3 {
            let m = acc[i] / n as f64;
            let var = acc_sq[i] / n as f64 - m * m;
            max_std = max_std.max(var.max(0.0).sqrt());
        }
        let mean: Vec<f64> = acc.iter().map(|a| a / n as f64).collect();
        let err = norm_linf(&sub(&mean, &target));
        assert!(err <= 4.0 * max_std / (n as f64).sqrt(), "bias {err}");
    }

    #[test]
    fn minibatch_variance_scales_with_batch() {
        let problem = Problem::new(
            Arc::new(HalfSquared),
            vec![
                Arc::new(SoftThreshold { lambda: 0.5 }),
                Arc::new(SoftThreshold { lambda: 2.0 }),
            ],
            vec![0.5, 0.5],
            2,
        )
        .unwrap();
        let x = vec![5.0, -4.0];
        let gamma = 0.2;
        let var_for = |batch: usize, rng: &mut RngState| {
            let target = prox_grad_full(&problem, &x, gamma).unwrap();
            let n = 20_000usize;
            let mut acc = 0.0;
            for _ in 0..n {
                let p = prox_grad_minibatch(&problem, &x, gamma, batch, rng).unwrap();
                acc += crate::numerics::norm_l2_sq(&sub(&p, &target));
            }
            acc / n as f64
        };
        let mut rng = RngState::new(33);
        let v1 = var_for(1, &mut rng);
        let v4 = var_for(4, &mut rng);
        let ratio = v4 / v1;
        assert!((ratio - 0.25).abs() < 0.25 * 0.2, "ratio {ratio}");
    }

    #[test]
    fn component_variance_scales_with_gamma_squared() {
        // For LASSO-style problems away from the soft-threshold kinks,
        // E‖P_k − P‖² is proportional to γ²; halving γ quarters it.
        let problem = Problem::new(
            Arc::new(HalfSquared),
            vec![
                Arc::new(SoftThreshold { lambda: 0.5 }),
                Arc::new(SoftThreshold { lambda: 2.0 }),
            ],
            vec![0.5, 0.5],
            2,
        )
        .unwrap();
        let x = vec![50.0, -40.0];
        let exact_second_moment = |gamma: f64| {
            let p = prox_grad_full(&problem, &x, gamma).unwrap();
            let mut acc = 0.0;
            for (k, &w) in problem.weights.iter().enumerate() {
                let pk = prox_grad_component(&problem, k, &x, gamma).unwrap();
                acc += w * crate::numerics::norm_l2_sq(&sub(&pk, &p));
            }
            acc
        };
        let gamma = 0.1;
        let ratio = exact_second_moment(gamma / 2.0) / exact_second_moment(gamma);
        assert!((0.2..=0.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn noisy_oracle_zero_sigma_is_exact() {
        let problem = l1_problem(3, 0.7);
        let noise = NoiseModel::new(0.5, 0.0).unwrap();
        let x = vec![1.0, -2.0, 0.1];
        let mut rng = RngState::new(4);
        let p = noisy_prox_oracle(&problem, &noise, &x, 0.3, &mut rng).unwrap();
        assert_eq!(p, prox_grad_full(&problem, &x, 0.3).unwrap());
    }

    #[test]
    fn noisy_oracle_std_and_sparsity() {
        let problem = l1_problem(4, 0.2);
        let x = vec![2.0, -1.0, 0.5, 3.0];
        let gamma = 0.7;
        for &rho in &[1.0, 0.1] {
            let noise = NoiseModel::new(rho, 0.1).unwrap();
            let target = prox_grad_full(&problem, &x, gamma).unwrap();
            let n = 100_000usize;
            let mut rng = RngState::new(55);
            let mut acc_sq = vec![0.0; 4];
            let mut nonzero = 0usize;
            for _ in 0..n {
                let p = noisy_prox_oracle(&problem, &noise, &x, gamma, &mut rng).unwrap();
                for i in 0..4 {
                    let e = p[i] - target[i];
                    acc_sq[i] += e * e;
                    if e != 0.0 {
                        nonzero += 1;
                    }
                }
            }
            let want = gamma * 0.1;
            for &s in &acc_sq {
                let std = (s / n as f64).sqrt();
                assert!(
                    (std - want).abs() <= 0.05 * want,
                    "rho {rho}: std {std} vs {want}"
                );
            }
            let frac = nonzero as f64 / (4 * n) as f64;
            assert!((frac - rho).abs() <= 0.01, "rho {rho}: spike fraction {frac}");
        }
    }

    #[test]
    fn noise_model_validation() {
        assert!(NoiseModel::new(0.0, 0.1).is_err());
        assert!(NoiseModel::new(1.5, 0.1).is_err());
        assert!(NoiseModel::new(0.5, -1.0).is_err());
    }

    #[test]
    fn gradient_mapping_collapses_to_gradient() {
        let problem = Problem::new(
            Arc::new(HalfSquared),
            vec![Arc::new(ZeroPenalty)],
            vec![1.0],
            2,
        )
        .unwrap();
        let x = vec![2.0, -3.0];
        let g = gradient_mapping(&problem, &x, 0.25).unwrap();
        for (gi, xi) in g.iter().zip(&x) {
            assert!((gi - xi).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_mapping_zero_at_l1_minimizer() {
        let problem = l1_problem(1, 1.0);
        let g = gradient_mapping(&problem, &[0.0], 1.0).unwrap();
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn gradient_mapping_zero_iff_fixed_point() {
        let problem = l1_problem(3, 0.4);
        let x = vec![1.0, 0.0, -2.0];
        let gamma = 0.5;
        let p = prox_grad_full(&problem, &x, gamma).unwrap();
        let g = gradient_mapping(&problem, &x, gamma).unwrap();
        let fixed = p == x;
        let zero = g.iter().all(|&v| v == 0.0);
        assert_eq!(fixed, zero);
    }

    #[test]
    fn sign_examples() {
        assert_eq!(sign_vec(&[-2.5, 0.0, 3.0]), vec![-1.0, 0.0, 1.0]);
        assert_eq!(sign_vec(&[0.0, 0.0]), vec![0.0, 0.0]);
        let v = vec![1.5, -0.2, 0.0, 7.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let sv = sign_vec(&v);
        let sn = sign_vec(&neg);
        for (a, b) in sv.iter().zip(&sn) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn full_mapping_nonexpansive_with_zero_smooth() {
        let problem = Problem::new(
            Arc::new(ZeroSmooth { dimension: 50 }),
            vec![
                Arc::new(SoftThreshold { lambda: 1.0 }),
                Arc::new(ZeroPenalty),
            ],
            vec![0.5, 0.5],
            50,
        )
        .unwrap();
        let mut rng = RngState::new(8);
        for _ in 0..200 {
            let u: Vec<f64> = (0..50).map(|_| 2.0 * rng.standard_normal()).collect();
            let v: Vec<f64> = (0..50).map(|_| 2.0 * rng.standard_normal()).collect();
            let pu = prox_grad_full(&problem, &u, 1.0).unwrap();
            let pv = prox_grad_full(&problem, &v, 1.0).unwrap();
            assert!(norm_l2(&sub(&pu, &pv)) <= norm_l2(&sub(&u, &v)) + 1e-10);
        }
    }
}
