//! Concrete optimization instances: generalized phase retrieval with TV
//! regularization, the Shepp-Logan phantom, and a LASSO family with exactly
//! known constants for bound checking.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::numerics::{gaussian_matrix, norm_l2_sq, validate_weights, Matrix, RngState};
use crate::oracle::{Problem, SmoothTerm};
use crate::prox::{ProxOperator, SoftThreshold, Tv2d};
use crate::solver::run_pgm_reference;
use crate::{Error, Result};

/// The ten-ellipse Shepp-Logan head phantom (modified contrast variant used
/// by tomography toolkits): `(value, a, b, x0, y0, phi_degrees)`.
const SHEPP_LOGAN_ELLIPSES: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
];

/// Rasterizes the Shepp-Logan phantom on a `side × side` grid by
/// pixel-center membership, intensities clipped to `[0, 1]`. Row-major,
/// row 0 at the top.
pub fn shepp_logan(side: usize) -> Result<Vec<f64>> {
    if side < 8 {
        return Err(Error::InvalidArgument(format!(
            "phantom side must be >= 8 (got {side})"
        )));
    }
    let mut img = vec![0.0; side * side];
    for i in 0..side {
        let y = 1.0 - (i as f64 + 0.5) * 2.0 / side as f64;
        for j in 0..side {
            let x = (j as f64 + 0.5) * 2.0 / side as f64 - 1.0;
            let mut v = 0.0;
            for &(value, a, b, x0, y0, phi_deg) in &SHEPP_LOGAN_ELLIPSES {
                let phi = phi_deg.to_radians();
                let (st, ct) = phi.sin_cos();
                let dx = x - x0;
                let dy = y - y0;
                let u = dx * ct + dy * st;
                let w = -dx * st + dy * ct;
                if (u / a).powi(2) + (w / b).powi(2) <= 1.0 {
                    v += value;
                }
            }
            img[i * side + j] = v.clamp(0.0, 1.0);
        }
    }
    Ok(img)
}

/// Real generalized phase retrieval: recover `x` from intensity-only
/// measurements `y = (Hx)²` with a TV regularizer.
#[derive(Debug, Clone)]
pub struct PhaseRetrievalInstance {
    pub h: Matrix,
    pub y: Vec<f64>,
    pub true_signal: Vec<f64>,
    pub tv_weight: f64,
    pub side: usize,
}

impl PhaseRetrievalInstance {
    pub fn num_measurements(&self) -> usize {
        self.h.rows()
    }

    pub fn dimension(&self) -> usize {
        self.h.cols()
    }
}

/// `d(x) = ½‖y − (Hx)²‖₂²` for a phase-retrieval instance.
pub fn phase_retrieval_value(inst: &PhaseRetrievalInstance, x: &[f64]) -> Result<f64> {
    let z = inst.h.matvec(x)?;
    Ok(0.5
        * z.iter()
            .zip(&inst.y)
            .map(|(zi, yi)| {
                let r = yi - zi * zi;
                r * r
            })
            .sum::<f64>())
}

/// `∇d(x) = 2 Hᵀ(((Hx)² − y) ⊙ Hx)`.
pub fn phase_retrieval_grad(inst: &PhaseRetrievalInstance, x: &[f64]) -> Result<Vec<f64>> {
    let z = inst.h.matvec(x)?;
    let w: Vec<f64> = z
        .iter()
        .zip(&inst.y)
        .map(|(zi, yi)| 2.0 * (zi * zi - yi) * zi)
        .collect();
    inst.h.matvec_t(&w)
}

impl SmoothTerm for PhaseRetrievalInstance {
    fn value(&self, x: &[f64]) -> f64 {
        phase_retrieval_value(self, x).expect("dimension checked at construction")
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        phase_retrieval_grad(self, x).expect("dimension checked at construction")
    }

    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let z = self.h.matvec(x).expect("dimension checked at construction");
        let mut value = 0.0;
        let mut w = Vec::with_capacity(z.len());
        for (zi, yi) in z.iter().zip(&self.y) {
            let r = zi * zi - yi;
            value += 0.5 * r * r;
            w.push(2.0 * r * zi);
        }
        let grad = self.h.matvec_t(&w).expect("dimensions consistent");
        (value, grad)
    }
}

/// Generates a phase-retrieval instance: Shepp-Logan phantom signal,
/// `H` with i.i.d. `N(0, 1/m)` entries, noiseless intensities `y = (Hx)²`.
pub fn make_phase_retrieval_instance(
    side: usize,
    m: usize,
    tv_weight: f64,
    rng: &mut RngState,
) -> Result<PhaseRetrievalInstance> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    let true_signal = shepp_logan(side)?;
    let n = side * side;
    let h = gaussian_matrix(m, n, 1.0 / m as f64, rng)?;
    let z = h.matvec(&true_signal)?;
    let y = z.iter().map(|zi| zi * zi).collect();
    Ok(PhaseRetrievalInstance {
        h,
        y,
        true_signal,
        tv_weight,
        side,
    })
}

/// Builds the `f = d + λ·TV` problem for an instance.
pub fn phase_retrieval_problem(inst: &Arc<PhaseRetrievalInstance>) -> Result<Problem> {
    let tv = Tv2d::new(inst.side, inst.side, inst.tv_weight);
    Problem::new(
        inst.clone() as Arc<dyn SmoothTerm>,
        vec![Arc::new(tv)],
        vec![1.0],
        inst.dimension(),
    )
}

/// Smooth term `½‖Ax − b‖²` with exactly known smoothness constants.
pub struct LassoSmooth {
    pub a: Matrix,
    pub b: Vec<f64>,
    scalar_l: f64,
    coord_l: Vec<f64>,
}

impl LassoSmooth {
    pub fn new(a: Matrix, b: Vec<f64>, scalar_l: f64) -> Self {
        // Per-coordinate curvature: diagonal of AᵀA.
        let n = a.cols();
        let mut coord_l = vec![0.0; n];
        for i in 0..a.rows() {
            for (c, &v) in coord_l.iter_mut().zip(a.row(i)) {
                *c += v * v;
            }
        }
        Self {
            a,
            b,
            scalar_l,
            coord_l,
        }
    }
}

impl SmoothTerm for LassoSmooth {
    fn value(&self, x: &[f64]) -> f64 {
        let z = self.a.matvec(x).expect("dimension checked");
        0.5 * z.iter().zip(&self.b).map(|(zi, bi)| (zi - bi) * (zi - bi)).sum::<f64>()
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let z = self.a.matvec(x).expect("dimension checked");
        let r: Vec<f64> = z.iter().zip(&self.b).map(|(zi, bi)| zi - bi).collect();
        self.a.matvec_t(&r).expect("dimension checked")
    }

    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let z = self.a.matvec(x).expect("dimension checked");
        let mut value = 0.0;
        let mut r = Vec::with_capacity(z.len());
        for (zi, bi) in z.iter().zip(&self.b) {
            let d = zi - bi;
            value += 0.5 * d * d;
            r.push(d);
        }
        (value, self.a.matvec_t(&r).expect("dimension checked"))
    }

    fn exact_lipschitz(&self) -> Option<(f64, Vec<f64>)> {
        Some((self.scalar_l, self.coord_l.clone()))
    }
}

/// A LASSO family `½‖Ax − b‖² + Σ θ_k λ_k‖x‖₁` with exactly known smooth
/// Lipschitz constant and a stored reference optimum.
pub struct LassoInstance {
    pub a: Matrix,
    pub b: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub weights: Vec<f64>,
    /// Largest eigenvalue of `AᵀA` (exact by construction).
    pub smooth_lipschitz: f64,
    pub fstar: f64,
    pub xstar: Vec<f64>,
}

impl LassoInstance {
    pub fn dimension(&self) -> usize {
        self.a.cols()
    }

    pub fn problem(&self) -> Result<Problem> {
        let smooth = Arc::new(LassoSmooth::new(
            self.a.clone(),
            self.b.clone(),
            self.smooth_lipschitz,
        ));
        let components: Vec<Arc<dyn ProxOperator>> = self
            .lambdas
            .iter()
            .map(|&lambda| Arc::new(SoftThreshold { lambda }) as Arc<dyn ProxOperator>)
            .collect();
        Problem::new(smooth, components, self.weights.clone(), self.dimension())
    }
}

/// Generates a LASSO instance with a controlled spectrum.
///
/// Columns of `A` are orthonormal (Gram-Schmidt on a Gaussian draw) scaled by
/// geometrically spaced singular values, so the top eigenvalue of `AᵀA` is
/// known exactly. The `K` component regularizers get distinct `λ_k` and a
/// non-uniform sampling distribution `θ`. The reference optimum is computed
/// to gradient-mapping tolerance 1e-10 and stored.
pub fn make_lasso_instance(
    n: usize,
    m: usize,
    k: usize,
    condition: f64,
    rng: &mut RngState,
) -> Result<LassoInstance> {
    make_lasso_instance_with_lambda(n, m, k, condition, 0.05, rng)
}

/// Same construction with a configurable base regularization weight;
/// component `k` uses `λ_k = lambda_base · (1 + k)`.
pub fn make_lasso_instance_with_lambda(
    n: usize,
    m: usize,
    k: usize,
    condition: f64,
    lambda_base: f64,
    rng: &mut RngState,
) -> Result<LassoInstance> {
    if !(lambda_base > 0.0) {
        return Err(Error::InvalidArgument("lambda_base must be > 0".into()));
    }
    if n == 0 || m == 0 || k == 0 {
        return Err(Error::InvalidArgument("n, m, K must be >= 1".into()));
    }
    if m < n {
        return Err(Error::InvalidArgument(
            "make_lasso_instance requires m >= n for orthonormal columns".into(),
        ));
    }
    if !(condition >= 1.0) {
        return Err(Error::InvalidArgument("condition must be >= 1".into()));
    }

    // Orthonormal columns via modified Gram-Schmidt on a Gaussian matrix.
    let g = gaussian_matrix(m, n, 1.0, rng)?;
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..m).map(|i| g.row(i)[j]).collect())
        .collect();
    for j in 0..n {
        for prev in 0..j {
            let (head, tail) = cols.split_at_mut(j);
            let proj = crate::numerics::dot(&head[prev], &tail[0]);
            for (c, p) in tail[0].iter_mut().zip(&head[prev]) {
                *c -= proj * p;
            }
        }
        let norm = norm_l2_sq(&cols[j]).sqrt();
        for c in cols[j].iter_mut() {
            *c /= norm;
        }
    }

    // Geometric singular values from s_max down to s_max/√condition.
    let s_max = 2.0;
    let singulars: Vec<f64> = (0..n)
        .map(|j| {
            let t = if n > 1 { j as f64 / (n - 1) as f64 } else { 0.0 };
            s_max * condition.powf(-0.5 * t)
        })
        .collect();
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            data[i * n + j] = cols[j][i] * singulars[j];
        }
    }
    let a = Matrix::new(m, n, data)?;
    let smooth_lipschitz = s_max * s_max;

    let b: Vec<f64> = (0..m).map(|_| rng.standard_normal()).collect();

    let lambdas: Vec<f64> = (0..k).map(|j| lambda_base * (1.0 + j as f64)).collect();
    let raw: Vec<f64> = (0..k).map(|j| 1.0 + j as f64).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    validate_weights(&weights)?;

    let mut inst = LassoInstance {
        a,
        b,
        lambdas,
        weights,
        smooth_lipschitz,
        fstar: f64::NAN,
        xstar: vec![0.0; n],
    };
    let problem = inst.problem()?;
    let reference = run_pgm_reference(
        &problem,
        &vec![0.0; n],
        1.0 / smooth_lipschitz,
        200_000,
        1e-10,
    )?;
    inst.fstar = reference.objective;
    inst.xstar = reference.x;
    Ok(inst)
}

// ---------------------------------------------------------------------------
// Text fixture format: whitespace-separated tokens, full-precision decimal
// numbers, dimensions before row-major data. Round-trips exactly.
// ---------------------------------------------------------------------------

fn push_slice(out: &mut String, label: &str, v: &[f64]) {
    let _ = write!(out, "{label} {}\n", v.len());
    for x in v {
        let _ = write!(out, "{x}\n");
    }
}

struct Tokens<'a> {
    iter: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn new(s: &'a str) -> Self {
        Self {
            iter: s.split_whitespace(),
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        self.iter
            .next()
            .ok_or_else(|| Error::Parse("unexpected end of fixture".into()))
    }

    fn expect(&mut self, word: &str) -> Result<()> {
        let got = self.next()?;
        if got != word {
            return Err(Error::Parse(format!("expected `{word}`, got `{got}`")));
        }
        Ok(())
    }

    fn usize(&mut self) -> Result<usize> {
        let t = self.next()?;
        t.parse()
            .map_err(|_| Error::Parse(format!("invalid count `{t}`")))
    }

    fn f64(&mut self) -> Result<f64> {
        let t = self.next()?;
        t.parse()
            .map_err(|_| Error::Parse(format!("invalid number `{t}`")))
    }

    fn vec(&mut self, len: usize) -> Result<Vec<f64>> {
        (0..len).map(|_| self.f64()).collect()
    }

    fn labeled_vec(&mut self, label: &str) -> Result<Vec<f64>> {
        self.expect(label)?;
        let len = self.usize()?;
        self.vec(len)
    }
}

impl PhaseRetrievalInstance {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "phase_retrieval\nside {}\nm {}\ntv_weight {}\n",
            self.side,
            self.num_measurements(),
            self.tv_weight
        );
        let _ = write!(out, "H {} {}\n", self.h.rows(), self.h.cols());
        for x in self.h.data() {
            let _ = write!(out, "{x}\n");
        }
        push_slice(&mut out, "y", &self.y);
        push_slice(&mut out, "true_signal", &self.true_signal);
        out
    }

    pub fn from_text(s: &str) -> Result<Self> {
        let mut t = Tokens::new(s);
        t.expect("phase_retrieval")?;
        t.expect("side")?;
        let side = t.usize()?;
        t.expect("m")?;
        let m = t.usize()?;
        t.expect("tv_weight")?;
        let tv_weight = t.f64()?;
        t.expect("H")?;
        let rows = t.usize()?;
        let cols = t.usize()?;
        let h = Matrix::new(rows, cols, t.vec(rows * cols)?)?;
        let y = t.labeled_vec("y")?;
        let true_signal = t.labeled_vec("true_signal")?;
        if rows != m || cols != side * side || y.len() != m {
            return Err(Error::Parse("inconsistent phase-retrieval fixture".into()));
        }
        Ok(Self {
            h,
            y,
            true_signal,
            tv_weight,
            side,
        })
    }
}

impl LassoInstance {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "lasso\nA {} {}\n",
            self.a.rows(),
            self.a.cols()
        );
        for x in self.a.data() {
            let _ = write!(out, "{x}\n");
        }
        push_slice(&mut out, "b", &self.b);
        push_slice(&mut out, "lambdas", &self.lambdas);
        push_slice(&mut out, "weights", &self.weights);
        let _ = write!(out, "L {}\nfstar {}\n", self.smooth_lipschitz, self.fstar);
        push_slice(&mut out, "xstar", &self.xstar);
        out
    }

    pub fn from_text(s: &str) -> Result<Self> {
        let mut t = Tokens::new(s);
        t.expect("lasso")?;
        t.expect("A")?;
        let rows = t.usize()?;
        let cols = t.usize()?;
        let a = Matrix::new(rows, cols, t.vec(rows * cols)?)?;
        let b = t.labeled_vec("b")?;
        let lambdas = t.labeled_vec("lambdas")?;
        let weights = t.labeled_vec("weights")?;
        t.expect("L")?;
        let smooth_lipschitz = t.f64()?;
        t.expect("fstar")?;
        let fstar = t.f64()?;
        let xstar = t.labeled_vec("xstar")?;
        Ok(Self {
            a,
            b,
            lambdas,
            weights,
            smooth_lipschitz,
            fstar,
            xstar,
        })
    }
}
