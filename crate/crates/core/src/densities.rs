//! Parametric density families on the real line.
//!
//! A [`FamilySpec`] names a family and optionally pins some of its slots to
//! fixed values; the remaining *free* slots form the parameter vector the
//! optimizers and metric tensors work with. [`FamilySpec::at`] validates a
//! parameter vector and returns a [`Model`], which evaluates the density, its
//! CDF, quantiles and parameter derivatives.
//!
//! CDFs are closed form (error function, regularized incomplete gamma,
//! piecewise exponential) and every parameter derivative of the CDF and the
//! density is analytic. Quantiles are found by bisection on the CDF.

use std::f64::consts::{LN_2, SQRT_2};
use std::ops::Deref;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::function::erf::erfc;
use statrs::function::gamma::{digamma, gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::grid::{Grid, POSITIVE_LEFT};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;
const MAX_SLOTS: usize = 5;

/// Step used by the central-difference second derivatives, relative to `max(1, |θ|)`.
pub const HESSIAN_FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    /// `a N(μ₁, σ₁²) + (1 − a) N(μ₂, σ₂²)` with layout `(a, μ₁, σ₁², μ₂, σ₂²)`, `a ∈ [0, 1]`.
    GaussianMixture,
    /// Same layout, but the weights are `1/(1+eᵃ)` and `1/(1+e⁻ᵃ)` with `a` unconstrained.
    GaussianMixtureLogit,
    /// `β^α x^{α−1} e^{−βx} / Γ(α)` with layout `(α, β)`.
    Gamma,
    /// `N(μ, σ²)` with layout `(μ, σ)`; note the standard deviation, not the variance.
    Gaussian,
    /// `exp(−|x − μ|/b) / 2b` with layout `(μ, b)`.
    Laplace,
}

/// What kind of constraint a parameter slot carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotRole {
    /// Mixture weight in `[0, 1]`.
    Weight,
    /// Strictly positive (variance, scale, shape or rate).
    Positive,
    /// A location on the sample space.
    Location,
    /// Any finite real.
    Free,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 5] = [Self::GaussianMixture, Self::GaussianMixtureLogit, Self::Gamma, Self::Gaussian, Self::Laplace];

    /// Inverse of [`FamilyKind::name`].
    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::GaussianMixture => "gaussian-mixture",
            Self::GaussianMixtureLogit => "gaussian-mixture-logit",
            Self::Gamma => "gamma",
            Self::Gaussian => "gaussian",
            Self::Laplace => "laplace",
        }
    }

    pub fn slots(self) -> &'static [&'static str] {
        match self {
            Self::GaussianMixture | Self::GaussianMixtureLogit => &["a", "mu1", "var1", "mu2", "var2"],
            Self::Gamma => &["alpha", "beta"],
            Self::Gaussian => &["mu", "sigma"],
            Self::Laplace => &["mu", "b"],
        }
    }

    pub fn roles(self) -> &'static [SlotRole] {
        use SlotRole::*;
        match self {
            Self::GaussianMixture => &[Weight, Location, Positive, Location, Positive],
            Self::GaussianMixtureLogit => &[Free, Location, Positive, Location, Positive],
            Self::Gamma => &[Positive, Positive],
            Self::Gaussian | Self::Laplace => &[Location, Positive],
        }
    }

    pub fn full_dim(self) -> usize {
        self.slots().len()
    }

    /// Whether the support is the positive half-line rather than all of ℝ.
    pub fn positive_support(self) -> bool {
        matches!(self, Self::Gamma)
    }
}

/// A point of parameter space, in the free-slot layout of its [`FamilySpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self + step * direction`.
    pub fn stepped(&self, step: f64, direction: &[f64]) -> Self {
        debug_assert_eq!(direction.len(), self.0.len());
        Self(self.0.iter().zip(direction).map(|(t, d)| t + step * d).collect())
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

impl Deref for ParameterVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl From<&[f64]> for ParameterVector {
    fn from(v: &[f64]) -> Self {
        Self(v.to_vec())
    }
}

/// A density family together with the slots held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySpec {
    kind: FamilyKind,
    fixed: Vec<Option<f64>>,
}

impl FamilySpec {
    pub fn new(kind: FamilyKind) -> Self {
        Self { kind, fixed: vec![None; kind.full_dim()] }
    }

    /// Pins `slot` (an index into the full layout) to `value`.
    pub fn with_fixed(mut self, slot: usize, value: f64) -> Self {
        self.fixed[slot] = Some(value);
        self
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// Number of free parameters.
    pub fn dim(&self) -> usize {
        self.fixed.iter().filter(|f| f.is_none()).count()
    }

    pub fn free_slots(&self) -> Vec<usize> {
        (0..self.fixed.len()).filter(|&i| self.fixed[i].is_none()).collect()
    }

    pub fn free_roles(&self) -> Vec<SlotRole> {
        let roles = self.kind.roles();
        self.free_slots().into_iter().map(|i| roles[i]).collect()
    }

    pub fn free_names(&self) -> Vec<&'static str> {
        let names = self.kind.slots();
        self.free_slots().into_iter().map(|i| names[i]).collect()
    }

    /// Full-layout parameters with the fixed slots filled in.
    pub fn expand(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if theta.len() != d {
            return Err(Error::Dimension { expected: d, got: theta.len() });
        }
        let mut free = theta.iter();
        Ok(self
            .fixed
            .iter()
            .map(|f| match f {
                Some(v) => *v,
                None => *free.next().expect("length checked"),
            })
            .collect())
    }

    /// Validates `theta` and returns the evaluable model.
    pub fn at(&self, theta: &[f64]) -> Result<Model> {
        let full = self.expand(theta)?;
        validate(self.kind, &full)?;
        let mut params = [0.0; MAX_SLOTS];
        params[..full.len()].copy_from_slice(&full);
        Ok(Model { kind: self.kind, params, free: self.free_slots() })
    }

    /// Stricter than [`FamilySpec::at`]: weights must lie in `[margin, 1 − margin]`
    /// and positive slots must be at least `margin`.
    pub fn within_margin(&self, theta: &[f64], margin: f64) -> bool {
        let Ok(full) = self.expand(theta) else {
            return false;
        };
        if validate(self.kind, &full).is_err() {
            return false;
        }
        full.iter().zip(self.kind.roles()).all(|(&v, role)| match role {
            SlotRole::Weight => (margin..=1.0 - margin).contains(&v),
            SlotRole::Positive => v >= margin,
            SlotRole::Location | SlotRole::Free => true,
        })
    }

    /// Grid on `[-r, r]`, or on `[10⁻⁶, r]` for positive-support families.
    pub fn grid(&self, radius: f64, points: usize) -> Result<Grid> {
        if self.kind.positive_support() {
            Grid::new(POSITIVE_LEFT, radius, points)
        } else {
            Grid::symmetric(radius, points)
        }
    }
}

fn validate(kind: FamilyKind, full: &[f64]) -> Result<()> {
    let names = kind.slots();
    for (i, (&v, role)) in full.iter().zip(kind.roles()).enumerate() {
        let fail = |reason| Error::Domain { family: kind.name(), slot: names[i], value: v, reason };
        if !v.is_finite() {
            return Err(fail("not finite"));
        }
        match role {
            SlotRole::Weight if !(0.0..=1.0).contains(&v) => return Err(fail("weight must lie in [0, 1]")),
            SlotRole::Positive if v <= 0.0 => return Err(fail("must be positive")),
            _ => {}
        }
    }
    Ok(())
}

/// Second parameter derivatives of the CDF at a set of nodes.
#[derive(Debug, Clone)]
pub struct CdfHessian {
    /// One symmetric `d × d` matrix per node.
    pub values: Vec<DMatrix<f64>>,
    /// Set when a slot sat too close to its domain boundary for central differences.
    pub one_sided: bool,
}

/// A family evaluated at a validated parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    kind: FamilyKind,
    params: [f64; MAX_SLOTS],
    free: Vec<usize>,
}

#[inline]
fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

#[inline]
fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

struct Component {
    weight: f64,
    /// d weight / d a
    dweight: f64,
    mean: f64,
    var: f64,
}

impl Model {
    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// Number of free parameters.
    pub fn dim(&self) -> usize {
        self.free.len()
    }

    /// All parameters in the family's full layout.
    pub fn full_params(&self) -> &[f64] {
        &self.params[..self.kind.full_dim()]
    }

    /// Free parameters.
    pub fn theta(&self) -> ParameterVector {
        self.free.iter().map(|&i| self.params[i]).collect::<Vec<_>>().into()
    }

    fn components(&self) -> [Component; 2] {
        let p = &self.params;
        let (w1, w2, dw1) = match self.kind {
            FamilyKind::GaussianMixture => (p[0], 1.0 - p[0], 1.0),
            FamilyKind::GaussianMixtureLogit => {
                let w1 = 1.0 / (1.0 + p[0].exp());
                let w2 = 1.0 / (1.0 + (-p[0]).exp());
                (w1, w2, -w1 * w2)
            }
            _ => unreachable!("components() is only defined for mixtures"),
        };
        [Component { weight: w1, dweight: dw1, mean: p[1], var: p[2] }, Component { weight: w2, dweight: -dw1, mean: p[3], var: p[4] }]
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let p = &self.params;
        match self.kind {
            FamilyKind::GaussianMixture | FamilyKind::GaussianMixtureLogit => self
                .components()
                .iter()
                .map(|c| {
                    let s = c.var.sqrt();
                    c.weight * std_normal_pdf((x - c.mean) / s) / s
                })
                .sum(),
            FamilyKind::Gamma => {
                if x <= 0.0 {
                    return 0.0;
                }
                let (a, b) = (p[0], p[1]);
                (a * b.ln() + (a - 1.0) * x.ln() - b * x - ln_gamma(a)).exp()
            }
            FamilyKind::Gaussian => std_normal_pdf((x - p[0]) / p[1]) / p[1],
            FamilyKind::Laplace => (-(x - p[0]).abs() / p[1]).exp() / (2.0 * p[1]),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let p = &self.params;
        match self.kind {
            FamilyKind::Gamma if x > 0.0 => {
                let (a, b) = (p[0], p[1]);
                a * b.ln() + (a - 1.0) * x.ln() - b * x - ln_gamma(a)
            }
            FamilyKind::Gaussian => {
                let z = (x - p[0]) / p[1];
                -0.5 * z * z - p[1].ln() - SQRT_2PI.ln()
            }
            FamilyKind::Laplace => -(x - p[0]).abs() / p[1] - LN_2 - p[1].ln(),
            _ => self.pdf(x).ln(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let p = &self.params;
        match self.kind {
            FamilyKind::GaussianMixture | FamilyKind::GaussianMixtureLogit => {
                self.components().iter().map(|c| c.weight * std_normal_cdf((x - c.mean) / c.var.sqrt())).sum::<f64>().clamp(0.0, 1.0)
            }
            FamilyKind::Gamma => {
                if x <= 0.0 {
                    0.0
                } else {
                    gamma_lr(p[0], p[1] * x)
                }
            }
            FamilyKind::Gaussian => std_normal_cdf((x - p[0]) / p[1]),
            FamilyKind::Laplace => {
                let u = (x - p[0]) / p[1];
                if u < 0.0 {
                    0.5 * u.exp()
                } else {
                    1.0 - 0.5 * (-u).exp()
                }
            }
        }
    }

    /// ∂F/∂θ over the full layout.
    fn full_grad_cdf(&self, x: f64, out: &mut [f64; MAX_SLOTS]) {
        let p = &self.params;
        match self.kind {
            FamilyKind::GaussianMixture | FamilyKind::GaussianMixtureLogit => {
                let comps = self.components();
                let mut cdfs = [0.0; 2];
                for (k, c) in comps.iter().enumerate() {
                    let s = c.var.sqrt();
                    let z = (x - c.mean) / s;
                    let dens = std_normal_pdf(z) / s;
                    cdfs[k] = std_normal_cdf(z);
                    out[1 + 2 * k] = -c.weight * dens;
                    out[2 + 2 * k] = -c.weight * dens * (x - c.mean) / (2.0 * c.var);
                }
                out[0] = comps[0].dweight * cdfs[0] + comps[1].dweight * cdfs[1];
            }
            FamilyKind::Gamma => {
                let (a, b) = (p[0], p[1]);
                if x <= 0.0 {
                    out[0] = 0.0;
                    out[1] = 0.0;
                } else {
                    out[0] = gamma_cdf_dshape(a, b * x);
                    out[1] = x * self.pdf(x) / b;
                }
            }
            FamilyKind::Gaussian => {
                let z = (x - p[0]) / p[1];
                let rho = std_normal_pdf(z) / p[1];
                out[0] = -rho;
                out[1] = -z * rho;
            }
            FamilyKind::Laplace => {
                let rho = self.pdf(x);
                out[0] = -rho;
                out[1] = -rho * (x - p[0]) / p[1];
            }
        }
    }

    /// ∂ρ/∂θ over the full layout.
    fn full_grad_pdf(&self, x: f64, out: &mut [f64; MAX_SLOTS]) {
        let p = &self.params;
        match self.kind {
            FamilyKind::GaussianMixture | FamilyKind::GaussianMixtureLogit => {
                let comps = self.components();
                let mut dens = [0.0; 2];
                for (k, c) in comps.iter().enumerate() {
                    let s = c.var.sqrt();
                    let dx = x - c.mean;
                    dens[k] = std_normal_pdf(dx / s) / s;
                    out[1 + 2 * k] = c.weight * dens[k] * dx / c.var;
                    out[2 + 2 * k] = c.weight * dens[k] * (dx * dx / c.var - 1.0) / (2.0 * c.var);
                }
                out[0] = comps[0].dweight * dens[0] + comps[1].dweight * dens[1];
            }
            FamilyKind::Gamma => {
                let (a, b) = (p[0], p[1]);
                if x <= 0.0 {
                    out[0] = 0.0;
                    out[1] = 0.0;
                } else {
                    let rho = self.pdf(x);
                    out[0] = rho * (b.ln() + x.ln() - digamma(a));
                    out[1] = rho * (a / b - x);
                }
            }
            FamilyKind::Gaussian => {
                let z = (x - p[0]) / p[1];
                let rho = std_normal_pdf(z) / p[1];
                out[0] = rho * z / p[1];
                out[1] = rho * (z * z - 1.0) / p[1];
            }
            FamilyKind::Laplace => {
                let rho = self.pdf(x);
                let dx = x - p[0];
                out[0] = rho * dx.signum() / p[1];
                out[1] = rho * (dx.abs() / (p[1] * p[1]) - 1.0 / p[1]);
            }
        }
    }

    /// ∂F/∂θ for the free slots at `x`.
    pub fn grad_cdf(&self, x: f64, out: &mut [f64]) {
        let mut full = [0.0; MAX_SLOTS];
        self.full_grad_cdf(x, &mut full);
        for (o, &i) in out.iter_mut().zip(&self.free) {
            *o = full[i];
        }
    }

    /// ∂ρ/∂θ for the free slots at `x`.
    pub fn grad_pdf(&self, x: f64, out: &mut [f64]) {
        let mut full = [0.0; MAX_SLOTS];
        self.full_grad_pdf(x, &mut full);
        for (o, &i) in out.iter_mut().zip(&self.free) {
            *o = full[i];
        }
    }

    pub fn pdf_at(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.pdf(x)).collect()
    }

    pub fn cdf_at(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.cdf(x)).collect()
    }

    /// `d × M` matrix of ∂F/∂θᵢ at the grid nodes.
    pub fn grad_theta_cdf(&self, grid: &Grid) -> DMatrix<f64> {
        self.grad_cdf_at(grid.nodes())
    }

    pub fn grad_cdf_at(&self, xs: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, xs.len());
        let mut col = vec![0.0; d];
        for (j, &x) in xs.iter().enumerate() {
            self.grad_cdf(x, &mut col);
            out.column_mut(j).copy_from_slice(&col);
        }
        out
    }

    /// `d × M` matrix of ∂ρ/∂θᵢ at the nodes.
    pub fn grad_pdf_at(&self, xs: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, xs.len());
        let mut col = vec![0.0; d];
        for (j, &x) in xs.iter().enumerate() {
            self.grad_pdf(x, &mut col);
            out.column_mut(j).copy_from_slice(&col);
        }
        out
    }

    /// ∇²_θ F at the nodes. Analytic for the Gaussian family, central
    /// differences of the analytic gradient otherwise.
    pub fn hess_cdf_at(&self, xs: &[f64]) -> CdfHessian {
        let d = self.dim();
        if self.kind == FamilyKind::Gaussian {
            let (mu, sigma) = (self.params[0], self.params[1]);
            let values = xs
                .iter()
                .map(|&x| {
                    let z = (x - mu) / sigma;
                    let phi = std_normal_pdf(z);
                    let s2 = sigma * sigma;
                    let full = [[-z * phi / s2, -phi * (z * z - 1.0) / s2], [-phi * (z * z - 1.0) / s2, z * phi * (2.0 - z * z) / s2]];
                    DMatrix::from_fn(d, d, |r, c| full[self.free[r]][self.free[c]])
                })
                .collect();
            return CdfHessian { values, one_sided: false };
        }

        let mut values = vec![DMatrix::zeros(d, d); xs.len()];
        let mut one_sided = false;
        for j in 0..d {
            let slot = self.free[j];
            let h = HESSIAN_FD_STEP * self.params[slot].abs().max(1.0);
            let plus = self.shifted(slot, h);
            let minus = self.shifted(slot, -h);
            let (upper, lower, span) = match (plus, minus) {
                (Some(p), Some(m)) => (p, m, 2.0 * h),
                (Some(p), None) => {
                    one_sided = true;
                    (p, self.clone(), h)
                }
                (None, Some(m)) => {
                    one_sided = true;
                    (self.clone(), m, h)
                }
                (None, None) => unreachable!("a valid slot admits a step in at least one direction"),
            };
            let gu = upper.grad_cdf_at(xs);
            let gl = lower.grad_cdf_at(xs);
            for (k, v) in values.iter_mut().enumerate() {
                for i in 0..d {
                    v[(i, j)] = (gu[(i, k)] - gl[(i, k)]) / span;
                }
            }
        }
        for v in values.iter_mut() {
            let sym = 0.5 * (&*v + v.transpose());
            *v = sym;
        }
        CdfHessian { values, one_sided }
    }

    /// Copy with full-layout `slot` moved by `delta`, if still in the domain.
    fn shifted(&self, slot: usize, delta: f64) -> Option<Model> {
        let mut m = self.clone();
        m.params[slot] += delta;
        validate(m.kind, m.full_params()).ok().map(|_| m)
    }

    fn location_scale(&self) -> (f64, f64, f64) {
        // (low, high, width) starting bracket for quantile searches
        let p = &self.params;
        match self.kind {
            FamilyKind::GaussianMixture | FamilyKind::GaussianMixtureLogit => {
                let (s1, s2) = (p[2].sqrt(), p[4].sqrt());
                let lo = (p[1] - 10.0 * s1).min(p[3] - 10.0 * s2);
                let hi = (p[1] + 10.0 * s1).max(p[3] + 10.0 * s2);
                (lo, hi, s1.max(s2))
            }
            FamilyKind::Gamma => {
                let (a, b) = (p[0], p[1]);
                (0.0, a / b + 10.0 * a.sqrt() / b + 10.0 / b, a.sqrt() / b + 1.0 / b)
            }
            FamilyKind::Gaussian => (p[0] - 10.0 * p[1], p[0] + 10.0 * p[1], p[1]),
            FamilyKind::Laplace => (p[0] - 20.0 * p[1], p[0] + 20.0 * p[1], p[1]),
        }
    }

    /// Smallest `x` with `F(x) = p`, by bisection to full double precision.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Probability(p));
        }
        Ok(self.quantile_unchecked(p))
    }

    pub(crate) fn quantile_unchecked(&self, p: f64) -> f64 {
        let (mut lo, mut hi, scale) = self.location_scale();
        let mut step = 10.0 * scale;
        for _ in 0..64 {
            if self.cdf(lo) <= p {
                break;
            }
            lo -= step;
            step *= 2.0;
        }
        if self.kind.positive_support() {
            lo = lo.max(0.0);
        }
        let mut step = 10.0 * scale;
        for _ in 0..64 {
            if self.cdf(hi) >= p {
                break;
            }
            hi += step;
            step *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `n` draws by inverse-transform sampling from a ChaCha20 stream seeded with `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u = loop {
                    let u: f64 = rng.random();
                    if u > 0.0 {
                        break u;
                    }
                };
                self.quantile_unchecked(u)
            })
            .collect()
    }
}

/// ∂/∂α of the regularized lower incomplete gamma function P(α, z).
///
/// Differentiates the series `P(α, z) = Σₙ e^{−z} z^{α+n} / Γ(α+n+1)` term by
/// term; each term picks up a factor `ln z − ψ(α+n+1)`. Summation starts at
/// the largest term and walks outward in both directions.
pub(crate) fn gamma_cdf_dshape(alpha: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    let lnz = z.ln();
    let peak = (z - alpha).floor().max(0.0);
    let n0 = peak as u64;
    let log_t0 = (alpha + peak) * lnz - z - ln_gamma(alpha + peak + 1.0);
    if log_t0 < -745.0 {
        return 0.0;
    }
    let t0 = log_t0.exp();
    let psi0 = digamma(alpha + peak + 1.0);
    let tiny = 1e-18 * t0;

    let mut sum = t0 * (lnz - psi0);
    // upward: t_{n+1} = t_n z / (α+n+1), ψ(α+n+2) = ψ(α+n+1) + 1/(α+n+1)
    let (mut t, mut psi) = (t0, psi0);
    let mut n = n0;
    loop {
        let k = alpha + n as f64 + 1.0;
        t *= z / k;
        psi += 1.0 / k;
        n += 1;
        sum += t * (lnz - psi);
        if t < tiny || n > n0 + 100_000 {
            break;
        }
    }
    // downward: t_{n-1} = t_n (α+n) / z, ψ(α+n) = ψ(α+n+1) − 1/(α+n)
    let (mut t, mut psi) = (t0, psi0);
    let mut n = n0;
    while n > 0 {
        let k = alpha + n as f64;
        t *= k / z;
        psi -= 1.0 / k;
        n -= 1;
        sum += t * (lnz - psi);
        if t < tiny {
            break;
        }
    }
    sum
}

/// Multivariate normal `N(μ, Σ)` on ℝⁿ.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNd {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianNd {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::Dimension { expected: n, got: cov.nrows() });
        }
        if (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
            return Err(Error::Invalid("covariance is not symmetric".into()));
        }
        if Cholesky::new(cov.clone()).is_none() {
            return Err(Error::Singular("covariance is not positive definite".into()));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn pdf(&self, x: &DVector<f64>) -> f64 {
        let chol = Cholesky::new(self.cov.clone()).expect("checked at construction");
        let diff = x - &self.mean;
        let sol = chol.solve(&diff);
        let det: f64 = chol.l().diagonal().iter().map(|v| v * v).product();
        let n = self.dim() as f64;
        (-0.5 * diff.dot(&sol)).exp() / ((2.0 * std::f64::consts::PI).powf(n) * det).sqrt()
    }
}
