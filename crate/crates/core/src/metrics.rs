//! Metric tensors on parameter space.
//!
//! For a one-dimensional family with CDF `F(x, θ)` the pulled-back Wasserstein
//! tensor is `G_W = ∫ (1/ρ) ∇_θF ∇_θFᵀ dx`; the Fisher-Rao tensor replaces
//! `∇_θF` by `∇_θρ`. Against a fixed target with Monge map `T`, weighting the
//! Wasserstein integrand by `T′` gives the modified tensor `Ḡ_W`, and adding
//! `∫ (T − x) ∇²_θF dx` gives the exact Hessian of `½W₂²`.
//!
//! For multivariate Gaussians the tensor is available in closed form, see
//! [`gaussian`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::densities::Model;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::transport::{transport_map, Target, TransportMap1D};

/// Nodes where the density is at or below this value are left out of the
/// `1/ρ`-weighted integrals.
pub const DENSITY_FLOOR: f64 = 1e-12;
/// Relative eigenvalue floor (against `trace / d`) below which solves are regularized.
pub const REGULARIZATION_RATIO: f64 = 1e-9;
/// `max T′` above which the modified tensor is flagged unstable.
pub const INSTABILITY_THRESHOLD: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Wasserstein,
    FisherRao,
    ModifiedWasserstein,
    Hessian,
    Diagonal,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Wasserstein => "wasserstein",
            Self::FisherRao => "fisher-rao",
            Self::ModifiedWasserstein => "modified-wasserstein",
            Self::Hessian => "hessian",
            Self::Diagonal => "diagonal",
        }
    }
}

/// A symmetric `d × d` preconditioner.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix {
    matrix: DMatrix<f64>,
    kind: MetricKind,
    eigenvalues: Vec<f64>,
    regularization: f64,
    discarded_mass: f64,
    unstable: bool,
}

impl MetricMatrix {
    /// Symmetrizes `matrix` and works out the regularization its solves will use.
    pub fn new(matrix: DMatrix<f64>, kind: MetricKind) -> Self {
        assert!(matrix.is_square(), "metric matrices are square");
        let matrix = 0.5 * (&matrix + matrix.transpose());
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(matrix.clone()).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        let d = matrix.nrows().max(1) as f64;
        let floor = REGULARIZATION_RATIO * matrix.trace() / d;
        let regularization = match eigenvalues.first() {
            Some(&min) if floor > 0.0 && min < floor => floor,
            _ => 0.0,
        };
        Self { matrix, kind, eigenvalues, regularization, discarded_mass: 0.0, unstable: false }
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(entries)), MetricKind::Diagonal)
    }

    pub fn identity(d: usize) -> Self {
        Self::new(DMatrix::identity(d, d), MetricKind::Diagonal)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Eigenvalues in ascending order, before regularization.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// The `λ` that [`MetricMatrix::solve`] adds to the diagonal.
    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    /// Density mass sitting on nodes skipped by the [`DENSITY_FLOOR`] tail policy.
    pub fn discarded_mass(&self) -> f64 {
        self.discarded_mass
    }

    /// Set for modified tensors whose `T′` exceeded [`INSTABILITY_THRESHOLD`].
    pub fn is_unstable(&self) -> bool {
        self.unstable
    }

    /// Ratio of extreme eigenvalues of the regularized matrix.
    pub fn condition_number(&self) -> f64 {
        let (Some(&lo), Some(&hi)) = (self.eigenvalues.first(), self.eigenvalues.last()) else {
            return f64::NAN;
        };
        (hi + self.regularization).abs() / (lo + self.regularization).abs()
    }

    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        v.dot(&(&self.matrix * &v))
    }

    /// Solves `(G + λI) x = rhs`.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if rhs.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: rhs.len() });
        }
        let shifted = &self.matrix + DMatrix::identity(self.dim(), self.dim()) * self.regularization;
        let eig = SymmetricEigen::new(shifted);
        let scale = eig.eigenvalues.amax();
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Singular(format!("{} tensor has no positive spectrum", self.kind.name())));
        }
        let mut out = DVector::zeros(self.dim());
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda.abs() <= 1e-15 * scale {
                return Err(Error::Singular(format!("{} tensor eigenvalue {lambda:e} vanishes", self.kind.name())));
            }
            let v = eig.eigenvectors.column(k);
            out += v * (v.dot(rhs) / lambda);
        }
        Ok(out)
    }
}

/// Accumulates `∫ w(x) / ρ(x) · g(x) g(x)ᵀ dx` over nodes with `ρ > DENSITY_FLOOR`.
fn weighted_outer<G>(model: &Model, grid: &Grid, weight: impl Fn(usize) -> f64, grad: G) -> (DMatrix<f64>, f64)
where
    G: Fn(f64, &mut [f64]),
{
    let d = model.dim();
    let mut acc = DMatrix::zeros(d, d);
    let mut discarded = 0.0;
    let mut g = vec![0.0; d];
    for (i, &x) in grid.nodes().iter().enumerate() {
        let rho = model.pdf(x);
        if rho <= DENSITY_FLOOR {
            discarded += grid.weight(i) * rho;
            continue;
        }
        let w = grid.weight(i) * weight(i) / rho;
        if w == 0.0 {
            continue;
        }
        grad(x, &mut g);
        for r in 0..d {
            let wr = w * g[r];
            for c in r..d {
                acc[(r, c)] += wr * g[c];
            }
        }
    }
    for r in 0..d {
        for c in 0..r {
            acc[(r, c)] = acc[(c, r)];
        }
    }
    (acc, discarded)
}

/// `G_W(θ) = ∫ (1/ρ) ∇_θF ∇_θFᵀ dx` by the trapezoid rule.
pub fn wasserstein_metric_tensor(model: &Model, grid: &Grid) -> MetricMatrix {
    let (m, discarded) = weighted_outer(model, grid, |_| 1.0, |x, g| model.grad_cdf(x, g));
    let mut out = MetricMatrix::new(m, MetricKind::Wasserstein);
    out.discarded_mass = discarded;
    out
}

/// Fisher information `G_F(θ) = ∫ (1/ρ) ∇_θρ ∇_θρᵀ dx`.
pub fn fisher_metric_tensor(model: &Model, grid: &Grid) -> MetricMatrix {
    let (m, discarded) = weighted_outer(model, grid, |_| 1.0, |x, g| model.grad_pdf(x, g));
    let mut out = MetricMatrix::new(m, MetricKind::FisherRao);
    out.discarded_mass = discarded;
    out
}

/// `Ḡ_W(θ) = ∫ (T′/ρ) ∇_θF ∇_θFᵀ dx` for the map towards `target`.
pub fn modified_wasserstein_tensor(model: &Model, target: &Target, grid: &Grid) -> MetricMatrix {
    let map = transport_map(model, target, grid);
    modified_wasserstein_from_map(model, &map)
}

pub fn modified_wasserstein_from_map(model: &Model, map: &TransportMap1D) -> MetricMatrix {
    let tprime = map.derivative();
    let (m, discarded) = weighted_outer(model, map.grid(), |i| tprime[i], |x, g| model.grad_cdf(x, g));
    let mut out = MetricMatrix::new(m, MetricKind::ModifiedWasserstein);
    out.discarded_mass = discarded;
    out.unstable = map.max_derivative() > INSTABILITY_THRESHOLD;
    out
}

/// The two pieces of the `½W₂²` Hessian.
#[derive(Debug, Clone)]
pub struct HessianParts {
    /// `∫ (T − x) ∇²_θF dx`
    pub transport_term: DMatrix<f64>,
    /// `Ḡ_W`
    pub modified: MetricMatrix,
}

impl HessianParts {
    pub fn total(&self) -> MetricMatrix {
        MetricMatrix::new(&self.transport_term + self.modified.matrix(), MetricKind::Hessian)
    }
}

/// Exact Hessian of `θ ↦ ½W₂²(ρ(·, θ), target)`. Refuses empirical targets.
pub fn w2_hessian(model: &Model, target: &Target, grid: &Grid) -> Result<MetricMatrix> {
    Ok(w2_hessian_parts(model, target, grid)?.total())
}

pub fn w2_hessian_parts(model: &Model, target: &Target, grid: &Grid) -> Result<HessianParts> {
    if target.is_empirical() {
        return Err(Error::EmpiricalHessian);
    }
    let map = transport_map(model, target, grid);
    let modified = modified_wasserstein_from_map(model, &map);
    let hess = model.hess_cdf_at(grid.nodes());
    let d = model.dim();
    let mut transport_term = DMatrix::zeros(d, d);
    for (i, ((&x, &t), h)) in grid.nodes().iter().zip(map.map()).zip(&hess.values).enumerate() {
        transport_term += h * (grid.weight(i) * (t - x));
    }
    Ok(HessianParts { transport_term, modified })
}

pub mod gaussian {
    //! Closed-form Wasserstein metric for `N(μ, Σ)` on ℝⁿ.
    //!
    //! A tangent `(μ̇, Σ̇)` corresponds to the potential with gradient
    //! `S(x − μ) + μ̇`, where `S` solves the Lyapunov equation `SΣ + ΣS = Σ̇`;
    //! the inner product is `⟨μ̇₁, μ̇₂⟩ + tr(S₁ Σ S₂)`.

    use nalgebra::{DMatrix, DVector, SymmetricEigen};

    use super::{MetricKind, MetricMatrix};
    use crate::error::{Error, Result};

    /// Smallest eigenvalue of `Σ` accepted by [`lyapunov_solve`].
    pub const MIN_EIGENVALUE: f64 = 1e-12;

    fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
        if !m.is_square() {
            return Err(Error::Invalid(format!("{what} must be square")));
        }
        if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
            return Err(Error::Invalid(format!("{what} must be symmetric")));
        }
        Ok(())
    }

    /// Solves `SΣ + ΣS = Σ̇` for symmetric `S` in the eigenbasis of `Σ`.
    pub fn lyapunov_solve(sigma: &DMatrix<f64>, sigma_dot: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_symmetric(sigma, "Σ")?;
        check_symmetric(sigma_dot, "Σ̇")?;
        if sigma.shape() != sigma_dot.shape() {
            return Err(Error::Dimension { expected: sigma.nrows(), got: sigma_dot.nrows() });
        }
        let eig = SymmetricEigen::new(sigma.clone());
        let min = eig.eigenvalues.min();
        if min < MIN_EIGENVALUE {
            return Err(Error::Singular(format!("Σ has eigenvalue {min:e}")));
        }
        let u = &eig.eigenvectors;
        let rotated = u.transpose() * sigma_dot * u;
        let n = sigma.nrows();
        let s_tilde = DMatrix::from_fn(n, n, |i, j| rotated[(i, j)] / (eig.eigenvalues[i] + eig.eigenvalues[j]));
        let s = u * s_tilde * u.transpose();
        Ok(0.5 * (&s + s.transpose()))
    }

    /// A tangent vector `(μ̇, Σ̇)` at `Σ` together with its Lyapunov solution `S`.
    #[derive(Debug, Clone, PartialEq)]
    pub struct GaussianTangent {
        pub mean_velocity: DVector<f64>,
        pub cov_velocity: DMatrix<f64>,
        pub s: DMatrix<f64>,
    }

    impl GaussianTangent {
        pub fn new(mean_velocity: DVector<f64>, cov_velocity: DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<Self> {
            if mean_velocity.len() != sigma.nrows() {
                return Err(Error::Dimension { expected: sigma.nrows(), got: mean_velocity.len() });
            }
            let s = lyapunov_solve(sigma, &cov_velocity)?;
            Ok(Self { mean_velocity, cov_velocity, s })
        }

        /// `∇Φ(x) = S(x − μ) + μ̇`.
        pub fn potential_gradient(&self, x: &DVector<f64>, mean: &DVector<f64>) -> DVector<f64> {
            &self.s * (x - mean) + &self.mean_velocity
        }
    }

    /// `g(ξ, η) = ⟨μ̇₁, μ̇₂⟩ + tr(S₁ Σ S₂)`.
    pub fn gaussian_closed_form_inner(xi: &GaussianTangent, eta: &GaussianTangent, sigma: &DMatrix<f64>) -> Result<f64> {
        let n = sigma.nrows();
        for t in [xi, eta] {
            if t.mean_velocity.len() != n || t.s.nrows() != n {
                return Err(Error::Dimension { expected: n, got: t.mean_velocity.len() });
            }
        }
        Ok(xi.mean_velocity.dot(&eta.mean_velocity) + (&xi.s * sigma * &eta.s).trace())
    }

    /// Closed-form tensor of `N(μ, σ²)` in `(μ, σ)` coordinates.
    pub fn metric_mean_std(sigma: f64) -> Result<MetricMatrix> {
        let cov = DMatrix::from_element(1, 1, sigma * sigma);
        // d(σ²) = 2σ dσ
        let tangents = [
            GaussianTangent::new(DVector::from_element(1, 1.0), DMatrix::zeros(1, 1), &cov)?,
            GaussianTangent::new(DVector::zeros(1), DMatrix::from_element(1, 1, 2.0 * sigma), &cov)?,
        ];
        gram(&tangents, &cov)
    }

    /// Closed-form tensor of `N(μ, v)` in `(μ, v)` coordinates, `v = σ²`.
    pub fn metric_mean_variance(variance: f64) -> Result<MetricMatrix> {
        let cov = DMatrix::from_element(1, 1, variance);
        let tangents = [
            GaussianTangent::new(DVector::from_element(1, 1.0), DMatrix::zeros(1, 1), &cov)?,
            GaussianTangent::new(DVector::zeros(1), DMatrix::from_element(1, 1, 1.0), &cov)?,
        ];
        gram(&tangents, &cov)
    }

    fn gram(tangents: &[GaussianTangent], cov: &DMatrix<f64>) -> Result<MetricMatrix> {
        let d = tangents.len();
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = gaussian_closed_form_inner(&tangents[i], &tangents[j], cov)?;
            }
        }
        Ok(MetricMatrix::new(m, MetricKind::Wasserstein))
    }
}
