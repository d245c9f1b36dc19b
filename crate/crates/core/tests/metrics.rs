use nalgebra::{DMatrix, DVector};
use otng::densities::{FamilyKind, FamilySpec};
use otng::grid::Grid;
use otng::metrics::gaussian::{gaussian_closed_form_inner, lyapunov_solve, metric_mean_std, metric_mean_variance, GaussianTangent};
use otng::metrics::{
    fisher_metric_tensor, modified_wasserstein_tensor, w2_hessian, w2_hessian_parts, wasserstein_metric_tensor, MetricMatrix,
};
use otng::transport::{w2_objective_gradient, EmpiricalTarget, Target};

fn centered(mu: f64, sigma: f64) -> Grid {
    Grid::new(mu - 15.0 * sigma, mu + 15.0 * sigma, 4000).unwrap()
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

#[test]
fn gaussian_wasserstein_tensor_is_identity() {
    for (mu, sigma) in [(0.0, 1.0), (3.0, 0.4), (-7.0, 2.5)] {
        let m = FamilySpec::new(FamilyKind::Gaussian).at(&[mu, sigma]).unwrap();
        let g = wasserstein_metric_tensor(&m, &centered(mu, sigma));
        assert!(max_abs_diff(g.matrix(), &DMatrix::identity(2, 2)) < 1e-6, "{}", g.matrix());
    }
}

#[test]
fn gaussian_fisher_tensor() {
    for (mu, sigma) in [(0.0, 1.0), (3.0, 0.4), (-7.0, 2.5)] {
        let m = FamilySpec::new(FamilyKind::Gaussian).at(&[mu, sigma]).unwrap();
        let g = fisher_metric_tensor(&m, &centered(mu, sigma));
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / (sigma * sigma), 2.0 / (sigma * sigma)]));
        assert!(max_abs_diff(g.matrix(), &expected) < 1e-6 * expected.amax(), "{}", g.matrix());
    }
}

#[test]
fn laplace_location_tensors() {
    let b = 1.7;
    let spec = FamilySpec::new(FamilyKind::Laplace).with_fixed(1, b);
    let m = spec.at(&[0.4]).unwrap();
    let grid = Grid::symmetric(40.0, 8000).unwrap();
    let gw = wasserstein_metric_tensor(&m, &grid);
    assert!((gw.matrix()[(0, 0)] - 1.0).abs() < 1e-5);
    let gf = fisher_metric_tensor(&m, &grid);
    assert!((gf.matrix()[(0, 0)] - 1.0 / (b * b)).abs() < 1e-3 / (b * b));
}

#[test]
fn gamma_fisher_information() {
    // [[ψ′(α), −1/β], [−1/β, α/β²]]
    let (alpha, beta) = (3.5, 1.5);
    let m = FamilySpec::new(FamilyKind::Gamma).at(&[alpha, beta]).unwrap();
    let grid = FamilySpec::new(FamilyKind::Gamma).grid(30.0, 20000).unwrap();
    let g = fisher_metric_tensor(&m, &grid);
    // ψ′(3.5) = π²/2 − 4(1 + 1/9 + 1/25)
    let trigamma = std::f64::consts::PI.powi(2) / 2.0 - 4.0 * (1.0 + 1.0 / 9.0 + 1.0 / 25.0);
    let expected = DMatrix::from_row_slice(2, 2, &[trigamma, -1.0 / beta, -1.0 / beta, alpha / (beta * beta)]);
    assert!(max_abs_diff(g.matrix(), &expected) < 1e-4, "{} vs {expected}", g.matrix());
}

#[test]
fn tensors_are_positive_semidefinite() {
    let spec = FamilySpec::new(FamilyKind::GaussianMixture);
    let m = spec.at(&[0.3, -3.0, 0.25, -5.0, 0.16]).unwrap();
    let grid = Grid::symmetric(15.0, 4000).unwrap();
    for g in [wasserstein_metric_tensor(&m, &grid), fisher_metric_tensor(&m, &grid)] {
        assert!(g.eigenvalues()[0] >= -1e-12 * g.eigenvalues()[4]);
        let m = g.matrix();
        assert!(max_abs_diff(m, &m.transpose()) == 0.0);
        for k in 0..20 {
            let xi: Vec<f64> = (0..5).map(|i| ((i * 7 + k * 13) % 11) as f64 - 5.0).collect();
            assert!(g.quadratic_form(&xi) >= 0.0);
        }
    }
}

#[test]
fn modified_tensor_equals_plain_tensor_at_the_target() {
    let spec = FamilySpec::new(FamilyKind::GaussianMixture);
    let m = spec.at(&[0.3, -3.0, 0.25, -5.0, 0.16]).unwrap();
    let grid = Grid::symmetric(15.0, 4000).unwrap();
    let gw = wasserstein_metric_tensor(&m, &grid);
    let gm = modified_wasserstein_tensor(&m, &Target::Continuous(m.clone()), &grid);
    assert!(max_abs_diff(gw.matrix(), gm.matrix()) < 1e-6 * gw.matrix().amax(), "{} vs {}", gw.matrix(), gm.matrix());
}

#[test]
fn modified_tensor_for_gaussian_shift_and_scale() {
    let grid = Grid::symmetric(15.0, 4000).unwrap();
    // pure shift: T′ = 1
    let spec = FamilySpec::new(FamilyKind::Gaussian).with_fixed(1, 1.2);
    let m = spec.at(&[0.5]).unwrap();
    let target = Target::Continuous(FamilySpec::new(FamilyKind::Gaussian).at(&[-1.0, 1.2]).unwrap());
    let g = modified_wasserstein_tensor(&m, &target, &grid);
    assert!((g.matrix()[(0, 0)] - 1.0).abs() < 1e-5, "{}", g.matrix());
    // pure scale: T′ = σ*/σ
    let spec = FamilySpec::new(FamilyKind::Gaussian).with_fixed(0, 0.0);
    let m = spec.at(&[0.8]).unwrap();
    let target = Target::Continuous(FamilySpec::new(FamilyKind::Gaussian).at(&[0.0, 1.4]).unwrap());
    let gm = modified_wasserstein_tensor(&m, &target, &grid);
    let gw = wasserstein_metric_tensor(&m, &grid);
    let ratio = gm.matrix()[(0, 0)] / gw.matrix()[(0, 0)];
    assert!((ratio - 1.4 / 0.8).abs() < 1e-4, "{ratio}");
    assert!(!gm.is_unstable());
}

#[test]
fn modified_tensor_flags_spiky_maps() {
    let grid = Grid::symmetric(15.0, 4000).unwrap();
    let m = FamilySpec::new(FamilyKind::Gaussian).at(&[0.0, 1.0]).unwrap();
    let data = Target::Empirical(EmpiricalTarget::new(vec![-10.0, 10.0]).unwrap());
    assert!(modified_wasserstein_tensor(&m, &data, &grid).is_unstable());
}

#[test]
fn doubling_the_grid_leaves_tensors_unchanged() {
    let spec = FamilySpec::new(FamilyKind::GaussianMixture);
    let m = spec.at(&[0.4, -2.0, 1.0, 3.0, 0.5]).unwrap();
    let coarse = Grid::symmetric(15.0, 2000).unwrap();
    let fine = coarse.refined();
    for (a, b) in [
        (wasserstein_metric_tensor(&m, &coarse), wasserstein_metric_tensor(&m, &fine)),
        (fisher_metric_tensor(&m, &coarse), fisher_metric_tensor(&m, &fine)),
    ] {
        assert!(max_abs_diff(a.matrix(), b.matrix()) < 1e-3 * b.matrix().amax());
    }
}

#[test]
fn scaling_keeps_the_gaussian_tensor_identity() {
    for c in [0.5, 3.0] {
        let (mu, sigma) = (0.7 * c, 1.3 * c);
        let m = FamilySpec::new(FamilyKind::Gaussian).at(&[mu, sigma]).unwrap();
        let g = wasserstein_metric_tensor(&m, &centered(mu, sigma));
        assert!(max_abs_diff(g.matrix(), &DMatrix::identity(2, 2)) < 1e-6);
    }
}

#[test]
fn gaussian_location_hessian_is_one() {
    let grid = Grid::symmetric(15.0, 4000).unwrap();
    let spec = FamilySpec::new(FamilyKind::Gaussian).with_fixed(1, 0.9);
    let target = Target::Continuous(FamilySpec::new(FamilyKind::Gaussian).at(&[1.0, 0.9]).unwrap());
    for mu in [-2.0, 0.0, 0.5, 1.0, 3.0] {
        let h = w2_hessian(&spec.at(&[mu]).unwrap(), &target, &grid).unwrap();
        assert!((h.matrix()[(0, 0)] - 1.0).abs() < 1e-6, "μ = {mu}: {}", h.matrix());
    }
}

#[test]
fn hessian_is_the_sum_of_its_parts_and_matches_differences() {
    let grid = Grid::symmetric(15.0, 4000).unwrap();
    let spec = FamilySpec::new(FamilyKind::GaussianMixture);
    let theta = [0.45, -1.0, 1.2, 2.0, 0.8];
    let target = Target::Continuous(spec.at(&[0.5, -1.5, 1.0, 2.5, 0.6]).unwrap());
    let m = spec.at(&theta).unwrap();
    let parts = w2_hessian_parts(&m, &target, &grid).unwrap();
    let total = w2_hessian(&m, &target, &grid).unwrap();
    let sum = &parts.transport_term + parts.modified.matrix();
    assert!(max_abs_diff(total.matrix(), &sum) < 1e-14 * sum.amax());

    let mut fd = DMatrix::zeros(5, 5);
    for k in 0..5 {
        let h = 1e-5 * theta[k].abs().max(1.0);
        let mut p = theta;
        let mut q = theta;
        p[k] += h;
        q[k] -= h;
        let gp = w2_objective_gradient(&spec.at(&p).unwrap(), &target, &grid);
        let gq = w2_objective_gradient(&spec.at(&q).unwrap(), &target, &grid);
        fd.set_column(k, &((gp - gq) / (2.0 * h)));
    }
    let fd = 0.5 * (&fd + fd.transpose());
    let rel = (&fd - total.matrix()).norm() / fd.norm();
    assert!(rel < 1e-2, "{rel}");
}

#[test]
fn empirical_hessian_is_refused() {
    let grid = Grid::symmetric(15.0, 400).unwrap();
    let m = FamilySpec::new(FamilyKind::Gaussian).at(&[0.0, 1.0]).unwrap();
    let data = Target::Empirical(EmpiricalTarget::new(vec![0.0, 1.0]).unwrap());
    assert!(w2_hessian(&m, &data, &grid).is_err());
}

#[test]
fn regularization_kicks_in_for_rank_deficient_tensors() {
    let g = MetricMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]), otng::metrics::MetricKind::Wasserstein);
    assert!(g.regularization() > 0.0);
    let x = g.solve(&DVector::from_vec(vec![1.0, 1.0])).unwrap();
    assert!(x.iter().all(|v| v.is_finite()));
    let id = MetricMatrix::identity(3);
    assert_eq!(id.regularization(), 0.0);
    assert_eq!(id.solve(&DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap().as_slice(), &[1.0, 2.0, 3.0]);
}

#[test]
fn lyapunov_examples() {
    let sd = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, -2.0]);
    let s = lyapunov_solve(&DMatrix::identity(2, 2), &sd).unwrap();
    assert!(max_abs_diff(&s, &(&sd / 2.0)) < 1e-15);
    let s = lyapunov_solve(&DMatrix::from_element(1, 1, 4.0), &DMatrix::from_element(1, 1, 3.0)).unwrap();
    assert!((s[(0, 0)] - 3.0 / 8.0).abs() < 1e-15);
    assert!(lyapunov_solve(&DMatrix::zeros(2, 2), &sd).is_err());
    assert!(lyapunov_solve(&DMatrix::identity(2, 2), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])).is_err());
}

#[test]
fn closed_form_inner_product_examples() {
    let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let mv = DVector::from_vec(vec![0.3, -1.2]);
    let t = GaussianTangent::new(mv.clone(), DMatrix::zeros(2, 2), &sigma).unwrap();
    assert!((gaussian_closed_form_inner(&t, &t, &sigma).unwrap() - mv.norm_squared()).abs() < 1e-15);

    let (s, sdot) = (1.7, 0.4);
    let cov = DMatrix::from_element(1, 1, s * s);
    let t = GaussianTangent::new(DVector::zeros(1), DMatrix::from_element(1, 1, 2.0 * s * sdot), &cov).unwrap();
    assert!((gaussian_closed_form_inner(&t, &t, &cov).unwrap() - sdot * sdot).abs() < 1e-15);

    let id = DMatrix::identity(2, 2);
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
    let b = DMatrix::from_row_slice(2, 2, &[-0.3, 1.0, 1.0, 2.0]);
    let ta = GaussianTangent::new(DVector::zeros(2), a.clone(), &id).unwrap();
    let tb = GaussianTangent::new(DVector::zeros(2), b.clone(), &id).unwrap();
    assert!((gaussian_closed_form_inner(&ta, &tb, &id).unwrap() - (&a * &b).trace() / 4.0).abs() < 1e-15);
}

#[test]
fn closed_form_tensors() {
    let g = metric_mean_std(2.3).unwrap();
    assert!(max_abs_diff(g.matrix(), &DMatrix::identity(2, 2)) < 1e-14);
    let g = metric_mean_variance(4.0).unwrap();
    assert!(max_abs_diff(g.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0 / 16.0])) < 1e-15);
}

#[test]
fn quadrature_agrees_with_closed_form_in_variance_coordinates() {
    // a one-component mixture with (μ₁, σ₁²) free is N(μ, v) in (μ, v) coordinates
    let spec = FamilySpec::new(FamilyKind::GaussianMixture).with_fixed(0, 1.0).with_fixed(3, 0.0).with_fixed(4, 1.0);
    for (mu, v) in [(0.0, 1.0), (-4.0, 7.5), (9.0, 2.2)] {
        let m = spec.at(&[mu, v]).unwrap();
        let g = wasserstein_metric_tensor(&m, &centered(mu, f64::sqrt(v)));
        let c = metric_mean_variance(v).unwrap();
        assert!(max_abs_diff(g.matrix(), c.matrix()) < 1e-6, "{} vs {}", g.matrix(), c.matrix());
    }
}
