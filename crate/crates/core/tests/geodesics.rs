use nalgebra::DVector;
use otng::densities::{FamilyKind, FamilySpec, Model};
use otng::geodesics::{
    displacement_interpolation, geodesic_coordinate_descent, hamiltonian_shoot, path_energy, path_energy_with, straight_line, SegmentRule,
    SweepSettings,
};
use otng::grid::Grid;
use otng::metrics::wasserstein_metric_tensor;
use otng::transport::{w2_squared, Target};

fn gaussian(mu: f64, sigma: f64) -> Model {
    FamilySpec::new(FamilyKind::Gaussian).at(&[mu, sigma]).unwrap()
}

fn grid() -> Grid {
    Grid::symmetric(15.0, 4000).unwrap()
}

fn gamma_grid() -> Grid {
    FamilySpec::new(FamilyKind::Gamma).grid(30.0, 4000).unwrap()
}

#[test]
fn collapsed_path_has_zero_energy() {
    let spec = FamilySpec::new(FamilyKind::Gaussian);
    let knots = straight_line(&[0.5, 1.0], &[0.5, 1.0], 5);
    assert_eq!(path_energy(&knots, &spec, &grid()).unwrap(), 0.0);
    let path = geodesic_coordinate_descent(&spec, &[0.5, 1.0], &[0.5, 1.0], &grid(), &SweepSettings::default()).unwrap();
    assert_eq!(path.energy, 0.0);
    assert_eq!(path.sweeps, 0);
}

#[test]
fn straight_line_energy_in_flat_coordinates() {
    let spec = FamilySpec::new(FamilyKind::Gaussian);
    let (a, b) = ([-1.0, 0.5], [2.0, 1.5]);
    for n in [4, 20, 40] {
        let e = path_energy(&straight_line(&a, &b, n), &spec, &grid()).unwrap();
        assert!((e - 10.0).abs() < 1e-5, "N = {n}: {e}");
    }
}

#[test]
fn energy_rejects_knots_outside_the_domain() {
    let spec = FamilySpec::new(FamilyKind::Gaussian);
    assert!(path_energy(&straight_line(&[0.0, 1.0], &[0.0, -1.0], 4), &spec, &grid()).is_err());
}

#[test]
fn refining_a_fixed_path_barely_changes_its_energy() {
    let spec = FamilySpec::new(FamilyKind::GaussianMixture);
    let g = Grid::symmetric(15.0, 2000).unwrap();
    let (a, b) = ([0.3, -3.0, 0.25, -5.0, 0.16], [0.6, 7.0, 0.16, 5.0, 0.09]);
    let e = |n: usize| path_energy(&straight_line(&a, &b, n), &spec, &g).unwrap();
    let (coarse, fine) = (e(1000), e(2000));
    assert!((coarse - fine).abs() < 1e-3 * fine, "{coarse} vs {fine}");
}

#[test]
fn gaussian_geodesic_is_the_straight_line() {
    let spec = FamilySpec::new(FamilyKind::Gaussian);
    let (a, b) = ([-1.0, 0.5], [2.0, 1.5]);
    let path = geodesic_coordinate_descent(&spec, &a, &b, &grid(), &SweepSettings::default()).unwrap();
    let line = straight_line(&a, &b, path.segments());
    for (k, l) in path.knots.iter().zip(&line) {
        for (u, v) in k.iter().zip(l.iter()) {
            assert!((u - v).abs() < 1e-3);
        }
    }
    assert_eq!(path.start().as_slice(), &a);
    assert!(path.completed);
    assert_eq!(path.end().as_slice(), &b);
}

#[test]
fn gamma_geodesic_energy_bounds_w2() {
    let spec = FamilySpec::new(FamilyKind::Gamma);
    let g = FamilySpec::new(FamilyKind::Gamma).grid(30.0, 2000).unwrap();
    let (a, b) = ([2.0, 3.0], [6.0, 2.0]);
    let settings = SweepSettings { segments: 10, ..SweepSettings::default() };
    let path = geodesic_coordinate_descent(&spec, &a, &b, &g, &settings).unwrap();
    let initial = path_energy_with(&straight_line(&a, &b, 10), &spec, &g, SegmentRule::Simpson).unwrap();
    assert!(path.energy <= initial);
    let w2 = w2_squared(&spec.at(&a).unwrap(), &Target::Continuous(spec.at(&b).unwrap()), &g).unwrap();
    assert!(path.energy >= w2 * (1.0 - 1e-3), "{} vs {w2}", path.energy);

    let back = geodesic_coordinate_descent(&spec, &b, &a, &g, &settings).unwrap();
    assert!((back.energy - path.energy).abs() < 1e-2 * path.energy, "{} vs {}", back.energy, path.energy);
}

#[test]
fn gaussian_geodesic_energy_equals_w2() {
    let spec = FamilySpec::new(FamilyKind::Gaussian);
    let (a, b) = ([-1.0, 0.5], [2.0, 1.5]);
    let path = geodesic_coordinate_descent(&spec, &a, &b, &grid(), &SweepSettings::default()).unwrap();
    let w2 = w2_squared(&gaussian(-1.0, 0.5), &Target::Continuous(gaussian(2.0, 1.5)), &grid()).unwrap();
    assert!((path.energy - w2).abs() < 2e-2 * w2);
}

#[test]
fn shooting_lands_on_the_target_in_flat_coordinates() {
    let spec = FamilySpec::new(FamilyKind::Gaussian);
    let (a, b) = ([-1.0, 0.5], [2.0, 1.5]);
    let shot = hamiltonian_shoot(&spec, &a, &[3.0, 1.0], 50, &grid()).unwrap();
    assert!(!shot.aborted());
    for (u, v) in shot.path.end().iter().zip(&b) {
        assert!((u - v).abs() < 1e-3);
    }
    let cd = geodesic_coordinate_descent(&spec, &a, &b, &grid(), &SweepSettings::default()).unwrap();
    for (u, v) in shot.path.at(0.5).iter().zip(cd.at(0.5).iter()) {
        assert!((u - v).abs() < 1e-3);
    }
}

#[test]
fn resting_start_stays_put() {
    let spec = FamilySpec::new(FamilyKind::Gamma);
    let shot = hamiltonian_shoot(&spec, &[3.0, 2.0], &[0.0, 0.0], 10, &gamma_grid()).unwrap();
    for k in &shot.path.knots {
        assert_eq!(k.as_slice(), &[3.0, 2.0]);
    }
}

#[test]
fn hamiltonian_is_nearly_conserved() {
    let spec = FamilySpec::new(FamilyKind::Gamma);
    let g = FamilySpec::new(FamilyKind::Gamma).grid(30.0, 1000).unwrap();
    let metric = wasserstein_metric_tensor(&spec.at(&[3.0, 2.0]).unwrap(), &g);
    let momentum = metric.matrix() * DVector::from_vec(vec![1.0, -0.5]);
    let shot = hamiltonian_shoot(&spec, &[3.0, 2.0], momentum.as_slice(), 1000, &g).unwrap();
    assert!(!shot.aborted());
    assert!(shot.relative_drift() < 1e-2, "{}", shot.relative_drift());
}

#[test]
fn interpolation_endpoints_are_exact() {
    let (a, b) = (gaussian(-2.0, 0.5), gaussian(3.0, 2.0));
    let g = grid();
    assert_eq!(displacement_interpolation(&a, &b, 0.0, &g).unwrap(), a.pdf_at(g.nodes()));
    assert_eq!(displacement_interpolation(&a, &b, 1.0, &g).unwrap(), b.pdf_at(g.nodes()));
    assert!(displacement_interpolation(&a, &b, 1.5, &g).is_err());
}

#[test]
fn gaussian_interpolant_is_gaussian() {
    let (m0, s0, m1, s1) = (-2.0, 0.5, 3.0, 2.0);
    let g = grid();
    for i in 1..10 {
        let t = i as f64 / 10.0;
        let rho = displacement_interpolation(&gaussian(m0, s0), &gaussian(m1, s1), t, &g).unwrap();
        let expected = gaussian((1.0 - t) * m0 + t * m1, (1.0 - t) * s0 + t * s1).pdf_at(g.nodes());
        let gap = rho.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-3, "t = {t}: {gap}");
    }
}

#[test]
fn interpolant_has_unit_mass() {
    let spec = FamilySpec::new(FamilyKind::GaussianMixture);
    let a = spec.at(&[0.3, -3.0, 0.25, -5.0, 0.16]).unwrap();
    let b = spec.at(&[0.6, 7.0, 0.16, 5.0, 0.09]).unwrap();
    let g = grid();
    for i in 0..=10 {
        let rho = displacement_interpolation(&a, &b, i as f64 / 10.0, &g).unwrap();
        assert!(rho.iter().all(|&v| v >= 0.0));
        let mass = g.integrate(&rho);
        assert!((mass - 1.0).abs() < 1e-3, "t = {}: {mass}", i as f64 / 10.0);
    }
}
