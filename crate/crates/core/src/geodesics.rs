//! Geodesics of the Wasserstein statistical manifold and of density space.
//!
//! On the parameter manifold a path `θ₀, …, θ_N` has discrete energy
//! `N Σᵢ Δᵢᵀ G_W(θᵢ) Δᵢ` with `Δᵢ = θᵢ₊₁ − θᵢ`; the minimizer sweeps over the
//! interior knots of a Simpson version of that sum. Initial-value geodesics come from integrating the
//! Hamiltonian system `θ̇ = G_W⁻¹ S`, `Ṡ = −½ Sᵀ ∂_θ G_W⁻¹ S`. In the full
//! density space the geodesic is displacement interpolation.

use nalgebra::{DMatrix, DVector};

use crate::densities::{FamilySpec, Model, ParameterVector};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::metrics::{wasserstein_metric_tensor, DENSITY_FLOOR};
use crate::transport::Target;

/// Default segment count.
pub const DEFAULT_SEGMENTS: usize = 20;
/// Default relative energy decrease below which sweeps stop.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_SWEEPS: usize = 500;
/// Knots keep weights in `[m, 1 − m]` and positive slots `≥ m`.
pub const KNOT_MARGIN: f64 = 1e-4;
/// Relative step for central differences of the metric.
const METRIC_FD_STEP: f64 = 1e-5;
/// Shooting stops when `G_W` is this ill-conditioned.
const SHOOTING_MAX_CONDITION: f64 = 1e12;
/// Halvings tried per knot update.
const KNOT_BACKTRACKS: usize = 30;

/// A discretized path in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    pub knots: Vec<ParameterVector>,
    /// Discrete energy: the left-knot sum for shooting, the configured
    /// segment rule for coordinate descent.
    pub energy: f64,
    /// Completed sweeps (coordinate descent) or integration steps (shooting).
    pub sweeps: usize,
    /// False when a solver stopped early: sweep budget exhausted or shooting aborted.
    pub completed: bool,
}

impl DiscretePath {
    pub fn segments(&self) -> usize {
        self.knots.len().saturating_sub(1)
    }

    pub fn start(&self) -> &ParameterVector {
        &self.knots[0]
    }

    pub fn end(&self) -> &ParameterVector {
        self.knots.last().expect("a path has at least one knot")
    }

    /// Knot positions interpolated linearly in the path parameter `t ∈ [0, 1]`.
    pub fn at(&self, t: f64) -> ParameterVector {
        let n = self.segments();
        if n == 0 {
            return self.knots[0].clone();
        }
        let s = t.clamp(0.0, 1.0) * n as f64;
        let i = (s.floor() as usize).min(n - 1);
        let w = s - i as f64;
        let a = &self.knots[i];
        let b = &self.knots[i + 1];
        ParameterVector::new(a.iter().zip(b.iter()).map(|(x, y)| (1.0 - w) * x + w * y).collect())
    }
}

/// Phase-space point of the geodesic flow.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianState {
    pub theta: ParameterVector,
    pub momentum: DVector<f64>,
}

/// Result of [`hamiltonian_shoot`].
#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    pub path: DiscretePath,
    pub states: Vec<HamiltonianState>,
    /// `H = ½ Sᵀ G_W⁻¹ S` at every state.
    pub hamiltonian: Vec<f64>,
}

impl Shot {
    pub fn aborted(&self) -> bool {
        !self.path.completed
    }

    /// Largest `|H − H₀| / H₀` along the trajectory; zero for a resting start.
    pub fn relative_drift(&self) -> f64 {
        let h0 = self.hamiltonian[0];
        if h0 == 0.0 {
            return self.hamiltonian.iter().fold(0.0, |m, h| m.max(h.abs()));
        }
        self.hamiltonian.iter().fold(0.0, |m, h| m.max((h - h0).abs() / h0.abs()))
    }
}

fn metric_at(spec: &FamilySpec, theta: &[f64], grid: &Grid) -> Result<DMatrix<f64>> {
    if !spec.within_margin(theta, KNOT_MARGIN) {
        return Err(Error::Invalid(format!("knot {theta:?} is outside the parameter domain")));
    }
    Ok(wasserstein_metric_tensor(&spec.at(theta)?, grid).matrix().clone())
}

fn quad(g: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(g * v))
}

fn delta(a: &[f64], b: &[f64]) -> DVector<f64> {
    DVector::from_iterator(a.len(), b.iter().zip(a).map(|(y, x)| y - x))
}

/// `N Σᵢ (θᵢ₊₁ − θᵢ)ᵀ G_W(θᵢ) (θᵢ₊₁ − θᵢ)` with the metric at the left knot.
pub fn path_energy(knots: &[ParameterVector], spec: &FamilySpec, grid: &Grid) -> Result<f64> {
    if knots.is_empty() {
        return Err(Error::Invalid("a path needs at least one knot".into()));
    }
    for k in knots {
        if k.len() != spec.dim() {
            return Err(Error::Dimension { expected: spec.dim(), got: k.len() });
        }
        if !spec.within_margin(k, KNOT_MARGIN) {
            return Err(Error::Invalid(format!("knot {:?} is outside the parameter domain", k.as_slice())));
        }
    }
    let n = knots.len() - 1;
    let mut energy = 0.0;
    for w in knots.windows(2) {
        let d = delta(&w[0], &w[1]);
        if d.iter().all(|&v| v == 0.0) {
            continue;
        }
        energy += quad(&metric_at(spec, &w[0], grid)?, &d);
    }
    Ok(n as f64 * energy)
}

/// Straight line from `theta0` to `theta1` with `n` segments.
pub fn straight_line(theta0: &[f64], theta1: &[f64], n: usize) -> Vec<ParameterVector> {
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            ParameterVector::new(theta0.iter().zip(theta1).map(|(a, b)| (1.0 - t) * a + t * b).collect())
        })
        .collect()
}

/// Rule for the metric along one segment `θᵢ → θᵢ₊₁`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentRule {
    /// `G_W(θᵢ)`
    LeftKnot,
    /// `(G_W(θᵢ) + 4 G_W(θᵢ₊½) + G_W(θᵢ₊₁)) / 6`
    Simpson,
}

impl SegmentRule {
    /// Weights of the left end, midpoint and right end.
    fn weights(self) -> [f64; 3] {
        match self {
            Self::LeftKnot => [1.0, 0.0, 0.0],
            Self::Simpson => [1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0],
        }
    }
}

/// Discrete energy `N Σᵢ Δᵢᵀ Ḡᵢ Δᵢ` with `Ḡᵢ` given by `rule`.
pub fn path_energy_with(knots: &[ParameterVector], spec: &FamilySpec, grid: &Grid, rule: SegmentRule) -> Result<f64> {
    if rule == SegmentRule::LeftKnot {
        return path_energy(knots, spec, grid);
    }
    path_energy(knots, spec, grid)?;
    let [wl, wm, wr] = rule.weights();
    let n = knots.len() - 1;
    let mut energy = 0.0;
    for w in knots.windows(2) {
        let d = delta(&w[0], &w[1]);
        if d.iter().all(|&v| v == 0.0) {
            continue;
        }
        let g =
            wl * metric_at(spec, &w[0], grid)? + wm * metric_at(spec, &midpoint(&w[0], &w[1]), grid)? + wr * metric_at(spec, &w[1], grid)?;
        energy += quad(&g, &d);
    }
    Ok(n as f64 * energy)
}

fn midpoint(a: &[f64], b: &[f64]) -> ParameterVector {
    ParameterVector::new(a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
}

/// `∇_θ (vᵀ G_W(θ) v)`.
///
/// With `u = ∇_θF · v` the integrand is `2 u ∇_θu / ρ − u² ∇_θρ / ρ²`, and
/// `∇_θu = ∇²_θF v` is a central difference of `∇_θF` along `v`.
fn metric_form_gradient(spec: &FamilySpec, theta: &[f64], v: &DVector<f64>, grid: &Grid) -> Result<DVector<f64>> {
    let d = theta.len();
    let vmax = v.amax();
    if vmax == 0.0 {
        return Ok(DVector::zeros(d));
    }
    let scale = theta.iter().fold(1.0_f64, |m, t| m.max(t.abs()));
    let h = METRIC_FD_STEP * scale / vmax;
    let model = spec.at(theta)?;
    let shifted = |s: f64| spec.at(&theta.iter().zip(v.iter()).map(|(t, vi)| t + s * vi).collect::<Vec<_>>());
    let (plus, minus) = (shifted(h)?, shifted(-h)?);
    let (mut g, mut gp, mut gm, mut grho) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut out = DVector::zeros(d);
    for (i, &x) in grid.nodes().iter().enumerate() {
        let rho = model.pdf(x);
        if rho <= DENSITY_FLOOR {
            continue;
        }
        model.grad_cdf(x, &mut g);
        plus.grad_cdf(x, &mut gp);
        minus.grad_cdf(x, &mut gm);
        model.grad_pdf(x, &mut grho);
        let u: f64 = g.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        let w = grid.weight(i) / rho;
        for k in 0..d {
            let du = (gp[k] - gm[k]) / (2.0 * h);
            out[k] += w * (2.0 * u * du - u * u * grho[k] / rho);
        }
    }
    Ok(out)
}

/// Settings for [`geodesic_coordinate_descent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub segments: usize,
    pub max_sweeps: usize,
    /// Stop once a sweep lowers the energy by less than `tol · energy`.
    pub tol: f64,
    /// Segment rule of the energy being minimized.
    pub rule: SegmentRule,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { segments: DEFAULT_SEGMENTS, max_sweeps: DEFAULT_MAX_SWEEPS, tol: DEFAULT_TOLERANCE, rule: SegmentRule::Simpson }
    }
}

/// Minimizes the discrete energy over the interior knots, starting from the
/// straight line and updating one knot at a time.
///
/// Each knot takes one backtracking step along the energy gradient
/// preconditioned by the Gauss-Newton part `2 (Ḡᵢ₋₁ + Ḡᵢ)`, accepted only if
/// the two segments touching the knot get cheaper, so the energy is monotone.
/// The returned energy uses `settings.rule`. Under the left-knot rule a knot
/// placed where `G_W` degenerates (a mixture weight at its bound, coinciding
/// components) makes the following segment nearly free, and the minimizer
/// exploits it; the Simpson rule also charges the segment at its midpoint and
/// far end.
pub fn geodesic_coordinate_descent(
    spec: &FamilySpec,
    theta0: &[f64],
    theta1: &[f64],
    grid: &Grid,
    settings: &SweepSettings,
) -> Result<DiscretePath> {
    let n = settings.segments;
    if n < 2 {
        return Err(Error::Invalid("a geodesic needs at least two segments".into()));
    }
    if !(settings.tol >= 0.0) {
        return Err(Error::Invalid("sweep tolerance must be nonnegative".into()));
    }
    let d = spec.dim();
    for t in [theta0, theta1] {
        if t.len() != d {
            return Err(Error::Dimension { expected: d, got: t.len() });
        }
        if !spec.within_margin(t, KNOT_MARGIN) {
            return Err(Error::Invalid(format!("endpoint {t:?} is outside the parameter domain")));
        }
    }
    let [wl, wm, wr] = settings.rule.weights();
    let simpson = wm != 0.0;
    let mut knots = straight_line(theta0, theta1, n);
    let mut at_knots = knots.iter().map(|k| metric_at(spec, k, grid)).collect::<Result<Vec<_>>>()?;
    let mut at_mids = if simpson {
        knots.windows(2).map(|w| metric_at(spec, &midpoint(&w[0], &w[1]), grid)).collect::<Result<Vec<_>>>()?
    } else {
        vec![DMatrix::zeros(d, d); n]
    };
    let blend = |l: &DMatrix<f64>, m: &DMatrix<f64>, r: &DMatrix<f64>| {
        let mut g = wl * l;
        if simpson {
            g += wm * m + wr * r;
        }
        g
    };
    let nf = n as f64;
    let total = |knots: &[ParameterVector], at_knots: &[DMatrix<f64>], at_mids: &[DMatrix<f64>]| -> f64 {
        nf * (0..n).map(|i| quad(&blend(&at_knots[i], &at_mids[i], &at_knots[i + 1]), &delta(&knots[i], &knots[i + 1]))).sum::<f64>()
    };
    let mut energy = total(&knots, &at_knots, &at_mids);
    if energy == 0.0 {
        return Ok(DiscretePath { knots, energy, sweeps: 0, completed: true });
    }

    let mut sweeps = 0;
    let mut completed = false;
    while sweeps < settings.max_sweeps {
        for i in 1..n {
            let prev = delta(&knots[i - 1], &knots[i]);
            let next = delta(&knots[i], &knots[i + 1]);
            let a_prev = blend(&at_knots[i - 1], &at_mids[i - 1], &at_knots[i]);
            let a_next = blend(&at_knots[i], &at_mids[i], &at_knots[i + 1]);
            let local = quad(&a_prev, &prev) + quad(&a_next, &next);

            // ∂/∂θᵢ of the two segment terms, divided by N
            let mut grad = 2.0 * (&a_prev * &prev) - 2.0 * (&a_next * &next);
            grad += wl * metric_form_gradient(spec, &knots[i], &next, grid)?;
            if simpson {
                grad += wr * metric_form_gradient(spec, &knots[i], &prev, grid)?;
                grad += 0.5 * wm * metric_form_gradient(spec, &midpoint(&knots[i - 1], &knots[i]), &prev, grid)?;
                grad += 0.5 * wm * metric_form_gradient(spec, &midpoint(&knots[i], &knots[i + 1]), &next, grid)?;
            }
            let precond = 2.0 * (&a_prev + &a_next);
            let Some(step) =
                precond.clone().cholesky().map(|c| c.solve(&(-&grad))).or_else(|| precond.try_inverse().map(|inv| inv * (-&grad)))
            else {
                continue;
            };

            let mut tau = 1.0;
            for _ in 0..KNOT_BACKTRACKS {
                let proposal = knots[i].stepped(tau, step.as_slice());
                tau *= 0.5;
                let Ok(g_new) = metric_at(spec, &proposal, grid) else {
                    continue;
                };
                let (m_prev, m_next) = if simpson {
                    (
                        metric_at(spec, &midpoint(&knots[i - 1], &proposal), grid)?,
                        metric_at(spec, &midpoint(&proposal, &knots[i + 1]), grid)?,
                    )
                } else {
                    (at_mids[i - 1].clone(), at_mids[i].clone())
                };
                let p = delta(&knots[i - 1], &proposal);
                let q = delta(&proposal, &knots[i + 1]);
                let trial = quad(&blend(&at_knots[i - 1], &m_prev, &g_new), &p) + quad(&blend(&g_new, &m_next, &at_knots[i + 1]), &q);
                if trial < local {
                    knots[i] = proposal;
                    at_knots[i] = g_new;
                    at_mids[i - 1] = m_prev;
                    at_mids[i] = m_next;
                    break;
                }
            }
        }
        sweeps += 1;
        let updated = total(&knots, &at_knots, &at_mids);
        let decrease = energy - updated;
        energy = updated;
        if decrease <= settings.tol * energy {
            completed = true;
            break;
        }
    }
    Ok(DiscretePath { knots, energy, sweeps, completed })
}

/// `G_W(θ)⁻¹`, or `None` when the metric is too ill-conditioned to invert.
fn inverse_metric(spec: &FamilySpec, theta: &[f64], grid: &Grid) -> Option<DMatrix<f64>> {
    if !spec.within_margin(theta, KNOT_MARGIN) {
        return None;
    }
    let metric = wasserstein_metric_tensor(&spec.at(theta).ok()?, grid);
    let eig = metric.eigenvalues();
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    if !(lo > 0.0) || hi / lo > SHOOTING_MAX_CONDITION {
        return None;
    }
    metric.matrix().clone().try_inverse()
}

/// Integrates the geodesic equations for unit time with `steps` symplectic
/// Euler steps:
///
/// `S⁺ = S − ½ dt S⁺ᵀ ∂_θG_W⁻¹(θ) S⁺` (solved by fixed-point iteration),
/// `θ⁺ = θ + dt G_W⁻¹(θ) S⁺`.
///
/// The trajectory stops early, keeping the partial path, if `G_W` becomes
/// near-singular or a knot leaves the domain.
pub fn hamiltonian_shoot(spec: &FamilySpec, theta0: &[f64], momentum0: &[f64], steps: usize, grid: &Grid) -> Result<Shot> {
    let d = spec.dim();
    if theta0.len() != d || momentum0.len() != d {
        return Err(Error::Dimension { expected: d, got: if theta0.len() != d { theta0.len() } else { momentum0.len() } });
    }
    if steps == 0 {
        return Err(Error::Invalid("shooting needs at least one step".into()));
    }
    let Some(mut inv) = inverse_metric(spec, theta0, grid) else {
        return Err(Error::Singular(format!("metric is not invertible at {theta0:?}")));
    };
    let dt = 1.0 / steps as f64;
    let mut theta = ParameterVector::from(theta0);
    let mut s = DVector::from_column_slice(momentum0);
    let mut states = vec![HamiltonianState { theta: theta.clone(), momentum: s.clone() }];
    let mut hamiltonian = vec![0.5 * quad(&inv, &s)];
    let mut completed = true;

    'outer: for _ in 0..steps {
        // ∂_k G⁻¹ by central differences
        let mut dinv = Vec::with_capacity(d);
        for k in 0..d {
            let h = METRIC_FD_STEP * theta[k].abs().max(1.0);
            let mut plus = theta.clone().into_inner();
            let mut minus = plus.clone();
            plus[k] += h;
            minus[k] -= h;
            let (Some(ip), Some(im)) = (inverse_metric(spec, &plus, grid), inverse_metric(spec, &minus, grid)) else {
                completed = false;
                break 'outer;
            };
            dinv.push((ip - im) / (2.0 * h));
        }
        let force = |s: &DVector<f64>| DVector::from_iterator(d, dinv.iter().map(|m| -0.5 * quad(m, s)));
        let mut next = &s + dt * force(&s);
        for _ in 0..50 {
            let candidate = &s + dt * force(&next);
            let change = (&candidate - &next).norm();
            next = candidate;
            if change <= 1e-14 * next.norm().max(1e-300) {
                break;
            }
        }
        let velocity = &inv * &next;
        let moved = theta.stepped(dt, velocity.as_slice());
        let Some(new_inv) = inverse_metric(spec, &moved, grid) else {
            completed = false;
            break;
        };
        theta = moved;
        s = next;
        inv = new_inv;
        hamiltonian.push(0.5 * quad(&inv, &s));
        states.push(HamiltonianState { theta: theta.clone(), momentum: s.clone() });
    }

    let knots: Vec<ParameterVector> = states.iter().map(|st| st.theta.clone()).collect();
    let energy = path_energy(&knots, spec, grid)?;
    let sweeps = knots.len() - 1;
    Ok(Shot { path: DiscretePath { knots, energy, sweeps, completed }, states, hamiltonian })
}

/// Density at time `t` of the displacement interpolation
/// `((1 − t) I + t T)_# ρ⁰`, sampled on `grid`.
///
/// Built from the quantile mixture `Q_t = (1 − t) Q₀ + t Q₁`, whose density is
/// `1 / ((1 − t)/ρ⁰(Q₀) + t/ρ¹(Q₁))`. Probability levels are taken at the
/// CDF values of both endpoints on the grid so that neither density's bulk is
/// undersampled; the result is linearly interpolated back onto the grid.
pub fn displacement_interpolation(rho0: &Model, rho1: &Model, t: f64, grid: &Grid) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Invalid(format!("interpolation time {t} is outside [0, 1]")));
    }
    if t == 0.0 {
        return Ok(rho0.pdf_at(grid.nodes()));
    }
    if t == 1.0 {
        return Ok(rho1.pdf_at(grid.nodes()));
    }
    let t0 = Target::Continuous(rho0.clone());
    let t1 = Target::Continuous(rho1.clone());
    // (p, Q₀(p), Q₁(p))
    let mut levels: Vec<(f64, f64, f64)> = Vec::with_capacity(2 * grid.len());
    for &x in grid.nodes() {
        let p = rho0.cdf(x);
        if p > 0.0 && p < 1.0 {
            levels.push((p, x, t1.quantile(p)));
        }
        let p = rho1.cdf(x);
        if p > 0.0 && p < 1.0 {
            levels.push((p, t0.quantile(p), x));
        }
    }
    let mut pts: Vec<(f64, f64)> = levels
        .into_iter()
        .filter_map(|(_, a, b)| {
            let (fa, fb) = (rho0.pdf(a), rho1.pdf(b));
            if fa <= 0.0 || fb <= 0.0 {
                return None;
            }
            let y = (1.0 - t) * a + t * b;
            Some((y, 1.0 / ((1.0 - t) / fa + t / fb)))
        })
        .collect();
    pts.sort_by(|u, v| u.0.total_cmp(&v.0));
    pts.dedup_by(|u, v| u.0 == v.0);
    if pts.len() < 2 {
        return Err(Error::Grid("the endpoint densities have no mass on the grid".into()));
    }
    Ok(grid
        .nodes()
        .iter()
        .map(|&x| {
            let j = pts.partition_point(|p| p.0 <= x);
            if j == 0 || j == pts.len() {
                return 0.0;
            }
            let (xa, fa) = pts[j - 1];
            let (xb, fb) = pts[j];
            let w = (x - xa) / (xb - xa);
            (1.0 - w) * fa + w * fb
        })
        .collect())
}
