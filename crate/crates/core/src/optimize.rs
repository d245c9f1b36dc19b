//! Preconditioned gradient descent with a halving line search.
//!
//! Every scheme takes steps `θ ← θ + τ d` where `d` solves `G d = −∇L` for
//! its preconditioner `G`: the identity (plain GD), a fixed positive diagonal,
//! the Wasserstein tensor, the modified Wasserstein tensor or the Fisher
//! information. `τ` starts at 1 and is halved until the loss strictly
//! decreases and the proposal stays admissible.

use nalgebra::DVector;

use crate::densities::{FamilySpec, Model, ParameterVector};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::metrics::{fisher_metric_tensor, modified_wasserstein_from_map, wasserstein_metric_tensor, MetricMatrix};
use crate::transport::{transport_map, w2_gradient_potential_form, w2_squared, Target, TransportMap1D};

/// Weights stay in `[MARGIN, 1 − MARGIN]` and positive slots at or above `MARGIN`.
pub const DOMAIN_MARGIN: f64 = 1e-4;
/// Largest model mass allowed outside the computation grid.
pub const MAX_TRUNCATED_MASS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `½ W₂²(ρ(·, θ), target)`
    HalfW2Squared,
    /// `−(1/N) Σ ln ρ(xᵢ, θ)` over the empirical samples.
    NegLogLikelihood,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::HalfW2Squared => "half-w2-squared",
            Self::NegLogLikelihood => "neg-log-likelihood",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    Gd,
    /// Preconditioning by a fixed diagonal `P`.
    DiagGd(Vec<f64>),
    WassersteinGd,
    ModifiedWassersteinGd,
    FisherRaoGd,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Gd => "gd",
            Self::DiagGd(_) => "diag-gd",
            Self::WassersteinGd => "wasserstein-gd",
            Self::ModifiedWassersteinGd => "modified-wasserstein-gd",
            Self::FisherRaoGd => "fisher-rao-gd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    /// Converged once `‖∇L‖ ≤ grad_tol`.
    pub grad_tol: f64,
    /// The line search gives up below this step.
    pub min_step: f64,
    pub max_iter: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self { grad_tol: 1e-1, min_step: 1e-4, max_iter: 200 }
    }
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0 && self.min_step > 0.0 && self.max_iter > 0) {
            return Err(Error::Invalid("stopping rule entries must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    Converged,
    LineSearchFailed,
    MaxIterations,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::LineSearchFailed => "line-search-failed",
            Self::MaxIterations => "max-iterations",
        }
    }
}

/// History of one optimizer run.
///
/// `iterates`, `objectives` and `grad_norms` have one entry per visited point
/// (the start included); `steps`, `condition_numbers` and `unstable` have one
/// entry per accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub iterates: Vec<ParameterVector>,
    pub objectives: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub steps: Vec<f64>,
    pub condition_numbers: Vec<f64>,
    pub unstable: Vec<bool>,
    pub termination: Termination,
}

impl Trace {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn final_objective(&self) -> f64 {
        *self.objectives.last().expect("a trace holds its starting point")
    }

    pub fn final_theta(&self) -> &ParameterVector {
        self.iterates.last().expect("a trace holds its starting point")
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// A loss together with everything needed to evaluate it.
#[derive(Debug, Clone)]
pub struct Problem {
    spec: FamilySpec,
    loss: LossKind,
    target: Target,
    grid: Grid,
}

/// Loss gradient plus the transport map it was built from, when there is one.
#[derive(Debug, Clone)]
pub struct GradientEval {
    pub gradient: DVector<f64>,
    pub map: Option<TransportMap1D>,
}

impl Problem {
    pub fn new(spec: FamilySpec, loss: LossKind, target: Target, grid: Grid) -> Result<Self> {
        if loss == LossKind::NegLogLikelihood && !target.is_empirical() {
            return Err(Error::Incompatible("the likelihood loss needs sample data".into()));
        }
        Ok(Self { spec, loss, target, grid })
    }

    pub fn spec(&self) -> &FamilySpec {
        &self.spec
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Family constraints with the optimizer margin, and at most
    /// [`MAX_TRUNCATED_MASS`] of the model outside the grid.
    pub fn admissible(&self, theta: &[f64]) -> bool {
        if !self.spec.within_margin(theta, DOMAIN_MARGIN) {
            return false;
        }
        let Ok(model) = self.spec.at(theta) else {
            return false;
        };
        let inside = model.cdf(self.grid.right()) - model.cdf(self.grid.left());
        1.0 - inside <= MAX_TRUNCATED_MASS
    }

    pub fn model(&self, theta: &[f64]) -> Result<Model> {
        self.spec.at(theta)
    }

    /// Loss at `theta`; `+∞` outside the admissible set or where the density vanishes on data.
    pub fn loss_value(&self, theta: &[f64]) -> f64 {
        if !self.admissible(theta) {
            return f64::INFINITY;
        }
        let Ok(model) = self.spec.at(theta) else {
            return f64::INFINITY;
        };
        let v = match (&self.loss, &self.target) {
            (LossKind::HalfW2Squared, target) => 0.5 * w2_squared(&model, target, &self.grid).unwrap_or(f64::INFINITY),
            (LossKind::NegLogLikelihood, Target::Empirical(data)) => {
                let n = data.len() as f64;
                -data.samples().iter().map(|&x| model.ln_pdf(x)).sum::<f64>() / n
            }
            (LossKind::NegLogLikelihood, Target::Continuous(_)) => unreachable!("rejected in Problem::new"),
        };
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    /// `∇_θ L`. The W₂ loss uses the potential form `∫ φ ∇_θρ dx`.
    pub fn loss_gradient(&self, theta: &[f64]) -> Result<GradientEval> {
        let model = self.spec.at(theta)?;
        match (&self.loss, &self.target) {
            (LossKind::HalfW2Squared, target) => {
                let map = transport_map(&model, target, &self.grid);
                Ok(GradientEval { gradient: w2_gradient_potential_form(&model, &map), map: Some(map) })
            }
            (LossKind::NegLogLikelihood, Target::Empirical(data)) => {
                let d = model.dim();
                let mut grad = DVector::zeros(d);
                let mut g = vec![0.0; d];
                for &x in data.samples() {
                    model.grad_pdf(x, &mut g);
                    let rho = model.pdf(x);
                    for (acc, gi) in grad.iter_mut().zip(&g) {
                        *acc -= gi / rho;
                    }
                }
                grad /= data.len() as f64;
                Ok(GradientEval { gradient: grad, map: None })
            }
            (LossKind::NegLogLikelihood, Target::Continuous(_)) => unreachable!("rejected in Problem::new"),
        }
    }

    /// The preconditioner of `scheme` at `theta`.
    pub fn preconditioner(&self, scheme: &Scheme, theta: &[f64], map: Option<&TransportMap1D>) -> Result<MetricMatrix> {
        let d = self.spec.dim();
        match scheme {
            Scheme::Gd => Ok(MetricMatrix::identity(d)),
            Scheme::DiagGd(p) => {
                if p.len() != d {
                    return Err(Error::Dimension { expected: d, got: p.len() });
                }
                if p.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::Invalid("diagonal preconditioner entries must be positive".into()));
                }
                Ok(MetricMatrix::diagonal(p))
            }
            Scheme::WassersteinGd => Ok(wasserstein_metric_tensor(&self.spec.at(theta)?, &self.grid)),
            Scheme::FisherRaoGd => Ok(fisher_metric_tensor(&self.spec.at(theta)?, &self.grid)),
            Scheme::ModifiedWassersteinGd => {
                let model = self.spec.at(theta)?;
                match map {
                    Some(m) => Ok(modified_wasserstein_from_map(&model, m)),
                    None => Ok(modified_wasserstein_from_map(&model, &transport_map(&model, &self.target, &self.grid))),
                }
            }
        }
    }
}

/// Solves `(G + λI) d = −g`.
pub fn descent_direction(metric: &MetricMatrix, gradient: &DVector<f64>) -> Result<DVector<f64>> {
    metric.solve(&(-gradient))
}

/// An accepted line-search step.
#[derive(Debug, Clone, PartialEq)]
pub struct LineStep {
    pub step: f64,
    pub theta: ParameterVector,
    pub value: f64,
}

/// Tries `τ = 1, ½, ¼, …` while `τ ≥ min_step` and returns the first
/// proposal whose loss is strictly below `current`. Inadmissible proposals
/// must evaluate to `+∞`.
pub fn line_search<L>(theta: &ParameterVector, direction: &[f64], current: f64, loss: L, min_step: f64) -> Option<LineStep>
where
    L: Fn(&ParameterVector) -> f64,
{
    if direction.iter().all(|&v| v == 0.0) || direction.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut step = 1.0;
    while step >= min_step {
        let proposal = theta.stepped(step, direction);
        let value = loss(&proposal);
        if value < current {
            return Some(LineStep { step, theta: proposal, value });
        }
        step *= 0.5;
    }
    None
}

/// Runs `scheme` from `theta0` until the stopping rule fires.
///
/// Termination is checked in the order gradient norm, line-search failure,
/// iteration budget. A preconditioner that cannot be solved counts as a
/// line-search failure since no step can be taken.
pub fn run(problem: &Problem, scheme: &Scheme, theta0: &[f64], stopping: &StoppingRule) -> Result<Trace> {
    stopping.validate()?;
    problem.spec.at(theta0)?;
    if !problem.admissible(theta0) {
        return Err(Error::Invalid(format!("starting point {theta0:?} is not admissible")));
    }
    let mut theta = ParameterVector::from(theta0);
    let mut value = problem.loss_value(&theta);
    let mut eval = problem.loss_gradient(&theta)?;
    let mut trace = Trace {
        iterates: vec![theta.clone()],
        objectives: vec![value],
        grad_norms: vec![eval.gradient.norm()],
        steps: Vec::new(),
        condition_numbers: Vec::new(),
        unstable: Vec::new(),
        termination: Termination::MaxIterations,
    };

    loop {
        let gnorm = eval.gradient.norm();
        if gnorm <= stopping.grad_tol {
            trace.termination = Termination::Converged;
            break;
        }
        if !gnorm.is_finite() {
            trace.termination = Termination::LineSearchFailed;
            break;
        }
        if trace.iterations() >= stopping.max_iter {
            trace.termination = Termination::MaxIterations;
            break;
        }
        let metric = match problem.preconditioner(scheme, &theta, eval.map.as_ref()) {
            Ok(m) => m,
            Err(_) => {
                trace.termination = Termination::LineSearchFailed;
                break;
            }
        };
        let direction = match descent_direction(&metric, &eval.gradient) {
            Ok(d) => d,
            Err(_) => {
                trace.termination = Termination::LineSearchFailed;
                break;
            }
        };
        let Some(accepted) = line_search(&theta, direction.as_slice(), value, |t| problem.loss_value(t), stopping.min_step) else {
            trace.termination = Termination::LineSearchFailed;
            break;
        };
        theta = accepted.theta;
        value = accepted.value;
        eval = problem.loss_gradient(&theta)?;
        trace.iterates.push(theta.clone());
        trace.objectives.push(value);
        trace.grad_norms.push(eval.gradient.norm());
        trace.steps.push(accepted.step);
        trace.condition_numbers.push(metric.condition_number());
        trace.unstable.push(metric.is_unstable());
    }
    Ok(trace)
}
