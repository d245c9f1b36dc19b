//! The four experiment drivers. Each returns an in-memory report together
//! with the CSV artifacts that describe it.

use otng::densities::{FamilySpec, Model};
use otng::geodesics::{displacement_interpolation, geodesic_coordinate_descent, hamiltonian_shoot, DiscretePath};
use otng::metrics::{fisher_metric_tensor, modified_wasserstein_tensor, w2_hessian, wasserstein_metric_tensor, MetricMatrix};
use otng::optimize::{run, LossKind, Problem, Scheme, Termination, Trace};
use otng::transport::{w2_squared, EmpiricalTarget, Target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::config::{check_ranges, default_ranges, point, ExperimentConfig};
use crate::table::{Artifact, Cell, Table};
use crate::CliError;

/// Samples drawn per trial when the config does not say.
pub const DEFAULT_COMPARE_SAMPLES: usize = 200;
pub const DEFAULT_TRIALS: usize = 100;
pub const HISTOGRAM_BINS: usize = 20;

/// Column labels for the schemes, made unique by suffixing repeats.
fn scheme_labels(schemes: &[Scheme]) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    for s in schemes {
        let base = s.name().to_string();
        let repeats = labels.iter().filter(|l| l.split('#').next() == Some(&base)).count();
        labels.push(if repeats == 0 { base } else { format!("{base}#{}", repeats + 1) });
    }
    labels
}

fn numerical(e: otng::Error) -> CliError {
    CliError::Numerical(e.to_string())
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub labels: Vec<String>,
    pub traces: Vec<Trace>,
    pub artifacts: Vec<Artifact>,
}

fn fit_problem(config: &ExperimentConfig, seed: u64) -> Result<(FamilySpec, Problem, Vec<f64>), CliError> {
    let spec = config.family.spec()?;
    let truth_spec = config.truth_spec()?;
    let theta0 = point(&spec, config.theta0.as_ref(), "theta0")?;
    let theta1 = point(&truth_spec, config.theta1.as_ref(), "theta1")?;
    let truth = truth_spec.at(&theta1).map_err(numerical)?;
    let target = match config.samples {
        Some(0) => return Err(CliError::Config("`samples` must be positive".into())),
        Some(n) => Target::Empirical(EmpiricalTarget::new(truth.sample(n, seed)).map_err(numerical)?),
        None => Target::Continuous(truth),
    };
    let grid = config.grid.grid(&spec)?;
    let problem = Problem::new(spec.clone(), config.loss.into(), target, grid).map_err(|e| CliError::Config(e.to_string()))?;
    if !problem.admissible(&theta0) {
        return Err(CliError::Config(format!(
            "`theta0` {theta0:?} is not admissible: too close to the domain boundary or too much mass outside the grid"
        )));
    }
    Ok((spec, problem, theta0))
}

/// Runs every configured scheme on one problem.
pub fn run_fit(config: &ExperimentConfig) -> Result<FitReport, CliError> {
    let seed = config.require_seed()?;
    let stopping = config.stopping.rule()?;
    let schemes = config.schemes()?;
    let (spec, problem, theta0) = fit_problem(config, seed)?;
    let traces = schemes.par_iter().map(|s| run(&problem, s, &theta0, &stopping)).collect::<Result<Vec<_>, _>>().map_err(numerical)?;
    let labels = scheme_labels(&schemes);
    let names = spec.free_names();

    let mut objectives = Table::new(std::iter::once("iteration".to_string()).chain(labels.iter().cloned()));
    let longest = traces.iter().map(|t| t.objectives.len()).max().unwrap_or(0);
    for i in 0..longest {
        let mut row = vec![Cell::from(i)];
        row.extend(traces.iter().map(|t| t.objectives.get(i).map_or(Cell::Empty, |&v| Cell::from(v))));
        objectives.push(row);
    }

    let mut iterates = Table::new(
        ["scheme", "iteration", "objective", "grad_norm", "step", "condition_number", "unstable"]
            .into_iter()
            .map(String::from)
            .chain(names.iter().map(|n| n.to_string())),
    );
    for (label, t) in labels.iter().zip(&traces) {
        for i in 0..t.iterates.len() {
            let mut row = vec![Cell::from(label.as_str()), Cell::from(i), Cell::from(t.objectives[i]), Cell::from(t.grad_norms[i])];
            if i == 0 {
                row.extend([Cell::Empty, Cell::Empty, Cell::Empty]);
            } else {
                row.extend([Cell::from(t.steps[i - 1]), Cell::from(t.condition_numbers[i - 1]), Cell::from(t.unstable[i - 1])]);
            }
            row.extend(t.iterates[i].iter().map(|&v| Cell::from(v)));
            iterates.push(row);
        }
    }

    let mut summary = Table::new(
        ["scheme", "termination", "iterations", "final_objective", "final_grad_norm"]
            .into_iter()
            .map(String::from)
            .chain(names.iter().map(|n| n.to_string())),
    );
    for (label, t) in labels.iter().zip(&traces) {
        let mut row = vec![
            Cell::from(label.as_str()),
            Cell::from(t.termination.name()),
            Cell::from(t.iterations()),
            Cell::from(t.final_objective()),
            Cell::from(*t.grad_norms.last().expect("traces are never empty")),
        ];
        row.extend(t.final_theta().iter().map(|&v| Cell::from(v)));
        summary.push(row);
    }

    Ok(FitReport {
        labels,
        traces,
        artifacts: vec![
            Artifact::new("fit_objectives.csv", objectives),
            Artifact::new("fit_iterates.csv", iterates),
            Artifact::new("fit_summary.csv", summary),
        ],
    })
}

/// Outcome of one scheme on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub scheme: String,
    /// A termination name, or `rejected` when the start was not admissible.
    pub termination: String,
    pub iterations: usize,
    pub final_objective: f64,
}

impl TrialOutcome {
    pub fn completed(&self) -> bool {
        self.termination != "rejected"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSummary {
    pub scheme: String,
    pub trials: usize,
    /// Trials that produced a trace.
    pub completed: usize,
    pub objective_mean: f64,
    pub objective_std: f64,
    pub iterations_mean: f64,
    pub iterations_std: f64,
    pub converged: usize,
    pub line_search_failed: usize,
    pub max_iterations: usize,
    pub rejected: usize,
    /// Mean final objective over the trials that ended `converged`.
    pub converged_objective_mean: f64,
    pub converged_iterations_mean: f64,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub outcomes: Vec<TrialOutcome>,
    pub summaries: Vec<SchemeSummary>,
    /// Bin edges shared by all schemes.
    pub bin_edges: Vec<f64>,
    /// Per scheme, the count in each bin.
    pub bin_counts: Vec<Vec<usize>>,
    pub artifacts: Vec<Artifact>,
}

/// `(mean, sample standard deviation)`, summed in input order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn draw(rng: &mut ChaCha20Rng, ranges: &[[f64; 2]]) -> Vec<f64> {
    ranges.iter().map(|&[lo, hi]| rng.random_range(lo..=hi)).collect()
}

/// Runs `trials` independent problems with freshly drawn truth and start and
/// every scheme on each. Trial `i` uses the generator seeded with `seed + i`.
pub fn run_compare(config: &ExperimentConfig) -> Result<CompareReport, CliError> {
    let seed = config.require_seed()?;
    let stopping = config.stopping.rule()?;
    let schemes = config.schemes()?;
    let labels = scheme_labels(&schemes);
    let spec = config.family.spec()?;
    let truth_spec = config.truth_spec()?;
    let trials = config.trials.unwrap_or(DEFAULT_TRIALS);
    if trials == 0 {
        return Err(CliError::Config("`trials` must be at least 1".into()));
    }
    let samples = config.samples.unwrap_or(DEFAULT_COMPARE_SAMPLES);
    if samples == 0 {
        return Err(CliError::Config("`samples` must be positive".into()));
    }
    let loss: LossKind = config.loss.into();
    let ranges = config.ranges.clone().unwrap_or_default();
    let model_ranges = ranges
        .model
        .or_else(|| default_ranges(&spec))
        .ok_or_else(|| CliError::Config("`ranges.model` is required for this family".into()))?;
    let truth_ranges = ranges
        .truth
        .or_else(|| default_ranges(&truth_spec))
        .ok_or_else(|| CliError::Config("`ranges.truth` is required for this family".into()))?;
    check_ranges(&spec, &model_ranges, "ranges.model")?;
    check_ranges(&truth_spec, &truth_ranges, "ranges.truth")?;
    let grid = config.grid.grid(&spec)?;

    let per_trial: Vec<Vec<TrialOutcome>> = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<Vec<TrialOutcome>, CliError> {
            let trial_seed = seed.wrapping_add(i as u64);
            let mut rng = ChaCha20Rng::seed_from_u64(trial_seed);
            let truth = truth_spec.at(&draw(&mut rng, &truth_ranges)).map_err(numerical)?;
            let theta0 = draw(&mut rng, &model_ranges);
            let data = EmpiricalTarget::new(truth.sample(samples, rng.random())).map_err(numerical)?;
            let problem =
                Problem::new(spec.clone(), loss, Target::Empirical(data), grid.clone()).map_err(|e| CliError::Config(e.to_string()))?;
            let admissible = problem.admissible(&theta0);
            schemes
                .iter()
                .zip(&labels)
                .map(|(scheme, label)| {
                    let (termination, iterations, final_objective) = if admissible {
                        let t = run(&problem, scheme, &theta0, &stopping).map_err(numerical)?;
                        (t.termination.name().to_string(), t.iterations(), t.final_objective())
                    } else {
                        ("rejected".to_string(), 0, f64::NAN)
                    };
                    Ok(TrialOutcome { trial: i, seed: trial_seed, scheme: label.clone(), termination, iterations, final_objective })
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let outcomes: Vec<TrialOutcome> = per_trial.into_iter().flatten().collect();

    let summaries: Vec<SchemeSummary> = labels
        .iter()
        .map(|label| {
            let mine: Vec<&TrialOutcome> = outcomes.iter().filter(|o| &o.scheme == label).collect();
            let done: Vec<&TrialOutcome> = mine.iter().copied().filter(|o| o.completed()).collect();
            let objs: Vec<f64> = done.iter().map(|o| o.final_objective).collect();
            let iters: Vec<f64> = done.iter().map(|o| o.iterations as f64).collect();
            let (objective_mean, objective_std) = mean_std(&objs);
            let (iterations_mean, iterations_std) = mean_std(&iters);
            let count = |name: &str| mine.iter().filter(|o| o.termination == name).count();
            let conv: Vec<&TrialOutcome> = done.iter().copied().filter(|o| o.termination == Termination::Converged.name()).collect();
            let (converged_objective_mean, _) = mean_std(&conv.iter().map(|o| o.final_objective).collect::<Vec<_>>());
            let (converged_iterations_mean, _) = mean_std(&conv.iter().map(|o| o.iterations as f64).collect::<Vec<_>>());
            SchemeSummary {
                scheme: label.clone(),
                trials: mine.len(),
                completed: done.len(),
                objective_mean,
                objective_std,
                iterations_mean,
                iterations_std,
                converged: count(Termination::Converged.name()),
                line_search_failed: count(Termination::LineSearchFailed.name()),
                max_iterations: count(Termination::MaxIterations.name()),
                rejected: count("rejected"),
                converged_objective_mean,
                converged_iterations_mean,
            }
        })
        .collect();

    let finite: Vec<f64> = outcomes.iter().map(|o| o.final_objective).filter(|v| v.is_finite()).collect();
    let (lo, hi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let bin_edges: Vec<f64> = if finite.is_empty() {
        Vec::new()
    } else if lo == hi {
        vec![lo, hi]
    } else {
        (0..=HISTOGRAM_BINS).map(|k| lo + (hi - lo) * k as f64 / HISTOGRAM_BINS as f64).collect()
    };
    let bins = bin_edges.len().saturating_sub(1);
    let bin_counts: Vec<Vec<usize>> = labels
        .iter()
        .map(|label| {
            let mut counts = vec![0; bins];
            for o in outcomes.iter().filter(|o| &o.scheme == label && o.final_objective.is_finite()) {
                let k = if hi > lo { (((o.final_objective - lo) / (hi - lo)) * bins as f64) as usize } else { 0 };
                counts[k.min(bins - 1)] += 1;
            }
            counts
        })
        .collect();

    let mut trial_table = Table::new(["trial", "seed", "scheme", "termination", "iterations", "final_objective"]);
    for o in &outcomes {
        trial_table.push(vec![
            Cell::from(o.trial),
            Cell::from(o.seed),
            Cell::from(o.scheme.as_str()),
            Cell::from(o.termination.as_str()),
            Cell::from(o.iterations),
            Cell::from(o.final_objective),
        ]);
    }
    let mut summary_table = Table::new([
        "scheme",
        "trials",
        "completed",
        "objective_mean",
        "objective_std",
        "iterations_mean",
        "iterations_std",
        "converged",
        "line_search_failed",
        "max_iterations",
        "rejected",
        "converged_objective_mean",
        "converged_iterations_mean",
    ]);
    for s in &summaries {
        summary_table.push(vec![
            Cell::from(s.scheme.as_str()),
            Cell::from(s.trials),
            Cell::from(s.completed),
            Cell::from(s.objective_mean),
            Cell::from(s.objective_std),
            Cell::from(s.iterations_mean),
            Cell::from(s.iterations_std),
            Cell::from(s.converged),
            Cell::from(s.line_search_failed),
            Cell::from(s.max_iterations),
            Cell::from(s.rejected),
            Cell::from(s.converged_objective_mean),
            Cell::from(s.converged_iterations_mean),
        ]);
    }
    let mut hist_table = Table::new(["scheme", "bin", "lower", "upper", "count"]);
    for (label, counts) in labels.iter().zip(&bin_counts) {
        for (k, &c) in counts.iter().enumerate() {
            hist_table.push(vec![
                Cell::from(label.as_str()),
                Cell::from(k),
                Cell::from(bin_edges[k]),
                Cell::from(bin_edges[k + 1]),
                Cell::from(c),
            ]);
        }
    }

    Ok(CompareReport {
        outcomes,
        summaries,
        bin_edges,
        bin_counts,
        artifacts: vec![
            Artifact::new("compare_trials.csv", trial_table),
            Artifact::new("compare_summary.csv", summary_table),
            Artifact::new("compare_histogram.csv", hist_table),
        ],
    })
}

#[derive(Debug, Clone)]
pub struct GeodesicReport {
    pub path: DiscretePath,
    pub shot: Option<DiscretePath>,
    pub w2_squared: f64,
    pub times: Vec<f64>,
    /// `sup_x |manifold density − displacement density|` at each time.
    pub sup_gaps: Vec<f64>,
    pub artifacts: Vec<Artifact>,
}

fn path_rows(table: &mut Table, method: &str, path: &DiscretePath) {
    let n = path.segments().max(1) as f64;
    for (i, k) in path.knots.iter().enumerate() {
        let mut row = vec![Cell::from(method), Cell::from(i), Cell::from(i as f64 / n)];
        row.extend(k.iter().map(|&v| Cell::from(v)));
        table.push(row);
    }
}

/// Minimizing geodesic on the parameter manifold next to displacement
/// interpolation between the same endpoints.
pub fn run_geodesic(config: &ExperimentConfig) -> Result<GeodesicReport, CliError> {
    let spec = config.family.spec()?;
    let theta0 = point(&spec, config.theta0.as_ref(), "theta0")?;
    let theta1 = point(&spec, config.theta1.as_ref(), "theta1")?;
    let grid = config.grid.grid(&spec)?;
    let g = &config.geodesic;
    if g.t_points < 2 {
        return Err(CliError::Config("`geodesic.t_points` must be at least 2".into()));
    }
    if g.segments < 2 {
        return Err(CliError::Config("`geodesic.segments` must be at least 2".into()));
    }
    let path = geodesic_coordinate_descent(&spec, &theta0, &theta1, &grid, &g.settings()).map_err(numerical)?;
    let shot = match &g.momentum {
        Some(m) => {
            if m.len() != spec.dim() {
                return Err(CliError::Config(format!("`geodesic.momentum` needs {} entries", spec.dim())));
            }
            if g.shooting_steps == 0 {
                return Err(CliError::Config("`geodesic.shooting_steps` must be positive".into()));
            }
            Some(hamiltonian_shoot(&spec, &theta0, m, g.shooting_steps, &grid).map_err(numerical)?.path)
        }
        None => None,
    };
    let (rho0, rho1): (Model, Model) = (spec.at(&theta0).map_err(numerical)?, spec.at(&theta1).map_err(numerical)?);
    let w2 = w2_squared(&rho0, &Target::Continuous(rho1.clone()), &grid).map_err(numerical)?;

    let times: Vec<f64> = (0..g.t_points).map(|k| k as f64 / (g.t_points - 1) as f64).collect();
    let mut densities = Table::new(["t", "x", "manifold", "displacement"]);
    let mut gaps = Table::new(["t", "sup_gap", "manifold_mass", "displacement_mass"]);
    let mut sup_gaps = Vec::with_capacity(times.len());
    for &t in &times {
        let on_manifold = spec.at(&path.at(t)).map_err(numerical)?.pdf_at(grid.nodes());
        let displaced = displacement_interpolation(&rho0, &rho1, t, &grid).map_err(numerical)?;
        let gap = on_manifold.iter().zip(&displaced).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        sup_gaps.push(gap);
        gaps.push(vec![Cell::from(t), Cell::from(gap), Cell::from(grid.integrate(&on_manifold)), Cell::from(grid.integrate(&displaced))]);
        for ((&x, &a), &b) in grid.nodes().iter().zip(&on_manifold).zip(&displaced) {
            densities.push(vec![Cell::from(t), Cell::from(x), Cell::from(a), Cell::from(b)]);
        }
    }

    let names = spec.free_names();
    let mut knots = Table::new(["method", "knot", "s"].into_iter().map(String::from).chain(names.iter().map(|n| n.to_string())));
    path_rows(&mut knots, "coordinate-descent", &path);
    if let Some(s) = &shot {
        path_rows(&mut knots, "shooting", s);
    }
    let mut summary = Table::new(["method", "energy", "sweeps", "completed", "w2_squared"]);
    summary.push(vec![
        Cell::from("coordinate-descent"),
        Cell::from(path.energy),
        Cell::from(path.sweeps),
        Cell::from(path.completed),
        Cell::from(w2),
    ]);
    if let Some(s) = &shot {
        summary.push(vec![Cell::from("shooting"), Cell::from(s.energy), Cell::from(s.sweeps), Cell::from(s.completed), Cell::from(w2)]);
    }

    Ok(GeodesicReport {
        path,
        shot,
        w2_squared: w2,
        times,
        sup_gaps,
        artifacts: vec![
            Artifact::new("geodesic_path.csv", knots),
            Artifact::new("geodesic_summary.csv", summary),
            Artifact::new("geodesic_gaps.csv", gaps),
            Artifact::new("geodesic_densities.csv", densities),
        ],
    })
}

#[derive(Debug, Clone)]
pub struct MetricReport {
    /// `(name, tensor)` in output order.
    pub tensors: Vec<(String, MetricMatrix)>,
    pub artifacts: Vec<Artifact>,
}

/// Tensors at `theta0`; with `theta1` also the modified tensor and the W₂
/// Hessian towards the model at `theta1`.
pub fn run_metric(config: &ExperimentConfig) -> Result<MetricReport, CliError> {
    let spec = config.family.spec()?;
    let theta = point(&spec, config.theta0.as_ref(), "theta0")?;
    let grid = config.grid.grid(&spec)?;
    let model = spec.at(&theta).map_err(numerical)?;
    let mut tensors = vec![
        ("wasserstein".to_string(), wasserstein_metric_tensor(&model, &grid)),
        ("fisher-rao".to_string(), fisher_metric_tensor(&model, &grid)),
    ];
    if config.theta1.is_some() {
        let truth_spec = config.truth_spec()?;
        let theta1 = point(&truth_spec, config.theta1.as_ref(), "theta1")?;
        let target = Target::Continuous(truth_spec.at(&theta1).map_err(numerical)?);
        tensors.push(("modified-wasserstein".to_string(), modified_wasserstein_tensor(&model, &target, &grid)));
        tensors.push(("w2-hessian".to_string(), w2_hessian(&model, &target, &grid).map_err(numerical)?));
    }

    let names = spec.free_names();
    let mut entries = Table::new(["tensor", "row"].into_iter().map(String::from).chain(names.iter().map(|n| n.to_string())));
    let mut eigen = Table::new(["tensor", "index", "eigenvalue"]);
    for (name, t) in &tensors {
        let m = t.matrix();
        for (r, row_name) in names.iter().enumerate() {
            let mut row = vec![Cell::from(name.as_str()), Cell::from(*row_name)];
            row.extend((0..m.ncols()).map(|c| Cell::from(m[(r, c)])));
            entries.push(row);
        }
        for (k, &ev) in t.eigenvalues().iter().enumerate() {
            eigen.push(vec![Cell::from(name.as_str()), Cell::from(k), Cell::from(ev)]);
        }
    }
    Ok(MetricReport {
        tensors,
        artifacts: vec![Artifact::new("metric_tensors.csv", entries), Artifact::new("metric_eigenvalues.csv", eigen)],
    })
}
