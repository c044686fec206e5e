//! Derivative-free minimization of the SLEM over per-orbit probabilities.
//!
//! The objective is convex but nonsmooth, so the search is a Nelder-Mead
//! simplex with adaptive coefficients, restarted from its own best point
//! until a fresh simplex stops improving, and repeated from several starting
//! points. Negative probabilities are projected to zero; negative holding
//! probabilities are penalized and repaired at the end by uniform scaling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{
    assemble_on, holding_probabilities, metropolis_hastings, raw_entries, slem, OrbitProbabilities,
};
use crate::error::{Error, Result};
use crate::linalg::{eigenvalues_symmetric, SymmetricMatrix, DEFAULT_TOL};
use crate::optimal::optimal_probabilities;
use crate::topology::{build_graph, Graph, LayerKind, TopologySpec};

/// Weight on the total negative holding mass.
const PENALTY: f64 = 10.0;
const DIAMETER_TOL: f64 = 1e-9;
const MAX_DIMENSION: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveConfig {
    /// Objective spread that counts as converged.
    pub tol: f64,
    /// Evaluation budget per start.
    pub max_evals: usize,
    /// Number of starting points.
    pub restarts: usize,
    pub seed: u64,
    /// Include the closed-form optimum among the starting points.
    pub closed_form_start: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { tol: 1e-7, max_evals: 20_000, restarts: 5, seed: 0, closed_form_start: true }
    }
}

impl SolveConfig {
    fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_evals == 0 || self.restarts == 0 {
            return Err(Error::InvalidArgument("max_evals and restarts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartKind {
    ClosedForm,
    MetropolisHastings,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StartSummary {
    pub index: usize,
    pub kind: StartKind,
    pub slem: f64,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveResult {
    pub spec: TopologySpec,
    pub config: SolveConfig,
    pub probs: OrbitProbabilities,
    pub slem: f64,
    pub evals: usize,
    pub converged: bool,
    pub best_start: usize,
    pub starts: Vec<StartSummary>,
}

struct Objective<'g> {
    graph: &'g Graph,
}

impl Objective<'_> {
    fn raw_slem(&self, p: &[f64]) -> f64 {
        let size = self.graph.node_count();
        let (data, _) = raw_entries(self.graph, p);
        let m = SymmetricMatrix::from_fn(size, |i, j| data[i * size + j]).expect("finite entries");
        match eigenvalues_symmetric(&m, DEFAULT_TOL) {
            Ok(s) => {
                let v = s.values();
                v[1].max(-v[v.len() - 1])
            }
            Err(_) => f64::INFINITY,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        let p: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
        let violation: f64 = holding_probabilities(self.graph, &p).iter().map(|h| (-h).max(0.0)).sum();
        self.raw_slem(&p) + PENALTY * violation
    }
}

/// Projects onto `p ≥ 0` and, if some holding is negative, scales all
/// probabilities down until every holding is nonnegative.
fn repair(graph: &Graph, x: &[f64]) -> Vec<f64> {
    let mut p: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let worst_outflow = holding_probabilities(graph, &p).iter().map(|h| 1.0 - h).fold(0.0, f64::max);
    if worst_outflow > 1.0 {
        let f = 1.0 / worst_outflow;
        for v in &mut p {
            *v *= f;
        }
    }
    // rounding can leave a holding at -1e-17; shave until strictly feasible
    while holding_probabilities(graph, &p).iter().any(|h| *h < 0.0) {
        for v in &mut p {
            *v *= 1.0 - 1e-15;
        }
    }
    p
}

struct NelderMeadRun {
    best: Vec<f64>,
    value: f64,
    evals: usize,
    converged: bool,
}

/// One Nelder-Mead descent from an axis-aligned simplex around `x0`.
fn nelder_mead(f: &Objective<'_>, x0: &[f64], step: f64, tol: f64, budget: usize) -> NelderMeadRun {
    let d = x0.len();
    let df = d as f64;
    // adaptive coefficients for higher dimensions
    let (alpha, gamma, rho, sigma) = if d > 1 {
        (1.0, 1.0 + 2.0 / df, 0.75 - 1.0 / (2.0 * df), 1.0 - 1.0 / df)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        f.value(x)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let v0 = eval(x0);
    simplex.push((x0.to_vec(), v0));
    for i in 0..d {
        let mut x = x0.to_vec();
        x[i] += if x[i] + step <= 1.0 { step } else { -step };
        let v = eval(&x);
        simplex.push((x, v));
    }

    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[d].1 - simplex[0].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread < tol || diameter < DIAMETER_TOL {
            converged = true;
            break;
        }
        if evals.get() >= budget {
            break;
        }

        let centroid: Vec<f64> =
            (0..d).map(|j| simplex[..d].iter().map(|(x, _)| x[j]).sum::<f64>() / df).collect();
        let worst = simplex[d].clone();
        let along =
            |t: f64| -> Vec<f64> { centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect() };

        let xr = along(alpha);
        let vr = eval(&xr);
        if vr < simplex[0].1 {
            let xe = along(alpha * gamma);
            let ve = eval(&xe);
            simplex[d] = if ve < vr { (xe, ve) } else { (xr, vr) };
            continue;
        }
        if vr < simplex[d - 1].1 {
            simplex[d] = (xr, vr);
            continue;
        }
        let (xc, vc) = if vr < worst.1 {
            let x = along(alpha * rho);
            let v = eval(&x);
            (x, v)
        } else {
            let x = along(-rho);
            let v = eval(&x);
            (x, v)
        };
        if vc < worst.1.min(vr) {
            simplex[d] = (xc, vc);
            continue;
        }
        let best = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best.iter().zip(&entry.0).map(|(b, x)| b + sigma * (x - b)).collect();
            let v = eval(&x);
            *entry = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (best, value) = simplex.swap_remove(0);
    NelderMeadRun { best, value, evals: evals.get(), converged }
}

struct StartOutcome {
    probs: Vec<f64>,
    slem: f64,
    evals: usize,
    converged: bool,
}

/// Restarts Nelder-Mead from its own best point with a shrinking simplex
/// until a fresh run brings no improvement or the budget is spent.
fn descend(f: &Objective<'_>, x0: Vec<f64>, step: f64, cfg: &SolveConfig) -> StartOutcome {
    let mut x = x0;
    let mut value = f.value(&x);
    let mut evals = 1;
    let mut step = step;
    let mut converged = false;
    while evals < cfg.max_evals {
        let run = nelder_mead(f, &x, step, cfg.tol, cfg.max_evals - evals);
        evals += run.evals;
        let improved = run.value < value - 1e-15;
        if run.value <= value {
            x = run.best;
            value = run.value;
        }
        converged = run.converged;
        if !run.converged {
            break;
        }
        if !improved {
            if step < 1e-6 {
                break;
            }
            step *= 0.1;
        } else {
            step = (step * 0.5).max(1e-6);
        }
    }
    let probs = repair(f.graph, &x);
    let slem = f.raw_slem(&probs);
    StartOutcome { probs, slem, evals, converged }
}

fn random_start(graph: &Graph, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = graph.spec().n as f64;
    let x: Vec<f64> = graph
        .layers()
        .iter()
        .map(|kind| {
            let u: f64 = rng.gen_range(0.05..1.0);
            match kind {
                LayerKind::Full => u / n,
                LayerKind::Strait => u,
            }
        })
        .collect();
    repair(graph, &x)
}

/// Minimizes the SLEM over orbit probabilities. Starting points are the
/// closed form (when enabled), the Metropolis-Hastings weights, then seeded
/// random feasible points. Starts run in parallel; the lowest SLEM wins with
/// ties going to the lowest start index.
pub fn minimize_slem(spec: &TopologySpec, cfg: &SolveConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let graph = build_graph(spec)?;
    let dim = graph.orbit_count();
    if dim > MAX_DIMENSION {
        return Err(Error::InvalidArgument(format!(
            "{dim} orbits exceeds the supported maximum of {MAX_DIMENSION}"
        )));
    }

    let mut kinds = Vec::new();
    if cfg.closed_form_start {
        kinds.push(StartKind::ClosedForm);
    }
    kinds.push(StartKind::MetropolisHastings);
    kinds.truncate(cfg.restarts);
    while kinds.len() < cfg.restarts {
        kinds.push(StartKind::Random);
    }

    let starts: Vec<Vec<f64>> = kinds
        .iter()
        .enumerate()
        .map(|(i, kind)| -> Result<Vec<f64>> {
            Ok(match kind {
                StartKind::ClosedForm => optimal_probabilities(spec)?.probs.values().to_vec(),
                StartKind::MetropolisHastings => metropolis_hastings(&graph).values().to_vec(),
                StartKind::Random => {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(i as u64);
                    random_start(&graph, &mut rng)
                }
            })
        })
        .collect::<Result<_>>()?;

    let step = 0.1 / spec.n as f64;
    let outcomes: Vec<StartOutcome> =
        starts.into_par_iter().map(|x0| descend(&Objective { graph: &graph }, x0, step, cfg)).collect();

    let best_start = outcomes
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.slem.total_cmp(&b.1.slem).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("at least one start");
    let best = &outcomes[best_start];
    let probs = OrbitProbabilities::new(best.probs.clone())?;
    let matrix = assemble_on(&graph, &probs)?;
    let slem_value = slem(&matrix)?;

    Ok(SolveResult {
        spec: spec.clone(),
        config: cfg.clone(),
        probs,
        slem: slem_value,
        evals: outcomes.iter().map(|o| o.evals).sum(),
        converged: best.converged,
        best_start,
        starts: outcomes
            .iter()
            .zip(&kinds)
            .enumerate()
            .map(|(index, (o, &kind))| StartSummary {
                index,
                kind,
                slem: o.slem,
                evals: o.evals,
                converged: o.converged,
            })
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub p: f64,
    pub slem: f64,
    pub feasible: bool,
}

/// SLEM along one orbit (1-based) with every other orbit held at its
/// closed-form value. Infeasible grid points are kept and flagged.
pub fn profile_objective(spec: &TopologySpec, along_orbit: usize, grid: &[f64]) -> Result<Vec<ProfilePoint>> {
    let graph = build_graph(spec)?;
    if along_orbit == 0 || along_orbit > graph.orbit_count() {
        return Err(Error::InvalidArgument(format!(
            "orbit {along_orbit} out of range 1..={}",
            graph.orbit_count()
        )));
    }
    let base = optimal_probabilities(spec)?.probs.values().to_vec();
    let objective = Objective { graph: &graph };
    Ok(grid
        .iter()
        .map(|&g| {
            let mut p = base.clone();
            p[along_orbit - 1] = g;
            let feasible = g >= 0.0
                && holding_probabilities(&graph, &p).iter().all(|h| *h >= -crate::chain::FEASIBILITY_TOL);
            ProfilePoint { p: g, slem: objective.raw_slem(&p), feasible }
        })
        .collect())
}

/// `p,slem,feasible` rows with a header.
pub fn profile_to_csv(points: &[ProfilePoint]) -> String {
    let mut out = String::from("p,slem,feasible\n");
    for pt in points {
        out.push_str(&format!("{:?},{:?},{}\n", pt.p, pt.slem, pt.feasible));
    }
    out
}
