//! Averaging simulations: how fast `x ← P x` forgets its initial values.
//!
//! Each trial draws an initial vector, iterates the chain and records the
//! Euclidean distance to the mean vector, normalized by its initial value.
//! Trials use independent ChaCha8 streams keyed by trial index, so changing
//! the trial count never reshuffles earlier trials.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{OrbitProbabilities, TransitionMatrix};
use crate::error::{Error, Result};
use crate::topology::TopologySpec;

/// Tail values at or below this are treated as the floating-point floor.
pub const NUMERICAL_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Independent uniform values on `[0, 1]` per node.
    RandomUniform,
    /// All mass on one uniformly chosen node.
    PointMass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    Arithmetic,
    Geometric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub trials: usize,
    pub iterations: usize,
    pub seed: u64,
    pub init: InitMode,
    pub aggregation: Aggregation,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            trials: 200,
            iterations: 100,
            seed: 0,
            init: InitMode::RandomUniform,
            aggregation: Aggregation::Arithmetic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceMeta {
    pub spec: TopologySpec,
    pub probs: OrbitProbabilities,
    pub config: TrialConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingTrace {
    pub label: String,
    /// Indexed by iteration `t = 0..=T`; `distances[0] == 1`.
    pub distances: Vec<f64>,
    /// Initial vectors redrawn because they were exactly constant.
    pub redraws: usize,
    pub meta: TraceMeta,
}

impl MixingTrace {
    pub fn iterations(&self) -> usize {
        self.distances.len() - 1
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// `iteration,distance` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,distance\n");
        for (t, d) in self.distances.iter().enumerate() {
            out.push_str(&format!("{t},{d:?}\n"));
        }
        out
    }
}

/// `label,iteration,distance` rows for several traces.
pub fn long_format_csv(traces: &[MixingTrace]) -> String {
    let mut out = String::from("label,iteration,distance\n");
    for trace in traces {
        for (t, d) in trace.distances.iter().enumerate() {
            out.push_str(&format!("{},{t},{d:?}\n", trace.label));
        }
    }
    out
}

fn deviation_norm(x: &[f64], mean: f64) -> f64 {
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt()
}

fn draw_initial(rng: &mut ChaCha8Rng, size: usize, init: InitMode) -> Vec<f64> {
    match init {
        InitMode::RandomUniform => (0..size).map(|_| rng.gen::<f64>()).collect(),
        InitMode::PointMass => {
            let mut x = vec![0.0; size];
            x[rng.gen_range(0..size)] = 1.0;
            x
        }
    }
}

/// Normalized distances of one trial and the number of redraws it needed.
fn run_trial(p: &TransitionMatrix, cfg: &TrialConfig, trial: usize) -> (Vec<f64>, usize) {
    let size = p.size();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(trial as u64);
    let mut redraws = 0;
    let (mut x, mean, d0) = loop {
        let x = draw_initial(&mut rng, size, cfg.init);
        let mean = x.iter().sum::<f64>() / size as f64;
        let d0 = deviation_norm(&x, mean);
        if d0 > 0.0 {
            break (x, mean, d0);
        }
        redraws += 1;
    };
    let mut next = vec![0.0; size];
    let mut out = Vec::with_capacity(cfg.iterations + 1);
    out.push(1.0);
    for _ in 0..cfg.iterations {
        p.matrix().mul_vec_into(&x, &mut next);
        std::mem::swap(&mut x, &mut next);
        out.push(deviation_norm(&x, mean) / d0);
    }
    (out, redraws)
}

/// Runs `cfg.trials` independent trials and aggregates them per iteration.
pub fn simulate(p: &TransitionMatrix, cfg: &TrialConfig) -> Result<MixingTrace> {
    if cfg.trials == 0 || cfg.iterations == 0 {
        return Err(Error::InvalidArgument("trials and iterations must be at least 1".into()));
    }
    let runs: Vec<(Vec<f64>, usize)> =
        (0..cfg.trials).into_par_iter().map(|t| run_trial(p, cfg, t)).collect();

    let len = cfg.iterations + 1;
    let mut acc = vec![0.0; len];
    for (dist, _) in &runs {
        for (a, d) in acc.iter_mut().zip(dist) {
            *a += match cfg.aggregation {
                Aggregation::Arithmetic => *d,
                Aggregation::Geometric => d.ln(),
            };
        }
    }
    let count = cfg.trials as f64;
    let distances = acc
        .into_iter()
        .map(|a| match cfg.aggregation {
            Aggregation::Arithmetic => a / count,
            Aggregation::Geometric => (a / count).exp(),
        })
        .collect();

    Ok(MixingTrace {
        label: p.spec().to_string(),
        distances,
        redraws: runs.iter().map(|r| r.1).sum(),
        meta: TraceMeta { spec: p.spec().clone(), probs: p.probs().clone(), config: cfg.clone() },
    })
}

/// Per-step contraction over the last `window` iterations: the exponential
/// of the least-squares slope of `ln distance` against `t`.
pub fn asymptotic_rate(trace: &MixingTrace, window: usize) -> Result<f64> {
    rate_of(&trace.distances, window)
}

pub(crate) fn rate_of(distances: &[f64], window: usize) -> Result<f64> {
    if window < 2 || distances.len() <= window {
        return Err(Error::InvalidArgument(format!(
            "window must satisfy 2 <= window < trace length ({}), got {window}",
            distances.len()
        )));
    }
    let start = distances.len() - window;
    if let Some((i, v)) = distances[start..].iter().enumerate().find(|(_, v)| **v <= NUMERICAL_FLOOR) {
        return Err(Error::NumericalFloor { iteration: start + i, value: *v });
    }
    let w = window as f64;
    let ts: Vec<f64> = (0..window).map(|i| i as f64).collect();
    let ys: Vec<f64> = distances[start..].iter().map(|d| d.ln()).collect();
    let t_mean = ts.iter().sum::<f64>() / w;
    let y_mean = ys.iter().sum::<f64>() / w;
    let cov: f64 = ts.iter().zip(&ys).map(|(t, y)| (t - t_mean) * (y - y_mean)).sum();
    let var: f64 = ts.iter().map(|t| (t - t_mean).powi(2)).sum();
    Ok((cov / var).exp())
}

/// Relative tolerance for calling two tail rates equal.
pub const RATE_MATCH_TOL: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairComparison {
    pub first: String,
    pub second: String,
    /// Iterations `t ≥ 1` where the first trace is at or below the second.
    pub first_leads: Vec<usize>,
    /// First `t ≥ 1` where the sign of `first − second` flips.
    pub first_crossover: Option<usize>,
    pub first_rate: Option<f64>,
    pub second_rate: Option<f64>,
    pub rates_match: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub labels: Vec<String>,
    pub iterations: usize,
    pub window: usize,
    /// For each iteration, trace indices ordered from lowest to highest distance.
    pub ordering: Vec<Vec<usize>>,
    pub pairs: Vec<PairComparison>,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Orders traces per iteration and compares every pair: where the first
/// leads, the first sign change, and whether their tail rates agree within
/// [`RATE_MATCH_TOL`]. Rates are `None` when the tail hit the numerical floor.
pub fn compare(traces: &[MixingTrace], window: usize) -> Result<ComparisonReport> {
    let first = traces.first().ok_or_else(|| Error::InvalidArgument("nothing to compare".into()))?;
    let len = first.distances.len();
    if let Some(t) = traces.iter().find(|t| t.distances.len() != len) {
        return Err(Error::InvalidArgument(format!(
            "trace '{}' has {} iterations, expected {}",
            t.label,
            t.iterations(),
            len - 1
        )));
    }
    let ordering = (0..len)
        .map(|t| {
            let mut idx: Vec<usize> = (0..traces.len()).collect();
            idx.sort_by(|&a, &b| traces[a].distances[t].total_cmp(&traces[b].distances[t]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let rates: Vec<Option<f64>> = traces.iter().map(|t| asymptotic_rate(t, window).ok()).collect();
    let mut pairs = Vec::new();
    for i in 0..traces.len() {
        for j in (i + 1)..traces.len() {
            let (a, b) = (&traces[i].distances, &traces[j].distances);
            let first_leads = (1..len).filter(|&t| a[t] <= b[t]).collect();
            let mut last = 0i8;
            let mut first_crossover = None;
            for t in 1..len {
                let s = sign(a[t] - b[t]);
                if s != 0 {
                    if last != 0 && s != last {
                        first_crossover = Some(t);
                        break;
                    }
                    last = s;
                }
            }
            let rates_match = match (rates[i], rates[j]) {
                (Some(x), Some(y)) => Some((x - y).abs() <= RATE_MATCH_TOL * x.max(y)),
                _ => None,
            };
            pairs.push(PairComparison {
                first: traces[i].label.clone(),
                second: traces[j].label.clone(),
                first_leads,
                first_crossover,
                first_rate: rates[i],
                second_rate: rates[j],
                rates_match,
            });
        }
    }
    Ok(ComparisonReport {
        labels: traces.iter().map(|t| t.label.clone()).collect(),
        iterations: len - 1,
        window,
        ordering,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::assemble;
    use crate::topology::Family;

    fn matrix(f: Family, k: usize, n: usize, p: &[f64]) -> TransitionMatrix {
        assemble(&TopologySpec::new(f, k, n), &OrbitProbabilities::new(p.to_vec()).unwrap()).unwrap()
    }

    fn cfg(trials: usize, iterations: usize) -> TrialConfig {
        TrialConfig { trials, iterations, seed: 11, ..TrialConfig::default() }
    }

    #[test]
    fn uniform_matrix_mixes_in_one_step() {
        let p = matrix(Family::Symmetric, 2, 1, &[0.5]);
        let t = simulate(&p, &cfg(20, 5)).unwrap();
        assert_eq!(t.distances[0], 1.0);
        assert!(t.distances[1..].iter().all(|d| *d == 0.0));
    }

    #[test]
    fn identity_never_mixes() {
        let p = matrix(Family::Symmetric, 4, 2, &[0.0; 3]);
        let t = simulate(&p, &cfg(10, 8)).unwrap();
        assert!(t.distances.iter().all(|d| *d == 1.0));
    }

    #[test]
    fn symmetric_ratio_tends_to_slem() {
        let p = matrix(Family::Symmetric, 6, 3, &[1.0 / 6.0; 5]);
        let t = simulate(&p, &cfg(50, 150)).unwrap();
        let c = (std::f64::consts::PI / 6.0).cos();
        let ratio = t.distances[150] / t.distances[149];
        assert!((ratio - c).abs() / c < 0.02, "{ratio}");
    }

    #[test]
    fn exact_geometric_rate() {
        let d: Vec<f64> = (0..30).map(|t| 0.5f64.powi(t)).collect();
        assert!((rate_of(&d, 10).unwrap() - 0.5).abs() < 1e-12);
        assert!(rate_of(&d, 1).is_err());
        assert!(rate_of(&d, 30).is_err());
        let floor: Vec<f64> = (0..80).map(|t| 0.5f64.powi(t)).collect();
        assert!(matches!(rate_of(&floor, 10), Err(Error::NumericalFloor { .. })));
    }

    #[test]
    fn distances_never_expand_and_mean_is_kept() {
        let p = matrix(Family::SemiSymmetric, 5, 2, &[0.2, 0.3, 0.25, 0.4]);
        let t = simulate(&p, &cfg(30, 40)).unwrap();
        assert!(t.distances.iter().all(|d| *d >= 0.0 && *d <= 1.0 + 1e-12));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = draw_initial(&mut rng, p.size(), InitMode::RandomUniform);
        let mean0 = x.iter().sum::<f64>() / x.len() as f64;
        for _ in 0..100 {
            x = p.matrix().mul_vec(&x);
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            assert!((mean - mean0).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_runs_are_identical_and_prefix_stable() {
        let p = matrix(Family::Cycle, 5, 2, &[0.2; 5]);
        let a = simulate(&p, &cfg(25, 30)).unwrap();
        let b = simulate(&p, &cfg(25, 30)).unwrap();
        assert_eq!(a, b);
        // trial i sees the same stream regardless of the total trial count
        let c = cfg(40, 30);
        assert_eq!(run_trial(&p, &cfg(25, 30), 7), run_trial(&p, &c, 7));
    }

    #[test]
    fn point_mass_and_geometric_mean() {
        let p = matrix(Family::Symmetric, 3, 2, &[0.25, 0.25]);
        let c = TrialConfig { init: InitMode::PointMass, aggregation: Aggregation::Geometric, ..cfg(10, 20) };
        let t = simulate(&p, &c).unwrap();
        assert_eq!(t.distances[0], 1.0);
        assert!(t.distances.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn compare_with_itself() {
        let p = matrix(Family::Symmetric, 4, 2, &[0.25; 3]);
        let t = simulate(&p, &cfg(10, 40)).unwrap();
        let r = compare(&[t.clone(), t.with_label("copy")], 10).unwrap();
        assert_eq!(r.pairs[0].first_crossover, None);
        assert_eq!(r.pairs[0].first_leads.len(), 40);
        assert_eq!(r.pairs[0].rates_match, Some(true));
    }

    #[test]
    fn compare_rejects_mismatched_lengths() {
        let p = matrix(Family::Symmetric, 4, 2, &[0.25; 3]);
        let a = simulate(&p, &cfg(5, 10)).unwrap();
        let b = simulate(&p, &cfg(5, 12)).unwrap();
        assert!(compare(&[a, b], 5).is_err());
        assert!(compare(&[], 5).is_err());
    }

    #[test]
    fn crossover_detection() {
        let mk = |label: &str, d: Vec<f64>| MixingTrace {
            label: label.into(),
            distances: d,
            redraws: 0,
            meta: TraceMeta {
                spec: TopologySpec::new(Family::Symmetric, 2, 1),
                probs: OrbitProbabilities::new(vec![0.5]).unwrap(),
                config: TrialConfig::default(),
            },
        };
        let a = mk("a", vec![1.0, 0.5, 0.4, 0.35, 0.3]);
        let b = mk("b", vec![1.0, 0.6, 0.4, 0.3, 0.2]);
        let r = compare(&[a, b], 2).unwrap();
        assert_eq!(r.pairs[0].first_crossover, Some(3));
        assert_eq!(r.pairs[0].first_leads, vec![1, 2]);
        assert_eq!(r.ordering[4], vec![1, 0]);
    }

    #[test]
    fn csv_outputs() {
        let p = matrix(Family::Symmetric, 2, 1, &[0.5]);
        let t = simulate(&p, &cfg(3, 2)).unwrap().with_label("two");
        assert_eq!(t.to_csv(), "iteration,distance\n0,1.0\n1,0.0\n2,0.0\n");
        assert_eq!(long_format_csv(&[t]), "label,iteration,distance\ntwo,0,1.0\ntwo,1,0.0\ntwo,2,0.0\n");
    }
}
