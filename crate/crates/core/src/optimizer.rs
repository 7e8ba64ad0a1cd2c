//! Backward optimization of the agent-type distribution.
//!
//! The objective replays cached decision matrices of recent labeled days
//! under a candidate distribution and scores the reconstructed signal
//! against realized returns (mean daily rank correlation by default). The
//! search is simulated annealing with pairwise mass-transfer moves, which
//! stay on the simplex by construction.

use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::DecisionMatrix;
use crate::aggregation::{signal_values, TypeDistribution};
use crate::error::{Error, Result};
use crate::metrics::{average_ranks, pearson, rank_pearson, MIN_CROSS_SECTION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealConfig {
    pub initial_temperature: f64,
    pub max_iterations: usize,
    pub cooling_rate: f64,
    pub step_scale: f64,
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            initial_temperature: 40.0,
            max_iterations: 100,
            cooling_rate: 0.95,
            step_scale: 5.0,
            seed: 0,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_temperature > 0.0
            && self.initial_temperature.is_finite()
            && self.cooling_rate > 0.0
            && self.cooling_rate < 1.0
            && self.step_scale > 0.0
            && self.step_scale.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "anneal settings out of range: initial_temperature > 0, 0 < cooling_rate < 1, step_scale > 0 (got {self:?})"
            )))
        }
    }
}

/// Correlation used to score a reconstructed signal against returns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    /// Spearman (rank IC).
    #[default]
    Rank,
    /// Pearson (IC).
    Linear,
}

/// One labeled day of the look-back window: its decision matrix and the
/// realized label of each matrix column (absent where unknown).
#[derive(Debug, Clone)]
pub struct WindowDay {
    pub day: usize,
    pub matrix: DecisionMatrix,
    pub labels: Vec<Option<f64>>,
}

impl WindowDay {
    pub fn date(&self) -> NaiveDate {
        self.matrix.date()
    }
}

#[derive(Debug)]
struct Prepared {
    columns: Vec<usize>,
    /// Labels (or their average ranks) over `columns`.
    target: Vec<f64>,
}

/// Decision matrices and labels of the most recent labeled days before the
/// current day.
#[derive(Debug)]
pub struct OptimizationWindow {
    days: Vec<WindowDay>,
    similarity: Similarity,
    prepared: Vec<Option<Prepared>>,
}

impl OptimizationWindow {
    pub fn new(days: Vec<WindowDay>, similarity: Similarity) -> Result<Self> {
        let mut prepared = Vec::with_capacity(days.len());
        for w in &days {
            if w.labels.len() != w.matrix.n_stocks() {
                return Err(Error::Contract(format!(
                    "{} labels for {} decision columns on {}",
                    w.labels.len(),
                    w.matrix.n_stocks(),
                    w.date()
                )));
            }
            let columns: Vec<usize> = (0..w.labels.len()).filter(|&s| w.labels[s].is_some()).collect();
            let values: Vec<f64> = columns.iter().map(|&s| w.labels[s].expect("filtered")).collect();
            let constant = values.windows(2).all(|p| p[0] == p[1]);
            prepared.push(if columns.len() < MIN_CROSS_SECTION || constant {
                None
            } else {
                let target = match similarity {
                    Similarity::Rank => average_ranks(&values),
                    Similarity::Linear => values,
                };
                Some(Prepared { columns, target })
            });
        }
        if let Some(n) = days.first().map(|w| w.matrix.n_type()) {
            if days.iter().any(|w| w.matrix.n_type() != n) {
                return Err(Error::Contract("window mixes decision matrices of different type counts".into()));
            }
        }
        Ok(Self {
            days,
            similarity,
            prepared,
        })
    }

    pub fn days(&self) -> &[WindowDay] {
        &self.days
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn label_dates(&self) -> Vec<NaiveDate> {
        self.days.iter().map(WindowDay::date).collect()
    }

    pub fn similarity(&self) -> Similarity {
        self.similarity
    }
}

/// Mean daily correlation between the signal reconstructed under `d` and the
/// labels. Days with fewer than three labels or a constant side are skipped;
/// if every day is skipped the objective is 0.
pub fn objective(d: &TypeDistribution, window: &OptimizationWindow, alpha: f64) -> f64 {
    let mut signal = Vec::new();
    let mut total = 0.0;
    let mut used = 0usize;
    for (w, prep) in window.days.iter().zip(&window.prepared) {
        let Some(prep) = prep else { continue };
        signal_values(w.matrix.values(), w.matrix.n_stocks(), d.weights(), alpha, &prep.columns, &mut signal);
        let score = match window.similarity {
            Similarity::Rank => rank_pearson(&average_ranks(&signal), &prep.target),
            Similarity::Linear => pearson(&signal, &prep.target),
        };
        if let Some(c) = score {
            total += c;
            used += 1;
        }
    }
    if used == 0 {
        0.0
    } else {
        total / used as f64
    }
}

/// Moves a random share of one type's weight to another type. The share is
/// uniform on `[0, step_scale * d_a * (T / T0 + 0.1)]`, capped at `d_a`.
pub fn propose_neighbor<R: Rng + ?Sized>(
    d: &TypeDistribution,
    temperature: f64,
    cfg: &AnnealConfig,
    rng: &mut R,
) -> TypeDistribution {
    let n = d.len();
    if n < 2 {
        return d.clone();
    }
    let a = rng.gen_range(0..n);
    let mut b = rng.gen_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    let bound = cfg.step_scale * d.get(a) * (temperature / cfg.initial_temperature + 0.1);
    let delta = (rng.gen::<f64>() * bound).min(d.get(a));
    let mut w = d.weights().to_vec();
    w[a] -= delta;
    w[b] += delta;
    w[a] = w[a].max(0.0);
    TypeDistribution::new(w).expect("mass transfer keeps weights valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub temperature: f64,
    pub proposal_objective: f64,
    pub accepted: bool,
    pub best_objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealOutcome {
    pub distribution: TypeDistribution,
    pub objective: f64,
    pub initial_objective: f64,
    pub trace: Vec<TraceRecord>,
}

/// Simulated annealing from `d_init`; returns the best distribution
/// evaluated (never worse than `d_init`). An empty window returns `d_init`.
pub fn optimize_distribution(
    window: &OptimizationWindow,
    d_init: &TypeDistribution,
    cfg: &AnnealConfig,
    alpha: f64,
) -> AnnealOutcome {
    let initial_objective = if window.is_empty() {
        0.0
    } else {
        objective(d_init, window, alpha)
    };
    let mut out = AnnealOutcome {
        distribution: d_init.clone(),
        objective: initial_objective,
        initial_objective,
        trace: Vec::new(),
    };
    if window.is_empty() {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = d_init.clone();
    let mut current_obj = initial_objective;
    let mut t = cfg.initial_temperature;
    for iteration in 0..cfg.max_iterations {
        let proposal = propose_neighbor(&current, t, cfg, &mut rng);
        let obj = objective(&proposal, window, alpha);
        let delta = obj - current_obj;
        let accepted = delta >= 0.0 || rng.gen::<f64>() < (delta / t).exp();
        if obj > out.objective {
            out.objective = obj;
            out.distribution = proposal.clone();
        }
        if accepted {
            current = proposal;
            current_obj = obj;
        }
        out.trace.push(TraceRecord {
            iteration,
            temperature: t,
            proposal_objective: obj,
            accepted,
            best_objective: out.objective,
        });
        t *= cfg.cooling_rate;
    }
    out
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let err = |e: csv::Error| Error::Store(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in trace {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
