//! The daily simulation loop: strategy refresh, agent decisions, signal
//! aggregation with yesterday's distribution, the day's portfolio, and the
//! backward re-fit of the distribution on labels already realized.

mod config;
mod store;
mod sweep;

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;

use crate::agents::{
    build_population, execute_decisions, generate_strategies, AgentPopulation, CallCounts, CountingProvider,
    DecisionMatrix, DecisionProvider, DeterministicProvider, PopulationSpec, SelectionReport, StrategyBook,
};
use crate::aggregation::{aggregate, default_top_k, rank_stocks, top_k_portfolio, DailySignal, Portfolio, TypeDistribution};
use crate::dataset::{compute_labels, LabelMatrix, MarketDataset, LABEL_AVAILABILITY_LAG};
use crate::error::{Error, Result};
use crate::gateway::{CachedTransport, LlmProvider, ReplayTransport, Transport};
use crate::metrics::{factor_report, DailyCrossSection, MetricReport};
use crate::optimizer::{objective, optimize_distribution, write_trace_csv, OptimizationWindow, WindowDay};
use crate::seed;

pub use config::{apply_override, diff_keys, Ablations, DataConfig, ProviderKind, RunConfig, NO_MACRO_NARRATIVE};
pub use store::{DaySnapshot, DayStatus, RunStore, CONFIG_FILE, POPULATION_FILE, SIGNALS_FILE};
pub use sweep::{scaling_sweep, write_sweep_csv, AgentCount, SweepReport, SweepRow};

const PROVIDER_DOMAIN: u64 = 0xd1;

/// Invocation settings that do not change results and so stay out of the
/// configuration hash.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Stop after this many days in this invocation (the run stays resumable).
    pub max_days: Option<usize>,
    /// Write the annealing trace of every day under `traces/`.
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Days simulated by this invocation.
    pub days_run: usize,
    /// Days with a snapshot in the store.
    pub days_done: usize,
    pub days_total: usize,
    pub failed_days: Vec<NaiveDate>,
    pub provider_calls: CallCounts,
}

impl RunSummary {
    pub fn is_complete(&self) -> bool {
        self.days_done == self.days_total
    }
}

/// Calendar positions covered by the configured date range.
pub fn day_range(ds: &MarketDataset, config: &RunConfig) -> Result<Range<usize>> {
    let days = ds.calendar().days();
    let start = config.start.map_or(0, |s| days.partition_point(|d| *d < s));
    let end = config.end.map_or(days.len(), |e| days.partition_point(|d| *d <= e));
    if start >= end {
        return Err(Error::Config(format!(
            "date range {:?}..={:?} holds no trading day of the dataset",
            config.start, config.end
        )));
    }
    Ok(start..end)
}

fn narrative<'a>(ds: &'a MarketDataset, config: &RunConfig, day: usize) -> &'a str {
    if config.ablations.no_pmd {
        NO_MACRO_NARRATIVE
    } else {
        &ds.macro_day(day).narrative
    }
}

fn build_provider(config: &RunConfig, store: &RunStore) -> Result<Box<dyn DecisionProvider>> {
    Ok(match config.provider {
        ProviderKind::Deterministic | ProviderKind::Replay => Box::new(DeterministicProvider::with_settings(
            seed::derive(config.seed, &[PROVIDER_DOMAIN]),
            config.deterministic.clone(),
        )),
        ProviderKind::Llm => {
            let transport: Box<dyn Transport> = match &config.llm_fixtures {
                Some(dir) => Box::new(ReplayTransport::new(dir)),
                None => {
                    let http = config.llm.http_transport()?;
                    if config.llm_cache {
                        let dir = store.root().join("llm_cache");
                        Box::new(CachedTransport::new(http, &dir).map_err(|e| Error::io(dir, e))?)
                    } else {
                        Box::new(http)
                    }
                }
            };
            Box::new(LlmProvider::new(config.llm.clone(), transport))
        }
    })
}

/// Label-day positions the optimizer may use at the end of `day`: the most
/// recent `omega` days with cached decisions whose labels are already known.
fn window_days(matrices: &BTreeMap<usize, DecisionMatrix>, labels: &LabelMatrix, day: usize, omega: usize) -> Vec<usize> {
    let mut out: Vec<usize> = matrices
        .keys()
        .rev()
        .copied()
        .filter(|&t| labels.is_available(t, day))
        .take(omega)
        .collect();
    out.reverse();
    out
}

fn build_window(
    ds: &MarketDataset,
    config: &RunConfig,
    matrices: &BTreeMap<usize, DecisionMatrix>,
    labels: &LabelMatrix,
    day: usize,
) -> Result<OptimizationWindow> {
    let mut days = Vec::new();
    for t in window_days(matrices, labels, day, config.omega_opt) {
        if t + LABEL_AVAILABILITY_LAG > day {
            return Err(Error::Contract(format!(
                "label of {} is not known at the end of {}",
                ds.calendar().date(t),
                ds.calendar().date(day)
            )));
        }
        days.push(WindowDay {
            day: t,
            matrix: matrices[&t].clone(),
            labels: labels.day(t).to_vec(),
        });
    }
    OptimizationWindow::new(days, config.similarity)
}

/// Signal restricted to stocks with a bar on `day`.
fn day_signal(ds: &MarketDataset, v: &DecisionMatrix, d: &TypeDistribution, alpha: f64, day: usize) -> Result<DailySignal> {
    let mut signal = aggregate(v, d, alpha, ds.stocks())?;
    let universe = ds.day_universe(day);
    let mut keep = vec![false; ds.stocks().len()];
    for s in universe {
        keep[s] = true;
    }
    let mut i = 0;
    signal.records.retain(|_| {
        i += 1;
        keep[i - 1]
    });
    Ok(signal)
}

struct Outcome {
    matrix: DecisionMatrix,
    report: SelectionReport,
}

struct Simulation<'a> {
    ds: &'a MarketDataset,
    config: &'a RunConfig,
    store: &'a RunStore,
    opts: RunOptions,
    labels: LabelMatrix,
    provider: CountingProvider<Box<dyn DecisionProvider>>,
    replay: Option<RunStore>,
    population: AgentPopulation,
    book: StrategyBook,
    d: TypeDistribution,
    matrices: BTreeMap<usize, DecisionMatrix>,
    signals: Vec<DailySignal>,
}

impl Simulation<'_> {
    fn decide(&mut self, day: usize) -> Result<Outcome> {
        let date = self.ds.calendar().date(day);
        if let Some(replay) = &self.replay {
            let records = replay.read_decisions(date).map_err(|e| match e {
                Error::MissingFile(f) => Error::Provider(crate::agents::ProviderError::Unavailable(format!(
                    "no recorded decisions: {f}"
                ))),
                other => other,
            })?;
            self.store.write_decisions(date, &records)?;
            let matrix =
                DecisionMatrix::from_records(date, self.population.n_type(), self.population.n_inv, self.ds.stocks(), &records)?;
            return Ok(Outcome { matrix, report: SelectionReport::default() });
        }
        if self.config.ablations.daily_pool_update {
            self.population.redraw_pools(self.ds, day)?;
        }
        let strategies = generate_strategies(
            &self.population,
            self.ds.calendar(),
            self.ds.schema(),
            day,
            narrative(self.ds, self.config, day),
            &self.provider,
            self.config.strategy_schedule(),
            &mut self.book,
        )?;
        self.store.write_strategies(date, &strategies)?;
        let out = execute_decisions(&self.population, self.ds, day, &strategies, &self.provider)?;
        self.store.write_decisions(date, &out.records)?;
        Ok(Outcome { matrix: out.matrix, report: out.report })
    }

    fn step(&mut self, day: usize) -> Result<DaySnapshot> {
        let date = self.ds.calendar().date(day);
        let alpha = self.config.effective_alpha();
        let d_prev = self.d.clone();
        let outcome = match self.decide(day) {
            Ok(o) => o,
            Err(Error::Provider(e)) => {
                log::warn!("{date}: day failed: {e}");
                return Ok(DaySnapshot {
                    date,
                    status: DayStatus::Failed { reason: e.to_string() },
                    distribution: d_prev.clone(),
                    signal_distribution: d_prev,
                    alpha,
                    objective: None,
                    initial_objective: None,
                    window_label_dates: Vec::new(),
                    decisions: None,
                    portfolio: Portfolio { holdings: Vec::new() },
                    selection: SelectionReport::default(),
                });
            }
            Err(e) => return Err(e),
        };

        let signal = day_signal(self.ds, &outcome.matrix, &d_prev, alpha, day)?;
        let ranked = rank_stocks(&signal);
        let k = self.config.top_k.unwrap_or_else(|| default_top_k(ranked.len()));
        let portfolio = top_k_portfolio(&ranked, k);
        self.signals.push(signal);
        self.matrices.insert(day, outcome.matrix);

        let window = build_window(self.ds, self.config, &self.matrices, &self.labels, day)?;
        let (d_new, obj, init_obj) = if window.is_empty() {
            (d_prev.clone(), None, None)
        } else if self.config.ablations.no_bo {
            let u = TypeDistribution::uniform(d_prev.len());
            let o = objective(&u, &window, alpha);
            (u, Some(o), Some(o))
        } else {
            let mut anneal = self.config.anneal;
            anneal.seed = seed::derive(self.config.anneal.seed, &[self.config.seed, day as u64]);
            let out = optimize_distribution(&window, &d_prev, &anneal, alpha);
            if self.opts.trace {
                write_trace_csv_atomic(&self.store.trace_path(date), &out.trace)?;
            }
            (out.distribution, Some(out.objective), Some(out.initial_objective))
        };
        // Matrices older than the window are never needed again.
        if window.len() == self.config.omega_opt {
            let oldest = window.days()[0].day;
            self.matrices.retain(|&t, _| t >= oldest);
        }
        self.d = d_new.clone();
        Ok(DaySnapshot {
            date,
            status: DayStatus::Ok,
            distribution: d_new,
            signal_distribution: d_prev,
            alpha,
            objective: obj,
            initial_objective: init_obj,
            window_label_dates: window.label_dates(),
            decisions: Some(format!("decisions/{}.jsonl", date.format("%Y-%m-%d"))),
            portfolio,
            selection: outcome.report,
        })
    }
}

fn write_trace_csv_atomic(path: &Path, trace: &[crate::optimizer::TraceRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_trace_csv(path, trace)
}

fn check_population(population: &AgentPopulation, config: &RunConfig) -> Result<()> {
    if population.n_type() != config.n_type || population.n_inv != config.n_inv {
        return Err(Error::Store(format!(
            "stored population is {}x{}, configuration asks for {}x{}",
            population.n_type(),
            population.n_inv,
            config.n_type,
            config.n_inv
        )));
    }
    Ok(())
}

/// Runs (or continues) the simulation into the store at `out`. A store
/// holding a different configuration is refused.
pub fn run_simulation(ds: &MarketDataset, config: &RunConfig, out: &Path, opts: RunOptions) -> Result<RunSummary> {
    config.validate()?;
    let store = RunStore::new(out);
    if store.exists() {
        check_config(&store, config)?;
    } else {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        store.write_config(config)?;
    }
    drive(ds, config, &store, opts)
}

/// Continues a stored run from the day after its last snapshot.
pub fn resume(ds: &MarketDataset, config: &RunConfig, out: &Path, opts: RunOptions) -> Result<RunSummary> {
    config.validate()?;
    let store = RunStore::new(out);
    if !store.exists() {
        return Err(Error::MissingFile(store.config_path().display().to_string()));
    }
    check_config(&store, config)?;
    drive(ds, config, &store, opts)
}

fn check_config(store: &RunStore, config: &RunConfig) -> Result<()> {
    let stored = store.read_config_value()?;
    let current: serde_json::Value = serde_json::from_str(&config.canonical_json())?;
    let keys = diff_keys(&stored, &current);
    if keys.is_empty() {
        Ok(())
    } else {
        Err(Error::ConfigMismatch { keys })
    }
}

fn drive(ds: &MarketDataset, config: &RunConfig, store: &RunStore, opts: RunOptions) -> Result<RunSummary> {
    let range = day_range(ds, config)?;
    let cal = ds.calendar();
    let provider = CountingProvider::new(build_provider(config, store)?);
    let replay = match config.provider {
        ProviderKind::Replay => {
            let from = RunStore::new(config.replay_from.clone().unwrap_or_default());
            if !from.has_population() {
                return Err(Error::MissingFile(from.root().join(POPULATION_FILE).display().to_string()));
            }
            Some(from)
        }
        _ => None,
    };

    let population = if store.has_population() {
        store.read_population()?
    } else {
        let pop = match &replay {
            Some(from) => from.read_population()?,
            None => build_population(
                ds,
                &PopulationSpec {
                    n_type: config.n_type,
                    n_inv: config.n_inv,
                    n_sel: config.n_sel,
                    seed: config.seed,
                    feature_subsets: config.feature_subsets.clone(),
                },
                &provider,
                cal.date(range.start),
                narrative(ds, config, range.start),
            )?,
        };
        store.write_population(&pop)?;
        pop
    };
    check_population(&population, config)?;

    // Rebuild state from completed days.
    let done: Vec<DaySnapshot> = store
        .snapshots()?
        .into_iter()
        .filter(|s| cal.index_of(s.date).is_some_and(|j| range.contains(&j)))
        .collect();
    let next = match done.last() {
        Some(s) => cal.index_of(s.date).expect("filtered") + 1,
        None => range.start,
    };
    let mut d = TypeDistribution::uniform(config.n_type);
    let mut book = StrategyBook::new(config.n_type);
    let mut matrices = BTreeMap::new();
    let mut signals = Vec::new();
    if let Some(last) = done.last() {
        d = last.distribution.clone();
        if d.len() != config.n_type {
            return Err(Error::Store(format!("snapshot of {} holds {} weights", last.date, d.len())));
        }
        if replay.is_none() {
            if let Ok(s) = store.read_strategies(last.date) {
                book = StrategyBook::from_strategies(config.n_type, s)?;
            }
        }
        for s in done.iter().filter(|s| s.is_ok()) {
            let j = cal.index_of(s.date).expect("filtered");
            if j + LABEL_AVAILABILITY_LAG + config.omega_opt + 1 < next {
                continue;
            }
            let records = store.read_decisions(s.date)?;
            matrices.insert(
                j,
                DecisionMatrix::from_records(s.date, config.n_type, config.n_inv, ds.stocks(), &records)?,
            );
        }
        signals = store.read_signals()?;
        signals.retain(|s| s.date <= last.date);
    }

    let mut sim = Simulation {
        ds,
        config,
        store,
        opts,
        labels: compute_labels(ds),
        provider,
        replay,
        population,
        book,
        d,
        matrices,
        signals,
    };

    let mut days_run = 0;
    let last_day = match opts.max_days {
        Some(n) => range.end.min(next.saturating_add(n)),
        None => range.end,
    };
    for day in next..last_day {
        let snapshot = sim.step(day)?;
        if snapshot.is_ok() {
            store.write_signals(&sim.signals)?;
        }
        store.write_snapshot(&snapshot)?;
        let top: Vec<String> = {
            let mut w: Vec<(usize, f64)> = snapshot.distribution.weights().iter().copied().enumerate().collect();
            w.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            w.iter().take(5).map(|(i, v)| format!("{i}:{v:.3}")).collect()
        };
        log::info!(
            "{} objective={} top=[{}]{}",
            snapshot.date,
            snapshot.objective.map_or("-".to_string(), |o| format!("{o:.4}")),
            top.join(" "),
            if snapshot.is_ok() { "" } else { " FAILED" }
        );
        days_run += 1;
    }

    let all = store.snapshots()?;
    let failed_days = all.iter().filter(|s| !s.is_ok()).map(|s| s.date).collect();
    let days_done = all
        .iter()
        .filter(|s| cal.index_of(s.date).is_some_and(|j| range.contains(&j)))
        .count();
    Ok(RunSummary {
        days_run,
        days_done,
        days_total: range.len(),
        failed_days,
        provider_calls: sim.provider.counts(),
    })
}

/// Daily IC / rank IC of stored signals against realized labels.
pub fn evaluate_signals(ds: &MarketDataset, signals: &[DailySignal]) -> MetricReport {
    let labels = compute_labels(ds);
    let sections: Vec<DailyCrossSection> = signals
        .iter()
        .filter_map(|sig| {
            let day = ds.calendar().index_of(sig.date)?;
            let (signal, returns) = sig
                .records
                .iter()
                .filter_map(|r| {
                    let s = ds.stock_index(&r.stock)?;
                    labels.get(day, s).map(|y| (r.signal, y))
                })
                .unzip();
            Some(DailyCrossSection { date: sig.date, signal, returns })
        })
        .collect();
    factor_report(&sections)
}
