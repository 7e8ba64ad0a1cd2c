use std::sync::atomic::{AtomicUsize, Ordering};

use chrono::NaiveDate;
use thiserror::Error;

use super::AgentStyle;
use crate::dataset::FeatureView;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("unusable response: {0}")]
    Malformed(String),
    #[error("{0}")]
    Unavailable(String),
}

/// Inputs for generating an agent type's investing style.
#[derive(Debug, Clone)]
pub struct StyleRequest<'a> {
    pub type_index: usize,
    pub date: NaiveDate,
    /// Visible feature columns with their descriptions, schema order.
    pub features: &'a [(String, String)],
    pub macro_narrative: &'a str,
}

/// Inputs for a type's periodic strategy refresh.
#[derive(Debug, Clone)]
pub struct StrategyRequest<'a> {
    pub type_index: usize,
    pub date: NaiveDate,
    pub style: &'a AgentStyle,
    pub features: &'a [(String, String)],
    pub macro_narrative: &'a str,
}

/// Inputs for one agent instance's daily stock selection.
#[derive(Debug, Clone)]
pub struct SelectionRequest<'a> {
    pub type_index: usize,
    pub instance_index: usize,
    pub date: NaiveDate,
    pub strategy: &'a str,
    pub style: &'a AgentStyle,
    pub features: &'a [(String, String)],
    /// One row per pool stock tradable on `date`.
    pub rows: &'a [FeatureView],
    pub num_stocks: usize,
    /// Set on the single repair retry after an invalid answer.
    pub repair_hint: Option<&'a str>,
}

/// Backend making the agents' decisions: an LLM gateway, a replay of recorded
/// answers, or a deterministic test double.
pub trait DecisionProvider: Send + Sync {
    fn id(&self) -> &str;

    fn generate_style(&self, req: &StyleRequest<'_>) -> Result<AgentStyle, ProviderError>;

    fn generate_strategy(&self, req: &StrategyRequest<'_>) -> Result<String, ProviderError>;

    /// Returns stock codes in the provider's preference order. Validation
    /// against the pool is the caller's job.
    fn select_stocks(&self, req: &SelectionRequest<'_>) -> Result<Vec<String>, ProviderError>;

    /// True when `select_stocks` already validates its answer and spends the
    /// repair retry itself; the caller then goes straight to repairing.
    fn validates_selections(&self) -> bool {
        false
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct CallCounts {
    pub styles: usize,
    pub strategies: usize,
    pub selections: usize,
}

impl CallCounts {
    pub fn total(&self) -> usize {
        self.styles + self.strategies + self.selections
    }
}

/// Wraps a provider and counts calls by kind.
#[derive(Debug, Default)]
pub struct CountingProvider<P> {
    inner: P,
    styles: AtomicUsize,
    strategies: AtomicUsize,
    selections: AtomicUsize,
}

impl<P> CountingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            styles: AtomicUsize::new(0),
            strategies: AtomicUsize::new(0),
            selections: AtomicUsize::new(0),
        }
    }

    pub fn counts(&self) -> CallCounts {
        CallCounts {
            styles: self.styles.load(Ordering::SeqCst),
            strategies: self.strategies.load(Ordering::SeqCst),
            selections: self.selections.load(Ordering::SeqCst),
        }
    }

    pub fn reset(&self) {
        self.styles.store(0, Ordering::SeqCst);
        self.strategies.store(0, Ordering::SeqCst);
        self.selections.store(0, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: DecisionProvider> DecisionProvider for CountingProvider<P> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn generate_style(&self, req: &StyleRequest<'_>) -> Result<AgentStyle, ProviderError> {
        self.styles.fetch_add(1, Ordering::SeqCst);
        self.inner.generate_style(req)
    }

    fn generate_strategy(&self, req: &StrategyRequest<'_>) -> Result<String, ProviderError> {
        self.strategies.fetch_add(1, Ordering::SeqCst);
        self.inner.generate_strategy(req)
    }

    fn select_stocks(&self, req: &SelectionRequest<'_>) -> Result<Vec<String>, ProviderError> {
        self.selections.fetch_add(1, Ordering::SeqCst);
        self.inner.select_stocks(req)
    }

    fn validates_selections(&self) -> bool {
        self.inner.validates_selections()
    }
}

impl<P: DecisionProvider + ?Sized> DecisionProvider for Box<P> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn generate_style(&self, req: &StyleRequest<'_>) -> Result<AgentStyle, ProviderError> {
        (**self).generate_style(req)
    }

    fn generate_strategy(&self, req: &StrategyRequest<'_>) -> Result<String, ProviderError> {
        (**self).generate_strategy(req)
    }

    fn select_stocks(&self, req: &SelectionRequest<'_>) -> Result<Vec<String>, ProviderError> {
        (**self).select_stocks(req)
    }

    fn validates_selections(&self) -> bool {
        (**self).validates_selections()
    }
}

impl<P: DecisionProvider + ?Sized> DecisionProvider for std::sync::Arc<P> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn generate_style(&self, req: &StyleRequest<'_>) -> Result<AgentStyle, ProviderError> {
        (**self).generate_style(req)
    }

    fn generate_strategy(&self, req: &StrategyRequest<'_>) -> Result<String, ProviderError> {
        (**self).generate_strategy(req)
    }

    fn select_stocks(&self, req: &SelectionRequest<'_>) -> Result<Vec<String>, ProviderError> {
        (**self).select_stocks(req)
    }

    fn validates_selections(&self) -> bool {
        (**self).validates_selections()
    }
}
