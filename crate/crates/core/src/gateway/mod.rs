//! Decision provider backed by an OpenAI-compatible chat-completion endpoint.
//!
//! Requests are rendered from the bundled prompt templates, answers are
//! parsed from the first JSON object in the reply, and malformed answers are
//! retried with a repair instruction appended to the user prompt.

mod json;
mod prompts;
mod throttle;
mod transport;

use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::agents::{
    repair_hint, selection_problem, AgentStyle, DecisionProvider, HoldingPeriod, PoolSelector, ProviderError,
    RiskAppetite, SelectionRequest, StrategyRequest, StyleRequest,
};
use crate::error::{Error, Result};

pub use json::extract_object;
pub use prompts::{describe_columns, placeholders, render, stock_table, PromptBundle};
pub use throttle::Throttle;
pub use transport::{CachedTransport, ChatMessage, ChatRequest, HttpTransport, ReplayTransport, Transport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    /// Base URL; requests go to `{endpoint_url}/chat/completions`.
    pub endpoint_url: String,
    pub model_name: String,
    pub style_temperature: f64,
    pub selection_temperature: f64,
    /// Extra attempts after a transport failure or an unparseable answer.
    pub max_retries: u32,
    pub requests_per_minute: u32,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// Base delay before retrying a transport failure; doubles per attempt.
    pub retry_backoff_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://localhost:8000/v1".into(),
            model_name: "default".into(),
            style_temperature: 0.7,
            selection_temperature: 0.2,
            max_retries: 2,
            requests_per_minute: 60,
            api_key_env: "MASS_LLM_API_KEY".into(),
            timeout_secs: 120,
            retry_backoff_ms: 1000,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<()> {
        let uri: ureq::http::Uri = self
            .endpoint_url
            .parse()
            .map_err(|e| Error::Config(format!("endpoint_url {:?}: {e}", self.endpoint_url)))?;
        if !matches!(uri.scheme_str(), Some("http" | "https")) || uri.host().is_none() {
            return Err(Error::Config(format!(
                "endpoint_url {:?} must be an absolute http(s) URL",
                self.endpoint_url
            )));
        }
        for (name, t) in [("style_temperature", self.style_temperature), ("selection_temperature", self.selection_temperature)] {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::Config(format!("{name} must be a non-negative number")));
            }
        }
        if self.requests_per_minute == 0 {
            return Err(Error::Config("requests_per_minute must be positive".into()));
        }
        if self.model_name.trim().is_empty() || self.api_key_env.trim().is_empty() {
            return Err(Error::Config("model_name and api_key_env must be set".into()));
        }
        Ok(())
    }

    /// Live transport with the key read from `api_key_env`.
    pub fn http_transport(&self) -> Result<HttpTransport> {
        self.validate()?;
        let key = std::env::var(&self.api_key_env)
            .map_err(|_| Error::Config(format!("environment variable {} is not set", self.api_key_env)))?;
        Ok(HttpTransport::new(
            &self.endpoint_url,
            key,
            Duration::from_secs(self.timeout_secs),
            self.requests_per_minute,
        ))
    }
}

pub struct LlmProvider {
    id: String,
    config: ProviderConfig,
    prompts: PromptBundle,
    transport: Box<dyn Transport>,
}

impl std::fmt::Debug for LlmProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmProvider").field("id", &self.id).finish_non_exhaustive()
    }
}

fn key_of(s: &str) -> String {
    s.chars().filter(char::is_ascii_alphanumeric).collect::<String>().to_lowercase()
}

/// Case- and punctuation-insensitive key lookup.
fn field<'a>(map: &'a Map<String, Value>, name: &str) -> Option<&'a Value> {
    let want = key_of(name);
    map.iter().find(|(k, _)| key_of(k) == want).map(|(_, v)| v)
}

fn text_of(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn unit_interval(details: &Map<String, Value>, name: &str) -> std::result::Result<f64, String> {
    let v = field(details, name)
        .and_then(json::as_number)
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("\"{name}\" is not a number"))?;
    if !(0.0..=1.0).contains(&v) {
        log::warn!("{name} {v} clamped into [0, 1]");
    }
    Ok(v.clamp(0.0, 1.0))
}

fn strings(v: &Value) -> Vec<String> {
    match v {
        Value::String(s) => vec![s.clone()],
        Value::Array(items) => items.iter().flat_map(strings).collect(),
        _ => Vec::new(),
    }
}

fn pool_selector(details: &Map<String, Value>) -> std::result::Result<PoolSelector, String> {
    let raw = field(details, "StockPoolSelector").ok_or("missing \"StockPoolSelector\"")?;
    let (name, mut industries) = match raw {
        Value::String(s) => (s.clone(), Vec::new()),
        Value::Array(items) => {
            let mut all = items.iter().flat_map(strings);
            (all.next().unwrap_or_default(), all.collect())
        }
        Value::Object(m) => match m.iter().next() {
            Some((k, v)) => (k.clone(), strings(v)),
            None => (String::new(), Vec::new()),
        },
        _ => (String::new(), Vec::new()),
    };
    // "IndustryBasisStockSelector: [bank, tech]" written as one string.
    let name = match name.split_once(':') {
        Some((head, tail)) => {
            industries.extend(
                tail.split(',')
                    .map(|t| t.trim_matches(|c: char| c.is_whitespace() || "[]'\"".contains(c)).to_string())
                    .filter(|t| !t.is_empty()),
            );
            head.to_string()
        }
        None => name,
    };
    if let Some(v) = field(details, "Industries") {
        industries.extend(strings(v));
    }
    PoolSelector::parse(&name, industries).ok_or_else(|| format!("unusable StockPoolSelector {raw}"))
}

/// Reads an investing-style answer.
pub fn parse_style(text: &str) -> std::result::Result<AgentStyle, String> {
    let obj = extract_object(text).ok_or("no JSON object in the answer")?;
    let details = match field(&obj, "Details") {
        Some(Value::Object(d)) => d,
        _ => return Err("missing \"Details\" object".into()),
    };
    let label = |name: &str| field(details, name).and_then(text_of).ok_or_else(|| format!("missing \"{name}\""));
    let risk = label("Risk Appetite")?;
    let risk_appetite = RiskAppetite::parse(&risk).ok_or_else(|| format!("unknown Risk Appetite {risk:?}"))?;
    let hold = label("Holding Period")?;
    let holding_period = HoldingPeriod::parse(&hold).ok_or_else(|| format!("unknown Holding Period {hold:?}"))?;
    Ok(AgentStyle {
        outline: field(&obj, "Outline").and_then(text_of).unwrap_or_default(),
        risk_appetite,
        holding_period,
        strategy_consistency: unit_interval(details, "Strategy Consistency")?,
        rationality: unit_interval(details, "Rationality")?,
        pool_selector: pool_selector(details)?,
        others: field(details, "Others").and_then(text_of).unwrap_or_default(),
    })
}

/// Reads a stock-selection answer: the `"Stock"` list, in the given order.
pub fn parse_selection(text: &str) -> std::result::Result<Vec<String>, String> {
    let obj = extract_object(text).ok_or("no JSON object in the answer")?;
    match field(&obj, "Stock") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| text_of(v).map(|s| s.trim().to_string()).ok_or_else(|| format!("non-text stock code {v}")))
            .collect(),
        _ => Err("missing \"Stock\" list".into()),
    }
}

fn parse_strategy(text: &str) -> std::result::Result<String, String> {
    if let Some(obj) = extract_object(text) {
        return Ok(Value::Object(obj).to_string());
    }
    let t = text.trim();
    if t.is_empty() {
        Err("empty answer".into())
    } else {
        Ok(t.to_string())
    }
}

impl LlmProvider {
    pub fn new(config: ProviderConfig, transport: Box<dyn Transport>) -> Self {
        Self {
            id: format!("llm:{}", config.model_name),
            config,
            prompts: PromptBundle::default(),
            transport,
        }
    }

    pub fn with_prompts(mut self, prompts: PromptBundle) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn transport(&self) -> &dyn Transport {
        self.transport.as_ref()
    }

    fn request(&self, user: &str, temperature: f64) -> ChatRequest {
        ChatRequest {
            model: self.config.model_name.clone(),
            messages: vec![ChatMessage::system(&self.prompts.system_text), ChatMessage::user(user)],
            temperature,
        }
    }

    /// First request sent for a style (useful for recording fixtures).
    pub fn style_chat(&self, req: &StyleRequest<'_>) -> Result<ChatRequest> {
        let prompt = self.prompts.style_prompt(req.features, req.macro_narrative)?;
        Ok(self.request(&prompt, self.config.style_temperature))
    }

    pub fn strategy_chat(&self, req: &StrategyRequest<'_>) -> Result<ChatRequest> {
        let prompt = self.prompts.strategy_prompt(req.style, req.features, req.macro_narrative)?;
        Ok(self.request(&prompt, self.config.style_temperature))
    }

    /// Request sent for a selection, with `hint` as the repair instruction.
    pub fn selection_chat(&self, req: &SelectionRequest<'_>, hint: Option<&str>) -> Result<ChatRequest> {
        let prompt = self
            .prompts
            .selection_prompt(req.features, req.style, req.strategy, req.rows, req.num_stocks, hint)?;
        Ok(self.request(&prompt, self.config.selection_temperature))
    }

    /// The repair instruction sent after an invalid selection.
    pub fn selection_repair_hint(problem: &str, num_stocks: usize) -> String {
        repair_hint(problem, num_stocks)
    }

    /// Sends `user`, parsing the answer with `parse`. Transport failures are
    /// retried with backoff; unparseable answers are retried with `repair`
    /// plus the problem appended to the prompt.
    fn call<T>(
        &self,
        chat: Result<ChatRequest>,
        repair: &str,
        parse: impl Fn(&str) -> std::result::Result<T, String>,
    ) -> std::result::Result<T, ProviderError> {
        let first = chat.map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        let user = first.messages.last().map(|m| m.content.clone()).unwrap_or_default();
        let mut chat = first;
        let mut last = ProviderError::Unavailable("no attempt made".into());
        for attempt in 0..=self.config.max_retries {
            let text = match self.transport.complete(&chat) {
                Ok(t) => t,
                Err(ProviderError::Transport(msg)) => {
                    log::warn!("{}: attempt {} failed: {msg}", self.id, attempt + 1);
                    last = ProviderError::Transport(msg);
                    let backoff = self.config.retry_backoff_ms.saturating_mul(1 << attempt.min(10));
                    if attempt < self.config.max_retries && backoff > 0 {
                        std::thread::sleep(Duration::from_millis(backoff));
                    }
                    continue;
                }
                Err(e) => return Err(e),
            };
            match parse(&text) {
                Ok(v) => return Ok(v),
                Err(problem) => {
                    log::warn!("{}: unusable answer ({problem})", self.id);
                    if let Some(m) = chat.messages.last_mut() {
                        m.content = format!("{user}\n\nYour previous answer could not be used: {problem}. {repair}");
                    }
                    last = ProviderError::Malformed(problem);
                }
            }
        }
        Err(last)
    }
}

const STYLE_REPAIR: &str = "Answer with one JSON object holding \"Outline\" and \"Details\" exactly in the format above.";
const SELECTION_REPAIR: &str = "Answer with one JSON object whose key is \"Stock\" and whose value is a list of stock codes.";

impl DecisionProvider for LlmProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate_style(&self, req: &StyleRequest<'_>) -> std::result::Result<AgentStyle, ProviderError> {
        if req.macro_narrative.trim().is_empty() {
            return Err(ProviderError::Unavailable("style generation needs a macro narrative".into()));
        }
        self.call(self.style_chat(req), STYLE_REPAIR, parse_style)
    }

    fn generate_strategy(&self, req: &StrategyRequest<'_>) -> std::result::Result<String, ProviderError> {
        self.call(self.strategy_chat(req), STYLE_REPAIR, parse_strategy)
    }

    fn select_stocks(&self, req: &SelectionRequest<'_>) -> std::result::Result<Vec<String>, ProviderError> {
        let first = self.call(self.selection_chat(req, req.repair_hint), SELECTION_REPAIR, parse_selection)?;
        if req.repair_hint.is_some() {
            return Ok(first);
        }
        let legal: HashSet<&str> = req.rows.iter().map(|r| r.stock.as_str()).collect();
        match selection_problem(&first, &legal, req.num_stocks) {
            None => Ok(first),
            Some(problem) => {
                log::debug!("{}: selection retry ({problem})", self.id);
                let hint = repair_hint(&problem, req.num_stocks);
                self.call(self.selection_chat(req, Some(&hint)), SELECTION_REPAIR, parse_selection)
            }
        }
    }

    fn validates_selections(&self) -> bool {
        true
    }
}
