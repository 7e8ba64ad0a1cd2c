//! Prompt templates and their rendering.
//!
//! Placeholders are `{name}` tokens with `name` in `[a-z_]+`. Rendering is a
//! single left-to-right pass, so substituted values are never re-scanned and
//! may contain braces freely.

use std::collections::BTreeMap;

use crate::agents::AgentStyle;
use crate::dataset::FeatureView;
use crate::error::{Error, Result};

const SYSTEM: &str = include_str!("prompts/system.txt");
const STYLE: &str = include_str!("prompts/style.txt");
const SELECTION: &str = include_str!("prompts/selection.txt");

/// Lead-in substituted for `{examples}` when generating a fresh style.
pub const STYLE_EXAMPLES: &str = "Here is an example.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system_text: String,
    pub style_template: String,
    pub decision_template: String,
    pub example_blocks: String,
}

impl Default for PromptBundle {
    fn default() -> Self {
        Self {
            system_text: SYSTEM.trim_end().to_string(),
            style_template: STYLE.to_string(),
            decision_template: SELECTION.to_string(),
            example_blocks: STYLE_EXAMPLES.to_string(),
        }
    }
}

/// Placeholder names appearing in `template`, in order of first appearance.
pub fn placeholders(template: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let len = after.bytes().take_while(|b| b.is_ascii_lowercase() || *b == b'_').count();
        if len > 0 && after.as_bytes().get(len) == Some(&b'}') {
            let name = &after[..len];
            if !out.iter().any(|n| n == name) {
                out.push(name.to_string());
            }
            rest = &after[len + 1..];
        } else {
            rest = after;
        }
    }
    out
}

/// Fills every placeholder of `template` from `values`. A placeholder without
/// a value is an error, as is a value naming no placeholder.
pub fn render(template: &str, values: &BTreeMap<&str, String>) -> Result<String> {
    let names = placeholders(template);
    if let Some(missing) = names.iter().find(|n| !values.contains_key(n.as_str())) {
        return Err(Error::Config(format!("prompt placeholder {{{missing}}} has no value")));
    }
    if let Some(extra) = values.keys().find(|k| !names.iter().any(|n| n == *k)) {
        return Err(Error::Config(format!("template has no {{{extra}}} placeholder")));
    }
    let mut out = String::with_capacity(template.len() + values.values().map(String::len).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let len = after.bytes().take_while(|b| b.is_ascii_lowercase() || *b == b'_').count();
        match values.get(&after[..len]) {
            Some(v) if len > 0 && after.as_bytes().get(len) == Some(&b'}') => {
                out.push_str(v);
                rest = &after[len + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Column descriptions as the JSON object the prompts show.
pub fn describe_columns(features: &[(String, String)]) -> String {
    let map: serde_json::Map<String, serde_json::Value> = features
        .iter()
        .map(|(name, desc)| (name.clone(), serde_json::Value::String(desc.clone())))
        .collect();
    serde_json::to_string_pretty(&serde_json::Value::Object(map)).expect("string map serializes")
}

fn format_value(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "NA".to_string(),
    }
}

/// The agent's pool as a CSV-like table with `Stock` and `Date` leading,
/// followed by any text items per stock.
pub fn stock_table(rows: &[FeatureView]) -> String {
    let mut out = String::from("Stock,Date");
    if let Some(first) = rows.first() {
        for (name, _) in &first.values {
            out.push(',');
            out.push_str(name);
        }
    }
    for row in rows {
        out.push('\n');
        out.push_str(&row.stock);
        out.push(',');
        out.push_str(&row.date.format("%Y%m%d").to_string());
        for (_, v) in &row.values {
            out.push(',');
            out.push_str(&format_value(*v));
        }
    }
    let texts: Vec<String> = rows
        .iter()
        .flat_map(|r| {
            r.texts
                .iter()
                .map(move |t| format!("{} [{}] {}: {}", r.stock, t.kind.as_str(), t.title, t.summary))
        })
        .collect();
    if !texts.is_empty() {
        out.push_str("\n\nText data:\n");
        out.push_str(&texts.join("\n"));
    }
    out
}

impl PromptBundle {
    /// User prompt for a new investing style.
    pub fn style_prompt(&self, features: &[(String, String)], macro_narrative: &str) -> Result<String> {
        self.style_like(self.example_blocks.clone(), features, macro_narrative)
    }

    /// User prompt for a strategy refresh: the style template again, with the
    /// type's current style leading the examples.
    pub fn strategy_prompt(
        &self,
        style: &AgentStyle,
        features: &[(String, String)],
        macro_narrative: &str,
    ) -> Result<String> {
        let current = serde_json::to_string_pretty(&style.to_prompt_json())?;
        let examples = format!(
            "Your current investing style is:\n{current}\n\nAdapt it to the latest data below and answer in the same JSON format.\n\n{}",
            self.example_blocks
        );
        self.style_like(examples, features, macro_narrative)
    }

    fn style_like(&self, examples: String, features: &[(String, String)], macro_narrative: &str) -> Result<String> {
        let values = BTreeMap::from([
            ("examples", examples),
            ("input_data", describe_columns(features)),
            ("macro_data", macro_narrative.to_string()),
        ]);
        render(&self.style_template, &values)
    }

    /// User prompt for one instance's daily selection.
    pub fn selection_prompt(
        &self,
        features: &[(String, String)],
        style: &AgentStyle,
        strategy: &str,
        rows: &[FeatureView],
        num_stocks: usize,
        repair_hint: Option<&str>,
    ) -> Result<String> {
        let style_json = serde_json::to_string_pretty(&style.to_prompt_json())?;
        let mut input = format!(
            "Input Data for investing decision:\n\n1. Input Data Description:\n\n{}\n\n2. Investing Style:\n\n{style_json}\n\nCurrent strategy: {}\n\n3. Input data:\n\n{}",
            describe_columns(features),
            strategy.trim(),
            stock_table(rows),
        );
        if let Some(hint) = repair_hint {
            input.push_str("\n\n");
            input.push_str(hint);
        }
        let values = BTreeMap::from([("num_stocks", num_stocks.to_string()), ("input_data", input)]);
        render(&self.decision_template, &values)
    }
}
