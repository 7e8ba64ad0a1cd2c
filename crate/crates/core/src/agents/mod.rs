//! Heterogeneous investor population: agent types with styles and visible
//! feature subsets, instances with static candidate pools, and the daily
//! strategy / stock-selection loop driven through a [`DecisionProvider`].

mod decisions;
mod deterministic;
mod pool;
mod population;
mod provider;
mod strategies;

use serde::{Deserialize, Serialize};

pub use decisions::{
    execute_decisions, read_decision_cache, selection_count, write_decision_cache, DayDecisions,
    selection_problem, DecisionMatrix, DecisionRecord, SelectionReport,
};
pub(crate) use decisions::repair_hint;
pub use deterministic::{DeterministicProvider, DeterministicSettings};
pub use pool::{select_pool, PoolCandidate, PoolDraw};
pub use population::{build_population, AgentInstance, AgentPopulation, AgentType, PopulationSpec};
pub use provider::{
    CallCounts, CountingProvider, DecisionProvider, ProviderError, SelectionRequest, StrategyRequest,
    StyleRequest,
};
pub use strategies::{generate_strategies, DailyStrategy, StrategyBook, StrategySchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RiskAppetite {
    #[serde(rename = "conservative")]
    Conservative,
    #[serde(rename = "moderately conservative")]
    ModeratelyConservative,
    #[serde(rename = "moderate")]
    Moderate,
    #[serde(rename = "moderately aggressive")]
    ModeratelyAggressive,
    #[serde(rename = "aggressive")]
    Aggressive,
}

impl RiskAppetite {
    pub const ALL: [RiskAppetite; 5] = [
        RiskAppetite::Conservative,
        RiskAppetite::ModeratelyConservative,
        RiskAppetite::Moderate,
        RiskAppetite::ModeratelyAggressive,
        RiskAppetite::Aggressive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RiskAppetite::Conservative => "conservative",
            RiskAppetite::ModeratelyConservative => "moderately conservative",
            RiskAppetite::Moderate => "moderate",
            RiskAppetite::ModeratelyAggressive => "moderately aggressive",
            RiskAppetite::Aggressive => "aggressive",
        }
    }

    /// Case-insensitive match on the label text.
    pub fn parse(s: &str) -> Option<Self> {
        let s = normalize_label(s);
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HoldingPeriod {
    #[serde(rename = "one day")]
    OneDay,
    #[serde(rename = "about one week")]
    AboutOneWeek,
    #[serde(rename = "about one month")]
    AboutOneMonth,
    #[serde(rename = "about half a year")]
    AboutHalfAYear,
    #[serde(rename = "more than one year")]
    MoreThanOneYear,
}

impl HoldingPeriod {
    pub const ALL: [HoldingPeriod; 5] = [
        HoldingPeriod::OneDay,
        HoldingPeriod::AboutOneWeek,
        HoldingPeriod::AboutOneMonth,
        HoldingPeriod::AboutHalfAYear,
        HoldingPeriod::MoreThanOneYear,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HoldingPeriod::OneDay => "one day",
            HoldingPeriod::AboutOneWeek => "about one week",
            HoldingPeriod::AboutOneMonth => "about one month",
            HoldingPeriod::AboutHalfAYear => "about half a year",
            HoldingPeriod::MoreThanOneYear => "more than one year",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = normalize_label(s);
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

fn normalize_label(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// How an instance draws its candidate pool from the universe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "industries")]
pub enum PoolSelector {
    Random,
    IndustryEqual,
    MvEqual,
    IndustryBasis(Vec<String>),
}

impl PoolSelector {
    pub fn name(&self) -> &'static str {
        match self {
            PoolSelector::Random => "RandomStockSelector",
            PoolSelector::IndustryEqual => "IndustryEqualStockSelector",
            PoolSelector::MvEqual => "MVEqualStockSelector",
            PoolSelector::IndustryBasis(_) => "IndustryBasisStockSelector",
        }
    }

    /// Parses a selector name as written in style responses. Accepts the full
    /// class-style names and the short forms, case-insensitively.
    /// `IndustryBasis` takes its industry list from `industries`.
    pub fn parse(name: &str, industries: Vec<String>) -> Option<Self> {
        let key: String = name
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        let key = key.strip_suffix("stockselector").unwrap_or(&key);
        match key {
            "random" => Some(PoolSelector::Random),
            "industryequal" => Some(PoolSelector::IndustryEqual),
            "mvequal" => Some(PoolSelector::MvEqual),
            "industrybasis" if !industries.is_empty() => Some(PoolSelector::IndustryBasis(industries)),
            _ => None,
        }
    }
}

/// Abstract investing style of an agent type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStyle {
    pub outline: String,
    pub risk_appetite: RiskAppetite,
    pub holding_period: HoldingPeriod,
    pub strategy_consistency: f64,
    pub rationality: f64,
    pub pool_selector: PoolSelector,
    pub others: String,
}

impl AgentStyle {
    /// Renders the style in the JSON shape the prompts use.
    pub fn to_prompt_json(&self) -> serde_json::Value {
        let mut details = serde_json::json!({
            "Risk Appetite": self.risk_appetite.as_str(),
            "Holding Period": self.holding_period.as_str(),
            "Strategy Consistency": self.strategy_consistency.to_string(),
            "Rationality": self.rationality.to_string(),
            "StockPoolSelector": self.pool_selector.name(),
            "Others": self.others,
        });
        if let PoolSelector::IndustryBasis(ind) = &self.pool_selector {
            details["Industries"] = serde_json::json!(ind);
        }
        serde_json::json!({ "Outline": self.outline, "Details": details })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enum_labels_parse_case_insensitively() {
        assert_eq!(RiskAppetite::parse("Moderately  Conservative"), Some(RiskAppetite::ModeratelyConservative));
        assert_eq!(HoldingPeriod::parse("More than one year"), Some(HoldingPeriod::MoreThanOneYear));
        assert_eq!(RiskAppetite::parse("reckless"), None);
    }

    #[test]
    fn selector_names() {
        assert_eq!(PoolSelector::parse("IndustryEqualStockSelector", vec![]), Some(PoolSelector::IndustryEqual));
        assert_eq!(PoolSelector::parse("mv_equal", vec![]), Some(PoolSelector::MvEqual));
        assert_eq!(PoolSelector::parse("IndustryBasisStockSelector", vec![]), None);
        assert_eq!(
            PoolSelector::parse("IndustryBasisStockSelector", vec!["tech".into()]),
            Some(PoolSelector::IndustryBasis(vec!["tech".into()]))
        );
    }

    #[test]
    fn style_serde_round_trip() {
        let style = AgentStyle {
            outline: "value".into(),
            risk_appetite: RiskAppetite::Moderate,
            holding_period: HoldingPeriod::AboutOneMonth,
            strategy_consistency: 0.85,
            rationality: 0.9,
            pool_selector: PoolSelector::IndustryBasis(vec!["bank".into()]),
            others: String::new(),
        };
        let text = serde_json::to_string(&style).unwrap();
        assert_eq!(serde_json::from_str::<AgentStyle>(&text).unwrap(), style);
        assert_eq!(style.to_prompt_json()["Details"]["Rationality"], "0.9");
    }
}
