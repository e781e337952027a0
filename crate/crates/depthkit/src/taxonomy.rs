//! The eight-scenario taxonomy and its keyword lists.

use std::collections::BTreeMap;

use depthkit_core::benchmark::Scenario;
use serde::Deserialize;

/// The shipped keyword file.
pub const BUILTIN: &str = include_str!("../scenarios.toml");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Section {
    title: String,
    keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioEntry {
    pub scenario: Scenario,
    pub title: String,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    /// Always eight entries, in [`Scenario::ALL`] order.
    pub entries: Vec<ScenarioEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error("taxonomy: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("taxonomy: unknown scenario section [{0}]")]
    UnknownScenario(String),
    #[error("taxonomy: missing scenario section [{0}]")]
    MissingScenario(&'static str),
    #[error("taxonomy: scenario [{0}] has no keywords")]
    EmptyKeywords(String),
}

impl Taxonomy {
    pub fn parse(text: &str) -> Result<Self, TaxonomyError> {
        let sections: BTreeMap<String, Section> = toml::from_str(text)?;
        if let Some(unknown) = sections.keys().find(|k| Scenario::from_key(k).is_none()) {
            return Err(TaxonomyError::UnknownScenario(unknown.clone()));
        }
        let mut entries = Vec::with_capacity(8);
        for scenario in Scenario::ALL {
            let section = sections
                .get(scenario.key())
                .ok_or(TaxonomyError::MissingScenario(scenario.key()))?;
            if section.keywords.is_empty() || section.keywords.iter().any(|k| k.trim().is_empty()) {
                return Err(TaxonomyError::EmptyKeywords(scenario.key().into()));
            }
            entries.push(ScenarioEntry {
                scenario,
                title: section.title.clone(),
                keywords: section.keywords.clone(),
            });
        }
        Ok(Self { entries })
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("shipped taxonomy is valid")
    }

    pub fn keywords(&self, scenario: Scenario) -> &[String] {
        &self.entries[scenario as usize].keywords
    }

    /// Scenarios with a keyword occurring in `text` as a whole word or
    /// phrase, ignoring case.
    pub fn classify(&self, text: &str) -> Vec<Scenario> {
        let hay = text.to_lowercase();
        self.entries
            .iter()
            .filter(|e| e.keywords.iter().any(|k| contains_phrase(&hay, &k.to_lowercase())))
            .map(|e| e.scenario)
            .collect()
    }
}

fn contains_phrase(hay: &str, needle: &str) -> bool {
    let boundary = |c: Option<char>| c.is_none_or(|c| !c.is_alphanumeric());
    hay.match_indices(needle)
        .any(|(at, _)| boundary(hay[..at].chars().next_back()) && boundary(hay[at + needle.len()..].chars().next()))
}
