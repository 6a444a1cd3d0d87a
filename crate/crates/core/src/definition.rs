//! Test definition document model.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

/// Presentation and answer type of an item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    SingleChoice,
    MultiChoice,
    Likert,
    FreeText,
    TimedStimulus,
}

impl ItemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ItemKind::SingleChoice => "single_choice",
            ItemKind::MultiChoice => "multi_choice",
            ItemKind::Likert => "likert",
            ItemKind::FreeText => "free_text",
            ItemKind::TimedStimulus => "timed_stimulus",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Item {
    pub item_id: String,
    pub kind: ItemKind,
    pub prompt: String,
    #[serde(default)]
    pub options: Vec<String>,
    /// Path relative to the package `assets/` directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_ref: Option<String>,
    #[serde(default)]
    pub capture_latency: bool,
}

impl Item {
    /// Checks an answer payload against the item kind.
    ///
    /// Choice and likert answers are zero-based option indices; multi-choice
    /// answers are arrays of distinct indices; free text is a string; timed
    /// stimuli accept any JSON value.
    pub fn accepts_answer(&self, answer: &serde_json::Value) -> Result<(), String> {
        let index_ok = |v: &serde_json::Value| {
            v.as_u64()
                .filter(|&i| (i as usize) < self.options.len())
                .is_some()
        };
        match self.kind {
            ItemKind::SingleChoice | ItemKind::Likert => {
                if index_ok(answer) {
                    Ok(())
                } else {
                    Err(format!(
                        "expected an option index in 0..{}",
                        self.options.len()
                    ))
                }
            }
            ItemKind::MultiChoice => {
                let arr = answer
                    .as_array()
                    .ok_or_else(|| "expected an array of option indices".to_string())?;
                let mut seen = HashSet::new();
                for v in arr {
                    if !index_ok(v) || !seen.insert(v.as_u64()) {
                        return Err(format!(
                            "expected distinct option indices in 0..{}",
                            self.options.len()
                        ));
                    }
                }
                Ok(())
            }
            ItemKind::FreeText => {
                if answer.is_string() {
                    Ok(())
                } else {
                    Err("expected a string".to_string())
                }
            }
            ItemKind::TimedStimulus => Ok(()),
        }
    }
}

/// One test: an ordered list of items plus presentation flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestDefinition {
    pub test_id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    pub items: Vec<Item>,
    #[serde(default)]
    pub randomize_items: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit_ms: Option<u64>,
}

impl TestDefinition {
    pub fn item(&self, item_id: &str) -> Option<&Item> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    /// First item id that occurs more than once, if any.
    pub fn duplicate_item_id(&self) -> Option<&str> {
        let mut seen = HashSet::new();
        self.items
            .iter()
            .map(|i| i.item_id.as_str())
            .find(|id| !seen.insert(*id))
    }

    pub fn asset_refs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.items
            .iter()
            .filter_map(|i| i.asset_ref.as_deref().map(|a| (i.item_id.as_str(), a)))
    }
}

/// Relative asset path: `/`-separated components of `[A-Za-z0-9_.-]`, none
/// empty or starting with a dot, at most 255 bytes. Mirrors the schema's
/// `asset_path` pattern.
pub fn is_valid_asset_path(path: &str) -> bool {
    !path.is_empty()
        && path.len() <= 255
        && path.split('/').all(|c| {
            !c.is_empty()
                && !c.starts_with('.')
                && c.bytes().all(|b| b.is_ascii_alphanumeric() || b"_.-".contains(&b))
        })
}
