//! Descriptive population statistics per item.
//!
//! Likert items are numeric: the answer is the option index `0..k-1` and the
//! summary carries mean, population standard deviation (divisor `n`), min
//! and max. Every other kind is categorical and gets a frequency table keyed
//! by the same answer text the CSV export uses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::definition::ItemKind;
use crate::package::TestPackage;
use crate::results::{render_answer, SessionDocument};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSummary {
    pub test_id: String,
    pub item_id: String,
    pub kind: ItemKind,
    pub n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<Moments>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<BTreeMap<String, u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub project_id: Uuid,
    pub sessions: u64,
    /// One entry per package item, in package order.
    pub items: Vec<ItemSummary>,
}

/// Running mean and sum of squared deviations.
#[derive(Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
    min: f64,
    max: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        if self.n == 0 {
            self.min = x;
            self.max = x;
        } else {
            self.min = self.min.min(x);
            self.max = self.max.max(x);
        }
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn moments(&self) -> Option<Moments> {
        (self.n > 0).then(|| Moments {
            mean: self.mean,
            sd: (self.m2 / self.n as f64).sqrt(),
            min: self.min,
            max: self.max,
        })
    }
}

enum Acc {
    Numeric(Welford),
    Categorical(BTreeMap<String, u64>),
}

pub fn population_summary(
    project_id: Uuid,
    package: &TestPackage,
    sessions: &[SessionDocument],
) -> PopulationSummary {
    let mut slots: BTreeMap<(&str, &str), (u64, Acc)> = BTreeMap::new();
    for test in &package.tests {
        for item in &test.items {
            let acc = match item.kind {
                ItemKind::Likert => Acc::Numeric(Welford::default()),
                _ => Acc::Categorical(BTreeMap::new()),
            };
            slots.insert((&test.test_id, &item.item_id), (0, acc));
        }
    }
    for doc in sessions {
        for rec in &doc.records {
            let r = &rec.record;
            let Some((n, acc)) = slots.get_mut(&(r.test_id.as_str(), r.item_id.as_str())) else {
                continue;
            };
            *n += 1;
            match acc {
                Acc::Numeric(w) => {
                    if let Some(x) = r.answer.as_f64() {
                        w.push(x);
                    }
                }
                Acc::Categorical(freq) => {
                    *freq.entry(render_answer(&r.answer)).or_default() += 1;
                }
            }
        }
    }

    let items = package
        .tests
        .iter()
        .flat_map(|t| t.items.iter().map(move |i| (t, i)))
        .map(|(test, item)| {
            let (n, acc) = slots
                .remove(&(test.test_id.as_str(), item.item_id.as_str()))
                .expect("every package item has a slot");
            let (moments, frequencies) = match acc {
                Acc::Numeric(w) => (w.moments(), None),
                Acc::Categorical(f) => (None, (n > 0).then_some(f)),
            };
            ItemSummary {
                test_id: test.test_id.clone(),
                item_id: item.item_id.clone(),
                kind: item.kind,
                n,
                moments,
                frequencies,
            }
        })
        .collect();

    PopulationSummary {
        project_id,
        sessions: sessions.len() as u64,
        items,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_hand_arithmetic() {
        let mut w = Welford::default();
        for x in [0.0, 1.0, 2.0] {
            w.push(x);
        }
        let m = w.moments().unwrap();
        assert_eq!(m.mean, 1.0);
        assert!((m.sd - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!((m.min, m.max), (0.0, 2.0));
        assert!(Welford::default().moments().is_none());
    }
}
