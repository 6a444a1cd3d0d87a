//! Demo questionnaires for `seed-demo`.
//!
//! Item wording is written for this project in the style of common
//! personality inventories; it makes no claim of psychometric validity.

use std::collections::BTreeMap;

use psytest_core::package::{build_test_package, ManifestDraft, PackageError};
use psytest_core::{Item, ItemKind, TestDefinition};

const AGREEMENT: [&str; 5] = [
    "Disagree strongly",
    "Disagree a little",
    "Neither agree nor disagree",
    "Agree a little",
    "Agree strongly",
];

fn likert(item_id: &str, prompt: &str) -> Item {
    Item {
        item_id: item_id.to_string(),
        kind: ItemKind::Likert,
        prompt: prompt.to_string(),
        options: AGREEMENT.iter().map(|s| s.to_string()).collect(),
        asset_ref: None,
        capture_latency: true,
    }
}

pub fn big_five() -> TestDefinition {
    let items = [
        ("ext1", "I see myself as someone who is outgoing and sociable."),
        ("ext2", "I see myself as someone who tends to be quiet."),
        ("agr1", "I see myself as someone who is considerate to almost everyone."),
        ("agr2", "I see myself as someone who starts arguments with others."),
        ("con1", "I see myself as someone who follows through on plans."),
        ("con2", "I see myself as someone who leaves things unfinished."),
        ("neu1", "I see myself as someone who stays calm under pressure."),
        ("neu2", "I see myself as someone who worries a lot."),
        ("opn1", "I see myself as someone who enjoys new ideas."),
        ("opn2", "I see myself as someone who prefers routine to novelty."),
    ];
    TestDefinition {
        test_id: "big-five-demo".into(),
        title: "Personality traits (demo)".into(),
        description: "Ten short statements, two per broad trait.".into(),
        items: items.iter().map(|(id, p)| likert(id, p)).collect(),
        randomize_items: false,
        time_limit_ms: None,
    }
}

pub fn dark_triad() -> TestDefinition {
    let items = [
        ("mach1", "Sharing secrets with others is usually unwise."),
        ("mach2", "Flattering important people pays off."),
        ("mach3", "Most people can be manipulated."),
        ("narc1", "I like being the centre of attention."),
        ("narc2", "I deserve special treatment."),
        ("narc3", "Others often admire me."),
        ("psy1", "I act without thinking about consequences."),
        ("psy2", "Payback should be quick and harsh."),
        ("psy3", "I rarely feel guilty."),
    ];
    TestDefinition {
        test_id: "dark-triad-demo".into(),
        title: "Social attitudes (demo)".into(),
        description: "Nine statements covering three socially aversive traits.".into(),
        items: items.iter().map(|(id, p)| likert(id, p)).collect(),
        randomize_items: true,
        time_limit_ms: None,
    }
}

/// The demo package. Deterministic: every call returns the same bytes.
pub fn package() -> Result<Vec<u8>, PackageError> {
    let draft = ManifestDraft {
        description: "Demo battery: personality traits and social attitudes".into(),
        ..ManifestDraft::default()
    };
    build_test_package(&draft, &[big_five(), dark_triad()], &BTreeMap::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_package_is_valid_and_stable() {
        let a = package().unwrap();
        assert_eq!(a, package().unwrap());
        assert!(psytest_core::verify_integrity(&a).ok);
        let psytest_core::Package::Tests(p) = psytest_core::parse_package(&a).unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(p.tests.len(), 2);
    }
}
