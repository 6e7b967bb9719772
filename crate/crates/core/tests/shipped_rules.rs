//! Every bundled rule against its own fixtures.

use std::collections::BTreeMap;

use chrono::DateTime;
use dockwright::corpus::{BuildOutcome, BuildRecord};
use dockwright::rules::{apply_solution, match_rule, repair, RepairOutcome, RuleDb};

fn record(dockerfile: &str, log: &str) -> BuildRecord {
    BuildRecord {
        record_id: "fixture".into(),
        repo_ref: String::new(),
        dockerfile_path: "Dockerfile".into(),
        dockerfile_text: dockerfile.into(),
        stdout_log: String::new(),
        stderr_log: log.into(),
        outcome: BuildOutcome::Failure,
        duration: 1.0,
        captured_at: DateTime::parse_from_rfc3339("2020-01-01T00:00:00Z").unwrap(),
        meta: BTreeMap::new(),
    }
}

#[test]
fn repairs_remove_their_own_trigger() {
    let db = RuleDb::shipped();
    assert!(!db.repairs.is_empty());
    for rule in &db.repairs {
        assert!(!rule.fixtures.is_empty(), "{} has no fixture", rule.id);
        for fx in &rule.fixtures {
            let log = dockwright::logpipe::normalize(&format!("\n{}", fx.log));
            let binding = match_rule(&rule.pattern, &fx.dockerfile, &log)
                .unwrap_or_else(|| panic!("{} does not match its fixture", rule.id));
            for (i, solution) in rule.solutions.iter().enumerate() {
                let patched = apply_solution(&fx.dockerfile, solution, &binding)
                    .unwrap_or_else(|e| panic!("{} solution {}: {e}", rule.id, i + 1));
                assert_ne!(patched, fx.dockerfile, "{} solution {} changes nothing", rule.id, i + 1);
                assert!(
                    match_rule(&rule.pattern, &patched, &log).is_none(),
                    "{} solution {} leaves the trigger in place:\n{patched}",
                    rule.id,
                    i + 1
                );
            }
        }
    }
}

#[test]
fn every_fixture_is_handled_by_its_own_rule() {
    let db = RuleDb::shipped();
    for rule in &db.repairs {
        for fx in &rule.fixtures {
            match repair(&record(&fx.dockerfile, &fx.log), &db, None).unwrap() {
                RepairOutcome::Repaired { rule_id, .. } => assert_eq!(rule_id, rule.id),
                other => panic!("{}: {:?}", rule.id, other.kind()),
            }
        }
    }
    for s in &db.suggestions {
        assert!(!s.fixtures.is_empty(), "{} has no fixture", s.id);
        for fx in &s.fixtures {
            match repair(&record(&fx.dockerfile, &fx.log), &db, None).unwrap() {
                RepairOutcome::Suggested { suggestion_id, message, .. } => {
                    assert_eq!(suggestion_id, s.id);
                    assert!(!message.contains("${"), "{}: unexpanded template in {message:?}", s.id);
                }
                other => panic!("{}: {:?}", s.id, other.kind()),
            }
        }
    }
}

#[test]
fn bundled_rules_round_trip_through_json() {
    let db = RuleDb::shipped();
    assert_eq!(RuleDb::from_json(&db.to_json()).unwrap(), db);
}
