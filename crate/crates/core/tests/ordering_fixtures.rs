mod support;

use std::collections::HashMap;

use plan_harvest::corpus::load_corpus;
use plan_harvest::{order_agreement, parse_plan};

#[test]
fn ordering_examples_follow_gold_order() {
    let corpus = load_corpus(&support::fixtures().join("ordering.jsonl"), "").unwrap();
    let completions: HashMap<String, String> = serde_json::from_str(
        &std::fs::read_to_string(support::fixtures().join("ordering_completions.json")).unwrap(),
    )
    .unwrap();
    for text in &corpus {
        let (plan, diag) = parse_plan(&completions[&text.id]);
        assert!(diag.is_clean());
        let report = order_agreement(&text.gold, &plan);
        assert_eq!(report.common_actions, text.gold.len(), "{}", text.id);
        assert_eq!(report.kendall_tau, Some(1.0), "{}", text.id);
        assert!(report.exact_order_match, "{}", text.id);
    }
}

#[test]
fn sentence_order_plan_is_penalised() {
    // Listing the actions in the order the sentences mention them.
    let corpus = load_corpus(&support::fixtures().join("ordering.jsonl"), "").unwrap();
    let ct = corpus.iter().find(|t| t.id == "order-ct").unwrap();
    let (plan, _) = parse_plan("cook(oats) measure(oats)");
    let report = order_agreement(&ct.gold, &plan);
    assert_eq!(report.kendall_tau, Some(-1.0));
    assert!(!report.exact_order_match);
}

#[test]
fn reversing_the_plan_negates_tau() {
    let corpus = load_corpus(&support::fixtures().join("ordering.jsonl"), "").unwrap();
    let whg = corpus.iter().find(|t| t.id == "order-whg").unwrap();
    let (mut plan, _) = parse_plan("remove(furniture) paint(walls) decorate(floor)");
    let forward = order_agreement(&whg.gold, &plan).kendall_tau.unwrap();
    plan.actions.reverse();
    let backward = order_agreement(&whg.gold, &plan).kendall_tau.unwrap();
    assert!((forward + backward).abs() < 1e-12);
}
