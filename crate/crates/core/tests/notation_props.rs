use plan_harvest::corpus::ActionInstance;
use plan_harvest::{parse_plan, render_plan, Plan};
use proptest::prelude::*;

fn name() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_+.-]{0,9}"
}

fn arg() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-z0-9+.'-]{1,8}", 1..4).prop_map(|words| words.join(" "))
}

fn plan() -> impl Strategy<Value = Plan> {
    prop::collection::vec((name(), prop::collection::vec(arg(), 0..4)), 0..8).prop_map(|actions| {
        Plan::new(
            actions
                .into_iter()
                .map(|(n, a)| ActionInstance::new(n, a))
                .collect(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn render_then_parse_round_trips(p in plan()) {
        prop_assert!(p.is_canonical());
        let (parsed, diag) = parse_plan(&render_plan(&p));
        prop_assert!(diag.is_clean(), "{diag:?}");
        prop_assert_eq!(parsed, p);
    }

    #[test]
    fn rendering_is_idempotent(s in "\\PC{0,80}") {
        let once = render_plan(&parse_plan(&s).0);
        let twice = render_plan(&parse_plan(&once).0);
        prop_assert_eq!(once, twice);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn parser_never_panics_and_spans_are_ordered(s in "(\\PC|[(),\n ]){0,120}") {
        let (_, diag) = parse_plan(&s);
        let mut last_end = 0;
        for span in &diag.skipped_spans {
            prop_assert!(span.start >= last_end && span.start < span.end && span.end <= s.len());
            prop_assert!(s.is_char_boundary(span.start) && s.is_char_boundary(span.end));
            last_end = span.end;
        }
    }
}
