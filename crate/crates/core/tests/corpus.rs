mod common;

use hintgraph::corpus::{
    diagram_bearing_steps, load_corpus, parse_corpus, select_icl_example, to_json, validate_corpus, write_corpus,
    CorpusError, FindingSeverity, MIN_PROBLEMS_PER_TOPIC,
};
use proptest::prelude::*;

#[test]
fn bundled_corpus_has_the_five_topics() {
    let c = common::sample();
    let titles: Vec<&str> = c.topics.iter().map(|t| t.title.as_str()).collect();
    assert_eq!(
        titles,
        [
            "Divide by 2",
            "Multiple by 2 (or 4)",
            "Multiply by 1 (or 0)",
            "Comparing Fractions",
            "Area Formulation Intuition"
        ]
    );
    for t in &c.topics {
        assert!(t.problems.len() >= MIN_PROBLEMS_PER_TOPIC, "{}", t.id);
        let single = t.problems.iter().filter(|p| diagram_bearing_steps(p).len() == 1).count();
        assert_eq!(single, 6, "{}", t.id);
    }
}

#[test]
fn bundled_corpus_validates_clean() {
    let findings = validate_corpus(&common::sample());
    assert!(findings.iter().all(|f| f.severity != FindingSeverity::Error), "{findings:?}");
}

#[test]
fn bundled_corpus_diagrams_are_distinct() {
    let mut seen = std::collections::HashMap::new();
    for (loc, svg) in common::all_fixture_svgs() {
        if loc.contains("fixtures/svg") {
            continue;
        }
        if let Some(prev) = seen.insert(svg, loc.clone()) {
            panic!("{loc} repeats {prev}");
        }
    }
}

#[test]
fn bundled_corpus_round_trips_through_write() {
    let c = common::sample();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    write_corpus(&c, &p).unwrap();
    assert_eq!(load_corpus(&p).unwrap(), c);
    // the checked-in file is already in canonical form
    assert_eq!(std::fs::read_to_string(common::corpus_path()).unwrap(), to_json(&c));
}

#[test]
fn zero_topics_is_empty_corpus() {
    let err = parse_corpus(r#"{"schema_version":1,"topics":[]}"#).unwrap_err();
    assert!(matches!(err, CorpusError::Empty));
    assert_eq!(err.to_string(), "empty corpus");
}

#[test]
fn corrupt_byte_in_hint_one_names_problem_and_hint() {
    let text = std::fs::read_to_string(common::corpus_path()).unwrap();
    let c = common::sample();
    // mul2-4x3 draws its diagram at hint 1
    let p = c.problem("mul2-4x3").unwrap();
    assert_eq!(diagram_bearing_steps(p), vec![1]);
    let svg = p.hints[1].diagram.as_ref().unwrap();
    let encoded = serde_json::to_string(svg).unwrap();
    let encoded = &encoded[1..encoded.len() - 1];
    let at = text.find(encoded).unwrap();
    let mut corrupted = text.clone();
    // drop the closing '>' of the first <circle .../> tag
    let close = at + encoded.find("/>").unwrap() + 1;
    corrupted.replace_range(close..close + 1, "");
    match parse_corpus(&corrupted).unwrap_err() {
        CorpusError::MalformedSvg {
            problem_id, hint_index, ..
        } => {
            assert_eq!(problem_id, "mul2-4x3");
            assert_eq!(hint_index, Some(1));
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn schema_errors_carry_a_json_pointer() {
    let err = parse_corpus(r#"{"schema_version":1,"topics":[{"id":"t","title":"T","problems":[{"id":"p","statement":5,"statement_diagram":null,"hints":[]}]}]}"#)
        .unwrap_err();
    match err {
        CorpusError::Schema { pointer, .. } => assert_eq!(pointer, "/topics/0/problems/0/statement"),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn five_problem_topic_warns_once() {
    let mut c = common::sample();
    c.topics[0].problems.truncate(5);
    let findings = validate_corpus(&c);
    assert_eq!(findings.len(), 1);
    assert_eq!(findings[0].severity, FindingSeverity::Warning);
}

#[test]
fn empty_hint_text_is_an_error() {
    let mut c = common::sample();
    c.topics[2].problems[0].hints[0].text = "  ".into();
    let findings = validate_corpus(&c);
    assert_eq!(findings.len(), 1);
    assert_eq!(findings[0].severity, FindingSeverity::Error);
}

#[test]
fn diagram_steps_of_bundled_problems() {
    let c = common::sample();
    assert_eq!(diagram_bearing_steps(c.problem("div2-6").unwrap()), vec![0]);
    assert_eq!(diagram_bearing_steps(c.problem("mul2-swap-3x2").unwrap()), vec![0, 1]);
    let mut none = c.problem("div2-6").unwrap().clone();
    none.hints.iter_mut().for_each(|h| h.diagram = None);
    assert!(diagram_bearing_steps(&none).is_empty());
}

proptest! {
    #[test]
    fn icl_choice_is_a_same_topic_sibling(seed in any::<u64>(), pick in 0usize..38) {
        let c = common::sample();
        let problems: Vec<_> = c.problems().collect();
        let target = problems[pick % problems.len()];
        let chosen = select_icl_example(&c, target, seed).unwrap();
        prop_assert_ne!(&chosen.id, &target.id);
        prop_assert_eq!(&chosen.topic_id, &target.topic_id);
        prop_assert!(chosen.has_diagram());
        prop_assert_eq!(select_icl_example(&c, target, seed).unwrap().id.clone(), chosen.id.clone());
    }

    #[test]
    fn diagram_steps_increase_within_bounds(mask in proptest::collection::vec(any::<bool>(), 0..12)) {
        let mut p = common::sample().problem("div2-6").unwrap().clone();
        p.hints = mask
            .iter()
            .enumerate()
            .map(|(i, d)| hintgraph::corpus::HintStep {
                index: i,
                text: format!("hint {i}"),
                diagram: d.then(|| "<svg viewBox=\"0 0 1 1\"/>".to_string()),
            })
            .collect();
        let steps = diagram_bearing_steps(&p);
        prop_assert!(steps.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(steps.iter().all(|s| *s < p.hints.len()));
        prop_assert_eq!(steps.len(), mask.iter().filter(|d| **d).count());
    }
}
