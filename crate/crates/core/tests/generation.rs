mod common;

use std::sync::Arc;

use hintgraph::gateway::testing::{FnTransport, ScriptedTransport};
use hintgraph::gateway::{cache_key, ChatResponse, Gateway, ImageBackend, Mode, StubImageBackend};
use hintgraph::generation::{
    build_generation_prompt, extract_svg, generate_diagram, generate_t2i, ExtractError, GenerationConfig,
    GenerationError, GenerationTask, PipelineVariant,
};
use hintgraph::pipeline::{plan_items, WorkItem};
use hintgraph::svg::{normalize_source, parse_svg, rasterize, validate_svg, FindingCode, RasterImage};

const GOOD: &str = r#"<svg viewBox="0 0 100 50"><circle cx="25" cy="25" r="20"/><circle cx="75" cy="25" r="20"/></svg>"#;
const CLIPPED: &str = r#"<svg viewBox="0 0 100 50"><circle cx="25" cy="25" r="20"/><circle cx="110" cy="25" r="20"/></svg>"#;

fn item(variant: PipelineVariant, pid: &str) -> WorkItem {
    plan_items(&common::sample(), variant, 0, None)
        .into_iter()
        .find(|i| i.problem.id == pid)
        .unwrap_or_else(|| panic!("{pid} not planned for {variant}"))
}

fn task(i: &WorkItem, variant: PipelineVariant) -> GenerationTask {
    GenerationTask::new(&i.problem, i.step, &i.icl, variant, 0)
}

fn prompt_text(t: &GenerationTask) -> String {
    build_generation_prompt(t, &GenerationConfig::default())
        .unwrap()
        .messages
        .iter()
        .map(|m| m.text_content())
        .collect::<Vec<_>>()
        .join("\n")
}

fn live(replies: &[&str]) -> (Gateway, Arc<ScriptedTransport>) {
    let t = Arc::new(ScriptedTransport::new(replies.iter().copied()));
    (Gateway::new(Mode::Live, None, t.clone()), t)
}

#[test]
fn baseline_prompt_carries_the_same_topic_example() {
    let i = item(PipelineVariant::Baseline, "div2-6");
    assert_eq!(i.icl.topic_id, "divide-by-2");
    let text = prompt_text(&task(&i, PipelineVariant::Baseline));
    for h in &i.icl.hints {
        assert!(text.contains(&h.text));
        if let Some(d) = &h.diagram {
            assert!(text.contains(&normalize_source(d).unwrap()));
            assert!(d.contains("<circle"));
        }
    }
    assert!(text.contains(&i.problem.statement));
    assert!(text.contains(&i.problem.hints[i.step].text));
    let cfg = GenerationConfig::default();
    let t = task(&i, PipelineVariant::Baseline);
    assert_eq!(
        cache_key(&build_generation_prompt(&t, &cfg).unwrap()),
        cache_key(&build_generation_prompt(&t, &cfg).unwrap())
    );
}

#[test]
fn prompt_sections_come_in_order() {
    let i = item(PipelineVariant::Baseline, "mul2-7x2");
    let text = prompt_text(&task(&i, PipelineVariant::Baseline));
    let example = text.find("Example from the same topic").unwrap();
    let target = text.find("Now the target problem:").unwrap();
    assert!(0 < example && example < target);
    assert!(text[target..].contains("7 × 2"));
}

#[test]
fn no_prompt_leaks_the_ground_truth() {
    for variant in PipelineVariant::ALL {
        for i in plan_items(&common::sample(), variant, 0, None) {
            let gt = normalize_source(i.ground_truth()).unwrap();
            let text = prompt_text(&task(&i, variant));
            assert!(!text.contains(&gt), "{variant} {} leaks its ground truth", i.id());
        }
    }
}

#[test]
fn on_task_inlines_the_previous_diagram_once() {
    let i = item(PipelineVariant::OnTask, "mul2-swap-3x2");
    assert_eq!(i.step, 1);
    let prev = normalize_source(i.problem.hints[0].diagram.as_ref().unwrap()).unwrap();
    let text = prompt_text(&task(&i, PipelineVariant::OnTask));
    assert_eq!(text.matches(&prev).count(), 1);
    let mut no_prev = task(&i, PipelineVariant::OnTask);
    no_prev.prior_hints.iter_mut().for_each(|h| h.diagram = None);
    assert!(matches!(
        build_generation_prompt(&no_prev, &GenerationConfig::default()),
        Err(GenerationError::NoPreviousDiagram)
    ));
}

#[test]
fn hint_first_withholds_the_target_hint() {
    let i = item(PipelineVariant::HintFirst, "div2-6");
    let target_hint = &i.problem.hints[i.step].text;
    let text = prompt_text(&task(&i, PipelineVariant::HintFirst));
    let target = text.find("Now the target problem:").unwrap();
    assert!(!text[target..].contains(target_hint.as_str()));
}

#[test]
fn icl_without_diagram_is_rejected() {
    let i = item(PipelineVariant::Baseline, "div2-6");
    let mut icl = i.icl.clone();
    icl.hints.iter_mut().for_each(|h| h.diagram = None);
    let t = GenerationTask::new(&i.problem, i.step, &icl, PipelineVariant::Baseline, 0);
    assert!(matches!(
        build_generation_prompt(&t, &GenerationConfig::default()),
        Err(GenerationError::IclWithoutDiagram(_))
    ));
}

#[test]
fn extraction_rules() {
    let fenced = format!("Here is the diagram:\n```svg\n{GOOD}\n```");
    assert_eq!(extract_svg(&fenced).unwrap(), GOOD);
    assert_eq!(extract_svg("Sorry, no drawing today."), Err(ExtractError::NoSvgFound));
    let twice = format!("{GOOD}\n\n{CLIPPED}");
    assert_eq!(extract_svg(&twice).unwrap(), GOOD);
}

#[test]
fn clean_first_reply_needs_no_repair() {
    let i = item(PipelineVariant::Baseline, "div2-6");
    let (gw, t) = live(&[&format!("```svg\n{GOOD}\n```")]);
    let g = generate_diagram(&task(&i, PipelineVariant::Baseline), &gw, &GenerationConfig::default()).unwrap();
    assert_eq!(g.repair_attempts, 0);
    let svg = g.svg_source.unwrap();
    assert_eq!(normalize_source(&svg).unwrap(), svg);
    assert!(validate_svg(&parse_svg(&svg).unwrap()).ok);
    assert_eq!(t.requests().len(), 1);
}

#[test]
fn replayed_clip_is_repaired_once() {
    let i = item(PipelineVariant::Baseline, "div2-10");
    let gw = Gateway::replay(common::cache_dir());
    let g = generate_diagram(&task(&i, PipelineVariant::Baseline), &gw, &GenerationConfig::default()).unwrap();
    assert_eq!(g.repair_attempts, 1);
    assert_eq!(g.transcript.len(), 2);
    let first = extract_svg(&g.transcript[0].response).unwrap();
    assert!(validate_svg(&parse_svg(&first).unwrap()).has(FindingCode::ViewboxClip));
    assert!(validate_svg(&parse_svg(g.svg_source.as_ref().unwrap()).unwrap()).ok);
    let again = generate_diagram(&task(&i, PipelineVariant::Baseline), &gw, &GenerationConfig::default()).unwrap();
    assert_eq!(g, again);
}

#[test]
fn repair_message_quotes_the_codes() {
    let i = item(PipelineVariant::Baseline, "div2-6");
    let (gw, t) = live(&[CLIPPED, GOOD]);
    let g = generate_diagram(&task(&i, PipelineVariant::Baseline), &gw, &GenerationConfig::default()).unwrap();
    assert_eq!(g.repair_attempts, 1);
    let second = &t.requests()[1];
    assert_eq!(second.messages.len(), 3);
    assert!(second.messages[2].text_content().contains("VIEWBOX_CLIP"));
}

#[test]
fn always_bad_replies_exhaust_repairs() {
    let i = item(PipelineVariant::Baseline, "div2-6");
    let (gw, t) = live(&[CLIPPED, CLIPPED, CLIPPED]);
    match generate_diagram(&task(&i, PipelineVariant::Baseline), &gw, &GenerationConfig::default()) {
        Err(e @ GenerationError::RepairsExhausted { .. }) => {
            assert_eq!(e.code(), "REPAIRS_EXHAUSTED(VIEWBOX_CLIP)");
            let GenerationError::RepairsExhausted { attempts, report, .. } = e else { unreachable!() };
            assert_eq!(attempts, 3);
            assert!(report.unwrap().has(FindingCode::ViewboxClip));
        }
        other => panic!("expected exhaustion, got {other:?}"),
    }
    assert_eq!(t.remaining(), 0);
}

#[test]
fn hint_first_reply_yields_text_and_svg() {
    let i = item(PipelineVariant::HintFirst, "div2-6");
    let gw = Gateway::replay(common::cache_dir());
    let g = generate_diagram(&task(&i, PipelineVariant::HintFirst), &gw, &GenerationConfig::default()).unwrap();
    assert_eq!(
        g.generated_hint_text.as_deref(),
        Some("Share the 6 circles equally between 2 rows and count one row.")
    );
    assert!(g.svg_source.is_some());
    let (gw, _) = live(&[&format!("```svg\n{GOOD}\n```"), &format!("Hint: Count them.\n```svg\n{GOOD}\n```")]);
    let g = generate_diagram(&task(&i, PipelineVariant::HintFirst), &gw, &GenerationConfig::default()).unwrap();
    assert_eq!(g.repair_attempts, 1);
    assert_eq!(g.generated_hint_text.as_deref(), Some("Count them."));
}

#[test]
fn t2i_description_is_kept_verbatim() {
    let i = item(PipelineVariant::T2i, "mul2-7x2");
    let gw = Gateway::replay(common::cache_dir());
    let (_, images, _) = common::offline(&common::cache_dir());
    let g = generate_t2i(&task(&i, PipelineVariant::T2i), &gw, &images, &GenerationConfig::default()).unwrap();
    assert_eq!(
        g.description.as_deref(),
        Some("2x7 grid of numbered circles, where numbers from 1 to 14 are arranged in seven rows and two columns")
    );
    assert!(g.svg_source.is_none());
    assert!(!g.pixel_image.unwrap().is_empty());
}

#[test]
fn t2i_prompt_describes_the_example_diagrams() {
    let i = item(PipelineVariant::T2i, "mul2-7x2");
    let text = prompt_text(&task(&i, PipelineVariant::T2i));
    assert!(text.contains("diagram description: A diagram with"));
}

#[test]
fn stub_image_passes_through() {
    let i = item(PipelineVariant::T2i, "div2-6");
    let png = rasterize(&parse_svg(GOOD).unwrap(), 64).unwrap().to_png();
    let (gw, _) = live(&["Two circles side by side."]);
    let g = generate_t2i(&task(&i, PipelineVariant::T2i), &gw, &StubImageBackend::new(png.clone()), &GenerationConfig::default())
        .unwrap();
    assert_eq!(g.pixel_image.unwrap().to_png(), png);
}

struct NeverCalled;

impl ImageBackend for NeverCalled {
    fn generate_image(&self, _: &str) -> Result<RasterImage, hintgraph::gateway::GatewayError> {
        panic!("image stage reached")
    }
}

#[test]
fn blank_description_stops_before_images() {
    let i = item(PipelineVariant::T2i, "div2-6");
    let gw = Gateway::new(Mode::Live, None, Arc::new(FnTransport::new(|_| Ok(ChatResponse::stop("  \n")))));
    assert!(matches!(
        generate_t2i(&task(&i, PipelineVariant::T2i), &gw, &NeverCalled, &GenerationConfig::default()),
        Err(GenerationError::EmptyDescription)
    ));
}

#[test]
fn variants_reject_the_wrong_entry_point() {
    let i = item(PipelineVariant::T2i, "div2-6");
    let (gw, _) = live(&[]);
    assert!(matches!(
        generate_diagram(&task(&i, PipelineVariant::T2i), &gw, &GenerationConfig::default()),
        Err(GenerationError::WrongVariant(PipelineVariant::T2i))
    ));
}
