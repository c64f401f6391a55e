//! Prompt assembly, SVG extraction and repair, and the pipeline variants.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{HintStep, Problem};
use crate::gateway::{
    cache_key, ChatRequest, Gateway, GatewayError, ImageBackend, Message, Purpose, DEFAULT_MAX_OUTPUT_TOKENS,
    DEFAULT_TEMPERATURE,
};
use crate::prompts::{PromptError, PromptSet};
use crate::svg::{
    extract_structure, normalize_source, normalize_svg, parse_svg, validate_svg, RasterImage, SvgError,
    ValidationReport, DRAWABLE_TAGS,
};

pub const DEFAULT_MAX_REPAIRS: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineVariant {
    Baseline,
    T2i,
    HintFirst,
    OnTask,
}

impl PipelineVariant {
    pub const ALL: [PipelineVariant; 4] = [
        PipelineVariant::Baseline,
        PipelineVariant::T2i,
        PipelineVariant::HintFirst,
        PipelineVariant::OnTask,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineVariant::Baseline => "baseline",
            PipelineVariant::T2i => "t2i",
            PipelineVariant::HintFirst => "hint-first",
            PipelineVariant::OnTask => "on-task",
        }
    }

    /// Row caption used in reports.
    pub fn label(self) -> &'static str {
        match self {
            PipelineVariant::Baseline => "Pipeline",
            PipelineVariant::T2i => "Pipeline (T2I)",
            PipelineVariant::HintFirst => "Pipeline (Textual Hint)",
            PipelineVariant::OnTask => "Pipeline (On-Task)",
        }
    }

    pub fn purpose(self) -> Purpose {
        match self {
            PipelineVariant::T2i => Purpose::T2iDescription,
            _ => Purpose::Generation,
        }
    }
}

impl fmt::Display for PipelineVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "baseline" => Ok(PipelineVariant::Baseline),
            "t2i" => Ok(PipelineVariant::T2i),
            "hint-first" => Ok(PipelineVariant::HintFirst),
            "on-task" => Ok(PipelineVariant::OnTask),
            _ => Err(format!("unknown variant {s:?} (expected baseline, t2i, hint-first or on-task)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationTask {
    pub target_problem: Problem,
    pub target_step: usize,
    pub prior_hints: Vec<HintStep>,
    pub icl_example: Problem,
    pub variant: PipelineVariant,
    pub seed: u64,
}

impl GenerationTask {
    /// Task for `problem`'s hint `step`, with every earlier hint as context.
    pub fn new(problem: &Problem, step: usize, icl_example: &Problem, variant: PipelineVariant, seed: u64) -> Self {
        GenerationTask {
            target_problem: problem.clone(),
            target_step: step,
            prior_hints: problem.hints.iter().take(step).cloned().collect(),
            icl_example: icl_example.clone(),
            variant,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.target_step >= self.target_problem.hints.len() {
            return Err(GenerationError::StepOutOfRange {
                step: self.target_step,
                hints: self.target_problem.hints.len(),
            });
        }
        if self.icl_example.id == self.target_problem.id {
            return Err(GenerationError::IclIsTarget);
        }
        if !self.icl_example.has_diagram() {
            return Err(GenerationError::IclWithoutDiagram(self.icl_example.id.clone()));
        }
        if self.variant == PipelineVariant::OnTask && self.previous_diagram().is_none() {
            return Err(GenerationError::NoPreviousDiagram);
        }
        Ok(())
    }

    /// Most recent earlier hint with a diagram.
    pub fn previous_diagram(&self) -> Option<&HintStep> {
        self.prior_hints.iter().rev().find(|h| h.diagram.is_some())
    }

    pub fn target_hint(&self) -> &HintStep {
        &self.target_problem.hints[self.target_step]
    }
}

#[derive(Debug, Clone)]
pub struct GenerationConfig {
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub max_repairs: u32,
    /// Pass the problem statement's own diagram as SVG code.
    pub include_statement_diagram: bool,
    pub prompts: Arc<PromptSet>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            model_id: "gpt-4o".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            max_repairs: DEFAULT_MAX_REPAIRS,
            include_statement_diagram: true,
            prompts: Arc::new(PromptSet::builtin()),
        }
    }
}

impl GenerationConfig {
    pub fn request(&self, purpose: Purpose, messages: Vec<Message>) -> ChatRequest {
        let mut req = ChatRequest::new(self.model_id.clone(), purpose, messages);
        req.temperature = self.temperature;
        req.max_output_tokens = self.max_output_tokens;
        req
    }
}

/// One reason a reply was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptTurn {
    pub key: String,
    pub purpose: Purpose,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDiagram {
    pub svg_source: Option<String>,
    pub pixel_image: Option<RasterImage>,
    pub generated_hint_text: Option<String>,
    pub description: Option<String>,
    pub repair_attempts: u32,
    pub transcript: Vec<TranscriptTurn>,
}

impl GeneratedDiagram {
    pub fn transcript_keys(&self) -> Vec<&str> {
        self.transcript.iter().map(|t| t.key.as_str()).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("target step {step} out of range for {hints} hints")]
    StepOutOfRange { step: usize, hints: usize },
    #[error("in-context example is the target problem")]
    IclIsTarget,
    #[error("in-context example {0} has no diagram")]
    IclWithoutDiagram(String),
    #[error("on-task generation needs an earlier hint with a diagram")]
    NoPreviousDiagram,
    #[error("variant {0} is not handled by this operation")]
    WrongVariant(PipelineVariant),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("repairs exhausted after {attempts} attempt(s): {}", issue_codes(.issues))]
    RepairsExhausted {
        attempts: u32,
        issues: Vec<Issue>,
        report: Option<ValidationReport>,
    },
    #[error("description stage returned empty text")]
    EmptyDescription,
}

fn issue_codes(issues: &[Issue]) -> String {
    issues.iter().map(|i| i.code.as_str()).collect::<Vec<_>>().join(",")
}

impl GenerationError {
    /// Short stable code for reports.
    pub fn code(&self) -> String {
        match self {
            GenerationError::RepairsExhausted { issues, .. } => format!("REPAIRS_EXHAUSTED({})", issue_codes(issues)),
            GenerationError::Gateway(GatewayError::CacheMiss { .. }) => "CACHE_MISS".into(),
            GenerationError::Gateway(_) => "GATEWAY_ERROR".into(),
            GenerationError::EmptyDescription => "EMPTY_DESCRIPTION".into(),
            _ => "INVALID_TASK".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractError {
    #[error("no <svg> element found in response")]
    NoSvgFound,
    #[error("extracted SVG does not parse: {0}")]
    Parse(#[from] SvgError),
}

fn is_svg_open_at(s: &str, i: usize) -> bool {
    s[i..].starts_with("<svg")
        && s[i + 4..]
            .chars()
            .next()
            .is_some_and(|c| c.is_whitespace() || c == '>' || c == '/')
}

/// Byte range of the first `<svg …>…</svg>` span, nesting-aware. An
/// unterminated span runs to the end of the text.
fn svg_span(text: &str) -> Option<(usize, usize)> {
    let start = text.match_indices("<svg").map(|(i, _)| i).find(|&i| is_svg_open_at(text, i))?;
    let open_end = text[start..].find('>').map(|j| start + j + 1).unwrap_or(text.len());
    if text[..open_end].ends_with("/>") {
        return Some((start, open_end));
    }
    let mut depth = 1;
    let mut i = open_end;
    while i < text.len() {
        let rest = &text[i..];
        if rest.starts_with("</svg") {
            depth -= 1;
            let close = rest.find('>').map(|j| i + j + 1).unwrap_or(text.len());
            if depth == 0 {
                return Some((start, close));
            }
            i = close;
        } else if is_svg_open_at(text, i) {
            let end = rest.find('>').map(|j| i + j + 1).unwrap_or(text.len());
            if !text[..end].ends_with("/>") {
                depth += 1;
            }
            i = end;
        } else {
            i += rest.chars().next().map_or(1, char::len_utf8);
        }
    }
    Some((start, text.len()))
}

/// First `<svg>` span of a model reply, stripped of fences and prose.
pub fn extract_svg(response_text: &str) -> Result<String, ExtractError> {
    let (a, b) = svg_span(response_text).ok_or(ExtractError::NoSvgFound)?;
    let src = response_text[a..b].to_string();
    parse_svg(&src)?;
    Ok(src)
}

/// Text before the SVG block, without a leading "Hint:" label.
fn leading_hint_text(response_text: &str) -> Option<String> {
    let (a, _) = svg_span(response_text)?;
    let mut head = &response_text[..a];
    if let Some(fence) = head.rfind("```") {
        head = &head[..fence];
    }
    let mut text = head.trim();
    for prefix in ["Hint:", "hint:", "**Hint:**"] {
        if let Some(rest) = text.strip_prefix(prefix) {
            text = rest.trim();
        }
    }
    (!text.is_empty()).then(|| text.to_string())
}

fn svg_block(src: &str) -> String {
    let normalized = normalize_source(src).unwrap_or_else(|_| src.trim().to_string());
    format!("```svg\n{normalized}\n```")
}

/// Deterministic plain-language summary of a diagram's contents.
pub fn describe_diagram(src: &str) -> String {
    let Ok(doc) = parse_svg(src) else {
        return "A diagram.".into();
    };
    let s = extract_structure(&doc);
    let mut parts: Vec<String> = DRAWABLE_TAGS
        .iter()
        .filter(|t| **t != "text")
        .filter_map(|t| match s.count(t) {
            0 => None,
            1 => Some(format!("1 {t}")),
            n => Some(format!("{n} {t}s")),
        })
        .collect();
    if parts.is_empty() {
        parts.push("no shapes".into());
    }
    let mut out = format!("A diagram with {}", parts.join(", "));
    if !s.labels.is_empty() {
        let shown: Vec<String> = s.labels.iter().take(24).map(|l| format!("\"{l}\"")).collect();
        let more = if s.labels.len() > 24 { ", ..." } else { "" };
        out.push_str(&format!(" and text labels {}{more}", shown.join(", ")));
    }
    out.push('.');
    out
}

fn problem_header(p: &Problem, cfg: &GenerationConfig) -> String {
    let mut out = format!("Problem: {}", p.statement);
    if let (true, Some(d)) = (cfg.include_statement_diagram, &p.statement_diagram) {
        out.push_str(&format!("\nProblem diagram:\n{}", svg_block(d)));
    }
    out
}

fn example_block(p: &Problem, cfg: &GenerationConfig, with_descriptions: bool) -> String {
    let mut out = problem_header(p, cfg);
    for h in &p.hints {
        let n = h.index + 1;
        out.push_str(&format!("\nHint {n}: {}", h.text));
        if let Some(d) = &h.diagram {
            out.push_str(&format!("\nHint {n} diagram:\n{}", svg_block(d)));
            if with_descriptions {
                out.push_str(&format!("\nHint {n} diagram description: {}", describe_diagram(d)));
            }
        }
    }
    out
}

fn target_block(t: &GenerationTask, cfg: &GenerationConfig) -> String {
    let mut out = problem_header(&t.target_problem, cfg);
    for h in &t.prior_hints {
        out.push_str(&format!("\nHint {}: {}", h.index + 1, h.text));
    }
    if t.variant != PipelineVariant::HintFirst {
        let h = t.target_hint();
        out.push_str(&format!("\nHint {}: {}", h.index + 1, h.text));
    }
    out
}

fn response_format(prompts: &PromptSet, variant: PipelineVariant) -> Result<&str, PromptError> {
    prompts.get(match variant {
        PipelineVariant::HintFirst => "format_hint_first",
        PipelineVariant::T2i => "format_t2i",
        _ => "format_svg",
    })
}

/// Assembles task description, format instructions, in-context example and
/// target problem, in that order, as one user message.
pub fn build_generation_prompt(t: &GenerationTask, cfg: &GenerationConfig) -> Result<ChatRequest, GenerationError> {
    t.validate()?;
    let p = &cfg.prompts;
    let step = (t.target_step + 1).to_string();
    let format = response_format(p, t.variant)?;
    let request = match t.variant {
        PipelineVariant::Baseline => p.render("request_diagram", &[("step", &step)])?,
        PipelineVariant::HintFirst => p.render("request_hint_first", &[("step", &step)])?,
        PipelineVariant::T2i => p.render("request_t2i", &[("step", &step)])?,
        PipelineVariant::OnTask => {
            let prev = t.previous_diagram().ok_or(GenerationError::NoPreviousDiagram)?;
            let src = prev.diagram.as_deref().expect("filtered on diagram");
            let normalized = normalize_source(src).unwrap_or_else(|_| src.trim().to_string());
            p.render(
                "request_on_task",
                &[
                    ("step", &step),
                    ("previous_step", &(prev.index + 1).to_string()),
                    ("previous_diagram", &normalized),
                ],
            )?
        }
    };
    let sections = [
        p.get("task")?.to_string(),
        p.render("instructions_svg", &[("response_format", format)])?,
        p.render(
            "example",
            &[
                ("topic", &t.icl_example.topic_id),
                ("example", &example_block(&t.icl_example, cfg, t.variant == PipelineVariant::T2i)),
            ],
        )?,
        p.render("target", &[("target", &target_block(t, cfg)), ("request", &request)])?,
    ];
    Ok(cfg.request(t.variant.purpose(), vec![Message::user(sections.join("\n\n"))]))
}

/// Accepted reply: normalized SVG plus the hint text for hint-first.
type Checked = (String, Option<String>, Option<ValidationReport>);

fn check_reply(text: &str, variant: PipelineVariant) -> Result<Checked, (Vec<Issue>, Option<ValidationReport>)> {
    let issue = |code: &str, message: String| Issue {
        code: code.into(),
        message,
    };
    let src = match extract_svg(text) {
        Ok(s) => s,
        Err(ExtractError::NoSvgFound) => return Err((vec![issue("NO_SVG", "reply contains no <svg> element".into())], None)),
        Err(ExtractError::Parse(e)) => return Err((vec![issue("PARSE_ERROR", e.to_string())], None)),
    };
    let doc = parse_svg(&src).expect("extract_svg parsed it");
    let report = validate_svg(&doc);
    let mut issues: Vec<Issue> = report
        .errors()
        .map(|f| issue(f.code.as_str(), format!("{} ({})", f.message, f.element)))
        .collect();
    let hint = if variant == PipelineVariant::HintFirst {
        let h = leading_hint_text(text);
        if h.is_none() {
            issues.push(issue("MISSING_HINT_TEXT", "no hint text before the SVG block".into()));
        }
        h
    } else {
        None
    };
    if issues.is_empty() {
        Ok((normalize_svg(&doc), hint, Some(report)))
    } else {
        Err((issues, Some(report)))
    }
}

fn repair_message(prompts: &PromptSet, variant: PipelineVariant, issues: &[Issue]) -> Result<String, PromptError> {
    let findings: Vec<String> = issues.iter().map(|i| format!("- {}: {}", i.code, i.message)).collect();
    prompts.render(
        "repair",
        &[
            ("findings", &findings.join("\n")),
            ("response_format", response_format(prompts, variant)?),
        ],
    )
}

/// Prompt, complete, extract, validate; on failure quote the finding codes
/// back to the model, up to `cfg.max_repairs` times.
pub fn generate_diagram(t: &GenerationTask, gw: &Gateway, cfg: &GenerationConfig) -> Result<GeneratedDiagram, GenerationError> {
    if t.variant == PipelineVariant::T2i {
        return Err(GenerationError::WrongVariant(t.variant));
    }
    let mut req = build_generation_prompt(t, cfg)?;
    let mut transcript = Vec::new();
    let mut repairs = 0;
    loop {
        let key = cache_key(&req);
        let resp = gw.complete(&req)?;
        transcript.push(TranscriptTurn {
            key,
            purpose: req.purpose,
            response: resp.text.clone(),
        });
        match check_reply(&resp.text, t.variant) {
            Ok((svg, hint, _)) => {
                return Ok(GeneratedDiagram {
                    svg_source: Some(svg),
                    pixel_image: None,
                    generated_hint_text: hint,
                    description: None,
                    repair_attempts: repairs,
                    transcript,
                })
            }
            Err((issues, report)) => {
                if repairs >= cfg.max_repairs {
                    return Err(GenerationError::RepairsExhausted {
                        attempts: repairs + 1,
                        issues,
                        report,
                    });
                }
                log::debug!("repairing {}/step{}: {}", t.target_problem.id, t.target_step, issue_codes(&issues));
                repairs += 1;
                req.messages.push(Message::assistant(resp.text));
                req.messages.push(Message::user(repair_message(&cfg.prompts, t.variant, &issues)?));
            }
        }
    }
}

fn clean_description(text: &str) -> String {
    let mut t = text.trim();
    for prefix in ["Description:", "description:"] {
        if let Some(rest) = t.strip_prefix(prefix) {
            t = rest.trim();
        }
    }
    t.trim_matches('"').trim().to_string()
}

/// Two stages: the text model describes the diagram, then the image backend
/// draws it.
pub fn generate_t2i(
    t: &GenerationTask,
    gw: &Gateway,
    images: &dyn ImageBackend,
    cfg: &GenerationConfig,
) -> Result<GeneratedDiagram, GenerationError> {
    if t.variant != PipelineVariant::T2i {
        return Err(GenerationError::WrongVariant(t.variant));
    }
    let req = build_generation_prompt(t, cfg)?;
    let key = cache_key(&req);
    let resp = gw.complete(&req)?;
    let description = clean_description(&resp.text);
    if description.is_empty() {
        return Err(GenerationError::EmptyDescription);
    }
    let image = images.generate_image(&description)?;
    Ok(GeneratedDiagram {
        svg_source: None,
        pixel_image: Some(image),
        generated_hint_text: None,
        description: Some(description),
        repair_attempts: 0,
        transcript: vec![TranscriptTurn {
            key,
            purpose: req.purpose,
            response: resp.text,
        }],
    })
}
