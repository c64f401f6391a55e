//! Question generation from ground truth, yes/no visual question answering,
//! scoring and report aggregation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Problem;
use crate::gateway::{cache_key, Gateway, GatewayError, Message, Part, Purpose, Role};
use crate::generation::{GenerationConfig, TranscriptTurn};
use crate::prompts::PromptError;
use crate::svg::{normalize_source, RasterImage};

pub const QUESTIONS_PER_CATEGORY: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Semantic,
    Syntactic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    ClarityOfCoreConcepts,
    FacilitationOfUnderstanding,
    AlignmentWithMathReasoning,
    EaseOfInterpretation,
    MinimizationOfAmbiguity,
    InclusionOfKeyComponents,
    AccurateNumericalAndLabels,
    StructuralConsistency,
    Completeness,
    AdherenceToMathNotations,
}

impl Criterion {
    pub const ALL: [Criterion; 10] = [
        Criterion::ClarityOfCoreConcepts,
        Criterion::FacilitationOfUnderstanding,
        Criterion::AlignmentWithMathReasoning,
        Criterion::EaseOfInterpretation,
        Criterion::MinimizationOfAmbiguity,
        Criterion::InclusionOfKeyComponents,
        Criterion::AccurateNumericalAndLabels,
        Criterion::StructuralConsistency,
        Criterion::Completeness,
        Criterion::AdherenceToMathNotations,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            Criterion::ClarityOfCoreConcepts => "clarity_of_core_concepts",
            Criterion::FacilitationOfUnderstanding => "facilitation_of_understanding",
            Criterion::AlignmentWithMathReasoning => "alignment_with_math_reasoning",
            Criterion::EaseOfInterpretation => "ease_of_interpretation",
            Criterion::MinimizationOfAmbiguity => "minimization_of_ambiguity",
            Criterion::InclusionOfKeyComponents => "inclusion_of_key_components",
            Criterion::AccurateNumericalAndLabels => "accurate_numerical_and_labels",
            Criterion::StructuralConsistency => "structural_consistency",
            Criterion::Completeness => "completeness",
            Criterion::AdherenceToMathNotations => "adherence_to_math_notations",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Criterion::ClarityOfCoreConcepts => "Clarity of core concepts",
            Criterion::FacilitationOfUnderstanding => "Facilitation of understanding",
            Criterion::AlignmentWithMathReasoning => "Alignment with math reasoning",
            Criterion::EaseOfInterpretation => "Ease of interpretation",
            Criterion::MinimizationOfAmbiguity => "Minimization of ambiguity",
            Criterion::InclusionOfKeyComponents => "Inclusion of key components",
            Criterion::AccurateNumericalAndLabels => "Accurate numerical and labels",
            Criterion::StructuralConsistency => "Structural consistency",
            Criterion::Completeness => "Completeness",
            Criterion::AdherenceToMathNotations => "Adherence to math notations",
        }
    }

    pub fn category(self) -> Category {
        if Criterion::ALL.iter().position(|c| *c == self).expect("listed") < QUESTIONS_PER_CATEGORY {
            Category::Semantic
        } else {
            Category::Syntactic
        }
    }

    pub fn of(category: Category) -> impl Iterator<Item = Criterion> {
        Criterion::ALL.into_iter().filter(move |c| c.category() == category)
    }
}

impl FromStr for Criterion {
    type Err = String;
    /// Accepts the slug or the title, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let want = s.trim().to_lowercase().replace([' ', '-'], "_");
        Criterion::ALL
            .into_iter()
            .find(|c| c.slug() == want)
            .ok_or_else(|| format!("unknown criterion {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuestion {
    pub id: String,
    pub category: Category,
    pub criterion: Criterion,
    pub text: String,
}

impl EvalQuestion {
    pub fn new(criterion: Criterion, text: impl Into<String>) -> Self {
        EvalQuestion {
            id: criterion.slug().to_string(),
            category: criterion.category(),
            criterion,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub problem_id: String,
    pub step: usize,
    pub questions: Vec<EvalQuestion>,
}

impl QuestionSet {
    /// Ten questions, one per criterion, each a question about its own
    /// criterion's category.
    pub fn validate(&self) -> Result<(), VqaError> {
        let bad = |m: String| Err(VqaError::MalformedQuestionSet(m));
        if self.questions.len() != Criterion::ALL.len() {
            return bad(format!("expected {} questions, got {}", Criterion::ALL.len(), self.questions.len()));
        }
        for c in Criterion::ALL {
            let n = self.questions.iter().filter(|q| q.criterion == c).count();
            if n != 1 {
                return bad(format!("criterion {} has {n} questions", c.slug()));
            }
        }
        for q in &self.questions {
            if q.category != q.criterion.category() {
                return bad(format!("question {} has category {:?}", q.id, q.category));
            }
            if !q.text.trim_end().ends_with('?') {
                return bad(format!("question {} does not end with '?'", q.id));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&EvalQuestion> {
        self.questions.iter().find(|q| q.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub question_id: String,
    pub answer: bool,
    pub reasoning: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subject {
    GroundTruth,
    Prediction,
}

impl Subject {
    pub fn as_str(self) -> &'static str {
        match self {
            Subject::GroundTruth => "ground_truth",
            Subject::Prediction => "prediction",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramScore {
    pub subject: Subject,
    pub semantic: f64,
    pub syntactic: f64,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerdictError {
    #[error("no leading yes/no token")]
    Ambiguous,
    #[error("answer has no reasoning")]
    MissingReasoning,
}

#[derive(Debug, thiserror::Error)]
pub enum VqaError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("malformed question set: {0}")]
    MalformedQuestionSet(String),
    #[error("unparseable verdict for {question_id} after reprompt: {source}")]
    UnparseableVerdict {
        question_id: String,
        #[source]
        source: VerdictError,
    },
    #[error("no verdict for question {0}")]
    MissingVerdict(String),
    #[error("more than one verdict for question {0}")]
    DuplicateVerdict(String),
    #[error("verdict for unknown question {0}")]
    UnknownQuestion(String),
    #[error("image is empty")]
    EmptyImage,
    #[error("hint {step} of {problem_id} has no ground-truth diagram")]
    NoGroundTruth { problem_id: String, step: usize },
    #[error("nothing to aggregate")]
    EmptyInput,
    #[error("topic {0} has no scored problems")]
    EmptyTopic(String),
}

impl VqaError {
    pub fn code(&self) -> &'static str {
        match self {
            VqaError::Gateway(GatewayError::CacheMiss { .. }) => "CACHE_MISS",
            VqaError::Gateway(_) => "GATEWAY_ERROR",
            VqaError::Prompt(_) => "PROMPT_ERROR",
            VqaError::MalformedQuestionSet(_) => "MALFORMED_QUESTION_SET",
            VqaError::UnparseableVerdict { .. } => "UNPARSEABLE_VERDICT",
            VqaError::MissingVerdict(_) | VqaError::DuplicateVerdict(_) | VqaError::UnknownQuestion(_) => {
                "VERDICT_MISMATCH"
            }
            VqaError::EmptyImage => "EMPTY_IMAGE",
            VqaError::NoGroundTruth { .. } => "NO_GROUND_TRUTH",
            VqaError::EmptyInput | VqaError::EmptyTopic(_) => "EMPTY_INPUT",
        }
    }
}

/// Leading yes/no token of the first line, then the remaining text as
/// reasoning. Tolerates markdown emphasis, quotes and trailing punctuation.
pub fn parse_verdict(text: &str) -> Result<(bool, String), VerdictError> {
    let trimmed = text.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '_' | '"' | '\'' | '#' | '>' | '`'));
    let token_len = trimmed.find(|c: char| !c.is_alphanumeric()).unwrap_or(trimmed.len());
    let answer = match trimmed[..token_len].to_lowercase().as_str() {
        "yes" => true,
        "no" => false,
        _ => return Err(VerdictError::Ambiguous),
    };
    let reasoning = trimmed[token_len..]
        .trim_start_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation() || matches!(c, '—' | '–'))
        .trim_end()
        .to_string();
    if reasoning.is_empty() {
        return Err(VerdictError::MissingReasoning);
    }
    Ok((answer, reasoning))
}

fn criteria_lines(category: Category) -> String {
    Criterion::of(category)
        .map(|c| format!("- {}: {}", c.slug(), c.title()))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Deserialize)]
struct RawQuestions {
    questions: Vec<RawQuestion>,
}

#[derive(Deserialize)]
struct RawQuestion {
    criterion: String,
    question: String,
}

/// Parses the question-generation reply: a JSON object, optionally fenced or
/// surrounded by prose.
pub fn parse_question_reply(problem_id: &str, step: usize, text: &str) -> Result<QuestionSet, VqaError> {
    let (a, b) = match (text.find('{'), text.rfind('}')) {
        (Some(a), Some(b)) if a < b => (a, b),
        _ => return Err(VqaError::MalformedQuestionSet("no JSON object in reply".into())),
    };
    let raw: RawQuestions =
        serde_json::from_str(&text[a..=b]).map_err(|e| VqaError::MalformedQuestionSet(e.to_string()))?;
    let mut questions = Vec::with_capacity(raw.questions.len());
    for q in raw.questions {
        let criterion: Criterion = q.criterion.parse().map_err(VqaError::MalformedQuestionSet)?;
        questions.push(EvalQuestion::new(criterion, q.question.trim()));
    }
    questions.sort_by_key(|q| q.criterion);
    let set = QuestionSet {
        problem_id: problem_id.to_string(),
        step,
        questions,
    };
    set.validate()?;
    Ok(set)
}

/// Text-only request over the ground-truth SVG code.
pub fn question_request(problem: &Problem, step: usize, gt_svg: &str, cfg: &GenerationConfig) -> Result<crate::gateway::ChatRequest, VqaError> {
    let hint = problem.hints.get(step).ok_or_else(|| VqaError::NoGroundTruth {
        problem_id: problem.id.clone(),
        step,
    })?;
    let diagram = normalize_source(gt_svg).unwrap_or_else(|_| gt_svg.trim().to_string());
    let prompt = cfg.prompts.render(
        "questions",
        &[
            ("statement", &problem.statement),
            ("hint", &hint.text),
            ("diagram", &diagram),
            ("semantic_criteria", &criteria_lines(Category::Semantic)),
            ("syntactic_criteria", &criteria_lines(Category::Syntactic)),
        ],
    )?;
    Ok(cfg.request(Purpose::QuestionGen, vec![Message::user(prompt)]))
}

pub fn generate_questions(
    problem: &Problem,
    step: usize,
    gt_svg: &str,
    gw: &Gateway,
    cfg: &GenerationConfig,
) -> Result<(QuestionSet, TranscriptTurn), VqaError> {
    let req = question_request(problem, step, gt_svg, cfg)?;
    let resp = gw.complete(&req)?;
    let set = parse_question_reply(&problem.id, step, &resp.text)?;
    Ok((
        set,
        TranscriptTurn {
            key: cache_key(&req),
            purpose: Purpose::QuestionGen,
            response: resp.text,
        },
    ))
}

/// Multimodal request: question text and the PNG.
pub fn vqa_request(question: &EvalQuestion, png: &[u8], cfg: &GenerationConfig) -> Result<crate::gateway::ChatRequest, VqaError> {
    let text = cfg.prompts.render("vqa", &[("question", &question.text)])?;
    let msg = Message {
        role: Role::User,
        parts: vec![
            Part::Text(text),
            Part::Image {
                media_type: "image/png".into(),
                data: png.to_vec(),
            },
        ],
    };
    Ok(cfg.request(Purpose::Vqa, vec![msg]))
}

/// One independent call per question; reprompts once on an unparseable reply.
pub fn ask_vqa(question: &EvalQuestion, image: &RasterImage, gw: &Gateway, cfg: &GenerationConfig) -> Result<Verdict, VqaError> {
    if image.is_empty() {
        return Err(VqaError::EmptyImage);
    }
    ask_vqa_png(question, &image.to_png(), gw, cfg).map(|(v, _)| v)
}

fn ask_vqa_png(
    question: &EvalQuestion,
    png: &[u8],
    gw: &Gateway,
    cfg: &GenerationConfig,
) -> Result<(Verdict, Vec<TranscriptTurn>), VqaError> {
    let mut req = vqa_request(question, png, cfg)?;
    let mut turns = Vec::new();
    let mut last_err = VerdictError::Ambiguous;
    for attempt in 0..2 {
        let resp = gw.complete(&req)?;
        turns.push(TranscriptTurn {
            key: cache_key(&req),
            purpose: Purpose::Vqa,
            response: resp.text.clone(),
        });
        match parse_verdict(&resp.text) {
            Ok((answer, reasoning)) => {
                return Ok((
                    Verdict {
                        question_id: question.id.clone(),
                        answer,
                        reasoning,
                    },
                    turns,
                ))
            }
            Err(e) if attempt == 0 => {
                last_err = e;
                req.messages.push(Message::assistant(resp.text));
                req.messages
                    .push(Message::user(cfg.prompts.render("vqa_reprompt", &[("question", &question.text)])?));
            }
            Err(e) => last_err = e,
        }
    }
    Err(VqaError::UnparseableVerdict {
        question_id: question.id.clone(),
        source: last_err,
    })
}

/// Asks every question of `qs` about one image and scores the verdicts.
pub fn evaluate_image(
    qs: &QuestionSet,
    image: &RasterImage,
    subject: Subject,
    gw: &Gateway,
    cfg: &GenerationConfig,
) -> Result<(DiagramScore, Vec<TranscriptTurn>), VqaError> {
    if image.is_empty() {
        return Err(VqaError::EmptyImage);
    }
    let png = image.to_png();
    let answers: Vec<(Verdict, Vec<TranscriptTurn>)> = qs
        .questions
        .par_iter()
        .map(|q| ask_vqa_png(q, &png, gw, cfg))
        .collect::<Result<_, _>>()?;
    let (verdicts, turns): (Vec<Verdict>, Vec<Vec<TranscriptTurn>>) = answers.into_iter().unzip();
    let score = score_diagram(qs, &verdicts, subject)?;
    Ok((score, turns.into_iter().flatten().collect()))
}

/// Per-category yes fraction. Order of `verdicts` does not matter.
pub fn score_diagram(qs: &QuestionSet, verdicts: &[Verdict], subject: Subject) -> Result<DiagramScore, VqaError> {
    let mut by_id: HashMap<&str, &Verdict> = HashMap::new();
    for v in verdicts {
        let q = qs.get(&v.question_id).ok_or_else(|| VqaError::UnknownQuestion(v.question_id.clone()))?;
        if by_id.insert(q.id.as_str(), v).is_some() {
            return Err(VqaError::DuplicateVerdict(v.question_id.clone()));
        }
    }
    let mut yes: BTreeMap<Category, usize> = BTreeMap::new();
    let mut total: BTreeMap<Category, usize> = BTreeMap::new();
    for q in &qs.questions {
        let v = by_id.get(q.id.as_str()).ok_or_else(|| VqaError::MissingVerdict(q.id.clone()))?;
        *total.entry(q.category).or_default() += 1;
        *yes.entry(q.category).or_default() += usize::from(v.answer);
    }
    let frac = |c| {
        let t = total.get(&c).copied().unwrap_or(0);
        if t == 0 {
            0.0
        } else {
            yes.get(&c).copied().unwrap_or(0) as f64 / t as f64
        }
    };
    let mut ordered: Vec<Verdict> = verdicts.to_vec();
    ordered.sort_by_key(|v| qs.questions.iter().position(|q| q.id == v.question_id));
    Ok(DiagramScore {
        subject,
        semantic: frac(Category::Semantic),
        syntactic: frac(Category::Syntactic),
        verdicts: ordered,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub semantic: f64,
    pub syntactic: f64,
}

impl ScorePair {
    pub fn new(semantic: f64, syntactic: f64) -> Self {
        ScorePair { semantic, syntactic }
    }
}

impl From<&DiagramScore> for ScorePair {
    fn from(s: &DiagramScore) -> Self {
        ScorePair::new(s.semantic, s.syntactic)
    }
}

/// Ground truth and prediction scored against the same questions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemScores {
    pub gt: ScorePair,
    pub pred: ScorePair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicScores {
    pub topic: String,
    pub problems: Vec<ProblemScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub topic: String,
    pub gt_sem: f64,
    pub gt_syn: f64,
    pub pred_sem: f64,
    pub pred_syn: f64,
}

/// An item left out of aggregation, with the reason code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub item: String,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub rows: Vec<ReportRow>,
    pub overall: ReportRow,
    /// `None` when the overall ground-truth score is zero.
    pub accuracy_sem: Option<f64>,
    pub accuracy_syn: Option<f64>,
    pub excluded: Vec<Exclusion>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

fn ratio(pred: f64, gt: f64) -> Option<f64> {
    (gt != 0.0).then(|| pred / gt)
}

/// Topic values are means over problems; overall is the unweighted mean over
/// topics; accuracy divides the unrounded overall means.
pub fn aggregate(topics: &[TopicScores]) -> Result<EvalReport, VqaError> {
    if topics.is_empty() {
        return Err(VqaError::EmptyInput);
    }
    let mut rows = Vec::with_capacity(topics.len());
    for t in topics {
        if t.problems.is_empty() {
            return Err(VqaError::EmptyTopic(t.topic.clone()));
        }
        let p = &t.problems;
        rows.push(ReportRow {
            topic: t.topic.clone(),
            gt_sem: mean(p.iter().map(|s| s.gt.semantic)),
            gt_syn: mean(p.iter().map(|s| s.gt.syntactic)),
            pred_sem: mean(p.iter().map(|s| s.pred.semantic)),
            pred_syn: mean(p.iter().map(|s| s.pred.syntactic)),
        });
    }
    let overall = ReportRow {
        topic: "overall".into(),
        gt_sem: mean(rows.iter().map(|r| r.gt_sem)),
        gt_syn: mean(rows.iter().map(|r| r.gt_syn)),
        pred_sem: mean(rows.iter().map(|r| r.pred_sem)),
        pred_syn: mean(rows.iter().map(|r| r.pred_syn)),
    };
    Ok(EvalReport {
        label: "Pipeline".into(),
        accuracy_sem: ratio(overall.pred_sem, overall.gt_sem),
        accuracy_syn: ratio(overall.pred_syn, overall.gt_syn),
        rows,
        overall,
        excluded: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(format!("unknown format {s:?} (expected csv or markdown)")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "markdown",
        })
    }
}

pub const REPORT_COLUMNS: [&str; 5] = ["topic", "gt_sem", "gt_syn", "pred_sem", "pred_syn"];

fn f2(x: f64) -> String {
    format!("{x:.2}")
}

fn opt2(x: Option<f64>) -> String {
    x.map(f2).unwrap_or_else(|| "n/a".into())
}

fn row_cells(r: &ReportRow) -> [String; 5] {
    [r.topic.clone(), f2(r.gt_sem), f2(r.gt_syn), f2(r.pred_sem), f2(r.pred_syn)]
}

pub fn emit_report(r: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => emit_csv(r),
        ReportFormat::Markdown => emit_markdown(r),
    }
}

fn emit_csv(r: &EvalReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_COLUMNS).expect("in-memory csv");
    for row in r.rows.iter().chain(std::iter::once(&r.overall)) {
        w.write_record(row_cells(row)).expect("in-memory csv");
    }
    w.write_record(["accuracy", "", "", &opt2(r.accuracy_sem), &opt2(r.accuracy_syn)])
        .expect("in-memory csv");
    for e in &r.excluded {
        w.write_record(["excluded", &e.item, &e.code, "", ""]).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|")
}

fn emit_markdown(r: &EvalReport) -> String {
    let mut out = format!("## {}\n\n", r.label);
    out.push_str("| variant | gt_sem | gt_syn | pred_sem | pred_syn | accuracy_sem | accuracy_syn |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    let o = &r.overall;
    out.push_str(&format!(
        "| {} | {} | {} | {} | {} | {} | {} |\n\n",
        md_escape(&r.label),
        f2(o.gt_sem),
        f2(o.gt_syn),
        f2(o.pred_sem),
        f2(o.pred_syn),
        opt2(r.accuracy_sem),
        opt2(r.accuracy_syn)
    ));
    out.push_str(&format!("| {} |\n", REPORT_COLUMNS.join(" | ")));
    out.push_str("|---|---|---|---|---|\n");
    for row in r.rows.iter().chain(std::iter::once(&r.overall)) {
        let cells = row_cells(row);
        out.push_str(&format!("| {} | {} |\n", md_escape(&cells[0]), cells[1..].join(" | ")));
    }
    out.push_str(&format!("| accuracy | | | {} | {} |\n", opt2(r.accuracy_sem), opt2(r.accuracy_syn)));
    if !r.excluded.is_empty() {
        out.push_str("\nExcluded from aggregation:\n\n");
        for e in &r.excluded {
            out.push_str(&format!("- `{}`: {}\n", e.item, e.code));
        }
    }
    out
}

#[derive(Debug, thiserror::Error)]
#[error("report csv line {line}: {message}")]
pub struct ReportParseError {
    pub line: usize,
    pub message: String,
}

/// Reads back the CSV written by [`emit_report`]. Values carry the two
/// decimals that were written.
pub fn parse_report_csv(text: &str, label: &str) -> Result<EvalReport, ReportParseError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let err = |line: usize, message: String| ReportParseError { line, message };
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != REPORT_COLUMNS {
        return Err(err(1, format!("unexpected header {headers:?}")));
    }
    let num = |line: usize, s: &str| s.parse::<f64>().map_err(|e| err(line, format!("{s:?}: {e}")));
    let opt = |line: usize, s: &str| if s == "n/a" { Ok(None) } else { num(line, s).map(Some) };
    let mut rows = Vec::new();
    let mut overall = None;
    let mut accuracy = None;
    let mut excluded = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| err(line, e.to_string()))?;
        let f: Vec<&str> = rec.iter().collect();
        if f.len() != 5 {
            return Err(err(line, format!("expected 5 fields, got {}", f.len())));
        }
        match f[0] {
            "accuracy" => accuracy = Some((opt(line, f[3])?, opt(line, f[4])?)),
            "excluded" => excluded.push(Exclusion {
                item: f[1].to_string(),
                code: f[2].to_string(),
            }),
            topic => {
                let row = ReportRow {
                    topic: topic.to_string(),
                    gt_sem: num(line, f[1])?,
                    gt_syn: num(line, f[2])?,
                    pred_sem: num(line, f[3])?,
                    pred_syn: num(line, f[4])?,
                };
                if topic == "overall" {
                    overall = Some(row);
                } else {
                    rows.push(row);
                }
            }
        }
    }
    let overall = overall.ok_or_else(|| err(0, "missing overall row".into()))?;
    let (accuracy_sem, accuracy_syn) = accuracy.ok_or_else(|| err(0, "missing accuracy row".into()))?;
    Ok(EvalReport {
        label: label.to_string(),
        rows,
        overall,
        accuracy_sem,
        accuracy_syn,
        excluded,
    })
}
