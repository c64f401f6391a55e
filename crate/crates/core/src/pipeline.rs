//! End-to-end orchestration: routing, generation, rasterization, evaluation,
//! aggregation and run artifacts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, RunConfig};
use crate::corpus::{choose_seeded, diagram_bearing_steps, load_corpus, validate_corpus, Corpus, CorpusError, CorpusFinding, FindingSeverity, Problem};
use crate::gateway::{
    Cache, CachedImageBackend, Gateway, GatewayError, ImageBackend, ImageTransport, Mode, NoNetwork, OpenAiImageTransport, OpenAiTransport, Transport,
};
use crate::generation::{build_generation_prompt, generate_diagram, generate_t2i, GeneratedDiagram, GenerationConfig, GenerationTask, PipelineVariant, TranscriptTurn};
use crate::hashing::sha256_hex;
use crate::prompts::{PromptError, PromptSet};
use crate::svg::{parse_svg, rasterize, RasterImage};
use crate::vqa::{aggregate, emit_report, evaluate_image, generate_questions, question_request, DiagramScore, EvalReport, Exclusion, ProblemScores, QuestionSet, ReportFormat, ScorePair, Subject, TopicScores};

pub const MANIFEST_FILE: &str = "run.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("corpus has {} error finding(s):\n{}", .0.len(), join_lines(.0))]
    InvalidCorpus(Vec<CorpusFinding>),
    #[error("replay cache is missing {} entr(ies):\n{}", .0.len(), .0.join("\n"))]
    MissingCacheEntries(Vec<String>),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("no item could be scored ({} excluded)", .0.len())]
    NothingScored(Vec<Exclusion>),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{0}")]
    RunDir(String),
}

fn join_lines<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("\n")
}

impl PipelineError {
    /// 1 user error, 2 data error, 3 backend error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Prompt(_) | PipelineError::RunDir(_) => 1,
            PipelineError::Gateway(GatewayError::MissingCredential) => 1,
            PipelineError::Gateway(_) | PipelineError::MissingCacheEntries(_) => 3,
            PipelineError::Corpus(CorpusError::Io { .. }) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// One (problem, hint step) to generate and evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkItem {
    pub topic_id: String,
    pub problem: Problem,
    pub step: usize,
    pub icl: Problem,
}

impl WorkItem {
    pub fn id(&self) -> String {
        format!("{}/step{}", self.problem.id, self.step)
    }

    pub fn ground_truth(&self) -> &str {
        self.problem.hints[self.step]
            .diagram
            .as_deref()
            .expect("routed steps carry a diagram")
    }
}

/// Step evaluated for `p` under `variant`: the only diagram for single-diagram
/// variants, the last of two or more for on-task.
pub fn route_step(p: &Problem, variant: PipelineVariant) -> Option<usize> {
    let steps = diagram_bearing_steps(p);
    match variant {
        PipelineVariant::OnTask if steps.len() >= 2 => steps.last().copied(),
        PipelineVariant::OnTask => None,
        _ if steps.len() == 1 => Some(steps[0]),
        _ => None,
    }
}

/// Per topic: eligible problems, one seeded pick as the in-context example,
/// the rest evaluated (optionally a seeded sample of them).
pub fn plan_items(corpus: &Corpus, variant: PipelineVariant, seed: u64, sample: Option<usize>) -> Vec<WorkItem> {
    let mut items = Vec::new();
    for topic in &corpus.topics {
        let eligible: Vec<&Problem> = topic
            .problems
            .iter()
            .filter(|p| route_step(p, variant).is_some())
            .collect();
        if eligible.len() < 2 {
            if !eligible.is_empty() {
                log::warn!("topic {} has one eligible problem for {variant}; skipped", topic.id);
            }
            continue;
        }
        let icl = choose_seeded(&eligible, seed, &format!("icl:{}", topic.id)).expect("non-empty");
        let mut rest: Vec<&Problem> = eligible.iter().copied().filter(|p| p.id != icl.id).collect();
        if let Some(n) = sample.filter(|n| *n < rest.len()) {
            let digest = sha256_hex(format!("{seed}:sample:{}", topic.id).as_bytes());
            let mut rng = ChaCha8Rng::seed_from_u64(u64::from_str_radix(&digest[..16], 16).expect("hex"));
            let keep: Vec<&str> = rest.choose_multiple(&mut rng, n).map(|p| p.id.as_str()).collect();
            rest.retain(|p| keep.contains(&p.id.as_str()));
        }
        for p in rest {
            items.push(WorkItem {
                topic_id: topic.id.clone(),
                problem: p.clone(),
                step: route_step(p, variant).expect("filtered"),
                icl: icl.clone(),
            });
        }
    }
    items
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Generate, then evaluate.
    Full,
    /// Generate diagrams only.
    Generate,
    /// Evaluate diagrams already present in the run directory.
    Evaluate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicRef {
    pub id: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub topic_id: String,
    pub problem_id: String,
    pub step: usize,
    pub icl_example: String,
    /// `None` when the item succeeded.
    pub error_code: Option<String>,
}

impl ItemRecord {
    pub fn id(&self) -> String {
        format!("{}/step{}", self.problem_id, self.step)
    }
}

/// `run.json`. Holds no timestamps so replayed runs are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub stage: Stage,
    pub variant: PipelineVariant,
    pub label: String,
    pub model_id: String,
    pub temperature: f64,
    pub target_px: u32,
    pub max_repairs: u32,
    pub seed: u64,
    pub corpus_hash: String,
    pub prompts_fingerprint: String,
    pub topics: Vec<TopicRef>,
    pub items: Vec<ItemRecord>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
    /// Absent for generate-only runs.
    pub report: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ItemFailure {
    code: String,
    message: String,
}

impl ItemFailure {
    fn new(code: impl Into<String>, message: impl fmt::Display) -> Self {
        ItemFailure {
            code: code.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Serialize)]
struct GenerationRecord<'a> {
    repair_attempts: u32,
    generated_hint_text: &'a Option<String>,
    description: &'a Option<String>,
    turns: &'a [TranscriptTurn],
}

#[derive(Serialize, Default)]
struct Transcript<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    generation: Option<GenerationRecord<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    questions: Option<TranscriptTurn>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    vqa_ground_truth: Vec<TranscriptTurn>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    vqa_prediction: Vec<TranscriptTurn>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    std::fs::write(path, s).map_err(io_err(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Model backends used by a run.
pub struct Backends<'a> {
    pub gateway: &'a Gateway,
    pub images: &'a dyn ImageBackend,
}

/// Backends built from a run configuration.
pub struct OwnedBackends {
    pub gateway: Gateway,
    pub images: Box<dyn ImageBackend>,
}

impl OwnedBackends {
    /// Replay needs no credential; live and record read `HINTGRAPH_API_KEY`.
    pub fn from_config(cfg: &RunConfig) -> Result<Self, GatewayError> {
        let cache = Cache::new(&cfg.cache_dir);
        let (transport, image_transport): (Arc<dyn Transport>, Arc<dyn ImageTransport>) = match cfg.mode {
            Mode::Replay => (Arc::new(NoNetwork), Arc::new(NoNetwork)),
            Mode::Live | Mode::Record => (
                Arc::new(OpenAiTransport::from_env(cfg.base_url.clone())?),
                Arc::new(OpenAiImageTransport::from_env(cfg.base_url.clone())?),
            ),
        };
        let gateway = Gateway::new(cfg.mode, Some(cfg.cache_dir.clone()), transport).with_max_in_flight(cfg.jobs);
        let images = CachedImageBackend::new(cfg.mode, cache, image_transport).with_model(cfg.image_model.clone());
        Ok(OwnedBackends {
            gateway,
            images: Box::new(images),
        })
    }

    pub fn borrow(&self) -> Backends<'_> {
        Backends {
            gateway: &self.gateway,
            images: self.images.as_ref(),
        }
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    gen: GenerationConfig,
    backends: &'a Backends<'a>,
    run_dir: PathBuf,
}

pub fn generation_config(cfg: &RunConfig) -> Result<GenerationConfig, PipelineError> {
    let prompts = match &cfg.prompts_dir {
        Some(dir) => PromptSet::with_overrides(dir)?,
        None => PromptSet::builtin(),
    };
    Ok(GenerationConfig {
        model_id: cfg.model_id.clone(),
        temperature: cfg.temperature,
        max_output_tokens: cfg.max_output_tokens,
        max_repairs: cfg.max_repairs,
        include_statement_diagram: cfg.include_statement_diagram,
        prompts: Arc::new(prompts),
    })
}

/// Loads the corpus and refuses to run on error-severity findings.
pub fn load_checked_corpus(path: &Path) -> Result<Corpus, PipelineError> {
    let corpus = load_corpus(path)?;
    let errors: Vec<CorpusFinding> = validate_corpus(&corpus)
        .into_iter()
        .filter(|f| f.severity == FindingSeverity::Error)
        .collect();
    if !errors.is_empty() {
        return Err(PipelineError::InvalidCorpus(errors));
    }
    Ok(corpus)
}

/// Cache keys of every first-turn request the run will make, reported as
/// `<item>: <purpose> <key>` for those missing from the cache.
pub fn missing_replay_entries(
    items: &[WorkItem],
    variant: PipelineVariant,
    stage: Stage,
    gen: &GenerationConfig,
    gw: &Gateway,
) -> Result<Vec<String>, PipelineError> {
    let mut missing = Vec::new();
    for item in items {
        let mut reqs = Vec::new();
        if stage != Stage::Evaluate {
            let task = GenerationTask::new(&item.problem, item.step, &item.icl, variant, 0);
            let req = build_generation_prompt(&task, gen).map_err(|e| PipelineError::RunDir(format!("{}: {e}", item.id())))?;
            reqs.push(req);
        }
        if stage != Stage::Generate {
            reqs.push(question_request(&item.problem, item.step, item.ground_truth(), gen).map_err(|e| PipelineError::RunDir(e.to_string()))?);
        }
        for req in reqs {
            if !gw.is_cached(&req) {
                missing.push(format!("{}: {} {}", item.id(), req.purpose.as_str(), crate::gateway::cache_key(&req)));
            }
        }
    }
    Ok(missing)
}

fn prepare_run_dir(dir: &Path, stage: Stage) -> Result<(), PipelineError> {
    match stage {
        Stage::Evaluate => {
            if !dir.join(MANIFEST_FILE).is_file() {
                return Err(PipelineError::RunDir(format!("{} is not a run directory", dir.display())));
            }
        }
        _ => {
            if dir.exists() {
                let empty = std::fs::read_dir(dir).map_err(io_err(dir))?.next().is_none();
                if !empty && !dir.join(MANIFEST_FILE).is_file() {
                    return Err(PipelineError::RunDir(format!(
                        "{} exists and is not a run directory; refusing to overwrite",
                        dir.display()
                    )));
                }
                std::fs::remove_dir_all(dir).map_err(io_err(dir))?;
            }
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    Ok(())
}

fn item_dir(run_dir: &Path, item_id: &str) -> PathBuf {
    run_dir.join(item_id)
}

fn raster_of_svg(src: &str, target_px: u32) -> Result<RasterImage, ItemFailure> {
    let doc = parse_svg(src).map_err(|e| ItemFailure::new("SVG_PARSE", e))?;
    rasterize(&doc, target_px).map_err(|e| ItemFailure::new("RASTER_ERROR", e))
}

fn write_artifact(path: &Path, bytes: &[u8]) -> Result<(), ItemFailure> {
    std::fs::write(path, bytes).map_err(|e| ItemFailure::new("IO_ERROR", format!("{}: {e}", path.display())))
}

fn write_artifact_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ItemFailure> {
    write_json(path, value).map_err(|e| ItemFailure::new("IO_ERROR", e))
}

/// Prediction image: generate it, or load it from an earlier generate stage.
fn prediction(ctx: &Ctx, dir: &Path, generated: Option<&GeneratedDiagram>) -> Result<RasterImage, ItemFailure> {
    let svg_path = dir.join("diagram.svg");
    let png_path = dir.join("diagram.png");
    let Some(g) = generated else {
        // evaluate stage: read what the generate stage left behind
        if let Ok(src) = std::fs::read_to_string(&svg_path) {
            return raster_of_svg(&src, ctx.cfg.target_px);
        }
        let bytes = std::fs::read(&png_path).map_err(|e| ItemFailure::new("NO_PREDICTION", format!("{}: {e}", png_path.display())))?;
        return RasterImage::from_png(&bytes, sha256_hex(&bytes)).map_err(|e| ItemFailure::new("NO_PREDICTION", e));
    };
    match (&g.svg_source, &g.pixel_image) {
        (Some(svg), _) => {
            write_artifact(&svg_path, svg.as_bytes())?;
            let img = raster_of_svg(svg, ctx.cfg.target_px)?;
            write_artifact(&png_path, &img.to_png())?;
            Ok(img)
        }
        (None, Some(img)) => {
            write_artifact(&png_path, &img.to_png())?;
            Ok(img.clone())
        }
        (None, None) => Err(ItemFailure::new("NO_PREDICTION", "generator returned no diagram")),
    }
}

fn generate(item: &WorkItem, ctx: &Ctx) -> Result<GeneratedDiagram, ItemFailure> {
    let task = GenerationTask::new(&item.problem, item.step, &item.icl, ctx.cfg.variant, ctx.cfg.seed);
    let result = match ctx.cfg.variant {
        PipelineVariant::T2i => generate_t2i(&task, ctx.backends.gateway, ctx.backends.images, &ctx.gen),
        _ => generate_diagram(&task, ctx.backends.gateway, &ctx.gen),
    };
    result.map_err(|e| ItemFailure::new(e.code(), e))
}

fn process_item(item: &WorkItem, ctx: &Ctx, stage: Stage) -> Result<Option<ProblemScores>, ItemFailure> {
    let dir = item_dir(&ctx.run_dir, &item.id());
    std::fs::create_dir_all(&dir).map_err(|e| ItemFailure::new("IO_ERROR", e))?;
    let _ = std::fs::remove_file(dir.join("error.json"));

    let mut generated = None;
    if stage != Stage::Evaluate {
        generated = Some(generate(item, ctx)?);
    }
    let outcome = (|| {
        let pred_img = prediction(ctx, &dir, generated.as_ref())?;
        if stage == Stage::Generate {
            return Ok((None, None));
        }
        let gt_img = raster_of_svg(item.ground_truth(), ctx.cfg.target_px)?;
        let gw = ctx.backends.gateway;
        let (qs, q_turn) = generate_questions(&item.problem, item.step, item.ground_truth(), gw, &ctx.gen)
            .map_err(|e| ItemFailure::new(e.code(), e))?;
        write_artifact_json(&dir.join("questions.json"), &qs)?;
        let (gt, gt_turns) = score(&qs, &gt_img, Subject::GroundTruth, ctx)?;
        let (pred, pred_turns) = score(&qs, &pred_img, Subject::Prediction, ctx)?;
        write_artifact_json(&dir.join("verdicts_ground_truth.json"), &gt)?;
        write_artifact_json(&dir.join("verdicts_prediction.json"), &pred)?;
        Ok((
            Some(ProblemScores {
                gt: ScorePair::from(&gt),
                pred: ScorePair::from(&pred),
            }),
            Some((q_turn, gt_turns, pred_turns)),
        ))
    })();

    let mut transcript = Transcript::default();
    if let Some(g) = &generated {
        transcript.generation = Some(GenerationRecord {
            repair_attempts: g.repair_attempts,
            generated_hint_text: &g.generated_hint_text,
            description: &g.description,
            turns: &g.transcript,
        });
    }
    match outcome {
        Ok((scores, turns)) => {
            if let Some((q, gt, pred)) = turns {
                transcript.questions = Some(q);
                transcript.vqa_ground_truth = gt;
                transcript.vqa_prediction = pred;
            }
            if stage != Stage::Evaluate {
                write_artifact_json(&dir.join("transcript.json"), &transcript)?;
            } else {
                write_artifact_json(&dir.join("transcript_eval.json"), &transcript)?;
            }
            Ok(scores)
        }
        Err(f) => {
            if generated.is_some() {
                write_artifact_json(&dir.join("transcript.json"), &transcript)?;
            }
            Err(f)
        }
    }
}

fn score(qs: &QuestionSet, img: &RasterImage, subject: Subject, ctx: &Ctx) -> Result<(DiagramScore, Vec<TranscriptTurn>), ItemFailure> {
    evaluate_image(qs, img, subject, ctx.backends.gateway, &ctx.gen).map_err(|e| ItemFailure::new(e.code(), e))
}

/// Report from per-item scores. Topics keep corpus order; topics with no
/// scored item are dropped and their items appear under `excluded`.
fn build_report(manifest: &RunManifest, scored: &BTreeMap<String, ProblemScores>) -> Result<EvalReport, PipelineError> {
    let mut topics = Vec::new();
    for t in &manifest.topics {
        let problems: Vec<ProblemScores> = manifest
            .items
            .iter()
            .filter(|i| i.topic_id == t.id && i.error_code.is_none())
            .filter_map(|i| scored.get(&i.id()).copied())
            .collect();
        if !problems.is_empty() {
            topics.push(TopicScores {
                topic: t.title.clone(),
                problems,
            });
        }
    }
    let mut excluded: Vec<Exclusion> = manifest
        .items
        .iter()
        .filter_map(|i| {
            i.error_code.as_ref().map(|c| Exclusion {
                item: i.id(),
                code: c.clone(),
            })
        })
        .collect();
    excluded.sort_by(|a, b| a.item.cmp(&b.item));
    if topics.is_empty() {
        return Err(PipelineError::NothingScored(excluded));
    }
    let mut report = aggregate(&topics).map_err(|e| PipelineError::RunDir(e.to_string()))?;
    report.label = manifest.label.clone();
    report.excluded = excluded;
    Ok(report)
}

fn write_reports(run_dir: &Path, report: &EvalReport) -> Result<(), PipelineError> {
    let md = run_dir.join("report.md");
    std::fs::write(&md, emit_report(report, ReportFormat::Markdown)).map_err(io_err(&md))?;
    let csv = run_dir.join("report.csv");
    std::fs::write(&csv, emit_report(report, ReportFormat::Csv)).map_err(io_err(&csv))
}

/// Full run: generate per variant, rasterize, question, score, aggregate.
pub fn run_pipeline(cfg: &RunConfig, backends: &Backends) -> Result<RunOutcome, PipelineError> {
    run_stage(cfg, backends, Stage::Full)
}

pub fn run_stage(cfg: &RunConfig, backends: &Backends, stage: Stage) -> Result<RunOutcome, PipelineError> {
    cfg.validate()?;
    if stage == Stage::Evaluate && cfg.run_id.is_none() {
        return Err(PipelineError::RunDir("evaluation needs the run id of a generate run".into()));
    }
    let gen = generation_config(cfg)?;
    let corpus = load_checked_corpus(&cfg.corpus)?;
    let items = plan_items(&corpus, cfg.variant, cfg.seed, cfg.sample);
    log::info!("{} item(s) planned for {}", items.len(), cfg.variant);

    if backends.gateway.mode() == Mode::Replay {
        let missing = missing_replay_entries(&items, cfg.variant, stage, &gen, backends.gateway)?;
        if !missing.is_empty() {
            return Err(PipelineError::MissingCacheEntries(missing));
        }
    }

    let run_id = cfg.resolved_run_id();
    let run_dir = cfg.runs_dir.join(&run_id);
    prepare_run_dir(&run_dir, stage)?;
    let ctx = Ctx {
        cfg,
        gen,
        backends,
        run_dir: run_dir.clone(),
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| PipelineError::RunDir(e.to_string()))?;
    let results: Vec<Result<Option<ProblemScores>, ItemFailure>> =
        pool.install(|| items.par_iter().map(|item| process_item(item, &ctx, stage)).collect());

    let mut records = Vec::with_capacity(items.len());
    let mut scored = BTreeMap::new();
    for (item, result) in items.iter().zip(results) {
        let error_code = match result {
            Ok(scores) => {
                if let Some(s) = scores {
                    scored.insert(item.id(), s);
                }
                None
            }
            Err(f) => {
                log::warn!("{} excluded: {} ({})", item.id(), f.code, f.message);
                let dir = item_dir(&run_dir, &item.id());
                write_json(&dir.join("error.json"), &f)?;
                Some(f.code)
            }
        };
        records.push(ItemRecord {
            topic_id: item.topic_id.clone(),
            problem_id: item.problem.id.clone(),
            step: item.step,
            icl_example: item.icl.id.clone(),
            error_code,
        });
    }

    let manifest = RunManifest {
        run_id,
        stage,
        variant: cfg.variant,
        label: cfg.variant.label().to_string(),
        model_id: cfg.model_id.clone(),
        temperature: cfg.temperature,
        target_px: cfg.target_px,
        max_repairs: cfg.max_repairs,
        seed: cfg.seed,
        corpus_hash: corpus.content_hash(),
        prompts_fingerprint: ctx.gen.prompts.fingerprint(),
        topics: corpus
            .topics
            .iter()
            .map(|t| TopicRef {
                id: t.id.clone(),
                title: t.title.clone(),
            })
            .collect(),
        items: records,
    };
    write_json(&run_dir.join(MANIFEST_FILE), &manifest)?;

    let report = if stage == Stage::Generate {
        None
    } else {
        let report = build_report(&manifest, &scored)?;
        write_reports(&run_dir, &report)?;
        Some(report)
    };
    Ok(RunOutcome {
        run_dir,
        manifest,
        report,
    })
}

/// Rebuilds the report of a finished run from its stored verdicts.
pub fn report_from_run_dir(run_dir: &Path) -> Result<EvalReport, PipelineError> {
    let manifest: RunManifest = read_json(&run_dir.join(MANIFEST_FILE))?;
    let mut scored = BTreeMap::new();
    for item in manifest.items.iter().filter(|i| i.error_code.is_none()) {
        let dir = item_dir(run_dir, &item.id());
        let gt_path = dir.join("verdicts_ground_truth.json");
        if !gt_path.is_file() {
            continue;
        }
        let gt: DiagramScore = read_json(&gt_path)?;
        let pred: DiagramScore = read_json(&dir.join("verdicts_prediction.json"))?;
        scored.insert(
            item.id(),
            ProblemScores {
                gt: ScorePair::from(&gt),
                pred: ScorePair::from(&pred),
            },
        );
    }
    build_report(&manifest, &scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{HintStep, Topic};

    fn p(id: &str, diagrams: &[bool]) -> Problem {
        Problem {
            id: id.into(),
            topic_id: "t".into(),
            statement: "s".into(),
            statement_diagram: None,
            hints: diagrams
                .iter()
                .enumerate()
                .map(|(index, d)| HintStep {
                    index,
                    text: "h".into(),
                    diagram: d.then(|| r#"<svg viewBox="0 0 1 1"/>"#.to_string()),
                })
                .collect(),
        }
    }

    #[test]
    fn routing_by_diagram_count() {
        assert_eq!(route_step(&p("a", &[false, true]), PipelineVariant::Baseline), Some(1));
        assert_eq!(route_step(&p("a", &[true, true]), PipelineVariant::Baseline), None);
        assert_eq!(route_step(&p("a", &[true, false, true]), PipelineVariant::OnTask), Some(2));
        assert_eq!(route_step(&p("a", &[true]), PipelineVariant::OnTask), None);
    }

    #[test]
    fn plan_excludes_icl_and_respects_sample() {
        let corpus = Corpus {
            schema_version: 1,
            topics: vec![Topic {
                id: "t".into(),
                title: "T".into(),
                problems: (0..6).map(|i| p(&format!("p{i}"), &[true])).collect(),
            }],
        };
        let items = plan_items(&corpus, PipelineVariant::Baseline, 0, None);
        assert_eq!(items.len(), 5);
        let icl = &items[0].icl.id;
        assert!(items.iter().all(|i| &i.problem.id != icl && &i.icl.id == icl));
        assert_eq!(plan_items(&corpus, PipelineVariant::Baseline, 0, Some(2)).len(), 2);
        assert_eq!(plan_items(&corpus, PipelineVariant::Baseline, 0, Some(2)), plan_items(&corpus, PipelineVariant::Baseline, 0, Some(2)));
        assert!(plan_items(&corpus, PipelineVariant::OnTask, 0, None).is_empty());
    }
}
