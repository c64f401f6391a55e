#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use hintgraph::config::RunConfig;
use hintgraph::corpus::{load_corpus, Corpus};
use hintgraph::gateway::testing::FailingTransport;
use hintgraph::gateway::{Cache, CachedImageBackend, Gateway, ImageTransport, Mode, TransportError};
use hintgraph::generation::PipelineVariant;
use hintgraph::svg::{Element, Node, SvgDocument};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn corpus_path() -> PathBuf {
    repo_root().join("corpus/sample.json")
}

pub fn cache_dir() -> PathBuf {
    repo_root().join("fixtures/cache")
}

pub fn svg_fixture(name: &str) -> String {
    std::fs::read_to_string(repo_root().join("fixtures/svg").join(name)).unwrap()
}

pub fn sample() -> Corpus {
    load_corpus(corpus_path()).unwrap()
}

/// Every SVG source shipped with the repo: corpus diagrams and fixtures/svg.
pub fn all_fixture_svgs() -> Vec<(String, String)> {
    let mut out = Vec::new();
    for p in sample().problems() {
        if let Some(d) = &p.statement_diagram {
            out.push((format!("{}/statement", p.id), d.clone()));
        }
        for h in &p.hints {
            if let Some(d) = &h.diagram {
                out.push((format!("{}/hint{}", p.id, h.index), d.clone()));
            }
        }
    }
    let mut files: Vec<_> = std::fs::read_dir(repo_root().join("fixtures/svg"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    for f in files {
        out.push((f.display().to_string(), std::fs::read_to_string(&f).unwrap()));
    }
    out
}

pub struct NoImages;

impl ImageTransport for NoImages {
    fn generate(&self, _: &str, _: &str, _: &str) -> Result<Vec<u8>, TransportError> {
        panic!("image network used in replay")
    }
}

/// Replay backends over `cache` whose transports fail on any use.
pub fn offline(cache: &Path) -> (Gateway, CachedImageBackend, Arc<FailingTransport>) {
    let failing = Arc::new(FailingTransport::default());
    let gw = Gateway::new(Mode::Replay, Some(cache.to_path_buf()), failing.clone());
    let images = CachedImageBackend::new(Mode::Replay, Cache::new(cache), Arc::new(NoImages));
    (gw, images, failing)
}

pub fn replay_config(runs: &Path, cache: &Path, variant: PipelineVariant, run_id: &str) -> RunConfig {
    RunConfig {
        corpus: corpus_path(),
        variant,
        mode: Mode::Replay,
        run_id: Some(run_id.into()),
        cache_dir: cache.to_path_buf(),
        runs_dir: runs.to_path_buf(),
        ..Default::default()
    }
}

pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let target = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &target);
        } else {
            std::fs::copy(e.path(), target).unwrap();
        }
    }
}

/// Relative path and bytes of every file under `dir`, sorted.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let rel = p.strip_prefix(base).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Plain serializer that keeps attributes in the given order; lets tests
/// produce sources differing only in attribute order.
pub fn serialize(e: &Element) -> String {
    let mut out = format!("<{}", e.name);
    for (k, v) in &e.attributes {
        out.push_str(&format!(" {k}=\"{}\"", escape(v)));
    }
    out.push('>');
    for c in &e.children {
        match c {
            Node::Element(child) => out.push_str(&serialize(child)),
            Node::Text(t) => out.push_str(&escape(t)),
        }
    }
    out.push_str(&format!("</{}>", e.name));
    out
}

pub fn reversed_attributes(e: &Element) -> Element {
    Element {
        name: e.name.clone(),
        attributes: e.attributes.iter().rev().cloned().collect(),
        children: e
            .children
            .iter()
            .map(|c| match c {
                Node::Element(child) => Node::Element(reversed_attributes(child)),
                Node::Text(t) => Node::Text(t.clone()),
            })
            .collect(),
    }
}

pub fn doc_source_reversed(doc: &SvgDocument) -> String {
    serialize(&reversed_attributes(doc.root()))
}

/// The two worked examples' question lists, in criterion order
/// (five semantic, then five syntactic).
pub const MULTIPLY_QUESTIONS: [&str; 10] = [
    "Does the diagram clearly show 7 rows of 2 circles each?",
    "Is the arrangement of circles in the diagram easy to interpret?",
    "Does the diagram effectively illustrate the concept of multiplication as repeated addition?",
    "Are the circles in the diagram labeled in a way that supports understanding the total count?",
    "Does the diagram align with the text feedback by visually representing 7 rows of 2 circles?",
    "Does the diagram accurately show 7 rows of circles as mentioned in the text feedback?",
    "Are there exactly 2 circles in each row as described in the text feedback?",
    "Are the circles in the diagram correctly labeled from 1 to 14?",
    "Is the alignment and positioning of the circles consistent with the description in the text feedback?",
    "Does the diagram follow standard mathematical notation and conventions for representing multiplication?",
];

pub const FRACTION_QUESTIONS: [&str; 10] = [
    "Does the diagram clearly represent the fractions 1/2 and 2/2?",
    "Does the diagram effectively use shading to differentiate the fractions?",
    "Is the diagram aligned with the hint text by showing the shaded areas for comparison?",
    "Can students easily interpret the shaded and unshaded portions in the diagram?",
    "Does the diagram avoid any misleading or ambiguous elements in representing the fractions?",
    "Does the diagram include both circles as described in the hint text?",
    "Are the fractions labeled correctly as 1/2 and 2/2 in the diagram?",
    "Is the shading in the diagram accurately representing the fractions as described?",
    "Are the circles in the diagram properly aligned and positioned according to the standard layout?",
    "Does the diagram follow standard mathematical notation in representing the fractions and shaded areas?",
];

pub const MULTIPLY_GT_MARKS: [bool; 10] = [true; 10];
pub const MULTIPLY_PRED_MARKS: [bool; 10] = [true; 10];
pub const FRACTION_GT_MARKS: [bool; 10] = [false, false, true, false, true, false, false, false, false, false];
pub const FRACTION_PRED_MARKS: [bool; 10] = [true; 10];

pub const MULTIPLY_PROBLEM: &str = "mul2-7x2";
pub const FRACTION_PROBLEM: &str = "frac-1-2-of-2";

pub fn planned(variant: PipelineVariant, pid: &str) -> hintgraph::pipeline::WorkItem {
    hintgraph::pipeline::plan_items(&sample(), variant, 0, None)
        .into_iter()
        .find(|i| i.problem.id == pid)
        .unwrap()
}

pub fn raster(src: &str) -> hintgraph::svg::RasterImage {
    hintgraph::svg::rasterize(&hintgraph::svg::parse_svg(src).unwrap(), 512).unwrap()
}

/// Replays the baseline generation for `pid` and rasterizes the result.
pub fn baseline_prediction(gw: &Gateway, pid: &str) -> hintgraph::svg::RasterImage {
    let item = planned(PipelineVariant::Baseline, pid);
    let task = hintgraph::generation::GenerationTask::new(&item.problem, item.step, &item.icl, PipelineVariant::Baseline, 0);
    let g = hintgraph::generation::generate_diagram(&task, gw, &hintgraph::generation::GenerationConfig::default()).unwrap();
    raster(&g.svg_source.unwrap())
}
