//! Python bindings: SVG toolkit, reference diagrams, corpus checks, scoring
//! and replay runs.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use hintgraph::config::RunConfig;
use hintgraph::corpus::{load_corpus, validate_corpus};
use hintgraph::pipeline::{report_from_run_dir, run_pipeline, OwnedBackends};
use hintgraph::reference::{render_array_diagram, render_fraction_pair, ArraySpec, ObjectKind};
use hintgraph::svg::{self, Severity};
use hintgraph::vqa::{self, ProblemScores, ReportFormat, ScorePair, TopicScores};

create_exception!(hintgraph_py, HintgraphError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    HintgraphError::new_err(e.to_string())
}

/// A parsed SVG document.
#[pyclass(name = "SvgDocument", frozen)]
struct PySvgDocument {
    doc: svg::SvgDocument,
}

#[pymethods]
impl PySvgDocument {
    #[new]
    fn new(source: &str) -> PyResult<Self> {
        Ok(PySvgDocument {
            doc: svg::parse_svg(source).map_err(err)?,
        })
    }

    fn normalize(&self) -> String {
        svg::normalize_svg(&self.doc)
    }

    /// List of findings as dicts with code, severity, element and message.
    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        svg::validate_svg(&self.doc)
            .findings
            .iter()
            .map(|f| {
                let d = PyDict::new(py);
                d.set_item("code", f.code.as_str())?;
                d.set_item("severity", if f.severity == Severity::Error { "error" } else { "warning" })?;
                d.set_item("element", &f.element)?;
                d.set_item("message", &f.message)?;
                Ok(d)
            })
            .collect()
    }

    fn is_valid(&self) -> bool {
        svg::validate_svg(&self.doc).ok
    }

    /// Dict with `counts`, `labels` and `bbox` (min_x, min_y, max_x, max_y) or None.
    fn structure<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = svg::extract_structure(&self.doc);
        let d = PyDict::new(py);
        d.set_item("counts", s.counts.clone())?;
        d.set_item("labels", s.labels.clone())?;
        d.set_item("bbox", s.bbox.map(|b| (b.min_x, b.min_y, b.max_x, b.max_y)))?;
        Ok(d)
    }

    /// PNG bytes; the longer side is `target_px`.
    #[pyo3(signature = (target_px = svg::DEFAULT_TARGET_PX))]
    fn rasterize<'py>(&self, py: Python<'py>, target_px: u32) -> PyResult<Bound<'py, PyBytes>> {
        let img = svg::rasterize(&self.doc, target_px).map_err(err)?;
        Ok(PyBytes::new(py, &img.to_png()))
    }
}

#[pyfunction]
fn normalize_svg(source: &str) -> PyResult<String> {
    svg::normalize_source(source).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (rows, cols, object = "circle", numbered = false, caption = None))]
fn render_array(rows: u32, cols: u32, object: &str, numbered: bool, caption: Option<String>) -> PyResult<String> {
    let kind = match object {
        "circle" => ObjectKind::Circle,
        "rect" | "square" => ObjectKind::Rect,
        other => return Err(PyValueError::new_err(format!("unknown object {other:?}; use circle or rect"))),
    };
    let mut spec = ArraySpec::new(rows, cols, kind);
    if numbered {
        spec = spec.numbered();
    }
    if let Some(c) = caption {
        spec = spec.with_caption(c);
    }
    render_array_diagram(&spec).map_err(err)
}

#[pyfunction]
fn render_fractions(denominator: u32, shaded_left: u32, shaded_right: u32) -> PyResult<String> {
    render_fraction_pair(denominator, shaded_left, shaded_right).map_err(err)
}

/// Corpus findings as display strings; raises on unreadable or malformed files.
#[pyfunction]
fn validate_corpus_file(path: PathBuf) -> PyResult<Vec<String>> {
    let c = load_corpus(&path).map_err(err)?;
    Ok(validate_corpus(&c).iter().map(|f| f.to_string()).collect())
}

/// `(answer, reasoning)` for a yes/no reply.
#[pyfunction]
fn parse_verdict(text: &str) -> PyResult<(bool, String)> {
    vqa::parse_verdict(text).map_err(|e| PyValueError::new_err(format!("{e:?}")))
}

type PyProblemScores = ((f64, f64), (f64, f64));

fn parse_format(format: &str) -> PyResult<ReportFormat> {
    format.parse().map_err(PyValueError::new_err)
}

/// Aggregate `{topic: [((gt_sem, gt_syn), (pred_sem, pred_syn)), ...]}` given
/// as a list of pairs, and return the report text.
#[pyfunction]
#[pyo3(signature = (topics, label = "Pipeline", format = "markdown"))]
fn aggregate(topics: Vec<(String, Vec<PyProblemScores>)>, label: &str, format: &str) -> PyResult<String> {
    let topics: Vec<TopicScores> = topics
        .into_iter()
        .map(|(topic, problems)| TopicScores {
            topic,
            problems: problems
                .into_iter()
                .map(|((a, b), (c, d))| ProblemScores {
                    gt: ScorePair::new(a, b),
                    pred: ScorePair::new(c, d),
                })
                .collect(),
        })
        .collect();
    let mut r = vqa::aggregate(&topics).map_err(err)?;
    r.label = label.into();
    Ok(vqa::emit_report(&r, parse_format(format)?))
}

/// Run the full pipeline. `config` takes the same keys as a JSON config file.
/// Returns `(run_dir, report_text)`.
#[pyfunction]
#[pyo3(signature = (config = None, format = "markdown"))]
fn run(config: Option<&str>, format: &str) -> PyResult<(String, String)> {
    let cfg: RunConfig = match config {
        Some(json) => serde_json::from_str(json).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => RunConfig::default(),
    };
    cfg.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
    let format = parse_format(format)?;
    let backends = OwnedBackends::from_config(&cfg).map_err(err)?;
    let out = run_pipeline(&cfg, &backends.borrow()).map_err(err)?;
    let report = out.report.as_ref().map(|r| vqa::emit_report(r, format)).unwrap_or_default();
    Ok((out.run_dir.display().to_string(), report))
}

#[pyfunction]
#[pyo3(signature = (run_dir, format = "markdown"))]
fn report(run_dir: PathBuf, format: &str) -> PyResult<String> {
    let r = report_from_run_dir(&run_dir).map_err(err)?;
    Ok(vqa::emit_report(&r, parse_format(format)?))
}

#[pymodule]
fn hintgraph_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("HintgraphError", m.py().get_type::<HintgraphError>())?;
    m.add_class::<PySvgDocument>()?;
    m.add_function(wrap_pyfunction!(normalize_svg, m)?)?;
    m.add_function(wrap_pyfunction!(render_array, m)?)?;
    m.add_function(wrap_pyfunction!(render_fractions, m)?)?;
    m.add_function(wrap_pyfunction!(validate_corpus_file, m)?)?;
    m.add_function(wrap_pyfunction!(parse_verdict, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    Ok(())
}
