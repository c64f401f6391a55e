//! Problem/hint/diagram data model, the on-disk JSON schema, and in-context
//! example selection.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hashing::sha256_hex;
use crate::svg::{parse_svg, validate_svg, SvgError};

pub const SCHEMA_VERSION: u32 = 1;
/// Topics smaller than this get a warning.
pub const MIN_PROBLEMS_PER_TOPIC: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("unsupported schema_version {0}, expected {SCHEMA_VERSION}")]
    Version(u32),
    #[error("empty corpus")]
    Empty,
    #[error("malformed SVG in problem {problem_id} {}: {source}", location_label(.hint_index))]
    MalformedSvg {
        problem_id: String,
        /// `None` for the statement diagram.
        hint_index: Option<usize>,
        #[source]
        source: SvgError,
    },
}

fn location_label(hint: &Option<usize>) -> String {
    match hint {
        Some(i) => format!("hint {i}"),
        None => "statement diagram".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HintStep {
    pub index: usize,
    pub text: String,
    pub diagram: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub id: String,
    pub topic_id: String,
    pub statement: String,
    pub statement_diagram: Option<String>,
    pub hints: Vec<HintStep>,
}

impl Problem {
    /// Indices of hint steps that carry a diagram, ascending.
    pub fn diagram_bearing_steps(&self) -> Vec<usize> {
        diagram_bearing_steps(self)
    }

    pub fn has_diagram(&self) -> bool {
        self.hints.iter().any(|h| h.diagram.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topic {
    pub id: String,
    pub title: String,
    pub problems: Vec<Problem>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub schema_version: u32,
    pub topics: Vec<Topic>,
}

impl Corpus {
    pub fn topic(&self, id: &str) -> Option<&Topic> {
        self.topics.iter().find(|t| t.id == id)
    }

    pub fn problem(&self, id: &str) -> Option<&Problem> {
        self.problems().find(|p| p.id == id)
    }

    pub fn problems(&self) -> impl Iterator<Item = &Problem> {
        self.topics.iter().flat_map(|t| t.problems.iter())
    }

    /// Content hash of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        sha256_hex(to_json(self).as_bytes())
    }
}

// On-disk schema. Hint indices and topic membership are positional.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusFile {
    schema_version: u32,
    topics: Vec<TopicFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopicFile {
    id: String,
    title: String,
    problems: Vec<ProblemFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    id: String,
    statement: String,
    statement_diagram: Option<String>,
    hints: Vec<HintFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HintFile {
    text: String,
    diagram: Option<String>,
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// Parses corpus JSON text and checks that every embedded SVG parses.
pub fn parse_corpus(text: &str) -> Result<Corpus, CorpusError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: CorpusFile = serde_path_to_error::deserialize(de).map_err(|e| CorpusError::Schema {
        pointer: json_pointer(e.path()),
        message: e.inner().to_string(),
    })?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(CorpusError::Version(file.schema_version));
    }
    if file.topics.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut topics = Vec::with_capacity(file.topics.len());
    for t in file.topics {
        let mut problems = Vec::with_capacity(t.problems.len());
        for p in t.problems {
            if let Some(src) = &p.statement_diagram {
                parse_svg(src).map_err(|source| CorpusError::MalformedSvg {
                    problem_id: p.id.clone(),
                    hint_index: None,
                    source,
                })?;
            }
            let mut hints = Vec::with_capacity(p.hints.len());
            for (index, h) in p.hints.into_iter().enumerate() {
                if let Some(src) = &h.diagram {
                    parse_svg(src).map_err(|source| CorpusError::MalformedSvg {
                        problem_id: p.id.clone(),
                        hint_index: Some(index),
                        source,
                    })?;
                }
                hints.push(HintStep {
                    index,
                    text: h.text,
                    diagram: h.diagram,
                });
            }
            problems.push(Problem {
                id: p.id,
                topic_id: t.id.clone(),
                statement: p.statement,
                statement_diagram: p.statement_diagram,
                hints,
            });
        }
        topics.push(Topic {
            id: t.id,
            title: t.title,
            problems,
        });
    }
    Ok(Corpus {
        schema_version: file.schema_version,
        topics,
    })
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text)
}

/// Pretty-printed schema JSON with a trailing newline.
pub fn to_json(c: &Corpus) -> String {
    let file = CorpusFile {
        schema_version: c.schema_version,
        topics: c
            .topics
            .iter()
            .map(|t| TopicFile {
                id: t.id.clone(),
                title: t.title.clone(),
                problems: t
                    .problems
                    .iter()
                    .map(|p| ProblemFile {
                        id: p.id.clone(),
                        statement: p.statement.clone(),
                        statement_diagram: p.statement_diagram.clone(),
                        hints: p
                            .hints
                            .iter()
                            .map(|h| HintFile {
                                text: h.text.clone(),
                                diagram: h.diagram.clone(),
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("corpus serializes");
    s.push('\n');
    s
}

pub fn write_corpus(c: &Corpus, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, to_json(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FindingSeverity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFinding {
    pub severity: FindingSeverity,
    pub location: String,
    pub message: String,
}

impl fmt::Display for CorpusFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            FindingSeverity::Warning => "warning",
            FindingSeverity::Error => "error",
        };
        write!(f, "{sev}: {}: {}", self.location, self.message)
    }
}

/// Checks every type invariant. Never fails; an empty list means clean.
pub fn validate_corpus(c: &Corpus) -> Vec<CorpusFinding> {
    let mut out = Vec::new();
    let mut push = |severity, location: String, message: String| {
        out.push(CorpusFinding {
            severity,
            location,
            message,
        })
    };
    use FindingSeverity::{Error, Warning};

    if c.topics.is_empty() {
        push(Error, "corpus".into(), "empty corpus".into());
    }
    let mut topic_ids = HashSet::new();
    let mut problem_ids = HashSet::new();
    for t in &c.topics {
        let tloc = format!("topic {}", t.id);
        if !topic_ids.insert(t.id.as_str()) {
            push(Error, tloc.clone(), "duplicate topic id".into());
        }
        if t.problems.is_empty() {
            push(Error, tloc.clone(), "topic has no problems".into());
        } else if t.problems.len() < MIN_PROBLEMS_PER_TOPIC {
            push(
                Warning,
                tloc.clone(),
                format!("{} problems, fewer than {MIN_PROBLEMS_PER_TOPIC}", t.problems.len()),
            );
        }
        for p in &t.problems {
            let ploc = format!("problem {}", p.id);
            if !problem_ids.insert(p.id.as_str()) {
                push(Error, ploc.clone(), "duplicate problem id".into());
            }
            if p.topic_id != t.id {
                push(Error, ploc.clone(), format!("topic_id {} differs from enclosing topic", p.topic_id));
            }
            if p.statement.trim().is_empty() {
                push(Error, ploc.clone(), "empty statement".into());
            }
            if p.hints.is_empty() {
                push(Error, ploc.clone(), "no hints".into());
            }
            let diagrams = p
                .statement_diagram
                .iter()
                .map(|d| (format!("{ploc} statement diagram"), d))
                .chain(p.hints.iter().filter_map(|h| h.diagram.as_ref().map(|d| (format!("{ploc} hint {}", h.index), d))));
            for (i, h) in p.hints.iter().enumerate() {
                if h.index != i {
                    push(Error, format!("{ploc} hint {i}"), format!("index {} is not positional", h.index));
                }
                if h.text.trim().is_empty() {
                    push(Error, format!("{ploc} hint {i}"), "empty hint text".into());
                }
            }
            for (loc, src) in diagrams {
                match parse_svg(src) {
                    Err(e) => push(Error, loc, format!("malformed SVG: {e}")),
                    Ok(doc) => {
                        for f in validate_svg(&doc).findings {
                            let sev = match f.severity {
                                crate::svg::Severity::Error => Error,
                                crate::svg::Severity::Warning => Warning,
                            };
                            push(sev, loc.clone(), format!("{} at {}: {}", f.code, f.element, f.message));
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn diagram_bearing_steps(p: &Problem) -> Vec<usize> {
    p.hints
        .iter()
        .enumerate()
        .filter(|(_, h)| h.diagram.is_some())
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectionError {
    #[error("problem {0} not found in corpus")]
    UnknownProblem(String),
    #[error("no eligible in-context example for {target} in topic {topic}")]
    NoEligibleExample { topic: String, target: String },
}

fn selection_rng(seed: u64, scope: &str) -> ChaCha8Rng {
    let digest = sha256_hex(format!("{seed}:{scope}").as_bytes());
    let mixed = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Seeded pick among candidates, stable for a given (seed, scope).
pub fn choose_seeded<'a>(candidates: &[&'a Problem], seed: u64, scope: &str) -> Option<&'a Problem> {
    candidates.choose(&mut selection_rng(seed, scope)).copied()
}

/// Picks a same-topic problem with at least one diagram, never the target.
pub fn select_icl_example<'a>(c: &'a Corpus, target: &Problem, seed: u64) -> Result<&'a Problem, SelectionError> {
    let topic = c
        .topic(&target.topic_id)
        .filter(|t| t.problems.iter().any(|p| p.id == target.id))
        .ok_or_else(|| SelectionError::UnknownProblem(target.id.clone()))?;
    let candidates: Vec<&Problem> = topic
        .problems
        .iter()
        .filter(|p| p.id != target.id && p.has_diagram())
        .collect();
    choose_seeded(&candidates, seed, &target.id).ok_or_else(|| SelectionError::NoEligibleExample {
        topic: topic.id.clone(),
        target: target.id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SVG: &str = r#"<svg viewBox="0 0 10 10"><circle cx="5" cy="5" r="2"/></svg>"#;

    fn problem(id: &str, topic: &str, diagrams: &[bool]) -> Problem {
        Problem {
            id: id.into(),
            topic_id: topic.into(),
            statement: format!("statement {id}"),
            statement_diagram: None,
            hints: diagrams
                .iter()
                .enumerate()
                .map(|(index, d)| HintStep {
                    index,
                    text: format!("hint {index}"),
                    diagram: d.then(|| SVG.to_string()),
                })
                .collect(),
        }
    }

    fn corpus(problems: Vec<Problem>) -> Corpus {
        Corpus {
            schema_version: 1,
            topics: vec![Topic {
                id: "t".into(),
                title: "T".into(),
                problems,
            }],
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let err = parse_corpus(r#"{"schema_version":1,"topics":[]}"#).unwrap_err();
        assert!(matches!(err, CorpusError::Empty));
        assert_eq!(err.to_string(), "empty corpus");
    }

    #[test]
    fn schema_errors_carry_json_pointer() {
        let text = r#"{"schema_version":1,"topics":[{"id":"t","title":"T","problems":[{"id":"p","statement":"s","statement_diagram":null,"hints":[{"text":5,"diagram":null}]}]}]}"#;
        match parse_corpus(text).unwrap_err() {
            CorpusError::Schema { pointer, .. } => assert_eq!(pointer, "/topics/0/problems/0/hints/0/text"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn malformed_hint_svg_names_problem_and_hint() {
        let c = corpus(vec![problem("p1", "t", &[true, true])]);
        let text = to_json(&c);
        // corrupt the second diagram only: unclose its circle
        let second = text.rfind("r=\\\"2\\\"/>").unwrap() + 7;
        let mut bad = text.clone();
        bad.replace_range(second..second + 2, ">");
        match parse_corpus(&bad).unwrap_err() {
            CorpusError::MalformedSvg { problem_id, hint_index, .. } => {
                assert_eq!(problem_id, "p1");
                assert_eq!(hint_index, Some(1));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let c = corpus(vec![problem("a", "t", &[true, false]), problem("b", "t", &[false])]);
        assert_eq!(parse_corpus(&to_json(&c)).unwrap(), c);
    }

    #[test]
    fn small_topic_warns_and_empty_hint_errors() {
        let mut ps: Vec<Problem> = (0..5).map(|i| problem(&format!("p{i}"), "t", &[true])).collect();
        let findings = validate_corpus(&corpus(ps.clone()));
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].severity, FindingSeverity::Warning);

        ps.push(problem("p5", "t", &[true]));
        assert!(validate_corpus(&corpus(ps.clone())).is_empty());

        ps[2].hints[0].text = "   ".into();
        let findings = validate_corpus(&corpus(ps));
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].severity, FindingSeverity::Error);
        assert!(findings[0].message.contains("empty hint text"));
    }

    #[test]
    fn icl_selection_is_stable_and_excludes_target() {
        let c = corpus(vec![
            problem("A", "t", &[true]),
            problem("B", "t", &[true]),
            problem("C", "t", &[true]),
        ]);
        let target = c.problem("A").unwrap();
        let first = select_icl_example(&c, target, 0).unwrap();
        assert_ne!(first.id, "A");
        for _ in 0..5 {
            assert_eq!(select_icl_example(&c, target, 0).unwrap().id, first.id);
        }
    }

    #[test]
    fn icl_selection_requires_diagram_sibling() {
        let c = corpus(vec![problem("A", "t", &[true])]);
        assert!(select_icl_example(&c, c.problem("A").unwrap(), 0).is_err());
        let c = corpus(vec![
            problem("A", "t", &[true]),
            problem("B", "t", &[false, false]),
            problem("C", "t", &[false, true]),
        ]);
        for seed in 0..20 {
            assert_eq!(select_icl_example(&c, c.problem("A").unwrap(), seed).unwrap().id, "C");
        }
    }

    #[test]
    fn diagram_steps_ascending() {
        assert_eq!(problem("x", "t", &[true, false]).diagram_bearing_steps(), [0]);
        assert_eq!(problem("x", "t", &[false, false]).diagram_bearing_steps(), Vec::<usize>::new());
        assert_eq!(problem("x", "t", &[true, true]).diagram_bearing_steps(), [0, 1]);
    }
}
