//! Prompt templates with `{{name}}` placeholders.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::hashing::sha256_hex;

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../prompts/", $name, ".txt")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin!(
    "task",
    "instructions_svg",
    "format_svg",
    "format_hint_first",
    "format_t2i",
    "example",
    "target",
    "request_diagram",
    "request_hint_first",
    "request_on_task",
    "request_t2i",
    "repair",
    "questions",
    "vqa",
    "vqa_reprompt",
);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("template {template:?} uses {{{{{name}}}}} but no value was supplied")]
    MissingValue { template: String, name: String },
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

fn placeholder() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{([a-z_]+)\}\}").expect("valid regex"))
}

/// Substitutes every `{{name}}`. Values are inserted verbatim and never
/// rescanned.
pub fn render_template(name: &str, template: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut last = 0;
    for caps in placeholder().captures_iter(template) {
        let whole = caps.get(0).expect("match");
        let key = &caps[1];
        let value = values
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| PromptError::MissingValue {
                template: name.to_string(),
                name: key.to_string(),
            })?;
        out.push_str(&template[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&template[last..]);
    Ok(out)
}

/// The full set of named templates. Built-ins can be overridden file by file
/// from a directory of `<name>.txt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<String, String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet::builtin()
    }
}

impl PromptSet {
    pub fn builtin() -> Self {
        PromptSet {
            templates: BUILTIN
                .iter()
                .map(|(k, v)| (k.to_string(), v.trim_end().to_string()))
                .collect(),
        }
    }

    pub fn names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(k, _)| *k)
    }

    /// Built-ins overridden by any `<name>.txt` present in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let mut set = PromptSet::builtin();
        for name in PromptSet::names() {
            let path = dir.join(format!("{name}.txt"));
            match std::fs::read_to_string(&path) {
                Ok(text) => {
                    set.templates.insert(name.to_string(), text.trim_end().to_string());
                }
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => {
                    return Err(PromptError::Io {
                        path: path.display().to_string(),
                        message: e.to_string(),
                    })
                }
            }
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> Result<&str, PromptError> {
        self.templates
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| PromptError::UnknownTemplate(name.to_string()))
    }

    pub fn render(&self, name: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
        render_template(name, self.get(name)?, values)
    }

    /// Hash over every template name and body.
    pub fn fingerprint(&self) -> String {
        let mut buf = String::new();
        for (k, v) in &self.templates {
            buf.push_str(k);
            buf.push('\0');
            buf.push_str(v);
            buf.push('\0');
        }
        sha256_hex(buf.as_bytes())
    }
}
