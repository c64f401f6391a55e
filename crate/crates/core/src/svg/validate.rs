use std::fmt;

use serde::{Deserialize, Serialize};

use super::document::{Element, SvgDocument};
use super::structure::drawables;

/// Tags a generated diagram may use.
pub const ELEMENT_WHITELIST: &[&str] = &[
    "svg", "g", "path", "rect", "circle", "ellipse", "line", "polyline", "polygon", "text",
    "tspan", "title", "desc", "defs", "style",
];

/// Relative slack per axis when checking content against the viewBox.
pub const CLIP_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FindingCode {
    /// No viewBox and no complete width/height pair.
    MissingViewport,
    /// Content extends past the viewBox.
    ViewboxClip,
    DisallowedElement,
    ExternalReference,
    EmptyText,
    /// Geometry attributes that cannot be interpreted; the element is skipped when measuring.
    BadGeometry,
}

impl FindingCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FindingCode::MissingViewport => "MISSING_VIEWPORT",
            FindingCode::ViewboxClip => "VIEWBOX_CLIP",
            FindingCode::DisallowedElement => "DISALLOWED_ELEMENT",
            FindingCode::ExternalReference => "EXTERNAL_REFERENCE",
            FindingCode::EmptyText => "EMPTY_TEXT",
            FindingCode::BadGeometry => "BAD_GEOMETRY",
        }
    }
}

impl fmt::Display for FindingCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub code: FindingCode,
    pub severity: Severity,
    pub message: String,
    pub element: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    fn from_findings(findings: Vec<Finding>) -> Self {
        let ok = findings.iter().all(|f| f.severity != Severity::Error);
        ValidationReport { ok, findings }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    pub fn has(&self, code: FindingCode) -> bool {
        self.findings.iter().any(|f| f.code == code)
    }

    /// Distinct error codes, in first-seen order.
    pub fn error_codes(&self) -> Vec<FindingCode> {
        let mut codes = Vec::new();
        for f in self.errors() {
            if !codes.contains(&f.code) {
                codes.push(f.code);
            }
        }
        codes
    }
}

pub fn validate_svg(doc: &SvgDocument) -> ValidationReport {
    let mut findings = Vec::new();
    let root = doc.root();

    if doc.view_box().is_none() && (doc.width().is_none() || doc.height().is_none()) {
        findings.push(Finding {
            code: FindingCode::MissingViewport,
            severity: Severity::Error,
            message: "root needs a viewBox or both width and height".into(),
            element: "/svg".into(),
        });
    }

    check_tree(root, "/svg", &mut findings);

    let items = drawables(doc);
    for d in &items {
        if let Some(err) = &d.geometry_error {
            findings.push(Finding {
                code: FindingCode::BadGeometry,
                severity: Severity::Warning,
                message: err.clone(),
                element: d.path.clone(),
            });
        }
    }

    if let Some(vp) = doc.viewport() {
        let slack_x = vp.width * CLIP_TOLERANCE;
        let slack_y = vp.height * CLIP_TOLERANCE;
        let (lo_x, hi_x) = (vp.min_x - slack_x, vp.min_x + vp.width + slack_x);
        let (lo_y, hi_y) = (vp.min_y - slack_y, vp.min_y + vp.height + slack_y);
        for d in &items {
            let Some(b) = d.bbox else { continue };
            if b.min_x < lo_x || b.max_x > hi_x || b.min_y < lo_y || b.max_y > hi_y {
                findings.push(Finding {
                    code: FindingCode::ViewboxClip,
                    severity: Severity::Error,
                    message: format!(
                        "<{}> spans x {:.2}..{:.2}, y {:.2}..{:.2} outside viewBox {}",
                        d.element.name, b.min_x, b.max_x, b.min_y, b.max_y, vp
                    ),
                    element: d.path.clone(),
                });
            }
        }
    }

    ValidationReport::from_findings(findings)
}

fn is_external(value: &str) -> bool {
    let v = value.trim();
    !v.is_empty() && !v.starts_with('#')
}

fn has_external_url(value: &str) -> bool {
    let lower = value.to_ascii_lowercase();
    if lower.contains("@import") {
        return true;
    }
    let mut rest = lower.as_str();
    while let Some(i) = rest.find("url(") {
        let inner = rest[i + 4..].trim_start().trim_start_matches(['"', '\'']);
        if !inner.starts_with('#') {
            return true;
        }
        rest = &rest[i + 4..];
    }
    false
}

fn check_tree(el: &Element, path: &str, findings: &mut Vec<Finding>) {
    if !ELEMENT_WHITELIST.contains(&el.name.as_str()) {
        findings.push(Finding {
            code: FindingCode::DisallowedElement,
            severity: Severity::Error,
            message: format!("<{}> is not an allowed element", el.name),
            element: path.to_string(),
        });
    }
    for (k, v) in &el.attributes {
        let local = k.rsplit(':').next().unwrap_or(k);
        let external = (local == "href" || local == "src") && is_external(v) || has_external_url(v);
        if external {
            findings.push(Finding {
                code: FindingCode::ExternalReference,
                severity: Severity::Error,
                message: format!("attribute {k}={v:?} references an external resource"),
                element: path.to_string(),
            });
        }
    }
    if el.name == "style" && has_external_url(&el.text_content()) {
        findings.push(Finding {
            code: FindingCode::ExternalReference,
            severity: Severity::Error,
            message: "stylesheet references an external resource".into(),
            element: path.to_string(),
        });
    }
    if el.name == "text" && el.text_content().trim().is_empty() {
        findings.push(Finding {
            code: FindingCode::EmptyText,
            severity: Severity::Error,
            message: "<text> has no content".into(),
            element: path.to_string(),
        });
    }
    let mut seen = std::collections::BTreeMap::<&str, usize>::new();
    for child in el.child_elements() {
        let n = seen.entry(child.name.as_str()).or_insert(0);
        *n += 1;
        check_tree(child, &format!("{path}/{}[{n}]", child.name), findings);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svg::parse_svg;

    fn report(src: &str) -> ValidationReport {
        validate_svg(&parse_svg(src).unwrap())
    }

    #[test]
    fn clean_document_is_ok() {
        let r = report(r#"<svg viewBox="0 0 100 100"><circle cx="50" cy="50" r="10"/><text x="40" y="90">hi</text></svg>"#);
        assert!(r.ok, "{:?}", r.findings);
        assert!(r.findings.is_empty());
    }

    #[test]
    fn circle_past_right_edge_clips() {
        let r = report(r#"<svg viewBox="0 0 100 100"><circle cx="120" cy="50" r="5"/></svg>"#);
        assert!(!r.ok);
        assert_eq!(r.error_codes(), [FindingCode::ViewboxClip]);
        assert_eq!(r.findings[0].element, "/svg/circle[1]");
    }

    #[test]
    fn overshoot_within_one_percent_is_tolerated() {
        let r = report(r#"<svg viewBox="0 0 100 100"><rect x="-0.9" y="0" width="100.8" height="100"/></svg>"#);
        assert!(r.ok, "{:?}", r.findings);
        let r = report(r#"<svg viewBox="0 0 100 100"><rect x="-1.1" y="0" width="50" height="100"/></svg>"#);
        assert!(r.has(FindingCode::ViewboxClip));
    }

    #[test]
    fn width_height_stand_in_for_view_box() {
        assert!(report(r#"<svg width="100" height="50"><rect width="100" height="50"/></svg>"#).ok);
        let r = report(r#"<svg width="100"><rect width="10" height="10"/></svg>"#);
        assert_eq!(r.error_codes(), [FindingCode::MissingViewport]);
    }

    #[test]
    fn script_is_not_whitelisted() {
        let r = report(r#"<svg viewBox="0 0 10 10"><script>alert(1)</script></svg>"#);
        assert_eq!(r.error_codes(), [FindingCode::DisallowedElement]);
    }

    #[test]
    fn external_references_are_flagged() {
        let r = report(r#"<svg viewBox="0 0 10 10"><rect width="1" height="1" fill="url(http://x/p)"/></svg>"#);
        assert!(r.has(FindingCode::ExternalReference));
        let r = report(r#"<svg viewBox="0 0 10 10"><g href="file.svg"/></svg>"#);
        assert!(r.has(FindingCode::ExternalReference));
        let r = report(r#"<svg viewBox="0 0 10 10"><style>@import "x.css";</style></svg>"#);
        assert!(r.has(FindingCode::ExternalReference));
        let r = report(r##"<svg viewBox="0 0 10 10"><rect width="1" height="1" fill="url(#grad)"/></svg>"##);
        assert!(r.ok);
    }

    #[test]
    fn empty_text_is_an_error() {
        let r = report(r#"<svg viewBox="0 0 10 10"><text x="1" y="5">  </text></svg>"#);
        assert_eq!(r.error_codes(), [FindingCode::EmptyText]);
    }

    #[test]
    fn unparseable_geometry_warns_only() {
        let r = report(r#"<svg viewBox="0 0 10 10"><rect width="wide" height="1"/></svg>"#);
        assert!(r.ok);
        assert!(r.has(FindingCode::BadGeometry));
    }
}
