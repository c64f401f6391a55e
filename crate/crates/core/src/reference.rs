//! Deterministic array-structure and fraction diagrams.
//!
//! Used to author corpus fixtures and as a structural oracle: an array
//! diagram of `rows x cols` objects contains exactly that many `<circle>`
//! (or `<rect>`) elements, and sequential numbering labels them `1..=n`
//! row-major. Group regions and fraction sectors are drawn as `<path>` so they
//! never inflate the object count.

use serde::{Deserialize, Serialize};

use crate::svg::{extract_structure, format_number, normalize_svg, Element, Node, SvgDocument};

/// Fixed fill palette, applied in order.
pub const PALETTE: &[&str] = &[
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#ff9da7",
];
const STROKE: &str = "#333333";
const SHADE: &str = "#4e79a7";
const MARGIN_RATIO: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReferenceError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Circle,
    Rect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Numbering {
    None,
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupAxis {
    Rows,
    Cols,
}

/// A run of consecutive rows or columns sharing a fill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub span: u32,
    #[serde(default)]
    pub fill: Option<String>,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grouping {
    pub axis: GroupAxis,
    pub groups: Vec<Group>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub rows: u32,
    pub cols: u32,
    pub object: ObjectKind,
    pub numbering: Numbering,
    #[serde(default)]
    pub groups: Option<Grouping>,
    #[serde(default)]
    pub caption: Option<String>,
    pub cell_size: f64,
    pub gap: f64,
    /// Rotates the palette; lets two otherwise equal specs differ in color.
    #[serde(default)]
    pub palette_offset: usize,
}

impl ArraySpec {
    pub fn new(rows: u32, cols: u32, object: ObjectKind) -> Self {
        ArraySpec {
            rows,
            cols,
            object,
            numbering: Numbering::None,
            groups: None,
            caption: None,
            cell_size: 40.0,
            gap: 10.0,
            palette_offset: 0,
        }
    }

    pub fn numbered(mut self) -> Self {
        self.numbering = Numbering::Sequential;
        self
    }

    pub fn with_caption(mut self, caption: impl Into<String>) -> Self {
        self.caption = Some(caption.into());
        self
    }

    pub fn with_groups(mut self, axis: GroupAxis, groups: Vec<Group>) -> Self {
        self.groups = Some(Grouping { axis, groups });
        self
    }

    pub fn validate(&self) -> Result<(), ReferenceError> {
        let bad = |m: String| Err(ReferenceError::InvalidSpec(m));
        if self.rows == 0 || self.cols == 0 {
            return bad(format!("rows and cols must be positive, got {}x{}", self.rows, self.cols));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) || !(self.gap > 0.0 && self.gap.is_finite()) {
            return bad("cell_size and gap must be positive".into());
        }
        if let Some(g) = &self.groups {
            let total = match g.axis {
                GroupAxis::Rows => self.rows,
                GroupAxis::Cols => self.cols,
            };
            if g.groups.is_empty() || g.groups.iter().any(|x| x.span == 0) {
                return bad("groups must be non-empty with positive spans".into());
            }
            let sum: u32 = g.groups.iter().map(|x| x.span).sum();
            if sum != total {
                return bad(format!("group spans sum to {sum}, expected {total}"));
            }
        }
        Ok(())
    }
}

fn el(name: &str, attrs: &[(&str, String)]) -> Element {
    Element {
        name: name.into(),
        attributes: attrs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        children: Vec::new(),
    }
}

fn text_el(x: f64, y: f64, size: f64, content: &str, extra: &[(&str, String)]) -> Element {
    let mut attrs = vec![
        ("x", n(x)),
        ("y", n(y)),
        ("font-size", n(size)),
        ("font-family", "sans-serif".to_string()),
        ("text-anchor", "middle".to_string()),
        ("dominant-baseline", "central".to_string()),
    ];
    attrs.extend(extra.iter().cloned());
    let mut t = el("text", &attrs);
    t.children.push(Node::Text(content.to_string()));
    t
}

fn n(v: f64) -> String {
    format_number(v)
}

fn rounded_rect_path(x: f64, y: f64, w: f64, h: f64, r: f64) -> String {
    format!(
        "M{} {}H{}A{r} {r} 0 0 1 {} {}V{}A{r} {r} 0 0 1 {} {}H{}A{r} {r} 0 0 1 {} {}V{}A{r} {r} 0 0 1 {} {}Z",
        n(x + r), n(y),
        n(x + w - r), n(x + w), n(y + r),
        n(y + h - r), n(x + w - r), n(y + h),
        n(x + r), n(x), n(y + h - r),
        n(y + r), n(x + r), n(y),
        r = n(r),
    )
}

/// Wraps content in an `<svg>` whose viewBox is the measured content box
/// plus a 5% margin per side.
fn finish(children: Vec<Element>) -> String {
    let mut probe = el("svg", &[("viewBox", "-100000 -100000 200000 200000".into())]);
    probe.children = children.iter().cloned().map(Node::Element).collect();
    let doc = SvgDocument::from_root(probe).expect("svg root");
    let bbox = extract_structure(&doc).bbox.expect("reference diagrams draw something");
    let (mx, my) = (bbox.width() * MARGIN_RATIO, bbox.height() * MARGIN_RATIO);
    let vb = format!(
        "{} {} {} {}",
        n(bbox.min_x - mx),
        n(bbox.min_y - my),
        n(bbox.width() + 2.0 * mx),
        n(bbox.height() + 2.0 * my)
    );
    let mut root = el(
        "svg",
        &[("xmlns", "http://www.w3.org/2000/svg".into()), ("viewBox", vb)],
    );
    root.children = children.into_iter().map(Node::Element).collect();
    normalize_svg(&SvgDocument::from_root(root).expect("svg root"))
}

/// Renders a `rows x cols` array of objects.
pub fn render_array_diagram(spec: &ArraySpec) -> Result<String, ReferenceError> {
    spec.validate()?;
    let cell = spec.cell_size;
    let pitch = cell + spec.gap;
    let color = |i: usize| PALETTE[(i + spec.palette_offset) % PALETTE.len()].to_string();
    let label_size = cell * 0.45;
    let mut children = Vec::new();

    // group of each row/col index
    let group_of = |idx: u32, axis: GroupAxis| -> Option<usize> {
        let g = spec.groups.as_ref().filter(|g| g.axis == axis)?;
        let mut start = 0;
        for (gi, grp) in g.groups.iter().enumerate() {
            if idx < start + grp.span {
                return Some(gi);
            }
            start += grp.span;
        }
        None
    };

    if let Some(grouping) = &spec.groups {
        let pad = spec.gap * 0.4;
        let mut start = 0u32;
        for (gi, grp) in grouping.groups.iter().enumerate() {
            let fill = grp.fill.clone().unwrap_or_else(|| color(gi));
            let (x, y, w, h) = match grouping.axis {
                GroupAxis::Cols => (
                    start as f64 * pitch - pad,
                    -pad,
                    grp.span as f64 * pitch - spec.gap + 2.0 * pad,
                    spec.rows as f64 * pitch - spec.gap + 2.0 * pad,
                ),
                GroupAxis::Rows => (
                    -pad,
                    start as f64 * pitch - pad,
                    spec.cols as f64 * pitch - spec.gap + 2.0 * pad,
                    grp.span as f64 * pitch - spec.gap + 2.0 * pad,
                ),
            };
            children.push(el(
                "path",
                &[
                    ("d", rounded_rect_path(x, y, w, h, pad)),
                    ("fill", fill),
                    ("fill-opacity", "0.2".into()),
                    ("stroke", STROKE.into()),
                    ("stroke-width", n(cell * 0.03)),
                ],
            ));
            if let Some(label) = &grp.label {
                let (lx, ly) = match grouping.axis {
                    GroupAxis::Cols => (x + w / 2.0, y - label_size),
                    GroupAxis::Rows => (x - label_size * 0.3 * label.chars().count() as f64 - spec.gap, y + h / 2.0),
                };
                children.push(text_el(lx, ly, label_size, label, &[("fill", STROKE.into())]));
            }
            start += grp.span;
        }
    }

    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let gi = group_of(col, GroupAxis::Cols).or_else(|| group_of(row, GroupAxis::Rows));
            let fill = match (gi, &spec.groups) {
                (Some(i), Some(g)) => g.groups[i].fill.clone().unwrap_or_else(|| color(i)),
                _ => color(0),
            };
            let (x, y) = (col as f64 * pitch, row as f64 * pitch);
            let stroke = [("stroke", STROKE.to_string()), ("stroke-width", n(cell * 0.04))];
            let mut obj = match spec.object {
                ObjectKind::Circle => el(
                    "circle",
                    &[("cx", n(x + cell / 2.0)), ("cy", n(y + cell / 2.0)), ("r", n(cell / 2.0)), ("fill", fill)],
                ),
                ObjectKind::Rect => el(
                    "rect",
                    &[("x", n(x)), ("y", n(y)), ("width", n(cell)), ("height", n(cell)), ("fill", fill)],
                ),
            };
            obj.attributes.extend(stroke.iter().map(|(k, v)| (k.to_string(), v.clone())));
            children.push(obj);
            if spec.numbering == Numbering::Sequential {
                let number = row * spec.cols + col + 1;
                children.push(text_el(
                    x + cell / 2.0,
                    y + cell / 2.0,
                    label_size,
                    &number.to_string(),
                    &[("fill", "#ffffff".into())],
                ));
            }
        }
    }

    if let Some(caption) = &spec.caption {
        let grid_w = spec.cols as f64 * pitch - spec.gap;
        let grid_h = spec.rows as f64 * pitch - spec.gap;
        children.push(text_el(grid_w / 2.0, grid_h + cell * 0.9, cell * 0.5, caption, &[("fill", STROKE.into())]));
    }

    Ok(finish(children))
}

/// Two circles split into equal sectors, for comparing fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionPairSpec {
    pub denominator: u32,
    pub shaded_left: u32,
    pub shaded_right: u32,
    pub radius: f64,
    /// Label every sector with `1/denominator`.
    pub per_part_labels: bool,
    /// Label each circle with its shaded fraction underneath.
    pub captions: bool,
    #[serde(default)]
    pub shade: Option<String>,
}

impl FractionPairSpec {
    pub fn new(denominator: u32, shaded_left: u32, shaded_right: u32) -> Self {
        FractionPairSpec {
            denominator,
            shaded_left,
            shaded_right,
            radius: 60.0,
            per_part_labels: true,
            captions: true,
            shade: None,
        }
    }
}

fn sector_point(cx: f64, cy: f64, r: f64, k: f64, d: f64) -> (f64, f64) {
    // clockwise from 12 o'clock in screen coordinates
    let theta = (-90.0 + 360.0 * k / d).to_radians();
    (cx + r * theta.cos(), cy + r * theta.sin())
}

fn fraction_circle(cx: f64, cy: f64, spec: &FractionPairSpec, shaded: u32, out: &mut Vec<Element>) {
    let r = spec.radius;
    let d = spec.denominator as f64;
    let shade = spec.shade.clone().unwrap_or_else(|| SHADE.to_string());
    for k in 0..spec.denominator {
        let fill = if k < shaded { shade.clone() } else { "#ffffff".to_string() };
        let path = if spec.denominator == 1 {
            format!(
                "M{} {}A{r} {r} 0 1 1 {} {}A{r} {r} 0 1 1 {} {}Z",
                n(cx), n(cy - r), n(cx), n(cy + r), n(cx), n(cy - r),
                r = n(r)
            )
        } else {
            let (x0, y0) = sector_point(cx, cy, r, k as f64, d);
            let (x1, y1) = sector_point(cx, cy, r, k as f64 + 1.0, d);
            format!(
                "M{} {}L{} {}A{r} {r} 0 0 1 {} {}Z",
                n(cx), n(cy), n(x0), n(y0), n(x1), n(y1),
                r = n(r)
            )
        };
        out.push(el(
            "path",
            &[("d", path), ("fill", fill), ("stroke", STROKE.into()), ("stroke-width", n(r * 0.03))],
        ));
    }
    out.push(el(
        "circle",
        &[
            ("cx", n(cx)),
            ("cy", n(cy)),
            ("r", n(r)),
            ("fill", "none".into()),
            ("stroke", STROKE.into()),
            ("stroke-width", n(r * 0.04)),
        ],
    ));
    if spec.per_part_labels {
        let size = r * if spec.denominator > 6 { 0.16 } else { 0.24 };
        let dist = if spec.denominator == 1 { 0.0 } else { 0.6 * r };
        for k in 0..spec.denominator {
            let (lx, ly) = sector_point(cx, cy, dist, k as f64 + 0.5, d);
            let color = if k < shaded { "#ffffff" } else { STROKE };
            let label = format!("1/{}", spec.denominator);
            out.push(text_el(lx, ly, size, &label, &[("fill", color.into())]));
        }
    }
    if spec.captions {
        let label = format!("{shaded}/{}", spec.denominator);
        out.push(text_el(cx, cy + r * 1.35, r * 0.35, &label, &[("fill", STROKE.into())]));
    }
}

pub fn render_fraction_pair_with(spec: &FractionPairSpec) -> Result<String, ReferenceError> {
    if spec.denominator == 0 {
        return Err(ReferenceError::InvalidSpec("denominator must be positive".into()));
    }
    if spec.shaded_left > spec.denominator || spec.shaded_right > spec.denominator {
        return Err(ReferenceError::InvalidSpec(format!(
            "shaded counts {} and {} must not exceed denominator {}",
            spec.shaded_left, spec.shaded_right, spec.denominator
        )));
    }
    if !(spec.radius > 0.0 && spec.radius.is_finite()) {
        return Err(ReferenceError::InvalidSpec("radius must be positive".into()));
    }
    let r = spec.radius;
    let mut children = Vec::new();
    fraction_circle(r, r, spec, spec.shaded_left, &mut children);
    fraction_circle(3.5 * r, r, spec, spec.shaded_right, &mut children);
    Ok(finish(children))
}

/// Default-styled fraction pair.
pub fn render_fraction_pair(denominator: u32, shaded_left: u32, shaded_right: u32) -> Result<String, ReferenceError> {
    render_fraction_pair_with(&FractionPairSpec::new(denominator, shaded_left, shaded_right))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svg::{extract_structure, parse_svg, validate_svg};

    fn check(src: &str) -> crate::svg::StructureSummary {
        let doc = parse_svg(src).unwrap();
        let report = validate_svg(&doc);
        assert!(report.findings.is_empty(), "{:?}", report.findings);
        extract_structure(&doc)
    }

    #[test]
    fn six_circles_in_two_rows() {
        let s = check(&render_array_diagram(&ArraySpec::new(2, 3, ObjectKind::Circle).numbered()).unwrap());
        assert_eq!(s.count("circle"), 6);
        assert_eq!(s.labels, ["1", "2", "3", "4", "5", "6"]);
    }

    #[test]
    fn one_group_of_three() {
        let s = check(&render_array_diagram(&ArraySpec::new(1, 3, ObjectKind::Circle)).unwrap());
        assert_eq!(s.count("circle"), 3);
        assert!(s.labels.is_empty());
    }

    #[test]
    fn seven_by_two_numbered() {
        let s = check(&render_array_diagram(&ArraySpec::new(7, 2, ObjectKind::Circle).numbered()).unwrap());
        assert_eq!(s.count("circle"), 14);
        let expected: Vec<String> = (1..=14).map(|i| i.to_string()).collect();
        assert_eq!(s.labels, expected);
    }

    #[test]
    fn groups_render_as_paths_with_labels() {
        let spec = ArraySpec::new(4, 7, ObjectKind::Rect).with_groups(
            GroupAxis::Cols,
            vec![
                Group { span: 5, fill: None, label: Some("5 × 4".into()) },
                Group { span: 2, fill: None, label: Some("2 × 4".into()) },
            ],
        );
        let src = render_array_diagram(&spec).unwrap();
        let s = check(&src);
        assert_eq!(s.count("rect"), 28);
        assert_eq!(s.count("path"), 2);
        assert_eq!(s.labels, ["5 × 4", "2 × 4"]);
        assert!(src.contains(PALETTE[0]) && src.contains(PALETTE[1]));
    }

    #[test]
    fn bad_partitions_are_rejected() {
        let spec = ArraySpec::new(2, 3, ObjectKind::Circle)
            .with_groups(GroupAxis::Cols, vec![Group { span: 2, fill: None, label: None }]);
        assert!(render_array_diagram(&spec).is_err());
        assert!(render_array_diagram(&ArraySpec::new(0, 3, ObjectKind::Circle)).is_err());
    }

    #[test]
    fn view_box_has_five_percent_margin() {
        let src = render_array_diagram(&ArraySpec::new(1, 1, ObjectKind::Rect)).unwrap();
        // 40x40 content -> 2 unit margin on each side
        assert!(src.contains(r#"viewBox="-2 -2 44 44""#), "{src}");
    }

    #[test]
    fn halves_labeled_one_half() {
        let s = check(&render_fraction_pair(2, 1, 2).unwrap());
        assert_eq!(s.count("circle"), 2);
        assert_eq!(s.count("path"), 4);
        assert_eq!(s.labels, ["1/2", "1/2", "1/2", "1/2", "1/2", "2/2"]);
    }

    #[test]
    fn quarters_and_unshaded() {
        let s = check(&render_fraction_pair(4, 1, 2).unwrap());
        assert_eq!(s.count("path"), 8);
        assert!(s.labels.ends_with(&["1/4".to_string(), "1/4".into(), "1/4".into(), "1/4".into(), "2/4".into()]));
        let src = render_fraction_pair(3, 0, 0).unwrap();
        assert!(!src.contains(SHADE));
        assert!(render_fraction_pair(2, 3, 0).is_err());
        check(&render_fraction_pair(1, 1, 0).unwrap());
    }

    #[test]
    fn deterministic() {
        let spec = ArraySpec::new(3, 4, ObjectKind::Circle).numbered().with_caption("3 × 4");
        assert_eq!(render_array_diagram(&spec).unwrap(), render_array_diagram(&spec).unwrap());
    }
}
