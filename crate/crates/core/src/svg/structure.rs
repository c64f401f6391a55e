use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::document::{parse_length, Element, SvgDocument, ViewBox};
use super::geometry::{parse_number_list, parse_transform, path_points, Affine, BBox};

/// Elements that paint something.
pub const DRAWABLE_TAGS: &[&str] = &[
    "path", "rect", "circle", "ellipse", "line", "polyline", "polygon", "text",
];

/// Subtrees that are never rendered directly.
const NON_RENDERED: &[&str] = &["defs", "title", "desc", "style", "metadata"];

const DEFAULT_FONT_SIZE: f64 = 16.0;
/// Average advance of a glyph relative to the font size.
const GLYPH_ADVANCE: f64 = 0.6;

/// Tag census, text labels in document order, and content bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSummary {
    pub counts: BTreeMap<String, usize>,
    pub labels: Vec<String>,
    pub bbox: Option<BBox>,
}

impl StructureSummary {
    pub fn count(&self, tag: &str) -> usize {
        self.counts.get(tag).copied().unwrap_or(0)
    }

    pub fn drawable_count(&self) -> usize {
        DRAWABLE_TAGS.iter().map(|t| self.count(t)).sum()
    }
}

/// One painted element with its bounds in root user space.
#[derive(Debug, Clone)]
pub(crate) struct Drawable<'a> {
    pub path: String,
    pub element: &'a Element,
    pub bbox: Option<BBox>,
    /// Set when the element's geometry attributes could not be interpreted.
    pub geometry_error: Option<String>,
}

#[derive(Debug, Clone)]
struct Inherited {
    transform: Affine,
    font_size: f64,
    anchor: String,
    baseline: String,
}

/// Reads a presentation property from the `style` attribute or the attribute itself.
pub(crate) fn property<'a>(el: &'a Element, name: &str) -> Option<&'a str> {
    if let Some(style) = el.attr("style") {
        for decl in style.split(';') {
            if let Some((k, v)) = decl.split_once(':') {
                if k.trim() == name {
                    return Some(v.trim());
                }
            }
        }
    }
    el.attr(name)
}

/// Walks rendered elements depth first, yielding each drawable.
pub(crate) fn drawables(doc: &SvgDocument) -> Vec<Drawable<'_>> {
    let mut out = Vec::new();
    let inherited = Inherited {
        transform: Affine::IDENTITY,
        font_size: DEFAULT_FONT_SIZE,
        anchor: "start".into(),
        baseline: "auto".into(),
    };
    let viewport = doc.viewport();
    walk(doc.root(), "/svg".to_string(), &inherited, viewport, &mut out, true);
    out
}

fn walk<'a>(
    el: &'a Element,
    path: String,
    parent: &Inherited,
    viewport: Option<ViewBox>,
    out: &mut Vec<Drawable<'a>>,
    is_root: bool,
) {
    if NON_RENDERED.contains(&el.name.as_str()) {
        return;
    }
    let mut ctx = parent.clone();
    let mut transform_error = None;
    if !is_root {
        if let Some(t) = el.attr("transform") {
            match parse_transform(t) {
                Some(local) => ctx.transform = parent.transform.then(&local),
                None => transform_error = Some(format!("unparseable transform {t:?}")),
            }
        }
    }
    if let Some(fs) = property(el, "font-size").and_then(parse_length) {
        ctx.font_size = fs;
    }
    if let Some(a) = property(el, "text-anchor") {
        ctx.anchor = a.to_string();
    }
    if let Some(b) = property(el, "dominant-baseline") {
        ctx.baseline = b.to_string();
    }

    if DRAWABLE_TAGS.contains(&el.name.as_str()) {
        let (bbox, geometry_error) = match local_bbox(el, &ctx, viewport) {
            Ok(b) => (b.map(|b| b.transformed(&ctx.transform)), transform_error),
            Err(e) => (None, Some(e)),
        };
        out.push(Drawable {
            path: path.clone(),
            element: el,
            bbox,
            geometry_error,
        });
        // text content is measured as a whole; tspans are not separate drawables
        if el.name == "text" {
            return;
        }
    }

    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for child in el.child_elements() {
        let n = seen.entry(child.name.as_str()).or_insert(0);
        *n += 1;
        let child_path = format!("{path}/{}[{n}]", child.name);
        walk(child, child_path, &ctx, viewport, out, false);
    }
}

/// Resolves a coordinate that may be a percentage of the viewport.
fn coord(el: &Element, name: &str, basis: Option<f64>) -> Result<f64, String> {
    match el.attr(name) {
        None => Ok(0.0),
        Some(v) => {
            let v = v.trim();
            if let Some(pct) = v.strip_suffix('%') {
                let basis = basis.ok_or_else(|| format!("{name}={v:?} needs a viewport"))?;
                return pct
                    .trim()
                    .parse::<f64>()
                    .map(|p| p / 100.0 * basis)
                    .map_err(|_| format!("unparseable {name}={v:?}"));
            }
            parse_length(v).ok_or_else(|| format!("unparseable {name}={v:?}"))
        }
    }
}

fn local_bbox(el: &Element, ctx: &Inherited, vp: Option<ViewBox>) -> Result<Option<BBox>, String> {
    let w = vp.map(|v| v.width);
    let h = vp.map(|v| v.height);
    let diag = vp.map(|v| (v.width.powi(2) + v.height.powi(2)).sqrt() / std::f64::consts::SQRT_2);
    match el.name.as_str() {
        "rect" => {
            let (x, y) = (coord(el, "x", w)?, coord(el, "y", h)?);
            let (rw, rh) = (coord(el, "width", w)?, coord(el, "height", h)?);
            if rw < 0.0 || rh < 0.0 {
                return Err("negative rect size".into());
            }
            Ok((rw > 0.0 && rh > 0.0).then(|| BBox::from_rect(x, y, rw, rh)))
        }
        "circle" => {
            let (cx, cy, r) = (coord(el, "cx", w)?, coord(el, "cy", h)?, coord(el, "r", diag)?);
            if r < 0.0 {
                return Err("negative radius".into());
            }
            Ok((r > 0.0).then(|| BBox::from_rect(cx - r, cy - r, 2.0 * r, 2.0 * r)))
        }
        "ellipse" => {
            let (cx, cy) = (coord(el, "cx", w)?, coord(el, "cy", h)?);
            let (rx, ry) = (coord(el, "rx", w)?, coord(el, "ry", h)?);
            if rx < 0.0 || ry < 0.0 {
                return Err("negative radius".into());
            }
            Ok((rx > 0.0 && ry > 0.0).then(|| BBox::from_rect(cx - rx, cy - ry, 2.0 * rx, 2.0 * ry)))
        }
        "line" => {
            let p1 = (coord(el, "x1", w)?, coord(el, "y1", h)?);
            let p2 = (coord(el, "x2", w)?, coord(el, "y2", h)?);
            Ok(BBox::from_points([p1, p2]))
        }
        "polyline" | "polygon" => {
            let nums = parse_number_list(el.attr("points").unwrap_or(""))
                .ok_or_else(|| "unparseable points".to_string())?;
            Ok(BBox::from_points(nums.chunks_exact(2).map(|c| (c[0], c[1]))))
        }
        "path" => {
            let pts = path_points(el.attr("d").unwrap_or("")).map_err(|e| e.to_string())?;
            Ok(BBox::from_points(pts))
        }
        "text" => Ok(text_bbox(el, ctx, vp)),
        _ => Ok(None),
    }
}

/// Approximate extent of a text run: fixed glyph advance, ascent 0.8em,
/// descent 0.2em, shifted by anchor and baseline.
fn text_bbox(el: &Element, ctx: &Inherited, vp: Option<ViewBox>) -> Option<BBox> {
    let content = el.text_content();
    let content = content.trim();
    if content.is_empty() {
        return None;
    }
    let first = |name: &str, basis: Option<f64>| -> f64 {
        el.attr(name)
            .and_then(|v| {
                let v = v.trim();
                match v.strip_suffix('%') {
                    Some(p) => p.trim().parse::<f64>().ok().zip(basis).map(|(p, b)| p / 100.0 * b),
                    None => parse_number_list(v).and_then(|n| n.first().copied()),
                }
            })
            .unwrap_or(0.0)
    };
    let x = first("x", vp.map(|v| v.width)) + first("dx", None);
    let y = first("y", vp.map(|v| v.height)) + first("dy", None);
    let fs = ctx.font_size;
    let width = content.chars().count() as f64 * fs * GLYPH_ADVANCE;
    let left = match ctx.anchor.as_str() {
        "middle" => x - width / 2.0,
        "end" => x - width,
        _ => x,
    };
    let (top, bottom) = match ctx.baseline.as_str() {
        "middle" | "central" => (y - 0.5 * fs, y + 0.5 * fs),
        "hanging" | "text-before-edge" => (y, y + fs),
        _ => (y - 0.8 * fs, y + 0.2 * fs),
    };
    Some(BBox {
        min_x: left,
        min_y: top,
        max_x: left + width,
        max_y: bottom,
    })
}

fn count_tags(el: &Element, counts: &mut BTreeMap<String, usize>) {
    *counts.entry(el.name.clone()).or_insert(0) += 1;
    for child in el.child_elements() {
        count_tags(child, counts);
    }
}

fn collect_labels(el: &Element, labels: &mut Vec<String>) {
    if NON_RENDERED.contains(&el.name.as_str()) {
        return;
    }
    if el.name == "text" {
        let text = el.text_content();
        let label = text.split_whitespace().collect::<Vec<_>>().join(" ");
        if !label.is_empty() {
            labels.push(label);
        }
        return;
    }
    for child in el.child_elements() {
        collect_labels(child, labels);
    }
}

/// Tag census over the whole tree, `<text>` labels in document order
/// (whitespace collapsed), and the union of drawable bounds. Path bounds
/// use the control-point hull, which can overestimate curved segments.
pub fn extract_structure(doc: &SvgDocument) -> StructureSummary {
    let mut counts = BTreeMap::new();
    count_tags(doc.root(), &mut counts);
    let mut labels = Vec::new();
    collect_labels(doc.root(), &mut labels);
    let bbox = drawables(doc)
        .iter()
        .filter_map(|d| d.bbox)
        .reduce(|a, b| a.union(&b));
    StructureSummary {
        counts,
        labels,
        bbox,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svg::parse_svg;

    #[test]
    fn empty_svg_has_no_bbox() {
        let s = extract_structure(&parse_svg(r#"<svg viewBox="0 0 10 10"/>"#).unwrap());
        assert_eq!(s.drawable_count(), 0);
        assert!(s.labels.is_empty());
        assert!(s.bbox.is_none());
        assert_eq!(s.count("svg"), 1);
    }

    #[test]
    fn group_transform_moves_bbox() {
        let src = r#"<svg viewBox="0 0 100 100"><g transform="translate(10,20)"><rect x="0" y="0" width="5" height="5"/></g></svg>"#;
        let s = extract_structure(&parse_svg(src).unwrap());
        assert_eq!(s.bbox, Some(BBox::from_rect(10.0, 20.0, 5.0, 5.0)));
    }

    #[test]
    fn text_extent_follows_anchor_and_style_font_size() {
        let src = r#"<svg viewBox="0 0 100 100"><text x="50" y="50" text-anchor="middle" style="font-size:10px">abcd</text></svg>"#;
        let s = extract_structure(&parse_svg(src).unwrap());
        let b = s.bbox.unwrap();
        assert!((b.min_x - 38.0).abs() < 1e-9 && (b.max_x - 62.0).abs() < 1e-9);
        assert!((b.min_y - 42.0).abs() < 1e-9 && (b.max_y - 52.0).abs() < 1e-9);
        assert_eq!(s.labels, ["abcd"]);
    }

    #[test]
    fn defs_are_counted_but_not_measured() {
        let src = r#"<svg viewBox="0 0 10 10"><defs><circle cx="500" cy="5" r="1"/></defs></svg>"#;
        let s = extract_structure(&parse_svg(src).unwrap());
        assert_eq!(s.count("circle"), 1);
        assert!(s.bbox.is_none());
    }

    #[test]
    fn percentages_resolve_against_viewport() {
        let src = r#"<svg viewBox="0 0 200 100"><rect x="50%" y="10%" width="10" height="10"/></svg>"#;
        let s = extract_structure(&parse_svg(src).unwrap());
        assert_eq!(s.bbox, Some(BBox::from_rect(100.0, 10.0, 10.0, 10.0)));
    }

    #[test]
    fn drawable_paths_index_same_name_siblings() {
        let src = r#"<svg><g/><g><circle r="1"/><rect width="1" height="1"/><circle r="2"/></g></svg>"#;
        let doc = parse_svg(src).unwrap();
        let paths: Vec<_> = drawables(&doc).into_iter().map(|d| d.path).collect();
        assert_eq!(paths, ["/svg/g[2]/circle[1]", "/svg/g[2]/rect[1]", "/svg/g[2]/circle[2]"]);
    }
}
