use super::document::{Element, Node, SvgDocument};
use super::geometry::{segments, Segment};

/// Attributes whose numbers are rounded during normalization.
const NUMERIC_ATTRIBUTES: &[&str] = &[
    "x", "y", "x1", "y1", "x2", "y2", "cx", "cy", "r", "rx", "ry", "width", "height", "d",
    "points", "transform", "viewBox", "stroke-width", "font-size", "opacity", "fill-opacity",
    "stroke-opacity", "dx", "dy", "stroke-dasharray", "stroke-dashoffset", "stroke-miterlimit",
];

const DECIMALS: usize = 4;

/// Formats with at most four decimals and no trailing zeros.
pub fn format_number(v: f64) -> String {
    let s = format!("{v:.DECIMALS$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        &s
    };
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn normalize_numeric_value(value: &str) -> String {
    let segs = segments(value);
    let mut out = String::with_capacity(value.len());
    let mut prev_number = false;
    for (i, seg) in segs.iter().enumerate() {
        match seg {
            Segment::Number(n) => {
                if prev_number {
                    out.push(' ');
                }
                match n.parse::<f64>() {
                    Ok(v) if v.is_finite() => out.push_str(&format_number(v)),
                    _ => out.push_str(n),
                }
                prev_number = true;
            }
            Segment::Other(o) => {
                let t = o.trim_matches(|c: char| c.is_whitespace() || c == ',');
                if t.is_empty() {
                    let between = prev_number && matches!(segs.get(i + 1), Some(Segment::Number(_)));
                    if between {
                        out.push(' ');
                    }
                } else {
                    out.push_str(&t.split_whitespace().collect::<Vec<_>>().join(" "));
                }
                prev_number = false;
            }
        }
    }
    out
}

fn escape_attr(v: &str, out: &mut String) {
    for c in v.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
}

fn escape_text(v: &str, out: &mut String) {
    for c in v.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            _ => out.push(c),
        }
    }
}

fn write_element(el: &Element, out: &mut String) {
    out.push('<');
    out.push_str(&el.name);
    let mut attrs: Vec<&(String, String)> = el.attributes.iter().collect();
    attrs.sort_by(|a, b| a.0.cmp(&b.0));
    for (k, v) in attrs {
        out.push(' ');
        out.push_str(k);
        out.push_str("=\"");
        if NUMERIC_ATTRIBUTES.contains(&k.as_str()) {
            escape_attr(&normalize_numeric_value(v), out);
        } else {
            escape_attr(v, out);
        }
        out.push('"');
    }
    let children: Vec<&Node> = el
        .children
        .iter()
        .filter(|n| !matches!(n, Node::Text(t) if t.trim().is_empty()))
        .collect();
    if children.is_empty() {
        out.push_str("/>");
        return;
    }
    out.push('>');
    for child in children {
        match child {
            Node::Element(e) => write_element(e, out),
            Node::Text(t) => escape_text(t, out),
        }
    }
    out.push_str("</");
    out.push_str(&el.name);
    out.push('>');
}

/// Canonical serialization: sorted attributes, rounded numbers in geometric
/// attributes, whitespace-only text dropped, double-quoted values, no comments.
pub fn normalize_svg(doc: &SvgDocument) -> String {
    let mut out = String::new();
    write_element(doc.root(), &mut out);
    out
}
