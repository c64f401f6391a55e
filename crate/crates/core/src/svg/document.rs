use std::fmt;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::geometry::parse_number_list;

/// Errors raised while turning source text into an [`SvgDocument`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SvgError {
    #[error("malformed XML at byte {offset}: {message}")]
    Xml { offset: usize, message: String },
    #[error("root element is <{0}>, expected <svg>")]
    NotSvgRoot(String),
    #[error("invalid viewBox {0:?}: expected four numbers with positive width and height")]
    InvalidViewBox(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Element(Element),
    Text(String),
}

/// One XML element. Attribute order is preserved as written.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Element {
    pub name: String,
    pub attributes: Vec<(String, String)>,
    pub children: Vec<Node>,
}

impl Element {
    pub fn new(name: impl Into<String>) -> Self {
        Element {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn child_elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(|n| match n {
            Node::Element(e) => Some(e),
            Node::Text(_) => None,
        })
    }

    /// Concatenated character data of this element and its descendants.
    pub fn text_content(&self) -> String {
        let mut out = String::new();
        collect_text(self, &mut out);
        out
    }
}

fn collect_text(el: &Element, out: &mut String) {
    for child in &el.children {
        match child {
            Node::Text(t) => out.push_str(t),
            Node::Element(e) => collect_text(e, out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewBox {
    pub min_x: f64,
    pub min_y: f64,
    pub width: f64,
    pub height: f64,
}

impl ViewBox {
    pub fn parse(value: &str) -> Result<ViewBox, SvgError> {
        let nums = parse_number_list(value).ok_or_else(|| SvgError::InvalidViewBox(value.into()))?;
        match nums[..] {
            [min_x, min_y, width, height] if width > 0.0 && height > 0.0 => Ok(ViewBox {
                min_x,
                min_y,
                width,
                height,
            }),
            _ => Err(SvgError::InvalidViewBox(value.into())),
        }
    }
}

impl fmt::Display for ViewBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.min_x, self.min_y, self.width, self.height)
    }
}

/// A parsed SVG document. Immutable after parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct SvgDocument {
    root: Element,
    width: Option<f64>,
    height: Option<f64>,
    view_box: Option<ViewBox>,
}

impl SvgDocument {
    pub fn root(&self) -> &Element {
        &self.root
    }

    pub fn width(&self) -> Option<f64> {
        self.width
    }

    pub fn height(&self) -> Option<f64> {
        self.height
    }

    pub fn view_box(&self) -> Option<ViewBox> {
        self.view_box
    }

    /// The user-space rectangle the document is displayed through: the
    /// viewBox if present, else `0 0 width height`.
    pub fn viewport(&self) -> Option<ViewBox> {
        self.view_box.or(match (self.width, self.height) {
            (Some(w), Some(h)) if w > 0.0 && h > 0.0 => Some(ViewBox {
                min_x: 0.0,
                min_y: 0.0,
                width: w,
                height: h,
            }),
            _ => None,
        })
    }

    pub fn from_root(root: Element) -> Result<SvgDocument, SvgError> {
        if root.name != "svg" {
            return Err(SvgError::NotSvgRoot(root.name));
        }
        let view_box = root.attr("viewBox").map(ViewBox::parse).transpose()?;
        let width = root.attr("width").and_then(parse_length);
        let height = root.attr("height").and_then(parse_length);
        Ok(SvgDocument {
            root,
            width,
            height,
            view_box,
        })
    }
}

/// Parses a plain user-unit length (`12`, `12.5px`). Other units yield `None`.
pub(crate) fn parse_length(value: &str) -> Option<f64> {
    let v = value.trim();
    let v = v.strip_suffix("px").unwrap_or(v).trim_end();
    v.parse::<f64>().ok().filter(|n| n.is_finite())
}

pub fn parse_svg(src: &str) -> Result<SvgDocument, SvgError> {
    let root = parse_xml(src)?;
    SvgDocument::from_root(root)
}

fn xml_err(offset: u64, message: impl fmt::Display) -> SvgError {
    SvgError::Xml {
        offset: offset as usize,
        message: message.to_string(),
    }
}

fn start_element(start: &BytesStart<'_>, offset: u64) -> Result<Element, SvgError> {
    let name = std::str::from_utf8(start.name().as_ref())
        .map_err(|e| xml_err(offset, e))?
        .to_string();
    let mut attributes = Vec::new();
    for attr in start.attributes() {
        let attr = attr.map_err(|e| xml_err(offset, e))?;
        let key = std::str::from_utf8(attr.key.as_ref())
            .map_err(|e| xml_err(offset, e))?
            .to_string();
        let value = attr.unescape_value().map_err(|e| xml_err(offset, e))?.into_owned();
        attributes.push((key, value));
    }
    Ok(Element {
        name,
        attributes,
        children: Vec::new(),
    })
}

fn push_text(parent: &mut Element, text: &str) {
    if let Some(Node::Text(prev)) = parent.children.last_mut() {
        prev.push_str(text);
    } else {
        parent.children.push(Node::Text(text.to_string()));
    }
}

fn resolve_entity(name: &str) -> Option<&'static str> {
    Some(match name {
        "amp" => "&",
        "lt" => "<",
        "gt" => ">",
        "quot" => "\"",
        "apos" => "'",
        _ => return None,
    })
}

fn parse_xml(src: &str) -> Result<Element, SvgError> {
    let mut reader = Reader::from_str(src);
    reader.config_mut().check_end_names = true;
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;

    loop {
        let event = reader
            .read_event()
            .map_err(|e| xml_err(reader.error_position(), e))?;
        let pos = reader.buffer_position();
        match event {
            Event::Start(start) => {
                if root.is_some() && stack.is_empty() {
                    return Err(xml_err(pos, "content after the root element"));
                }
                stack.push(start_element(&start, pos)?);
            }
            Event::Empty(start) => {
                let el = start_element(&start, pos)?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(Node::Element(el)),
                    None if root.is_none() => root = Some(el),
                    None => return Err(xml_err(pos, "content after the root element")),
                }
            }
            Event::End(_) => {
                let el = stack
                    .pop()
                    .ok_or_else(|| xml_err(pos, "unexpected closing tag"))?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(Node::Element(el)),
                    None => root = Some(el),
                }
            }
            Event::Text(text) => {
                let text = text.xml10_content().map_err(|e| xml_err(pos, e))?;
                match stack.last_mut() {
                    Some(parent) => push_text(parent, &text),
                    None if text.trim().is_empty() => {}
                    None => return Err(xml_err(pos, "text outside the root element")),
                }
            }
            Event::CData(data) => {
                let text = data.xml10_content().map_err(|e| xml_err(pos, e))?;
                if let Some(parent) = stack.last_mut() {
                    push_text(parent, &text);
                }
            }
            Event::GeneralRef(reference) => {
                let resolved = match reference.resolve_char_ref().map_err(|e| xml_err(pos, e))? {
                    Some(c) => c.to_string(),
                    None => {
                        let name = reference.decode().map_err(|e| xml_err(pos, e))?;
                        resolve_entity(&name)
                            .ok_or_else(|| xml_err(pos, format!("unknown entity &{name};")))?
                            .to_string()
                    }
                };
                match stack.last_mut() {
                    Some(parent) => push_text(parent, &resolved),
                    None => return Err(xml_err(pos, "entity outside the root element")),
                }
            }
            Event::Comment(_) | Event::Decl(_) | Event::PI(_) | Event::DocType(_) => {}
            Event::Eof => {
                if let Some(open) = stack.last() {
                    return Err(xml_err(
                        src.len() as u64,
                        format!("unexpected end of input inside <{}>", open.name),
                    ));
                }
                return root.ok_or_else(|| xml_err(0, "no root element"));
            }
        }
    }
}
