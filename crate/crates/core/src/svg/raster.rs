use std::sync::{Arc, OnceLock};

use resvg::tiny_skia::{Color, Pixmap, Transform};
use resvg::usvg::{self, fontdb};
use serde::{Deserialize, Serialize};

use super::document::{Element, SvgDocument};
use super::normalize::normalize_svg;
use super::structure::drawables;
use super::validate::validate_svg;
use crate::hashing::sha256_hex;

pub const DEFAULT_TARGET_PX: u32 = 512;
pub const MIN_TARGET_PX: u32 = 64;
pub const MAX_TARGET_PX: u32 = 4096;

const SVG_NS: &str = "http://www.w3.org/2000/svg";
const XLINK_NS: &str = "http://www.w3.org/1999/xlink";
const FONT_FAMILY: &str = "DejaVu Sans";
static FONT_DATA: &[u8] = include_bytes!("../../assets/fonts/DejaVuSans.ttf");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RasterError {
    #[error("target size {0}px outside [{MIN_TARGET_PX}, {MAX_TARGET_PX}]")]
    TargetOutOfRange(u32),
    #[error("document does not pass validation: {0}")]
    Invalid(String),
    #[error("degenerate geometry at {element}: {reason}")]
    Degenerate { element: String, reason: String },
    #[error("render failure: {0}")]
    Render(String),
    #[error("png: {0}")]
    Png(String),
}

/// An RGBA8 pixel buffer, rows top to bottom.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterImage {
    width: u32,
    height: u32,
    #[serde(skip)]
    pixels: Vec<u8>,
    source_hash: String,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("source_hash", &self.source_hash)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>, source_hash: String) -> Result<Self, RasterError> {
        if pixels.len() != width as usize * height as usize * 4 {
            return Err(RasterError::Render(format!(
                "buffer of {} bytes does not match {width}x{height} RGBA",
                pixels.len()
            )));
        }
        Ok(RasterImage {
            width,
            height,
            pixels,
            source_hash,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn source_hash(&self) -> &str {
        &self.source_hash
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    /// Non-interlaced RGBA8 PNG.
    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgba);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().expect("in-memory png header");
            writer.write_image_data(&self.pixels).expect("in-memory png data");
        }
        out
    }

    /// Decodes any 8/16-bit PNG into RGBA8.
    pub fn from_png(bytes: &[u8], source_hash: String) -> Result<Self, RasterError> {
        let png_err = |e: png::DecodingError| RasterError::Png(e.to_string());
        let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::normalize_to_color8());
        let mut reader = decoder.read_info().map_err(png_err)?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| RasterError::Png("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(png_err)?;
        buf.truncate(info.buffer_size());
        let rgba = match info.color_type {
            png::ColorType::Rgba => buf,
            png::ColorType::Rgb => buf.chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect(),
            png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g, 255]).collect(),
            png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0], p[1]]).collect(),
            png::ColorType::Indexed => return Err(RasterError::Png("unexpanded palette".into())),
        };
        RasterImage::new(info.width, info.height, rgba, source_hash)
    }
}

fn render_options() -> &'static usvg::Options<'static> {
    static OPTIONS: OnceLock<usvg::Options<'static>> = OnceLock::new();
    OPTIONS.get_or_init(|| {
        let mut db = fontdb::Database::new();
        db.load_font_data(FONT_DATA.to_vec());
        db.set_sans_serif_family(FONT_FAMILY);
        db.set_serif_family(FONT_FAMILY);
        db.set_monospace_family(FONT_FAMILY);
        db.set_cursive_family(FONT_FAMILY);
        db.set_fantasy_family(FONT_FAMILY);
        let mut opts = usvg::Options {
            font_family: FONT_FAMILY.to_string(),
            fontdb: Arc::new(db),
            ..Default::default()
        };
        // Every family request resolves to the single bundled face.
        opts.font_resolver = usvg::FontResolver {
            select_font: Box::new(|_, db| db.faces().next().map(|f| f.id)),
            select_fallback: Box::new(|_, _, db| db.faces().next().map(|f| f.id)),
        };
        opts
    })
}

/// Output size: longest side equals `target_px`, aspect from the viewport.
pub fn raster_size(view_w: f64, view_h: f64, target_px: u32) -> (u32, u32) {
    let t = target_px as f64;
    if view_w >= view_h {
        (target_px, ((t * view_h / view_w).round() as u32).max(1))
    } else {
        (((t * view_w / view_h).round() as u32).max(1), target_px)
    }
}

/// Renders a validated document onto opaque white. Pure in
/// (normalized source, target_px).
pub fn rasterize(doc: &SvgDocument, target_px: u32) -> Result<RasterImage, RasterError> {
    if !(MIN_TARGET_PX..=MAX_TARGET_PX).contains(&target_px) {
        return Err(RasterError::TargetOutOfRange(target_px));
    }
    let report = validate_svg(doc);
    if !report.ok {
        let codes: Vec<_> = report.error_codes().iter().map(|c| c.as_str()).collect();
        return Err(RasterError::Invalid(codes.join(",")));
    }
    if let Some(bad) = drawables(doc).into_iter().find(|d| d.geometry_error.is_some()) {
        return Err(RasterError::Degenerate {
            element: bad.path,
            reason: bad.geometry_error.unwrap_or_default(),
        });
    }
    let vp = doc.viewport().ok_or_else(|| RasterError::Invalid("MISSING_VIEWPORT".into()))?;
    let source_hash = sha256_hex(normalize_svg(doc).as_bytes());

    let render_src = render_source(doc, vp.width, vp.height);
    let tree = usvg::Tree::from_str(&render_src, render_options())
        .map_err(|e| RasterError::Render(e.to_string()))?;
    let (w, h) = raster_size(vp.width, vp.height, target_px);
    let mut pixmap = Pixmap::new(w, h).ok_or_else(|| RasterError::Render("pixmap allocation".into()))?;
    pixmap.fill(Color::WHITE);
    let size = tree.size();
    let transform = Transform::from_scale(w as f32 / size.width(), h as f32 / size.height());
    resvg::render(&tree, transform, &mut pixmap.as_mut());
    // Background is opaque, so premultiplied and straight alpha coincide.
    RasterImage::new(w, h, pixmap.take(), source_hash)
}

/// Normalized source with the SVG namespace declared and the intrinsic size
/// pinned to the viewport dimensions.
fn render_source(doc: &SvgDocument, view_w: f64, view_h: f64) -> String {
    let mut root: Element = doc.root().clone();
    root.attributes.retain(|(k, _)| k != "width" && k != "height");
    root.attributes.push(("width".into(), view_w.to_string()));
    root.attributes.push(("height".into(), view_h.to_string()));
    if root.attr("xmlns").is_none() {
        root.attributes.push(("xmlns".into(), SVG_NS.into()));
    }
    if root.attr("xmlns:xlink").is_none() && uses_prefix(&root, "xlink:") {
        root.attributes.push(("xmlns:xlink".into(), XLINK_NS.into()));
    }
    let doc = SvgDocument::from_root(root).expect("root already validated");
    normalize_svg(&doc)
}

fn uses_prefix(el: &Element, prefix: &str) -> bool {
    el.attributes.iter().any(|(k, _)| k.starts_with(prefix)) || el.child_elements().any(|c| uses_prefix(c, prefix))
}
