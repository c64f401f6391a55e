//! SVG parsing, validation, canonical serialization, rasterization and
//! structural summaries.

mod document;
mod geometry;
mod normalize;
mod raster;
mod structure;
mod validate;

pub use document::{parse_svg, Element, Node, SvgDocument, SvgError, ViewBox};
pub use geometry::{parse_transform, path_points, Affine, BBox, PathError};
pub use normalize::{format_number, normalize_svg};
pub use raster::{
    raster_size, rasterize, RasterError, RasterImage, DEFAULT_TARGET_PX, MAX_TARGET_PX, MIN_TARGET_PX,
};
pub use structure::{extract_structure, StructureSummary, DRAWABLE_TAGS};
pub use validate::{
    validate_svg, Finding, FindingCode, Severity, ValidationReport, CLIP_TOLERANCE, ELEMENT_WHITELIST,
};

/// Parses then normalizes in one step.
pub fn normalize_source(src: &str) -> Result<String, SvgError> {
    parse_svg(src).map(|d| normalize_svg(&d))
}
