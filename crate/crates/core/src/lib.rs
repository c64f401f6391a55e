//! Generation and evaluation of SVG hint diagrams for step-by-step math hints.

pub mod config;
pub mod corpus;
pub mod gateway;
pub mod generation;
pub mod hashing;
pub mod pipeline;
pub mod prompts;
pub mod svg;
pub mod vqa;
pub mod reference;
