//! Building blocks for clinical text annotation pipelines.
//!
//! Annotations carry a chain of spans back to the raw document, so text can be
//! cleaned, masked or rewritten without losing the original character offsets
//! (see [`span`]). Operations are wired into declarative pipelines
//! ([`pipeline`]) and every run can record a provenance graph
//! ([`provenance`]). [`io`] reads and writes brat, Doccano and JSON, [`eval`]
//! scores predictions against a reference, and [`batch`] runs a pipeline over
//! many documents, in parallel with the `parallel` feature.
//!
//! ```
//! use cliniflow::model::{Document, Metadata};
//! use cliniflow::span::OriginalSpan;
//!
//! let doc = Document::new("Patient sous aspirine.", Metadata::new());
//! assert_eq!(doc.slice(&[OriginalSpan::new(13, 21)], ""), "aspirine");
//! ```

pub mod batch;
pub mod eval;
pub mod io;
pub mod model;
pub mod ops;
pub mod pipeline;
pub mod provenance;
pub mod span;
