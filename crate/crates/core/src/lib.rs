//! Core of the VDCook dataset construction engine.
//!
//! Clips enter through [`ingestion`], are segmented and annotated by
//! [`enrichment`], made searchable by [`index`] and assembled into
//! reproducible packages by [`cooking`]. [`engine::Engine`] ties these
//! stages to a persistent [`store::Store`].

pub mod annotation;
pub mod cooking;
pub mod engine;
pub mod enrichment;
pub mod error;
pub mod fixtures;
mod http;
pub mod index;
pub mod ingestion;
pub mod model;
pub mod stats;
pub mod store;

pub use engine::{Engine, EngineConfig};
pub use error::{Error, FieldError, Result};
pub use model::container::{decode_clip_container, encode_clip_container, Clip, ContainerError};
pub use model::{
    compute_clip_id, Channel, ClipId, ClipRecord, ClipStatus, CookRequest, EnrichmentMetadata, Manifest, ManifestEntry,
    MotionCategory, Origin, Prefilters, ProvenanceChain, ProvenanceKind, ShortfallPolicy, SourceMode, Timestamp,
};

/// Version string recorded in every manifest.
pub const ENGINE_VERSION: &str = concat!("vdcook-core/", env!("CARGO_PKG_VERSION"));
