//! Deterministic explode/implode layout engine for part-aware 3D generation.
//!
//! The crate covers everything around the generative models: curating part
//! decompositions out of authored meshes, sparse surface voxelization, radial
//! explosion of parts with a recorded (direction, distance) per part,
//! collision-stopped implosion back toward the centre, six-view normal and
//! canonical-coordinate rendering, a pluggable completion boundary, and the
//! evaluation metrics (Chamfer distance, F-Score, voxel IoU / F-Score).
//!
//! Every stage is a pure function over explicit values; the [`pipeline`]
//! module chains them with a content-hashed manifest so runs can be resumed
//! and audited.

pub mod completion;
pub mod curation;
pub mod explode;
pub mod geom;
pub mod implode;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod render;
pub mod voxel;

pub use completion::{Completer, CompletionError, CompletionRequest, CompletionResult, Method};
pub use curation::{CurationConfig, CurationReport};
pub use explode::{ExplodeConfig, ExplodeError, ExplodedState, ExplosionRecord};
pub use geom::{Aabb, Similarity, Vec3};
pub use implode::{ImplodeConfig, ImplodeError, ImplodedState, StopReason};
pub use mesh::{MeshError, Part, PartSet, PointSample, TriMesh};
pub use metrics::{CdConvention, EvaluationReport, MetricsError, MetricsReport};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineError, PipelineManifest, Stage};
pub use render::{GBuffer, View, ViewSpec};
pub use voxel::{PartOccupancy, SparseVoxelGrid, VoxelError, VoxelSet};
