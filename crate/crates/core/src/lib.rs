//! Hough voting through log-polar vote fields.
//!
//! The pipeline mirrors a voting-based, anchor-free detector at inference:
//!
//! 1. [`votefield`] builds the log-polar region geometry and its kernels;
//! 2. [`voting`] turns `H x W x R` evidence into `H x W` presence maps;
//! 3. [`decoder`] picks 3x3-maximal peaks and decodes boxes;
//! 4. [`attribution`] inverts voting to explain a detection.
//!
//! [`tensorio`] handles the `HVT1` interchange format and [`bench`] times
//! the voting backends against each other.

pub mod attribution;
pub mod bench;
pub mod decoder;
pub mod error;
pub mod maps;
pub mod tensorio;
pub mod votefield;
pub mod voting;

pub use attribution::{
    attribute, class_interactions, render_heatmap, vote_map, ClassInteractionMatrix, VoteRecord,
};
pub use decoder::{decode_all, decode_detections, extract_peaks, AuxMaps, Detection, Peak};
pub use error::{Error, ErrorKind, Result};
pub use maps::{
    feature_diff, EvidenceStack, EvidenceTensor, FeatureMap, PresenceMap, PresenceStack,
};
pub use tensorio::{read_tensor, remap_regions, write_tensor, LabelMap, Tensor};
pub use votefield::{
    build_temporal_field, build_vote_field, mask_regions, materialize_kernels, KernelBank, Offset,
    Region, VoteField, VoteFieldSpec,
};
pub use voting::{
    vote, vote_all_classes, vote_gather, vote_kernelbank, vote_scalable, vote_scatter, vote_sparse,
    vote_spatiotemporal, Backend, ScalableMixWeights, Voter,
};
