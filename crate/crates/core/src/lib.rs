//! Conditional variational autoencoders for tile-based platformer levels.
//!
//! The crate covers the whole pipeline: parsing VGLC level text into 16×16
//! segments, deriving binary conditioning labels (game elements, SMB design
//! patterns, game blends), training a fully-connected CVAE with a small
//! hand-written dense network kernel, generating and re-labelling segments,
//! and evaluating the results (label match rates, random-forest game
//! classification, energy distance over tile metrics).

pub mod corpus;
pub mod cvae;
pub mod dataset;
pub mod eval;
pub mod generation;
pub mod labeling;
pub mod nn;
pub mod tiles;

pub use corpus::{Segment, TileGrid, SEGMENT_SIZE};
pub use cvae::{Checkpoint, CvaeModel, TrainConfig};
pub use dataset::Dataset;
pub use labeling::{LabelVector, Scheme};
pub use tiles::{Game, TileMap, TileVocab};
