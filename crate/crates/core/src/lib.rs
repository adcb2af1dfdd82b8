//! Weakly supervised raster segmentation with soft-logic label inference.
//!
//! A coarse-to-fine quadtree of cells carries soft flood labels. Rules over
//! cell adjacency and elevation are grounded into a hinge-loss program,
//! solved for the labels, and the labels train a pixel classifier whose
//! cell probabilities seed the next, finer round. Cells whose inferred
//! label has high entropy are the ones refined.
//!
//! ```
//! use skihl::synth::{generate, ScenarioConfig};
//! use skihl::pipeline::{run, PipelineConfig, PipelineInputs};
//! use skihl::knowledge::KnowledgeBase;
//!
//! let scenario = generate(&ScenarioConfig { rows: 32, cols: 32, ..Default::default() }).unwrap();
//! let inputs = PipelineInputs {
//!     features: scenario.features,
//!     sparse: scenario.sparse,
//!     kb: KnowledgeBase::default_flood(),
//!     truth: Some(scenario.truth),
//! };
//! let config = PipelineConfig { epochs: 20, max_level: 2, ..Default::default() };
//! let outcome = run(&inputs, &config).unwrap();
//! assert_eq!(outcome.report.levels.len(), 3);
//! ```

pub mod error;
pub mod hierarchy;
pub mod knowledge;
pub mod learner;
pub mod metrics;
pub mod pipeline;
pub mod psl;
pub mod raster;
pub mod synth;

pub use error::{Error, Result};
