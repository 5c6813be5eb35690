//! Entropic entanglement witness for continuous-variable photon pairs
//! measured with adaptive quad-tree sampling.

pub mod config;
pub mod error;
pub mod matrix;
pub mod measurement;
pub mod quadrature;
pub mod runner;
pub mod sampler;
pub mod source;
pub mod uncertainty;
pub mod witness;

pub use error::{Error, Result};
pub use matrix::SquareMatrix;
pub use measurement::{CountingNoise, DetectorConfig, EfficiencyModel, MeasurementRecord};
pub use sampler::{run_acquisition, AcquisitionResult, PartitionTree, SamplerParams};
pub use source::{Basis, Component, ComponentGrids, GridSpec, IndexRect, JointDistribution, SourceModel};
pub use witness::{ef_bound, EstimateMethod, EstimatedDistribution, WitnessResult};
