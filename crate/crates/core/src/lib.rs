//! Multi-channel 3D-cube successive convolution network (3D-SCN) for
//! convective storm nowcasting.
//!
//! The crate is organised as a pipeline:
//!
//! * [`gridstore`] holds gridded 3D fields, their on-disk format, and a
//!   synthetic storm-event generator.
//! * [`cubegen`] turns an event into labeled six-channel cubes
//!   `(w, dw, byc, dbyc, R, dR)` and handles normalisation and splitting.
//! * [`net`] is the network itself: tensors, the cross-channel 3D
//!   convolution, strided 2D convolutions, hand-derived backpropagation,
//!   SGD training and model files.
//! * [`verify`] scores forecasts with contingency tables, POD/FAR/CSI,
//!   ROC/AUC, skill series and overlay grids.

pub mod cubegen;
pub mod gridstore;
pub mod net;
pub mod verify;

pub use cubegen::{NormStats, SampleCube, SplitPlan};
pub use gridstore::{DomainGrid, EventSeries, GriddedField, SynthParams, Variable};
pub use net::{ScnConfig, ScnModel, Tensor};
pub use verify::{ContingencyTable, RocCurve};
