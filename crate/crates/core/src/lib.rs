//! Simulator for two NV-center ensembles coupled to two resonators that are
//! bridged by a tunable superconducting phase qubit.
//!
//! The layout is `[NVE1, TLRa, SPQ, TLRb, NVE2]`. Control protocols compile to
//! piecewise-constant [`propagate::Timeline`]s which are propagated under the
//! full rotating-wave Hamiltonian or under an idealized resonant-only one.

pub mod analysis;
pub mod cluster;
pub mod error;
pub mod model;
pub mod propagate;
pub mod protocols;
pub mod tensorspace;

pub use error::{AnalysisError, ClusterError, ModelError, PropagateError, ProtocolError, ShapeError};
pub use model::{ControlSegment, DeviceKet, DeviceParams, DriveSpec, Freq, Mode, NveId, NveLevel, SpqLevel, Transition};
pub use propagate::{FrameConvention, Sampling, Simulator, Timeline};
pub use tensorspace::{PureState, SubsystemLayout};
