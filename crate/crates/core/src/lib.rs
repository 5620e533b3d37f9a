//! Numerical core: reaction-diffusion kinetics, periodic patterns, Bloch
//! spectra, lattice phase coordinates and decay measurements.

pub mod bloch;
pub mod error;
pub mod evolve;
pub mod fieldops;
pub mod fit;
pub mod fourierbloch;
pub mod kinetics;
pub mod linalg;
pub mod normalform;
pub mod parallel;
pub mod pattern;

pub use bloch::{BlochBranch, BlochMatrix, BlochOperator, StabilityReport};
pub use error::{Error, Result};
pub use fourierbloch::{EnvelopeReport, FourierBloch, PropagatorSample, SigmaBlockOperator};
pub use evolve::{DecayReport, IntegrateOptions, LatticeSeries, Trajectory};
pub use fieldops::{CellField, FourierField, Norm};
pub use kinetics::{builtin, Kinetics, ReactionSystem};
pub use normalform::{LatticeState, LineField, NormalFormContext};
pub use pattern::{Onset, PatternOptions, PatternSolution};
