//! Frequency-dependent Wright-Fisher and Moran processes for two-strategy
//! games: exact fixation probabilities, Monte Carlo simulation, analytic
//! bounds, the branching-process approximation and the couplings behind it.

pub mod bounds;
pub mod branching;
pub mod chains;
pub mod coupling;
pub mod dist;
pub mod error;
pub mod exact;
pub mod fit;
pub mod game;

pub use error::{Error, Result};
pub use game::{DominanceCertificate, Fitness, GameSpec, PopulationPoint, RatioSource};
