//! MAP reconstruction and approximate Bayesian uncertainty quantification for
//! linear inverse imaging problems with sparsity-promoting l1 priors.

pub mod dictionaries;
pub mod error;
pub mod io;
pub mod linops;
pub mod model;
pub mod phantom;
pub mod rng;
pub mod sampler;
pub mod solver;
pub mod uq;
mod wavelet;

pub use dictionaries::{make_sara, CoeffVector, Dictionary};
pub use error::{Error, Result};
pub use linops::{
    make_masked_fourier, op_norm, simulate_observation, ForwardOp, ImageGrid, MeasurementVector,
};
pub use model::{Point, PosteriorModel, PriorForm};
pub use solver::{select_mu, solve_map, MapResult, SolverConfig};
pub use uq::{credible_map, hpd_threshold, partition_grid, CredibleIntervalMap, HpdThreshold};
pub use sampler::{intervals_from_chain, run_pxmala, ChainConfig, ChainResult};
