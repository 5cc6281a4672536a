//! The autonormal field (discrete free field): Gaussian heights on a graph
//! with energy `sum F_ij (x_i - x_j)^2 / 2` and one site pinned at 0.
//!
//! [`run_truncated_cftp`] is plain monotone CFTP from a large box.
//! [`run_exact_autonormal`] needs no box: it runs CFTP over composite maps
//! that mix an independence sampler with Gibbs sweeps.

mod composite;
mod graph;
mod sweep;

pub use composite::{
    acceptance_probability, composite_update, coordinate_box, exact_covariance, mh_accept,
    mh_accept_with, min_chain_energy, run_exact_autonormal, tree_proposal, ExactSampler, FieldMap,
    ProposalOutcome, SpanningTree, SWEEP_CAP,
};
pub use graph::{conditional_params, energy, HeightConfig, InteractionGraph};
pub use sweep::{
    bound_sweep, bounds_coalesced, gibbs_sweep, run_truncated_cftp, TruncatedField,
    DEFAULT_TRUNCATION,
};
