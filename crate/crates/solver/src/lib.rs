//! Equilibrium machinery: critic best-response training, coordinate-ascent
//! beam search over combinatorial actions, bimatrix Nash solving and the
//! double-oracle outer loop.

pub mod beam;
pub mod buffer;
pub mod doar;
pub mod learn;
pub mod nash;
pub mod net;
pub mod payoff;
pub mod policy;
pub mod rollout;

pub use beam::{beam_search, BeamSpec};
pub use doar::{doar_loop, DoarConfig, DoarResult};
pub use nash::{solve_bimatrix, MixedProfile, NashSolution};
pub use net::Mlp;
pub use payoff::PayoffMatrix;
pub use policy::{CriticPolicy, MixturePolicy, PassPolicy, Policy, RandomPolicy};
pub use rollout::{evaluate_mixture_pair, evaluate_pair, rollout, EpisodeStats, PairStats};
