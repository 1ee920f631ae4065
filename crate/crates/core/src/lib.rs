//! Privacy-preserving average consensus over directed graphs.
//!
//! Nodes run push-sum with randomized coupling weights: during the first
//! `K + 1` rounds the value shares and weight shares use different weights,
//! which hides every node's initial value from honest-but-curious neighbors
//! while the network still converges to the exact average. Shares can
//! optionally travel Paillier-encrypted under the receiver's key.
//!
//! The [`adversary`] module implements the matching inference attacks and
//! the indistinguishability constructions; [`sim`] wires everything into a
//! deterministic round-based harness.

pub mod adversary;
pub mod consensus;
pub mod graph;
pub mod lstsq;
pub mod paillier;
pub mod par;
pub mod prime;
pub mod rng;
pub mod sim;
pub mod verify;
pub mod weights;

pub use consensus::{NodeState, ShareMessage, Trajectory};
pub use graph::{DirectedGraph, NodeId};
pub use par::Execution;
pub use weights::{RoundWeights, WeightParams};
