//! Deterministic simulator and optimizer for CDN mirror-server placement.
//!
//! The crate models an ISP backbone as a weighted graph, places `k` mirror
//! servers on it, assigns aggregated user groups to servers either by
//! distance or by request-profile rank correlation, and replays seeded
//! request streams through per-server caches.
//!
//! ```text
//!  GraphML ──▶ topology ──▶ DistanceMatrix
//!                 │               │
//!  Zipf / trace ──▶ profiles ──▶ Instance ──▶ placement (Dragoon)
//!                                   │              │
//!                                   └──▶ assignment (rank-correlation greedy)
//!                                                  │
//!                          cache ◀── simulation ◀──┘──▶ pareto
//! ```
//!
//! Every stochastic step draws from [`rng::SeededRng`], so a master seed fully
//! determines all outputs.

pub mod assignment;
pub mod cache;
pub mod cli;
pub mod error;
pub mod instance;
pub mod pareto;
pub mod placement;
pub mod profiles;
pub mod rng;
pub mod simulation;
pub mod topology;

pub use assignment::{Assignment, AssignmentObjective, GreedyOutcome};
pub use cache::{Cache, CacheConfig, CacheStats, Policy};
pub use error::{Error, Result};
pub use instance::Instance;
pub use pareto::{ParetoFront, SolutionPoint};
pub use placement::{DragoonOutcome, Placement, PlacementObjective};
pub use profiles::{Profile, ServiceId, Universe, UserGroup, ZipfModel};
pub use simulation::{Scenario, SimulationResult};
pub use topology::{DistanceMatrix, NodeId, Topology};
