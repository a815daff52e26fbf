//! Resilient multi-robot informative path planning.
//!
//! A team of robots explores an unknown scalar field modeled as a Gaussian
//! process. Between meetings each robot samples the field along an
//! informative path; at meetings, robots agree on the GP hyperparameters with
//! W-MSR resilient consensus over an unreliable, probabilistic communication
//! graph, so that sensor-compromised robots cannot drag the team's model.
//!
//! Module map:
//!
//! - [`gp`]: kernels, posterior inference, entropy and mutual information,
//!   hyperparameter fitting, random environments.
//! - [`world`]: the grid graph, Dijkstra routing, edge inflation, areas.
//! - [`resilience`]: communication fields, `(r, s)`-robustness and the
//!   probability of resilience; meeting-subarea selection.
//! - [`consensus`]: linear and W-MSR updates, meeting rounds, retransmissions.
//! - [`mission`]: the full plan/sense/fit/agree loop.
//! - [`harness`]: scenario files, Monte Carlo trials, report tables.
//!
//! The accompanying book (`book/`) walks through each of these; its code
//! listings are compiled and run as doc-tests of this crate.

pub mod consensus;
pub mod gp;
pub mod harness;
pub mod mission;
pub mod resilience;
pub mod seed;
pub mod world;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/gaussian-processes.md")]
    mod gaussian_processes {}
    #[doc = include_str!("../../../book/src/world.md")]
    mod world {}
    #[doc = include_str!("../../../book/src/resilience.md")]
    mod resilience {}
    #[doc = include_str!("../../../book/src/consensus.md")]
    mod consensus {}
    #[doc = include_str!("../../../book/src/mission.md")]
    mod mission {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
