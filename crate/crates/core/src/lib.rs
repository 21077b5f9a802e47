//! Layered discrete-event simulator for resource-aware execution on
//! multi-core platforms.
//!
//! Periodic applications described as control-flow graphs ([`air`]) acquire
//! exclusive CPU claims from a central resource manager ([`rel`]), run
//! trace payloads on a CPU/cache/bus model ([`fel`]) through the execution
//! controller and status collector ([`interface`]), and release the claim
//! when done. [`sim`] ties the layers into one event loop, [`workloads`]
//! provides the bundled applications and [`cli`] the experiment harness.

pub mod air;
pub mod cli;
pub mod fel;
pub mod interface;
pub mod rel;
pub mod sim;
pub mod workloads;

pub use fel::{CpuId, SimTime};
