//! Simulator and analysis toolkit for self-repairing sensor network routing.
//!
//! Geometry and topology are generic over the coordinate type (`f32` or
//! `f64`); the simulator itself runs on `f64`.

pub mod analysis;
pub mod loops;
pub mod protocol;
pub mod scalar;
pub mod sim;
pub mod time;
pub mod topology;

pub use topology::{LineId, NodeId};

pub type Point = scalar::Point<f64>;
pub type Point32 = scalar::Point<f32>;
pub type Topology = topology::Topology<f64>;
pub type Topology32 = topology::Topology<f32>;
pub type NodePlacement = topology::NodePlacement<f64>;
pub type NodePlacement32 = topology::NodePlacement<f32>;
