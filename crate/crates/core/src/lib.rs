//! Simulation and analysis toolkit for the two-user erasure interference
//! channel with delayed channel-state feedback and receiver caches.

pub mod bench;
pub mod channel;
pub mod entropy;
pub mod error;
pub mod gf2;
pub mod params;
pub mod region;
pub mod scheme;

pub use error::{Error, Result};
pub use params::{ChannelParams, FourTopologyParams, JointLinkPmf, ParamConfig};
