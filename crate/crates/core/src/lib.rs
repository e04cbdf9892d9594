//! Multi-agent deep deterministic policy gradient (MADDPG) with a team
//! cooperation bonus, a deterministic predator-prey particle world, and the
//! small dense networks both need.
//!
//! The crate is pure computation: no file or clock access, so it builds for
//! `wasm32-unknown-unknown` as well as native targets. Persistence, seed
//! fan-out and plotting live in `coop-maddpg-harness`.
//!
//! ```
//! use coop_maddpg::{compute_phi, env::{ParticleWorld, WorldConfig}};
//!
//! // Three of four teammates rewarded, threshold 1, factor 2.
//! assert_eq!(compute_phi(&[0.5, 2.0, -1.0, 3.0], 1, 2.0).unwrap(), 2.0);
//!
//! let world = ParticleWorld::new(WorldConfig::default()).unwrap();
//! let (state, obs) = world.reset(7).unwrap();
//! assert_eq!(obs.len(), 6);
//! assert_eq!(state.step, 0);
//! ```

pub mod env;
mod error;
pub mod maddpg;
pub mod neural;

pub use error::{Error, Result};
pub use maddpg::phi::compute_phi;
