//! Built-in target models.

pub mod gmm;
pub mod ising;
pub mod spikeslab;
pub mod toy;

pub use gmm::{gmm_synthetic, GmmModel};
pub use ising::IsingChain;
pub use spikeslab::{spikeslab_score, spikeslab_synthetic, SpikeSlabHyper, SpikeSlabModel};
pub use toy::ToyTarget;
