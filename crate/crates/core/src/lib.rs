//! Hybrid beamforming designs for wideband massive MIMO-OFDM links.
//!
//! The library factorizes per-subcarrier optimal digital precoders into a
//! frequency-flat analog precoder (phase shifters) and per-subcarrier digital
//! precoders. The analog stage is produced by ManNet/subManNet, small
//! unfolded networks trained without labels; the digital stage comes from
//! closed-form least-squares and water-filling solutions.
//!
//! Modules:
//! - [`channel`]: Saleh-Valenzuela wideband channel realizations with
//!   frequency-dependent array responses, optimal digital precoders, and
//!   binary dataset persistence.
//! - [`precoding`]: complex/real transforms, the block-sparse least-squares
//!   reformulation, closed-form digital precoders, and spectral efficiency.
//! - [`mannet`]: the unfolded network, hand-derived reverse-mode gradients,
//!   Adam-based unsupervised training, fully connected design, model files.
//! - [`subnet`]: RF chain/antenna mappings and the sub-connected designs.
//! - [`baselines`]: optimal digital beamforming bound, OMP comparator, and
//!   closed-form operation-count estimates.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod linalg;
pub mod mannet;
pub mod precoding;
pub mod subnet;

pub use error::{Error, Result};
