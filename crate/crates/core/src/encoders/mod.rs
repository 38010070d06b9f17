//! Frozen toy encoders and the latent codec.
//!
//! All three stand in for pretrained components as *fixed* feature maps:
//! randomly initialized at [`ENCODER_SEED`], then immutable. A full training
//! run leaves every weight here bit-identical; only the adapter and the
//! low-rank factors learn.

pub mod image;
pub mod text;
pub mod vocab;

pub use image::{IdentityCodec, ImageEncoder};
pub use text::TextEncoder;
pub use vocab::{Vocabulary, PAD_TOKEN, PLACEHOLDER_TOKEN, VOCAB_TEXT};

/// The fixed, documented seed all frozen encoder weights derive from. It is
/// independent of run seeds so every experiment shares the same encoders.
pub const ENCODER_SEED: u64 = 0x00D1_5EED_BEEF_CAFE;
