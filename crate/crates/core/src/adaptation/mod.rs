//! Parameter-efficient adaptation: LoRA factors over the denoiser's
//! registered maps, and the mask adapter producing the identity-irrelevant
//! embedding.

pub mod adapter;
pub mod lora;

pub use adapter::{adapter_forward, MaskAdapter, StagedAdapter};
pub use lora::{init_lora, lora_forward, LoraLayer, LoraSet, StagedLora, LORA_INIT_STD};
