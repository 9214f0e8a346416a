//! Byte-exact file formats: binary PPM frames and model checkpoints.

pub mod checkpoint;
pub mod ppm;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, RngState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use ppm::{decode_ppm, encode_ppm, read_ppm, write_ppm};
