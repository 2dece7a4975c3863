//! Dataset model and IO: caption records (JSONL), embedding matrices,
//! image and mask sets (little-endian binary), label tables (TSV), the
//! hash-based toy caption embedder, and the synthetic shapes generator.

pub mod binfmt;
pub mod captions;
pub mod embed;
pub mod synth;
pub mod types;

pub use captions::{read_captions, write_captions};
pub use embed::{embed_captions, toy_embed, ToyEmbedding};
pub use synth::{
    corrupt_captions, gen_synthetic, CaptionVocabSpec, CorruptionOutcome, SynthConfig,
    SynthDataset,
};
pub use types::{
    CaptionRecord, CaptionSource, EmbeddingMatrix, ImageTensorSet, LabelTable, MaskSet,
    PairEntry, PairManifest,
};
