//! Synthetic angular-delay CSI: multipath channel generation, the 2-D DFT
//! into the angular-delay domain, truncation/normalization and dataset files.

mod channel;
mod csi;
mod dataset;
mod transform;

pub use channel::{
    channel_from_paths, generate_dataset, synth_sample, synth_spatial_channel, ChannelConfig, Path, Preset,
};
pub use csi::{truncate_and_normalize, CsiMatrix, Normalization};
pub use dataset::{
    decode_dataset, encode_dataset, import_flat_samples, read_dataset, write_dataset, Dataset, Split, SplitCounts,
    DATASET_MAGIC, DATASET_VERSION, FLAT_SAMPLE_LEN,
};
pub use transform::{AngularDelayTransform, ComplexMatrix};
