//! Compression-degradation simulator producing aligned LR/HR streams.

#![allow(clippy::needless_range_loop)]

mod abr;
mod bicubic;
mod dataset;
mod dct;
mod motion;
mod synth;

pub use abr::{
    abr_controller, bandwidth_trace, frame_sizes, load_trace, modulated_map, parse_trace, texture_offsets, AbrDecision,
    Profile, DEFAULT_FPS, JITTER, MAX_QP_DROP, REFERENCE_AREA, TEXTURE_SWING,
};
pub use bicubic::{cubic, downsample_bicubic, downsample_frame, DOWNSCALE};
pub use dataset::{
    generate_dataset, hr_name, list_frames, load_dataset, lr_name, manifest_records, simulate, write_dataset, Dataset,
    DatasetMeta, DatasetSample, ManifestRecord, RateControl, SampleRecord, SimConfig, StreamSample, DATASET_VERSION,
};
pub use dct::{
    compress_block_dct, compress_frame, dct8, dct_roundtrip, idct8, qstep, Coefficients, QpMap, DCT_BLOCK, MAX_QP,
};
pub use motion::block_match_motion;
pub use synth::synth_clip;
