//! Low-complexity detection of Zadoff-Chu preambles in the Zak-OTFS
//! delay-Doppler domain.

pub mod channel;
pub mod detectors;
pub mod error;
pub mod gridmath;
pub mod harness;
pub mod sensing;
pub mod sequences;
pub mod transforms;

pub use channel::{
    add_awgn, apply_channel, sample_veh_a, superpose, ChannelProfile, ChannelRealization, Path,
    ShapingConfig,
};
pub use detectors::{detect_multi, detect_single, CandidateSet, DetectionReport};
pub use error::{Error, Result};
pub use gridmath::{build_root_set, crt_combine, mod_inverse, validate_shift, GridConfig, RootSet};
pub use harness::{ExperimentConfig, SweepResult};
pub use sensing::{
    build_sensing_matrix, ost_detect, restrict_columns, SensingConfig, SensingMatrix,
};
pub use sequences::{self_product, zc_sequence, Preamble, PreambleBank};
pub use transforms::{dzt, idzt, td_to_tf, twisted_shift, DdArray, TdSignal, TfArray};
