//! Raw-data probing: EDF parsing, spectral quality metrics and the
//! constraint descriptor handed to the generator.

pub mod edf;
pub mod probe;
pub mod spectral;

pub use probe::{
    extract_constraints, parse_edf_header, probe, scan_directory, ArtifactQuality, ConstraintDescriptor,
    ConstraintVector, FormatTag, IntrinsicAttributes, ProbeError, RecordingInventory,
};
pub use spectral::{estimate_band_ratio, estimate_powerline, SpectralError};
