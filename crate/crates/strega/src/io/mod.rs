//! File formats: the STF tensor container and PGM export.

pub mod pgm;
pub mod stf;

pub use pgm::{pgm_export, pgm_import};
pub use stf::{stf_read, stf_read_u8, stf_write, stf_write_u8};
