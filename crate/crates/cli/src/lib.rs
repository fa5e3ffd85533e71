//! File formats and command implementations behind the `geocloud` binary.

pub mod commands;
pub mod io;
