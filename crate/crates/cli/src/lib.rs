//! Library side of the `driftwatch` binary: report configuration, pipeline
//! stages and the full `report` chain.

pub mod config;
pub mod pipeline;
pub mod report;

use std::path::{Path, PathBuf};

/// `path` itself when it is a file, else `path/name`.
pub fn in_dir(path: &Path, name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(name)
    } else {
        path.to_path_buf()
    }
}
