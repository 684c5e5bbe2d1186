//! Loading kernel files that carry a `// @launch grid=<n> block=<n>` header.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::ast::Kernel;
use crate::elastic::{uniform_plan, Trial};
use crate::parser::{launch_header, parse_kernel, ParseError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("{0}: missing `// @launch grid=<n> block=<n>` header")]
    MissingHeader(PathBuf),
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub source: String,
    pub kernel: Kernel,
    pub grid: u32,
    pub block: u32,
}

/// Directory of the kernels shipped with this crate.
pub fn shipped_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

pub fn load_file(path: &Path) -> Result<CorpusEntry, CorpusError> {
    let source = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.into(),
        source,
    })?;
    let kernel = parse_kernel(&source).map_err(|source| CorpusError::Parse {
        path: path.into(),
        source,
    })?;
    let (grid, block) = launch_header(&source).ok_or_else(|| CorpusError::MissingHeader(path.into()))?;
    Ok(CorpusEntry {
        path: path.into(),
        source,
        kernel,
        grid,
        block,
    })
}

/// Every `*.kern` file in `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    let read = std::fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.into(),
        source,
    })?;
    let mut paths = Vec::new();
    for entry in read {
        let entry = entry.map_err(|source| CorpusError::Io {
            path: dir.into(),
            source,
        })?;
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "kern") {
            paths.push(path);
        }
    }
    paths.sort();
    paths.iter().map(|p| load_file(p)).collect()
}

/// Elastic block sizes worth checking for an original block of `b` threads:
/// powers of two below a warp, every warp multiple below `b`, and `b`.
pub fn verification_block_sizes(b: u32, warp: u32) -> Vec<u32> {
    let mut sizes: Vec<u32> = std::iter::successors(Some(1u32), |s| Some(s * 2))
        .take_while(|&s| s < warp.min(b))
        .collect();
    sizes.extend((1..).map(|k| k * warp).take_while(|&s| s < b));
    sizes.push(b);
    sizes.dedup();
    sizes
}

/// Cross product of equal-size shard plans and elastic block sizes.
pub fn trials(m: u32, shard_sizes: &[u32], blocks: &[u32]) -> Vec<Trial> {
    shard_sizes
        .iter()
        .flat_map(|&s| {
            blocks.iter().map(move |&b| Trial {
                plan: uniform_plan(m, s),
                block: b,
            })
        })
        .collect()
}
