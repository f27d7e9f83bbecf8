//! MNIST on disk: IDX loading and checksums.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokenfl_core::learning::{parse_idx, Dataset, Split};

/// Overrides the dataset directory of any config or preset.
pub const DATA_DIR_ENV: &str = "TOKENFL_DATA_DIR";

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: tokenfl_core::Error,
    },
}

fn read(path: &Path) -> Result<Vec<u8>, DatasetError> {
    fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_idx(images: &Path, labels: &Path, split: Split) -> Result<Dataset, DatasetError> {
    let img = read(images)?;
    let lab = read(labels)?;
    parse_idx(&img, &lab, split).map_err(|source| DatasetError::Parse {
        path: images.to_owned(),
        source,
    })
}

pub struct Mnist {
    pub train: Dataset,
    pub test: Dataset,
}

pub fn load_mnist(dir: &Path) -> Result<Mnist, DatasetError> {
    Ok(Mnist {
        train: load_idx(
            &dir.join(TRAIN_IMAGES),
            &dir.join(TRAIN_LABELS),
            Split::Train,
        )?,
        test: load_idx(
            &dir.join(TEST_IMAGES),
            &dir.join(TEST_LABELS),
            Split::GlobalTest,
        )?,
    })
}

/// The configured directory unless the environment overrides it.
pub fn resolve_dir(configured: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => configured.to_owned(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChecksum {
    pub file: String,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> Result<String, DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.to_owned(),
        source,
    };
    let mut f = fs::File::open(path).map_err(io)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(io)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn mnist_checksums(dir: &Path) -> Result<Vec<FileChecksum>, DatasetError> {
    [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS]
        .iter()
        .map(|f| {
            Ok(FileChecksum {
                file: (*f).to_owned(),
                sha256: sha256_file(&dir.join(f))?,
            })
        })
        .collect()
}
