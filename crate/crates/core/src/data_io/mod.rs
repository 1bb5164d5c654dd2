//! File formats: embedding datasets (CSV and `NCEB1` binary), ReLU-network
//! weights (`NCWQ1` binary) and flat `key=value` run configuration.

mod config;
mod embeddings;
mod weights;

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

pub(crate) use config::parse_value;
pub use config::{parse_kv, RunConfig, Symmetry};
pub use embeddings::{
    load_embeddings, load_embeddings_with, read_embeddings_binary, read_embeddings_csv,
    save_embeddings, save_embeddings_csv, write_embeddings_binary, write_embeddings_csv,
    ClassSamples, EmbeddingDataset, EMBEDDINGS_MAGIC,
};
pub use weights::{
    load_weights, read_weights, save_weights, write_weights, ReluNetWeights, WEIGHTS_MAGIC,
};

use crate::error::{Error, Result};

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Err(Error::FileNotFound(path.to_path_buf()))
        }
        Err(e) => Err(e.into()),
    }
}

pub(crate) fn is_csv(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("csv") | Some("txt")
    )
}
