//! Command implementations behind the `uvforge` binary.
//!
//! Every command reads JSON/PNG/UVTF inputs, validates them against the model
//! manifest before computing, and writes its outputs into a directory.

mod edit;
mod error;
mod evaluate;
mod fit;
mod interp;
pub mod plot;
mod render;
mod synth;
mod train;

use std::path::Path;

use serde::Serialize;

pub use edit::{cmd_edit, EditArgs, ScoreRow};
pub use error::{CliError, Result};
pub use evaluate::{cmd_eval, EvalArgs, FidProbe, TextureSource};
pub use fit::{cmd_fit, FitArgs};
pub use interp::{cmd_interp, Corner, InterpArgs};
pub use render::{cmd_render, RenderArgs};
pub use synth::{cmd_synth, SynthOutput};
pub use train::{checkpoint_dir, cmd_train, MetricsRow, TrainArgs, TrainConfig};

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

/// Reads a CSV written by one of the commands.
pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}
