//! One module per subcommand, plus the small I/O helpers they share.

pub mod analyze;
pub mod calibrate;
pub mod curate;
pub mod replay;
pub mod report;
pub mod resolution;
pub mod split;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

pub(crate) fn input_reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| {
        format!("opening {}", path.display())
    })?))
}

/// `--out FILE` or standard output.
pub(crate) fn output_writer(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path).with_context(
            || format!("creating {}", path.display()),
        )?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

/// Renders an `Option<f64>` metric for table output; absent values print as
/// `undefined` rather than a misleading number.
pub(crate) fn metric(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.3}"),
        None => "undefined".to_string(),
    }
}
