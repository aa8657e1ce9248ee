//! `split`: divide curated examples into train/validation/test by time.
//!
//! Examples strictly before the first cut train; `[cut1, cut2)` validates;
//! the rest tests. Splitting on time rather than at random keeps evaluation
//! honest — a model must generalize forward, not memorize its own future.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use precept_core::corpus::{temporal_split, TrainingExample};
use precept_core::jsonl;

pub fn run(examples_path: &Path, train_until: i64, val_until: i64, out_dir: &Path) -> Result<()> {
    let examples: Vec<TrainingExample> =
        jsonl::read_all(crate::commands::input_reader(examples_path)?)
            .with_context(|| format!("reading examples {}", examples_path.display()))?;
    let split = temporal_split(examples, train_until, val_until)?;

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let write = |name: &str, rows: &[TrainingExample]| -> Result<()> {
        let path = out_dir.join(name);
        let mut writer = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        jsonl::write_all(&mut writer, rows.iter())?;
        writer.flush()?;
        Ok(())
    };
    write("train.jsonl", &split.train)?;
    write("validation.jsonl", &split.validation)?;
    write("test.jsonl", &split.test)?;

    println!(
        "train {} / validation {} / test {} (cuts {} and {})",
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        split.cut_train_val,
        split.cut_val_test,
    );
    Ok(())
}
