use std::path::Path;

use serde::Serialize;

use super::runners::{RunOutput, SweepCell};
use crate::backbone::ParamsFile;
use crate::error::Result;

/// Write through a sibling temporary file and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, &csv_bytes(rows)?)
}

/// `report.json`, `losses.csv`, `evolution.jsonl` and `checkpoints/`.
pub fn write_run(out_dir: &Path, run: &RunOutput) -> Result<()> {
    write_json(&out_dir.join("report.json"), &run.report)?;
    write_csv_rows(&out_dir.join("losses.csv"), &run.losses)?;
    let ckpt = out_dir.join("checkpoints");
    if let Some(evo) = &run.evolution {
        write_atomic(&out_dir.join("evolution.jsonl"), evo.log.to_jsonl()?.as_bytes())?;
        write_atomic(&ckpt.join("container.json"), evo.container.to_checkpoint_json()?.as_bytes())?;
        write_json(&ckpt.join("extractor.json"), &evo.extractor)?;
        write_json(&out_dir.join("embeddings.json"), &evo.embedding_table())?;
        for (id, params) in &evo.isolated {
            write_json(&ckpt.join(format!("isolated_{id}.json")), &params.to_file())?;
        }
    }
    for (id, params) in &run.isolated_models {
        let file: ParamsFile = params.to_file();
        write_json(&ckpt.join(format!("isolated_{id}.json")), &file)?;
    }
    Ok(())
}

pub fn write_sweep(out_dir: &Path, cells: &[SweepCell]) -> Result<()> {
    write_csv_rows(&out_dir.join("sweep.csv"), cells)
}
