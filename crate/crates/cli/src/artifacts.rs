use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use regulab::Trajectory64;
use serde::Serialize;

use crate::CliError;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(format!("serializing report: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_rows(path: &Path, rows: &[Vec<String>]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in rows {
        w.write_record(r).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e.into() })?;
    }
    w.flush().map_err(io_err(path))
}

/// Header `t,z1..zn`, one row per integrator step.
pub fn write_trajectory(path: &Path, traj: &Trajectory64) -> Result<(), CliError> {
    let mut rows = Vec::with_capacity(traj.len() + 1);
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.dim()).map(|i| format!("z{i}")));
    rows.push(header);
    for (t, z) in traj.times().iter().zip(traj.states()) {
        let mut r = vec![format!("{t:e}")];
        r.extend(z.iter().map(|v| format!("{v:e}")));
        rows.push(r);
    }
    write_rows(path, &rows)
}

pub fn out_dir(opt: &Option<PathBuf>) -> PathBuf {
    opt.clone().unwrap_or_else(|| PathBuf::from("regulab-out"))
}
