//! Run directories and artifact writers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chstab_core::closed_loop::Trajectory;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn run_dir(out: &Path, hash: &str) -> CliResult<PathBuf> {
    let dir = out.join(hash);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Columns `t, norm_y, norm_z, norm_state, w1..wN`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> CliResult<()> {
    let n = traj.weights.first().map_or(0, Vec::len);
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header = vec!["t".to_string(), "norm_y".into(), "norm_z".into(), "norm_state".into()];
    header.extend((1..=n).map(|i| format!("w{i}")));
    w.write_record(&header).map_err(|e| CliError::io(path, e))?;
    for ((t, s), ws) in traj.times.iter().zip(&traj.states).zip(&traj.weights) {
        let mut row = vec![fmt_f64(*t), fmt_f64(s.y.norm()), fmt_f64(s.z.norm()), fmt_f64(s.norm())];
        row.extend(ws.iter().map(|&v| fmt_f64(v)));
        w.write_record(&row).map_err(|e| CliError::io(path, e))?;
    }
    let mut inner = w.into_inner().map_err(|e| CliError::io(path, e))?;
    inner.flush().map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        let s = fmt_f64(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
        assert_eq!(fmt_f64(-2.5).parse::<f64>().unwrap(), -2.5);
    }
}
