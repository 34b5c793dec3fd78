//! CSV emission of closed-loop results.

use std::fs;
use std::path::{Path, PathBuf};

use super::IoError;
use crate::mpc::MpcTrajectory;
use crate::units::FlowUnit;

pub const TRAJECTORY: &str = "trajectory.csv";
pub const ITERATIONS: &str = "iterations.csv";
pub const RESIDUALS: &str = "residuals.csv";
pub const TANK_HEADS: &str = "tank_heads.csv";
pub const PUMP_SPEEDS: &str = "pump_speeds.csv";
pub const LINK_FLOWS: &str = "link_flows.csv";
pub const SCHEMA: &str = "SCHEMA.md";

/// Nine significant digits, scientific notation.
pub fn format_value(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v:.8e}")
    }
}

fn schema_text(unit: FlowUnit) -> String {
    format!(
        "# Result files

All numbers have nine significant digits. Heads are in ft, flows in {unit},
speeds are relative (0 to 1). `step` counts sampling intervals from 0.
Columns named `kind:ID` appear once per element, in network order.

## {TRAJECTORY}

One row per applied step.

- `step`
- `tank:ID` tank head at the end of the step
- `junction:ID` junction head during the step
- `pipe:ID` pipe flow, positive from start to end node
- `pump:ID` pump flow
- `speed:ID` pump relative speed

## {ITERATIONS}

One row per SCA iteration: `step`, `n` (1-based), `error` (hat-space
distance to the previous iterate).

## {RESIDUALS}

Infinity norms of the nonlinear model residuals at each applied step:
`step`, `tank` (ft), `mass` ({unit}), `energy` (ft).

## {TANK_HEADS}, {PUMP_SPEEDS}, {LINK_FLOWS}

Plot-ready subsets of {TRAJECTORY}: `step` followed by one column per
element id. {LINK_FLOWS} lists pipes first, then pumps.
"
    )
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), IoError> {
    let io_err = |e: csv::Error| IoError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row).map_err(io_err)?;
    }
    w.flush().map_err(|e| IoError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn prefixed(prefix: &str, ids: &[String]) -> Vec<String> {
    ids.iter().map(|id| format!("{prefix}:{id}")).collect()
}

/// Write all result files into `dir`, creating it if needed. Returns the
/// written paths.
pub fn emit_results(traj: &MpcTrajectory, dir: &Path, unit: FlowUnit) -> Result<Vec<PathBuf>, IoError> {
    fs::create_dir_all(dir).map_err(|e| IoError::Io {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })?;
    let q = |v: f64| format_value(unit.from_cfs(v));
    let h = format_value;
    let mut manifest = Vec::new();
    let mut emit = |name: &str, header: Vec<String>, rows: Vec<Vec<String>>| -> Result<(), IoError> {
        let path = dir.join(name);
        write_csv(&path, &header, &rows)?;
        manifest.push(path);
        Ok(())
    };

    let mut header = vec!["step".to_string()];
    header.extend(prefixed("tank", &traj.tank_ids));
    header.extend(prefixed("junction", &traj.junction_ids));
    header.extend(prefixed("pipe", &traj.pipe_ids));
    header.extend(prefixed("pump", &traj.pump_ids));
    header.extend(prefixed("speed", &traj.pump_ids));
    let rows = traj
        .steps
        .iter()
        .map(|r| {
            let mut row = vec![r.step.to_string()];
            row.extend(r.x_end.iter().map(|&v| h(v)));
            row.extend(r.l.iter().map(|&v| h(v)));
            row.extend(r.v.iter().map(|&v| q(v)));
            row.extend(r.u.iter().map(|&v| q(v)));
            row.extend(r.s.iter().map(|&v| h(v)));
            row
        })
        .collect();
    emit(TRAJECTORY, header, rows)?;

    let rows = traj
        .steps
        .iter()
        .flat_map(|r| {
            r.errors
                .iter()
                .enumerate()
                .map(move |(n, &e)| vec![r.step.to_string(), (n + 1).to_string(), h(e)])
        })
        .collect();
    emit(ITERATIONS, vec!["step".into(), "n".into(), "error".into()], rows)?;

    let rows = traj
        .steps
        .iter()
        .map(|r| {
            vec![
                r.step.to_string(),
                h(r.residual.tank),
                q(r.residual.mass),
                h(r.residual.energy),
            ]
        })
        .collect();
    emit(
        RESIDUALS,
        ["step", "tank", "mass", "energy"].map(String::from).to_vec(),
        rows,
    )?;

    let series = |ids: Vec<String>, values: &dyn Fn(&crate::mpc::StepRecord) -> Vec<String>| {
        let mut header = vec!["step".to_string()];
        header.extend(ids);
        let rows: Vec<Vec<String>> = traj
            .steps
            .iter()
            .map(|r| {
                let mut row = vec![r.step.to_string()];
                row.extend(values(r));
                row
            })
            .collect();
        (header, rows)
    };
    let (hd, rows) = series(traj.tank_ids.clone(), &|r| r.x_end.iter().map(|&v| h(v)).collect());
    emit(TANK_HEADS, hd, rows)?;
    let (hd, rows) = series(traj.pump_ids.clone(), &|r| r.s.iter().map(|&v| h(v)).collect());
    emit(PUMP_SPEEDS, hd, rows)?;
    let link_ids = traj.pipe_ids.iter().chain(&traj.pump_ids).cloned().collect();
    let (hd, rows) = series(link_ids, &|r| r.v.iter().chain(r.u.iter()).map(|&v| q(v)).collect());
    emit(LINK_FLOWS, hd, rows)?;

    let path = dir.join(SCHEMA);
    fs::write(&path, schema_text(unit)).map_err(|e| IoError::Io {
        path: path.clone(),
        message: e.to_string(),
    })?;
    manifest.push(path);
    Ok(manifest)
}

/// A numeric CSV table as written by [`emit_results`].
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_table(path: &Path) -> Result<Table, IoError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| IoError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let header = rdr
        .headers()
        .map_err(|e| IoError::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| IoError::Csv {
            line: i + 2,
            message: e.to_string(),
        })?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| IoError::Csv {
                    line: i + 2,
                    message: format!("`{f}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_value(834.0), "8.34000000e2");
        assert_eq!(format_value(-1.0 / 3.0), "-3.33333333e-1");
        assert_eq!(format_value(0.0), "0");
        let v = 0.123456789123;
        let back: f64 = format_value(v).parse().unwrap();
        assert!((back - v).abs() / v < 5e-9);
    }

    #[test]
    fn empty_trajectory_gives_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let traj = MpcTrajectory {
            tank_ids: vec!["8".into()],
            pump_ids: vec!["9".into()],
            ..Default::default()
        };
        let files = emit_results(&traj, dir.path(), FlowUnit::Gpm).unwrap();
        assert_eq!(files.len(), 7);
        let t = read_table(&dir.path().join(TRAJECTORY)).unwrap();
        assert_eq!(t.header, vec!["step", "tank:8", "pump:9", "speed:9"]);
        assert!(t.rows.is_empty());
        assert!(read_table(&dir.path().join(ITERATIONS)).unwrap().rows.is_empty());
    }
}
