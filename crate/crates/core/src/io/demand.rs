//! Demand series in long CSV form: `step,junction,value`.

use std::collections::BTreeMap;
use std::io::Read;

use serde::Deserialize;

use super::IoError;
use crate::network::DemandPattern;
use crate::units::FlowUnit;

#[derive(Debug, Deserialize)]
struct Record {
    step: usize,
    junction: String,
    value: f64,
}

/// Read demands given in `unit`; the result is in cfs. Every junction must
/// list the steps `0..n` exactly once, with the same `n` for all.
pub fn read_demand_csv<R: Read>(reader: R, unit: FlowUnit) -> Result<DemandPattern, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut by_junction: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    for (i, rec) in rdr.deserialize::<Record>().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| IoError::Csv {
            line: e.position().map_or(line, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        if !rec.value.is_finite() {
            return Err(IoError::Csv {
                line,
                message: format!("demand `{}` is not finite", rec.value),
            });
        }
        let series = by_junction.entry(rec.junction.clone()).or_default();
        if series.insert(rec.step, rec.value * unit.cfs_per_unit()).is_some() {
            return Err(IoError::Csv {
                line,
                message: format!("duplicate step {} for junction `{}`", rec.step, rec.junction),
            });
        }
    }
    let mut out = DemandPattern::new();
    let mut len = None;
    for (junction, series) in by_junction {
        let n = series.len();
        if series.keys().copied().ne(0..n) {
            return Err(IoError::Csv {
                line: 0,
                message: format!("junction `{junction}` does not cover steps 0..{n} contiguously"),
            });
        }
        if *len.get_or_insert(n) != n {
            return Err(IoError::Csv {
                line: 0,
                message: format!("junction `{junction}` has {n} steps, others have {}", len.unwrap_or(0)),
            });
        }
        out.insert(junction, series.into_values().collect());
    }
    Ok(out)
}
