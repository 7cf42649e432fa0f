//! Trajectory CSV: one row per recorded step with loss, drift, every charge,
//! and (when the run tracks them) the pinned out-weight signs.
//!
//! Numbers are written in shortest round-trip decimal form, so reading a
//! file back reproduces the recorded values bit for bit.

use std::path::Path;

use quadricflow_core::gradflow::TrajectoryRecord;

use crate::errors::{CliError, Result};

/// One parsed trajectory row; the file carries no parameter snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub loss: f64,
    pub drift: f64,
    pub charges: Vec<f64>,
    pub signs: Option<Vec<i8>>,
}

fn header(l: usize, n_signs: Option<usize>) -> Vec<String> {
    let mut cols = vec!["step".to_string(), "loss".to_string(), "drift".to_string()];
    cols.extend((1..=l).map(|k| format!("c_{k}")));
    if let Some(n) = n_signs {
        cols.extend((1..=n).map(|k| format!("s_{k}")));
    }
    cols
}

pub fn write<W: std::io::Write>(out: W, records: &[TrajectoryRecord]) -> Result<()> {
    let first = records
        .first()
        .ok_or_else(|| CliError::Input("empty trajectory".into()))?;
    let l = first.charges.len();
    let n_signs = first.sign.as_ref().map(|s| s.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(l, n_signs))
        .map_err(CliError::input)?;
    for r in records {
        let mut row = vec![
            r.step.to_string(),
            r.loss.to_string(),
            r.max_charge_drift.to_string(),
        ];
        if r.charges.len() != l {
            return Err(CliError::Input("ragged charge vectors".into()));
        }
        row.extend(r.charges.iter().map(|c| c.to_string()));
        match (&r.sign, n_signs) {
            (Some(s), Some(n)) if s.len() == n => {
                row.extend(s.entries().iter().map(|v| v.to_string()));
            }
            (None, None) => {}
            _ => return Err(CliError::Input("inconsistent sign tracking".into())),
        }
        w.write_record(&row).map_err(CliError::input)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_file(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    write(file, records)
}

pub fn read_file(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(CliError::input)?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 4 || cols[0] != "step" || cols[1] != "loss" || cols[2] != "drift" {
        return Err(CliError::Input(
            "trajectory header must start with step,loss,drift,c_1".into(),
        ));
    }
    let l = cols[3..].iter().take_while(|c| c.starts_with("c_")).count();
    let n_signs = cols.len() - 3 - l;
    for (k, c) in cols[3..3 + l].iter().enumerate() {
        if **c != format!("c_{}", k + 1) {
            return Err(CliError::Input(format!("unexpected charge column {c}")));
        }
    }
    for (k, c) in cols[3 + l..].iter().enumerate() {
        if **c != format!("s_{}", k + 1) {
            return Err(CliError::Input(format!("unexpected sign column {c}")));
        }
    }

    let parse = |field: &str, what: &str, row: usize| -> Result<f64> {
        field
            .parse::<f64>()
            .map_err(|_| CliError::Input(format!("row {row}: bad {what} value {field:?}")))
    };
    let mut rows = Vec::new();
    let mut prev_step: Option<usize> = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(CliError::input)?;
        if record.len() != cols.len() {
            return Err(CliError::Input(format!(
                "row {i}: expected {} fields, found {}",
                cols.len(),
                record.len()
            )));
        }
        let step: usize = record[0]
            .parse()
            .map_err(|_| CliError::Input(format!("row {i}: bad step {:?}", &record[0])))?;
        if let Some(p) = prev_step {
            if step <= p {
                return Err(CliError::Input(format!(
                    "row {i}: step {step} does not increase past {p}"
                )));
            }
        }
        prev_step = Some(step);
        let loss = parse(&record[1], "loss", i)?;
        let drift = parse(&record[2], "drift", i)?;
        if drift < 0.0 {
            return Err(CliError::Input(format!("row {i}: negative drift {drift}")));
        }
        let charges = (0..l)
            .map(|k| parse(&record[3 + k], "charge", i))
            .collect::<Result<Vec<f64>>>()?;
        let signs = if n_signs > 0 {
            let s = (0..n_signs)
                .map(|k| {
                    let f = &record[3 + l + k];
                    match f {
                        "1" => Ok(1i8),
                        "-1" => Ok(-1i8),
                        _ => Err(CliError::Input(format!("row {i}: bad sign {f:?}"))),
                    }
                })
                .collect::<Result<Vec<i8>>>()?;
            Some(s)
        } else {
            None
        };
        rows.push(TrajectoryRow {
            step,
            loss,
            drift,
            charges,
            signs,
        });
    }
    Ok(rows)
}

/// Largest charge drift seen across the recorded steps.
pub fn max_drift(records: &[TrajectoryRecord]) -> f64 {
    records
        .iter()
        .map(|r| r.max_charge_drift)
        .fold(0.0, f64::max)
}

/// Recorded steps whose sign vector differs from the first record's.
pub fn sign_flip_steps(records: &[TrajectoryRecord]) -> Vec<usize> {
    let Some(first) = records.first().and_then(|r| r.sign.as_ref()) else {
        return Vec::new();
    };
    records
        .iter()
        .filter(|r| r.sign.as_ref() != Some(first))
        .map(|r| r.step)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use quadricflow_core::gradflow::{train, Dataset, LossKind, TrainConfig};
    use quadricflow_core::{Activation, Params};

    fn tracked_records() -> Vec<TrajectoryRecord> {
        let theta = Params::linearless(
            array![[0.1, 0.1], [1.0, 0.5]],
            array![[0.9, 0.2]],
            Activation::Relu,
        )
        .unwrap();
        let data = Dataset::new(
            array![[0.3, 0.4], [0.8, 0.1], [0.5, 0.9]],
            array![[-0.7], [-0.9], [-1.4]],
        )
        .unwrap();
        let mut cfg = TrainConfig::new(LossKind::Mse, 0.01, 30);
        cfg.record_stride = 10;
        train(&theta, &data, &cfg).unwrap()
    }

    #[test]
    fn rows_round_trip_exactly() {
        let records = tracked_records();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        write_file(&path, &records).unwrap();
        let rows = read_file(&path).unwrap();
        assert_eq!(rows.len(), records.len());
        for (row, rec) in rows.iter().zip(records.iter()) {
            assert_eq!(row.step, rec.step);
            assert_eq!(row.loss.to_bits(), rec.loss.to_bits());
            assert_eq!(row.drift.to_bits(), rec.max_charge_drift.to_bits());
            for (a, b) in row.charges.iter().zip(rec.charges.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            assert_eq!(row.signs.as_deref(), rec.sign.as_ref().map(|s| s.entries()));
        }
    }

    #[test]
    fn header_shows_sign_columns_only_when_tracked() {
        let records = tracked_records();
        let mut buf = Vec::new();
        write(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,loss,drift,c_1,c_2,s_1\n"), "{text}");

        // A two-output net tracks no signs.
        let theta = Params::linearless(
            array![[0.5], [0.7]],
            array![[1.0, 0.0], [0.2, 0.3]],
            Activation::Relu,
        )
        .unwrap();
        let data = Dataset::new(array![[1.0]], array![[0.5, 0.5]]).unwrap();
        let records = train(&theta, &data, &TrainConfig::new(LossKind::Mse, 0.01, 1)).unwrap();
        let mut buf = Vec::new();
        write(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,loss,drift,c_1,c_2\n"), "{text}");
    }

    #[test]
    fn read_rejects_nonincreasing_steps_and_bad_signs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "step,loss,drift,c_1\n5,0.1,0.0,1.0\n5,0.1,0.0,1.0\n").unwrap();
        assert!(read_file(&path).is_err());
        std::fs::write(&path, "step,loss,drift,c_1,s_1\n0,0.1,0.0,-1.0,2\n").unwrap();
        assert!(read_file(&path).is_err());
        std::fs::write(&path, "step,loss,drift,c_1\n0,0.1,-0.5,1.0\n").unwrap();
        assert!(read_file(&path).is_err());
    }

    #[test]
    fn flip_detection_keys_off_the_first_record() {
        let records = tracked_records();
        assert!(sign_flip_steps(&records).is_empty());
    }
}
