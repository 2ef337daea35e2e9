use std::fs::File;
use std::path::Path;

use super::{Channel, DataError, Modality, Schema, SeriesFrame};

fn column_names(schema: &Schema) -> Vec<String> {
    let mut cols = vec!["step".to_string()];
    for c in &schema.channels {
        if c.modality == Modality::Ts {
            cols.push(c.name.clone());
        } else {
            cols.extend((0..c.width).map(|k| format!("{}[{k}]", c.name)));
        }
    }
    cols
}

pub fn load_schema(path: &Path) -> Result<Schema, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let schema: Schema =
        serde_json::from_str(&text).map_err(|e| DataError::Schema(format!("{}: {e}", path.display())))?;
    schema.validate()?;
    Ok(schema)
}

pub fn write_schema(frame: &SeriesFrame, path: &Path) -> Result<(), DataError> {
    let text = serde_json::to_string_pretty(&frame.schema()).expect("schema serializes");
    std::fs::write(path, text + "\n").map_err(|e| DataError::io(path, e))
}

/// Writes the frame as CSV with a leading `step` column; vector channels are
/// flattened as `name[0]..name[F-1]`.
pub fn write_csv(frame: &SeriesFrame, path: &Path) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| DataError::Parse { line: 0, message: e.to_string() };
    w.write_record(column_names(&frame.schema())).map_err(csv_err)?;
    let mut record = Vec::new();
    for t in 0..frame.len() {
        record.clear();
        record.push((frame.first_step() + t as i64).to_string());
        for c in frame.channels() {
            record.extend(c.step(t).iter().map(|v| format!("{v:?}")));
        }
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

/// Reads a CSV written by [`write_csv`] (or by hand) using the sidecar schema
/// for modality tags and the target designation.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<SeriesFrame, DataError> {
    schema.validate()?;
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header = reader.headers().map_err(|e| DataError::Parse { line: 1, message: e.to_string() })?.clone();
    let expected = column_names(schema);
    let header: Vec<&str> = header.iter().map(str::trim).collect();
    if header != expected {
        return Err(DataError::Schema(format!(
            "CSV header {header:?} does not match schema columns {expected:?}"
        )));
    }
    let mut values: Vec<Vec<f64>> = schema.channels.iter().map(|_| Vec::new()).collect();
    let mut first_step = None;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| DataError::Parse { line, message: e.to_string() })?;
        if rec.len() != expected.len() {
            return Err(DataError::Parse {
                line,
                message: format!("expected {} fields, found {}", expected.len(), rec.len()),
            });
        }
        let parse = |k: usize| -> Result<f64, DataError> {
            let field = rec[k].trim();
            let v: f64 = field
                .parse()
                .map_err(|_| DataError::Parse { line, message: format!("column `{}`: invalid number `{field}`", expected[k]) })?;
            if !v.is_finite() {
                return Err(DataError::Parse { line, message: format!("column `{}`: non-finite value", expected[k]) });
            }
            Ok(v)
        };
        if first_step.is_none() {
            let s = rec[0].trim();
            first_step =
                Some(s.parse::<i64>().map_err(|_| DataError::Parse { line, message: format!("invalid step `{s}`") })?);
        }
        let mut k = 1;
        for (c, spec) in schema.channels.iter().enumerate() {
            for _ in 0..spec.width {
                values[c].push(parse(k)?);
                k += 1;
            }
        }
    }
    let channels = schema
        .channels
        .iter()
        .cloned()
        .zip(values)
        .map(|(spec, values)| Channel { spec, values })
        .collect();
    SeriesFrame::new(channels, first_step.unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{ChannelSpec, Role};

    fn spec(name: &str, modality: Modality, role: Role, width: usize) -> ChannelSpec {
        ChannelSpec { name: name.into(), modality, role, future_known: false, width }
    }

    #[test]
    fn small_frame_round_trips_exactly() {
        let frame = SeriesFrame::new(
            vec![
                Channel { spec: spec("x", Modality::Ts, Role::Target, 1), values: vec![0.1, -2.5e-7, 3.141592653589793] },
                Channel { spec: spec("c", Modality::Ts, Role::Covariate, 1), values: vec![1e300, 0.0, -1.0 / 3.0] },
            ],
            10,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        write_csv(&frame, &p).unwrap();
        let back = load_csv(&p, &frame.schema()).unwrap();
        assert_eq!(back, frame);
    }

    #[test]
    fn vector_channel_loads_with_width() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, "step,x,t[0],t[1],t[2],t[3]\n0,1,0.1,0.2,0.3,0.4\n1,2,0.5,0.6,0.7,0.8\n").unwrap();
        let schema = Schema {
            version: 1,
            channels: vec![spec("x", Modality::Ts, Role::Target, 1), spec("t", Modality::Txt, Role::Covariate, 4)],
        };
        let f = load_csv(&p, &schema).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f.channel(1).step(1), &[0.5, 0.6, 0.7, 0.8]);
    }

    #[test]
    fn ragged_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, "step,x,c\n0,1,2\n1,3\n2,4,5\n").unwrap();
        let schema = Schema {
            version: 1,
            channels: vec![spec("x", Modality::Ts, Role::Target, 1), spec("c", Modality::Ts, Role::Covariate, 1)],
        };
        match load_csv(&p, &schema) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn schema_without_target_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        std::fs::write(
            &p,
            r#"{"version":1,"channels":[{"name":"x","modality":"ts","role":"covariate"}]}"#,
        )
        .unwrap();
        assert!(matches!(load_schema(&p), Err(DataError::Schema(_))));
    }

    #[test]
    fn unknown_modality_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        std::fs::write(
            &p,
            r#"{"version":1,"channels":[{"name":"x","modality":"audio","role":"target"}]}"#,
        )
        .unwrap();
        assert!(matches!(load_schema(&p), Err(DataError::Schema(_))));
    }
}
