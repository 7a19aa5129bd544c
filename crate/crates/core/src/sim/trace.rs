//! Time-series traces in long CSV form: header `slot,id,value`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    /// Generation per green site, kW.
    GreenGenerationKw,
    /// Active users per load bus.
    ActiveUsers,
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceKind::GreenGenerationKw => "green_generation_kW",
            TraceKind::ActiveUsers => "active_users",
        })
    }
}

/// Dense trace: a value for every slot in `first_slot..first_slot + len`
/// and every id.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub kind: TraceKind,
    pub first_slot: usize,
    /// Ids in order of first appearance in the file.
    pub ids: Vec<String>,
    /// `values[slot][id]`.
    pub values: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct Row {
    slot: usize,
    id: String,
    value: f64,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn column(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|i| i == id)
    }

    /// Series of one id.
    pub fn series(&self, column: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(move |row| row[column])
    }

    /// Averages consecutive groups of `factor` slots; a trailing partial
    /// group is dropped.
    pub fn resample_mean(&self, factor: usize) -> Trace {
        assert!(factor >= 1, "resampling factor must be at least 1");
        let values = self
            .values
            .chunks_exact(factor)
            .map(|chunk| {
                (0..self.ids.len())
                    .map(|k| chunk.iter().map(|row| row[k]).sum::<f64>() / factor as f64)
                    .collect()
            })
            .collect();
        Trace {
            kind: self.kind,
            first_slot: self.first_slot / factor,
            ids: self.ids.clone(),
            values,
        }
    }
}

pub fn load_trace(path: impl AsRef<Path>, kind: TraceKind) -> Result<Trace> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace(file, kind, path)
}

/// Parses trace CSV from any reader; `origin` names the source in errors.
pub fn read_trace(reader: impl std::io::Read, kind: TraceKind, origin: impl Into<PathBuf>) -> Result<Trace> {
    let origin = origin.into();
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["slot", "id", "value"] {
        return Err(Error::Parse {
            path: origin,
            line: 1,
            message: format!("expected header `slot,id,value`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut ids: Vec<String> = Vec::new();
    let mut id_index: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
    let mut slots = BTreeSet::new();
    for (k, row) in rdr.deserialize::<Row>().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| Error::Parse {
            path: origin.clone(),
            line: e.position().map_or(line, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        if !row.value.is_finite() {
            return Err(Error::Parse {
                path: origin,
                line,
                message: format!("non-finite value {}", row.value),
            });
        }
        if row.value < 0.0 {
            return Err(Error::NegativeValue {
                path: origin,
                slot: row.slot,
                id: row.id,
                value: row.value,
            });
        }
        let col = *id_index.entry(row.id.clone()).or_insert_with(|| {
            ids.push(row.id.clone());
            ids.len() - 1
        });
        if cells.insert((row.slot, col), row.value).is_some() {
            return Err(Error::Parse {
                path: origin,
                line,
                message: format!("duplicate entry for slot {} id {}", row.slot, row.id),
            });
        }
        slots.insert(row.slot);
    }

    let (Some(&first), Some(&last)) = (slots.first(), slots.last()) else {
        return Ok(Trace {
            kind,
            first_slot: 0,
            ids,
            values: Vec::new(),
        });
    };
    let mut missing = Vec::new();
    let mut values = Vec::with_capacity(last - first + 1);
    for slot in first..=last {
        let mut row = Vec::with_capacity(ids.len());
        for (col, id) in ids.iter().enumerate() {
            match cells.get(&(slot, col)) {
                Some(&v) => row.push(v),
                None => {
                    missing.push((slot, id.clone()));
                    row.push(f64::NAN);
                }
            }
        }
        values.push(row);
    }
    if !missing.is_empty() {
        return Err(Error::Gap { path: origin, missing });
    }
    Ok(Trace {
        kind,
        first_slot: first,
        ids,
        values,
    })
}

/// Writes the trace in long form, slot-major, with shortest round-trip floats.
pub fn write_trace(trace: &Trace, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "slot,id,value")?;
    for (k, row) in trace.values.iter().enumerate() {
        for (id, v) in trace.ids.iter().zip(row) {
            writeln!(out, "{},{},{}", trace.first_slot + k, id, v)?;
        }
    }
    Ok(())
}

pub fn save_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = std::io::BufWriter::new(file);
    write_trace(trace, &mut buf)
        .and_then(|_| buf.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn read(text: &str) -> Result<Trace> {
        read_trace(text.as_bytes(), TraceKind::GreenGenerationKw, "mem.csv")
    }

    #[test]
    fn dense_three_by_two() {
        let t = read("slot,id,value\n0,a,1\n0,b,2\n1,a,3\n1,b,4\n2,b,6\n2,a,5\n").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.ids, ["a", "b"]);
        assert_eq!(t.values[2], [5.0, 6.0]);
        assert_eq!(t.values.iter().map(|r| r.len()).sum::<usize>(), 6);
    }

    #[test]
    fn gap_is_reported() {
        let err = read("slot,id,value\n1,site0,1\n1,site1,2\n2,site0,3\n3,site0,1\n3,site1,1\n").unwrap_err();
        match err {
            Error::Gap { missing, .. } => assert_eq!(missing, vec![(2, "site1".to_string())]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_value_rejected() {
        assert!(matches!(
            read("slot,id,value\n0,a,-1\n"),
            Err(Error::NegativeValue { value, .. }) if value == -1.0
        ));
    }

    #[test]
    fn bad_header_and_number() {
        assert!(matches!(read("t,id,value\n0,a,1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read("slot,id,value\n0,a,1\n1,a,x\n"), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn resample_by_mean() {
        let t = read("slot,id,value\n0,a,1\n1,a,3\n2,a,5\n3,a,7\n4,a,9\n").unwrap();
        let r = t.resample_mean(2);
        assert_eq!(r.values, vec![vec![2.0], vec![6.0]]);
    }

    proptest! {
        #[test]
        fn csv_round_trip(
            first in 0usize..5,
            rows in proptest::collection::vec(proptest::collection::vec(0.0f64..1e6, 3), 1..20),
        ) {
            let trace = Trace {
                kind: TraceKind::ActiveUsers,
                first_slot: first,
                ids: vec!["x".into(), "y 2".into(), "742".into()],
                values: rows,
            };
            let mut buf = Vec::new();
            write_trace(&trace, &mut buf).unwrap();
            let back = read_trace(buf.as_slice(), TraceKind::ActiveUsers, "mem").unwrap();
            prop_assert_eq!(back, trace);
        }
    }
}
