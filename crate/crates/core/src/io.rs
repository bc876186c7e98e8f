//! The `wsc-v1` complex file format: JSON lines, one header record followed by
//! one `{"s": [...], "m": w}` record per non-empty simplex. The header may
//! carry a free-form `meta` object, which readers ignore.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::complex::{Simplex, VertexId, WeightedComplex};
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "wsc-v1";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    include_empty: bool,
    empty_weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    s: Vec<VertexId>,
    m: f64,
}

pub fn write_wsc<W: Write>(complex: &WeightedComplex, out: W) -> Result<()> {
    write_wsc_with_meta(complex, None, out)
}

pub fn write_wsc_with_meta<W: Write>(
    complex: &WeightedComplex,
    meta: Option<serde_json::Value>,
    mut out: W,
) -> Result<()> {
    let header = Header {
        format: FORMAT_TAG.to_string(),
        include_empty: complex.include_empty(),
        empty_weight: complex.empty_weight(),
        meta,
    };
    serde_json::to_writer(&mut out, &header)?;
    writeln!(out)?;
    for d in 0..=complex.top_dimension() {
        for (s, &m) in complex.simplices(d).iter().zip(complex.weights(d)) {
            let rec = Record {
                s: s.vertices().to_vec(),
                m,
            };
            serde_json::to_writer(&mut out, &rec)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

pub fn read_wsc<R: BufRead>(input: R) -> Result<WeightedComplex> {
    let mut lines = input.lines().enumerate();
    let header: Header = loop {
        let Some((i, line)) = lines.next() else {
            return Err(Error::Format {
                line: 0,
                message: "missing header".into(),
            });
        };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        break serde_json::from_str(&line).map_err(|e| Error::Format {
            line: i + 1,
            message: e.to_string(),
        })?;
    };
    if header.format != FORMAT_TAG {
        return Err(Error::Format {
            line: 1,
            message: format!("unsupported format {:?}", header.format),
        });
    }
    let mut seen = BTreeSet::new();
    let mut simplices = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| Error::Format {
            line: i + 1,
            message,
        };
        let rec: Record = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        let s = Simplex::new(rec.s).map_err(|e| fail(e.to_string()))?;
        if s.is_empty() {
            return Err(fail("∅ is declared by the header, not as a record".into()));
        }
        if !seen.insert(s.clone()) {
            return Err(fail(format!("duplicate simplex {s}")));
        }
        simplices.push((s, rec.m));
    }
    WeightedComplex::from_simplices(header.include_empty, header.empty_weight, simplices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{unit_weight, ComplexBuilder};

    #[test]
    fn round_trip_preserves_everything() {
        let mut b = ComplexBuilder::new().include_empty(true).empty_weight(0.5);
        b.insert_closed(&Simplex::new([1, 2, 3]).unwrap(), |s| 1.0 + s.len() as f64)
            .unwrap();
        b.insert_closed(&Simplex::new([3, 9]).unwrap(), unit_weight)
            .unwrap();
        let c = b.build().unwrap();
        let mut buf = Vec::new();
        write_wsc(&c, &mut buf).unwrap();
        let back = read_wsc(buf.as_slice()).unwrap();
        assert!(back.include_empty());
        assert_eq!(back.empty_weight(), 0.5);
        let a: Vec<_> = c.iter().map(|(s, w)| (s.clone(), w)).collect();
        let b: Vec<_> = back.iter().map(|(s, w)| (s.clone(), w)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_unsorted_duplicate_and_open() {
        let head = r#"{"format":"wsc-v1","include_empty":false,"empty_weight":1.0}"#;
        let unsorted = format!("{head}\n{{\"s\":[2,1],\"m\":1}}\n");
        assert!(matches!(
            read_wsc(unsorted.as_bytes()),
            Err(Error::Format { line: 2, .. })
        ));
        let dup = format!("{head}\n{{\"s\":[1],\"m\":1}}\n{{\"s\":[1],\"m\":1}}\n");
        assert!(matches!(
            read_wsc(dup.as_bytes()),
            Err(Error::Format { line: 3, .. })
        ));
        let open = format!("{head}\n{{\"s\":[1,2],\"m\":1}}\n");
        assert!(matches!(
            read_wsc(open.as_bytes()),
            Err(Error::NotFaceClosed { .. })
        ));
        let wrong = r#"{"format":"wsc-v2","include_empty":false,"empty_weight":1.0}"#;
        assert!(read_wsc(wrong.as_bytes()).is_err());
    }
}
