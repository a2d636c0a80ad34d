//! CSV and JSON serialization of fields, snapshots, diagnostics and verdicts.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{momentum, State};
use crate::error::{Error, Result};
use crate::lagrangian::DiagnosticsRecord;
use crate::report::Verdict;
use crate::spectral::{Field, Grid};

/// 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn write_field_csv<W: Write>(field: &Field, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "value"])?;
    let grid = field.grid();
    for (i, v) in field.values().iter().enumerate() {
        w.write_record([fmt_real(grid.node(i)), fmt_real(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an `x,value` CSV; the grid is inferred from the uniform node spacing.
pub fn read_field_csv<R: Read>(input: R) -> Result<Field> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "value" {
        return Err(Error::Parse(format!(
            "expected header 'x,value', found '{}'",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut xs = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("row {}: invalid number '{s}'", line + 2)))
        };
        xs.push(parse(&rec[0])?);
        values.push(parse(&rec[1])?);
    }
    if xs.len() < 2 {
        return Err(Error::Parse("field CSV needs at least two rows".into()));
    }
    let dx = xs[1] - xs[0];
    for (i, x) in xs.iter().enumerate() {
        if (x - xs[0] - i as f64 * dx).abs() > 1e-9 * dx.abs().max(1.0) {
            return Err(Error::Parse(format!("row {}: nodes are not uniformly spaced", i + 2)));
        }
    }
    if xs[0].abs() > 1e-12 * dx.abs() {
        return Err(Error::Parse("first node must be x = 0".into()));
    }
    let grid = Grid::new(xs.len(), dx * xs.len() as f64)?;
    let field = Field::new(grid, values)?;
    field.validate()?;
    Ok(field)
}

#[derive(Serialize, Deserialize)]
struct GridRecord {
    n: usize,
    period: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldRecord {
    grid: GridRecord,
    values: Vec<f64>,
}

pub fn field_to_json(field: &Field) -> Result<String> {
    Ok(serde_json::to_string(&FieldRecord {
        grid: GridRecord {
            n: field.grid().n_points(),
            period: field.grid().period(),
        },
        values: field.values().to_vec(),
    })?)
}

pub fn field_from_json(text: &str) -> Result<Field> {
    let rec: FieldRecord = serde_json::from_str(text)?;
    let grid = Grid::new(rec.grid.n, rec.grid.period)?;
    if rec.values.len() != rec.grid.n {
        return Err(Error::Parse(format!(
            "grid has {} nodes but {} values were given",
            rec.grid.n,
            rec.values.len()
        )));
    }
    let field = Field::new(grid, rec.values)?;
    field.validate()?;
    Ok(field)
}

/// Streams `t,x,u,v,m,n` rows.
pub struct SnapshotWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> SnapshotWriter<W> {
    pub fn new(out: W) -> Result<SnapshotWriter<W>> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(["t", "x", "u", "v", "m", "n"])?;
        Ok(SnapshotWriter { inner })
    }

    pub fn write(&mut self, state: &State) -> Result<()> {
        let ms = momentum(state)?;
        let grid: &Arc<Grid> = state.grid();
        let t = fmt_real(state.time);
        for i in 0..grid.n_points() {
            self.inner.write_record([
                t.clone(),
                fmt_real(grid.node(i)),
                fmt_real(state.u.values()[i]),
                fmt_real(state.v.values()[i]),
                fmt_real(ms.m.values()[i]),
                fmt_real(ms.n.values()[i]),
            ])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub const DIAGNOSTICS_COLUMNS: [&str; 9] = [
    "t",
    "total_momentum",
    "half_line_momentum",
    "blowup_integrand",
    "blowup_integral",
    "l1_m",
    "l1_n",
    "min_m",
    "min_n",
];

pub fn write_diagnostics_csv<W: Write>(record: &DiagnosticsRecord, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DIAGNOSTICS_COLUMNS)?;
    for i in 0..record.len() {
        w.write_record(
            [
                record.times[i],
                record.total_momentum[i],
                record.half_line_momentum[i],
                record.blowup_integrand[i],
                record.blowup_integral[i],
                record.l1_m[i],
                record.l1_n[i],
                record.min_m[i],
                record.min_n[i],
            ]
            .map(fmt_real),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Columns of a CSV by header name, for plotting and inspection.
pub fn read_columns<R: Read>(input: R) -> Result<Vec<(String, Vec<f64>)>> {
    let mut r = csv::Reader::from_reader(input);
    let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for rec in r.records() {
        let rec = rec?;
        for (c, s) in cols.iter_mut().zip(rec.iter()) {
            c.push(s.trim().parse().map_err(|_| Error::Parse(format!("invalid number '{s}'")))?);
        }
    }
    Ok(headers.into_iter().zip(cols).collect())
}

pub fn verdicts_to_json(verdicts: &[Verdict]) -> Result<String> {
    Ok(serde_json::to_string_pretty(verdicts)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn field_csv_round_trip_is_exact() {
        let g = Grid::new(16, 2.0 * PI).unwrap();
        let f = Field::from_fn(&g, |x| x.sin() / 3.0);
        let mut buf = Vec::new();
        write_field_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,value\n"));
        let back = read_field_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values(), f.values());
        assert!((back.grid().period() - g.period()).abs() < 1e-12);
    }

    #[test]
    fn field_csv_rejects_bad_input() {
        assert!(read_field_csv("a,b\n0,1\n1,2\n".as_bytes()).is_err());
        assert!(read_field_csv("x,value\n0,1\n1,nan_\n".as_bytes()).is_err());
        assert!(read_field_csv("x,value\n0,1\n1,2\n3,4\n".as_bytes()).is_err());
    }

    #[test]
    fn field_json_round_trip() {
        let g = Grid::new(8, 1.0).unwrap();
        let f = Field::from_fn(&g, |x| x * x);
        let text = field_to_json(&f).unwrap();
        assert!(text.starts_with(r#"{"grid":{"n":8,"period":1.0},"values":["#));
        assert_eq!(field_from_json(&text).unwrap().values(), f.values());
        assert!(field_from_json(r#"{"grid":{"n":8,"period":1.0},"values":[1.0]}"#).is_err());
    }

    #[test]
    fn diagnostics_header() {
        let mut buf = Vec::new();
        write_diagnostics_csv(&DiagnosticsRecord::default(), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap().trim(),
            "t,total_momentum,half_line_momentum,blowup_integrand,blowup_integral,l1_m,l1_n,min_m,min_n"
        );
    }
}
