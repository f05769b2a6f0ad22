//! Time-series trace and its CSV encoding.
//!
//! Column order for `n` converters (indices are 1-based):
//!
//! ```text
//! t,
//! v_conv_1, i_line_1, droop_1, r_v_1, r_i_1, i_pu_1, i_ref_pu_1,
//! ...
//! v_conv_n, i_line_n, droop_n, r_v_n, r_i_n, i_pu_n, i_ref_pu_n,
//! v_bus, v_bar_pu_1, ..., v_bar_pu_n, i_load
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! reading a trace back reproduces every value bit for bit.

use std::io::{Read, Write};

use crate::error::{Error, Result};

const PER_CONVERTER: [&str; 7] = ["v_conv", "i_line", "droop", "r_v", "r_i", "i_pu", "i_ref_pu"];

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub v_conv: Vec<f64>,
    pub i_line: Vec<f64>,
    pub droop: Vec<f64>,
    pub r_v: Vec<f64>,
    pub r_i: Vec<f64>,
    pub i_pu: Vec<f64>,
    pub i_ref_pu: Vec<f64>,
    pub v_bus: f64,
    pub v_bar_pu: Vec<f64>,
    pub i_load: f64,
}

impl TraceRecord {
    fn n(&self) -> usize {
        self.v_conv.len()
    }

    fn dims_ok(&self, n: usize) -> bool {
        [
            &self.v_conv,
            &self.i_line,
            &self.droop,
            &self.r_v,
            &self.r_i,
            &self.i_pu,
            &self.i_ref_pu,
            &self.v_bar_pu,
        ]
        .iter()
        .all(|v| v.len() == n)
    }

    fn per_converter(&self, k: usize) -> [f64; 7] {
        [
            self.v_conv[k],
            self.i_line[k],
            self.droop[k],
            self.r_v[k],
            self.r_i[k],
            self.i_pu[k],
            self.i_ref_pu[k],
        ]
    }

    fn values(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(1 + 8 * n + 2);
        out.push(self.t);
        for k in 0..n {
            out.extend(self.per_converter(k));
        }
        out.push(self.v_bus);
        out.extend(&self.v_bar_pu);
        out.push(self.i_load);
        out
    }
}

/// Ordered sequence of records for a fixed number of converters.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    n: usize,
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(n_converters: usize) -> Self {
        Self {
            n: n_converters,
            records: Vec::new(),
        }
    }

    pub fn n_converters(&self) -> usize {
        self.n
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, rec: TraceRecord) -> Result<()> {
        if !rec.dims_ok(self.n) {
            return Err(Error::Trace(format!(
                "record at t = {} does not have {} converters",
                rec.t, self.n
            )));
        }
        if let Some(last) = self.records.last() {
            if !(rec.t > last.t) {
                return Err(Error::Trace(format!(
                    "time not increasing: {} after {}",
                    rec.t, last.t
                )));
            }
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn header(n: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for k in 1..=n {
            h.extend(PER_CONVERTER.iter().map(|c| format!("{c}_{k}")));
        }
        h.push("v_bus".into());
        h.extend((1..=n).map(|k| format!("v_bar_pu_{k}")));
        h.push("i_load".into());
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(Self::header(self.n))?;
        let mut buf = Vec::new();
        for rec in &self.records {
            buf.clear();
            buf.extend(rec.values().into_iter().map(|x| x.to_string()));
            wr.write_record(&buf)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_csv(&mut out)?;
        Ok(out)
    }

    /// Parses a trace, locating columns by name.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Trace(format!("missing column {name}")))
        };
        let n = (1..)
            .take_while(|k| headers.iter().any(|h| h == format!("v_conv_{k}")))
            .count();
        if n == 0 {
            return Err(Error::Trace("no converter columns found".into()));
        }
        let t_col = col("t")?;
        let mut conv_cols = Vec::with_capacity(n);
        for k in 1..=n {
            let mut cols = [0usize; 7];
            for (slot, c) in cols.iter_mut().zip(PER_CONVERTER) {
                *slot = col(&format!("{c}_{k}"))?;
            }
            conv_cols.push(cols);
        }
        let v_bus_col = col("v_bus")?;
        let i_load_col = col("i_load")?;
        let v_bar_cols = (1..=n)
            .map(|k| col(&format!("v_bar_pu_{k}")))
            .collect::<Result<Vec<_>>>()?;

        let mut trace = Trace::new(n);
        for (line, row) in rd.records().enumerate() {
            let row = row?;
            let get = |i: usize| -> Result<f64> {
                row.get(i)
                    .ok_or_else(|| Error::Trace(format!("row {}: short record", line + 2)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Trace(format!("row {}: {e}", line + 2)))
            };
            let mut per = vec![[0.0; 7]; n];
            for (k, cols) in conv_cols.iter().enumerate() {
                for (j, &c) in cols.iter().enumerate() {
                    per[k][j] = get(c)?;
                }
            }
            let pick = |j: usize| per.iter().map(|p| p[j]).collect::<Vec<_>>();
            trace.push(TraceRecord {
                t: get(t_col)?,
                v_conv: pick(0),
                i_line: pick(1),
                droop: pick(2),
                r_v: pick(3),
                r_i: pick(4),
                i_pu: pick(5),
                i_ref_pu: pick(6),
                v_bus: get(v_bus_col)?,
                v_bar_pu: v_bar_cols.iter().map(|&c| get(c)).collect::<Result<_>>()?,
                i_load: get(i_load_col)?,
            })?;
        }
        Ok(trace)
    }
}
