//! Numeric CSV tables: a header row and rows of `f64`.
//!
//! Values are written in the shortest form that parses back to the same
//! `f64`; integral values below `2^53` are written without a fractional part.

use crate::error::{validation, Error, Result};

/// Largest CSV input accepted, in bytes.
pub const MAX_CSV_BYTES: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn format_value(v: f64) -> String {
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 9.007_199_254_740_992e15 {
        if v == 0.0 && v.is_sign_negative() {
            return "-0.0".into();
        }
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

impl Table {
    pub fn new(header: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.header.len() {
            return validation(format!("row has {} values, header has {}", row.len(), self.header.len()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| Error::Validation(format!("no column named {name:?}")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_value(*v))).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV output is UTF-8")
    }

    /// Parse a table written by [`Table::to_csv_string`] (or any numeric CSV
    /// with a header row).
    pub fn from_csv_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() > MAX_CSV_BYTES {
            return validation(format!("CSV larger than {MAX_CSV_BYTES} bytes"));
        }
        let mut r = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(bytes);
        let header: Vec<String> = r.headers().map_err(|e| Error::Parse(format!("CSV header: {e}")))?.iter().map(str::to_owned).collect();
        if header.is_empty() || header.iter().any(|h| h.is_empty()) {
            return Err(Error::Parse("CSV header has an empty column name".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(format!("CSV row {}: {e}", i + 1)))?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("CSV row {}: {s:?} is not a number", i + 1))))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != header.len() {
                return Err(Error::Parse(format!("CSV row {} has {} fields, header has {}", i + 1, row.len(), header.len())));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        Self::from_csv_bytes(text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formats_integers_compactly() {
        assert_eq!(format_value(3.0), "3");
        assert_eq!(format_value(0.1), "0.1");
        assert_eq!(format_value(1e-300), "1e-300");
        assert_eq!(format_value(f64::NAN), "NaN");
        assert_eq!(format_value(1e17), "1e17");
    }

    #[test]
    fn rejects_malformed_csv() {
        assert!(Table::from_csv_str("a,b\n1,2,3\n").is_err());
        assert!(Table::from_csv_str("a,b\n1,x\n").is_err());
        assert!(Table::from_csv_str("a,\n1,2\n").is_err());
        assert!(Table::from_csv_str("").is_err());
    }

    #[test]
    fn push_checks_width() {
        let mut t = Table::new(["a", "b"]);
        assert!(t.push(vec![1.0]).is_err());
        t.push(vec![1.0, 2.0]).unwrap();
        assert_eq!(t.column("b").unwrap(), vec![2.0]);
        assert!(t.column("c").is_err());
    }

    proptest! {
        #[test]
        fn csv_roundtrip(rows in prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite or inf", |v| !v.is_nan()), 3), 0..20)) {
            let mut t = Table::new(["t", "x,y", "z"]);
            for r in rows {
                t.push(r).unwrap();
            }
            let back = Table::from_csv_str(&t.to_csv_string()).unwrap();
            prop_assert_eq!(&back.header, &t.header);
            for (a, b) in back.rows.iter().zip(&t.rows) {
                for (x, y) in a.iter().zip(b) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            prop_assert_eq!(back.rows.len(), t.rows.len());
        }
    }
}
