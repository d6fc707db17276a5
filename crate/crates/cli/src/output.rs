//! RFC 4180 tables: CRLF records, `name[unit]` headers, floats to 17
//! significant digits.

use std::io::Write;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

impl Column {
    pub fn new(name: impl Into<String>, unit: impl Into<String>) -> Self {
        Column { name: name.into(), unit: unit.into() }
    }

    pub fn header(&self) -> String {
        format!("{}[{}]", self.name, self.unit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem; written as `<name>.csv`.
    pub name: String,
    /// Optional leading text column, e.g. "quantity".
    pub label: Option<String>,
    pub columns: Vec<Column>,
    pub labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Self {
        Table { name: name.into(), label: None, columns, labels: Vec::new(), rows: Vec::new() }
    }

    pub fn labelled(name: impl Into<String>, label: impl Into<String>, columns: Vec<Column>) -> Self {
        Table { label: Some(label.into()), ..Table::new(name, columns) }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_labelled(&mut self, label: impl Into<String>, row: Vec<f64>) {
        self.labels.push(label.into());
        self.push(row);
    }

    pub fn column(&self, header: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c.name == header || c.header() == header)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn write<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(w);
        let mut header: Vec<String> = Vec::with_capacity(self.columns.len() + 1);
        if let Some(l) = &self.label {
            header.push(l.clone());
        }
        header.extend(self.columns.iter().map(Column::header));
        out.write_record(&header)?;
        for (k, row) in self.rows.iter().enumerate() {
            let mut rec: Vec<String> = Vec::with_capacity(row.len() + 1);
            if self.label.is_some() {
                rec.push(self.labels[k].clone());
            }
            rec.extend(row.iter().map(|v| format_float(*v)));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}

/// Seventeen significant digits, which round-trips every f64.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}
