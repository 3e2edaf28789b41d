use std::io::{Read, Write};

use nalgebra::{DMatrix, DVectorView};

use crate::error::{Error, Result};

/// `N` observations of `m` named variables, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<String>,
    values: DMatrix<f64>,
}

impl Dataset {
    pub fn new(columns: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if columns.len() != values.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} column names for {} columns",
                columns.len(),
                values.ncols()
            )));
        }
        if values.nrows() == 0 {
            return Err(Error::DegenerateInput("dataset has no rows".into()));
        }
        for (i, name) in columns.iter().enumerate() {
            if columns[..i].contains(name) {
                return Err(Error::Malformed(format!("duplicate column `{name}`")));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::Parse {
                row: row as u64 + 1,
                column: columns[col].clone(),
                message: "non-finite value".into(),
            });
        }
        Ok(Dataset { columns, values })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<DVectorView<'_, f64>> {
        Ok(self.values.column(self.column_index(name)?))
    }

    /// Columns `names`, in that order.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<Dataset> {
        let idx = names
            .iter()
            .map(|n| self.column_index(n.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let values = self.values.select_columns(idx.iter());
        Dataset::new(
            names.iter().map(|n| n.as_ref().to_string()).collect(),
            values,
        )
    }

    /// Subtracts the sample mean from every column named in `names`.
    pub fn center_columns<S: AsRef<str>>(&mut self, names: &[S]) -> Result<()> {
        for name in names {
            let j = self.column_index(name.as_ref())?;
            let mean = self.values.column(j).mean();
            self.values.column_mut(j).add_scalar_mut(-mean);
        }
        Ok(())
    }

    pub fn center_all(&mut self) {
        for mut col in self.values.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
    }

    /// Parses a header row of unique names followed by numeric rows.
    /// Blank or non-numeric cells are reported with their line and column.
    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if columns.is_empty() || columns.iter().all(String::is_empty) {
            return Err(Error::Malformed("missing header row".into()));
        }
        for (i, name) in columns.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::Malformed(format!(
                    "empty header in column {}",
                    i + 1
                )));
            }
            if columns[..i].contains(name) {
                return Err(Error::Malformed(format!("duplicate header `{name}`")));
            }
        }

        let mut flat = Vec::new();
        let mut rows = 0usize;
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            for (cell, name) in record.iter().zip(&columns) {
                if cell.is_empty() {
                    return Err(Error::Parse {
                        row: line,
                        column: name.clone(),
                        message: "missing value".into(),
                    });
                }
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row: line,
                    column: name.clone(),
                    message: format!("`{cell}` is not a number"),
                })?;
                flat.push(v);
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::DegenerateInput(
                "CSV has a header but no rows".into(),
            ));
        }
        let values = DMatrix::from_row_slice(rows, columns.len(), &flat);
        Dataset::new(columns, values)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.columns)?;
        for row in self.values.row_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}
