//! Return panels: one row per date, one column per asset.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

/// A complete `N×n` panel of returns.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub asset_ids: Vec<String>,
    pub dates: Vec<String>,
    /// `N×n`, rows are dates.
    pub x: DMatrix<f64>,
}

impl Panel {
    /// Parse CSV whose header is a date column name followed by asset ids.
    /// Every cell must hold a finite number.
    pub fn read<R: Read>(reader: R) -> CliResult<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 2 {
            return Err(CliError::input("panel header needs a date column and at least one asset"));
        }
        let asset_ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = asset_ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(CliError::input(format!("duplicate asset id {dup:?}")));
        }
        let n = asset_ids.len();
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let row = dates.len() + 1;
            dates.push(record[0].to_owned());
            for (j, field) in record.iter().skip(1).enumerate() {
                match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(v),
                    _ => {
                        return Err(CliError::input(format!(
                            "row {row}, asset {:?}: {field:?} is not a finite number",
                            asset_ids[j]
                        )))
                    }
                }
            }
        }
        if dates.is_empty() {
            return Err(CliError::input("panel has no observations"));
        }
        Ok(Self {
            x: DMatrix::from_row_slice(dates.len(), n, &values),
            asset_ids,
            dates,
        })
    }

    pub fn write<W: Write>(&self, writer: W) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(std::iter::once("date").chain(self.asset_ids.iter().map(String::as_str)))?;
        for (date, row) in self.dates.iter().zip(self.x.row_iter()) {
            w.write_record(std::iter::once(date.clone()).chain(row.iter().map(|v| v.to_string())))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn n_obs(&self) -> usize {
        self.dates.len()
    }

    /// Subtract each column's sample mean.
    pub fn demeaned(&self) -> Self {
        let mut x = self.x.clone();
        for mut c in x.column_iter_mut() {
            let m = c.mean();
            c.add_scalar_mut(-m);
        }
        Self { x, ..self.clone() }
    }

    /// The data matrix with columns reordered: column `j` of the result is
    /// column `order[j]` of the panel.
    pub fn permuted(&self, order: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_obs(), order.len(), |i, j| self.x[(i, order[j])])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = "date,A,B\n2020-01-01,0.5,-1\n2020-01-02,0.25,3e-3\n";
        let p = Panel::read(text.as_bytes()).unwrap();
        assert_eq!(p.asset_ids, ["A", "B"]);
        assert_eq!(p.x[(1, 1)], 3e-3);
        let mut out = Vec::new();
        p.write(&mut out).unwrap();
        assert_eq!(Panel::read(out.as_slice()).unwrap(), p);
    }

    #[test]
    fn rejects_missing_values() {
        assert!(Panel::read("date,A\n1,\n".as_bytes()).is_err());
        assert!(Panel::read("date,A\n1,NaN\n".as_bytes()).is_err());
        assert!(Panel::read("date,A,A\n1,1,2\n".as_bytes()).is_err());
        assert!(Panel::read("date,A\n".as_bytes()).is_err());
    }

    #[test]
    fn demeaning_and_permutation() {
        let p = Panel::read("d,A,B\n1,1,10\n2,3,20\n".as_bytes()).unwrap();
        let m = p.demeaned();
        assert_eq!(m.x.column(0).as_slice(), &[-1.0, 1.0]);
        assert_eq!(p.permuted(&[1, 0])[(0, 0)], 10.0);
    }
}
