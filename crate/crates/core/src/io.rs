//! Dataset CSV reading and writing.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::data::{Dataset, MediatorKind};
use crate::error::{Error, Result};

/// Writes the header `x1..xK,t,m1..mL,y` and one row per observation.
/// Floats use the shortest representation that parses back to the same
/// value.
pub fn write_dataset_csv<W: Write>(out: W, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let (k, l) = (ds.dim_x(), ds.dim_m());
    let mut header: Vec<String> = (1..=k).map(|j| format!("x{j}")).collect();
    header.push("t".into());
    header.extend((1..=l).map(|j| format!("m{j}")));
    header.push("y".into());
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(k + l + 2);
    for i in 0..ds.n() {
        row.clear();
        row.extend((0..k).map(|j| ds.x[(i, j)].to_string()));
        row.push(ds.t[i].to_string());
        row.extend((0..l).map(|j| ds.m[(i, j)].to_string()));
        row.push(ds.y[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Which CSV columns play which role.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ColumnRoles {
    pub treatment: String,
    pub outcome: String,
    pub mediators: Vec<String>,
    pub covariates: Vec<String>,
}

impl ColumnRoles {
    /// Roles of a file written by [`write_dataset_csv`].
    pub fn standard(dim_x: usize, dim_m: usize) -> Self {
        ColumnRoles {
            treatment: "t".into(),
            outcome: "y".into(),
            mediators: (1..=dim_m).map(|j| format!("m{j}")).collect(),
            covariates: (1..=dim_x).map(|j| format!("x{j}")).collect(),
        }
    }

    fn all(&self) -> Vec<&str> {
        let mut v = vec![self.treatment.as_str(), self.outcome.as_str()];
        v.extend(self.mediators.iter().map(String::as_str));
        v.extend(self.covariates.iter().map(String::as_str));
        v
    }

    pub fn validate(&self) -> Result<()> {
        if self.mediators.is_empty() || self.covariates.is_empty() {
            return Err(Error::Config(
                "at least one mediator and one covariate column are required".into(),
            ));
        }
        let all = self.all();
        for (i, a) in all.iter().enumerate() {
            if all[..i].contains(a) {
                return Err(Error::Config(format!("column {a:?} is given two roles")));
            }
        }
        Ok(())
    }
}

/// A dataset read from CSV, with the number of rows dropped for missing
/// values.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub rows_read: usize,
    pub rows_dropped: usize,
}

fn is_missing(field: &str) -> bool {
    matches!(
        field.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "nan" | "null" | "none"
    )
}

/// Reads the role columns of a CSV with a header row. Rows with a missing
/// entry (empty, `NA`, `NaN`, `null`) in any role column are dropped. With
/// `kind = None` a single mediator column holding only 0/1 is taken as
/// binary and anything else as continuous.
pub fn read_dataset_csv<R: Read>(
    input: R,
    roles: &ColumnRoles,
    kind: Option<MediatorKind>,
) -> Result<LoadedDataset> {
    roles.validate()?;
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let index = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let t_col = index(&roles.treatment)?;
    let y_col = index(&roles.outcome)?;
    let m_cols = roles.mediators.iter().map(|c| index(c)).collect::<Result<Vec<_>>>()?;
    let x_cols = roles.covariates.iter().map(|c| index(c)).collect::<Result<Vec<_>>>()?;

    let (mut t, mut y, mut m, mut x) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut rows_read = 0;
    let mut rows_dropped = 0;
    for record in reader.records() {
        let record = record?;
        rows_read += 1;
        let line = record.position().map_or(rows_read + 1, |p| p.line() as usize);
        let cols = std::iter::once(t_col)
            .chain(std::iter::once(y_col))
            .chain(m_cols.iter().copied())
            .chain(x_cols.iter().copied());
        let mut values = Vec::with_capacity(2 + m_cols.len() + x_cols.len());
        let mut missing = false;
        for c in cols {
            let field = record.get(c).unwrap_or("");
            if is_missing(field) {
                missing = true;
                break;
            }
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                column: headers[c].to_string(),
                line,
                value: field.to_string(),
            })?;
            values.push(v);
        }
        if missing {
            rows_dropped += 1;
            continue;
        }
        let row = t.len();
        if values[0] != 0.0 && values[0] != 1.0 {
            return Err(Error::NonBinaryTreatment { row, value: values[0] });
        }
        t.push(values[0]);
        y.push(values[1]);
        m.extend_from_slice(&values[2..2 + m_cols.len()]);
        x.extend_from_slice(&values[2 + m_cols.len()..]);
    }

    let n = t.len();
    if n == 0 {
        return Err(Error::EmptyAfterFiltering);
    }
    let m = DMatrix::from_row_slice(n, m_cols.len(), &m);
    let x = DMatrix::from_row_slice(n, x_cols.len(), &x);
    let kind = kind.unwrap_or_else(|| {
        if m.ncols() == 1 && m.iter().all(|&v| v == 0.0 || v == 1.0) {
            MediatorKind::Binary1D
        } else {
            MediatorKind::continuous(m.ncols())
        }
    });
    if kind.dim() != m.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "mediator kind {kind} does not match {} mediator columns",
            m.ncols()
        )));
    }
    let dataset = Dataset::new(x, t, m, y, kind)?;
    Ok(LoadedDataset {
        dataset,
        rows_read,
        rows_dropped,
    })
}
