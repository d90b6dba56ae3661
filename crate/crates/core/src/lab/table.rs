//! Read-side access to sweep CSV files.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("table has no rows")]
    Empty,
    #[error("no column named {0:?}")]
    MissingColumn(String),
    #[error("column {column:?}, row {row}: {value:?} is not a number")]
    NotNumeric {
        column: String,
        row: usize,
        value: String,
    },
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

/// A CSV file held as strings, with typed column access.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn from_reader<R: io::Read>(input: R) -> Result<Self, TableError> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Self { headers, rows })
    }

    pub fn from_path(path: &Path) -> Result<Self, TableError> {
        let file = std::fs::File::open(path).map_err(|source| TableError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(file)
    }

    pub fn column_index(&self, name: &str) -> Result<usize, TableError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TableError::MissingColumn(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    pub fn text(&self, name: &str) -> Result<Vec<&str>, TableError> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    /// Numeric values of a column; empty cells are an error.
    pub fn numeric(&self, name: &str) -> Result<Vec<f64>, TableError> {
        let i = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(row, r)| {
                r[i].parse().map_err(|_| TableError::NotNumeric {
                    column: name.to_string(),
                    row: row + 1,
                    value: r[i].clone(),
                })
            })
            .collect()
    }

    /// Rows whose `column` equals `value`.
    pub fn filter(&self, column: &str, value: &str) -> Result<Table, TableError> {
        let i = self.column_index(column)?;
        Ok(Table {
            headers: self.headers.clone(),
            rows: self
                .rows
                .iter()
                .filter(|r| r[i] == value)
                .cloned()
                .collect(),
        })
    }

    /// Sweep axis columns: those between `config_hash` and `gamma_t` in a
    /// mission table, or between `replication` and `iteration` in a series
    /// table.
    pub fn axis_columns(&self) -> Vec<String> {
        let span = |from: &str, to: &str| -> Option<Vec<String>> {
            let a = self.headers.iter().position(|h| h == from)?;
            let b = self.headers.iter().position(|h| h == to)?;
            Some(self.headers.get(a + 1..b)?.to_vec())
        };
        span("config_hash", "gamma_t")
            .or_else(|| span("replication", "iteration"))
            .unwrap_or_default()
    }

    /// Values of `metric` grouped by the text of `key`, groups in order of
    /// first appearance.
    pub fn group_by(&self, key: &str, metric: &str) -> Result<Vec<(String, Vec<f64>)>, TableError> {
        let keys = self.text(key)?;
        let values = self.numeric(metric)?;
        let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
        for (k, v) in keys.into_iter().zip(values) {
            match groups.iter_mut().find(|(g, _)| g == k) {
                Some((_, vs)) => vs.push(v),
                None => groups.push((k.to_string(), vec![v])),
            }
        }
        Ok(groups)
    }

    /// Mean of `metric` for every distinct combination of `keys`, keyed by
    /// the numeric key values.
    pub fn means_by(
        &self,
        keys: &[&str],
        metric: &str,
    ) -> Result<BTreeMap<Vec<OrderedF64>, f64>, TableError> {
        let key_cols = keys
            .iter()
            .map(|k| self.numeric(k))
            .collect::<Result<Vec<_>, _>>()?;
        let values = self.numeric(metric)?;
        let mut acc: BTreeMap<Vec<OrderedF64>, (f64, usize)> = BTreeMap::new();
        for (row, v) in values.into_iter().enumerate() {
            let key = key_cols.iter().map(|c| OrderedF64(c[row])).collect();
            let e = acc.entry(key).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
        Ok(acc
            .into_iter()
            .map(|(k, (s, n))| (k, s / n as f64))
            .collect())
    }
}

/// Total order on finite floats for use as map keys.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderedF64(pub f64);

impl Eq for OrderedF64 {}

impl PartialOrd for OrderedF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "model,point,replication,seed,config_hash,alpha_g,beta_g,gamma_t,c_t,eta_t\n\
        hgmp,0,0,1,ab,0.1,0.2,3,100,0.03\n\
        hgmp,0,1,2,ab,0.1,0.2,5,100,0.05\n\
        hgmp,1,0,1,cd,0.1,0.3,2,100,0.02\n";

    #[test]
    fn axes_and_groups() {
        let t = Table::from_reader(CSV.as_bytes()).unwrap();
        assert_eq!(t.axis_columns(), vec!["alpha_g", "beta_g"]);
        let g = t.group_by("point", "eta_t").unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].1, vec![0.03, 0.05]);
        let m = t.means_by(&["alpha_g", "beta_g"], "eta_t").unwrap();
        assert_eq!(m.len(), 2);
        assert!((m[&vec![OrderedF64(0.1), OrderedF64(0.2)]] - 0.04).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let t = Table::from_reader(CSV.as_bytes()).unwrap();
        assert!(matches!(
            t.numeric("nope"),
            Err(TableError::MissingColumn(_))
        ));
        assert!(matches!(
            t.numeric("model"),
            Err(TableError::NotNumeric { .. })
        ));
        assert_eq!(t.filter("point", "1").unwrap().rows.len(), 1);
    }
}
