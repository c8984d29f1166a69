//! Wide CSV layout: `L{k}_{name}`, `A{k}` for `k = 0..tau-1`; `C{k}`, `Y{k}` for
//! `k = 1..tau`. Empty cells are missing values.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{LongitudinalDataset, UnitRecord};
use super::DataError;

/// Column roles beyond the fixed naming convention.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    /// When set, only these covariates are loaded, in this order, per time.
    #[serde(default)]
    pub covariates: Option<Vec<Vec<String>>>,
    /// Reject columns that match no role.
    #[serde(default)]
    pub strict: bool,
}

enum Role {
    Covariate(usize, String),
    Treatment(usize),
    Censor(usize),
    Outcome(usize),
}

fn parse_role(header: &str) -> Option<Role> {
    let (head, rest) = header.split_at(header.chars().next()?.len_utf8());
    match head {
        "L" => {
            let (k, name) = rest.split_once('_')?;
            let k = k.parse().ok()?;
            (!name.is_empty()).then(|| Role::Covariate(k, name.to_string()))
        }
        "A" => rest.parse().ok().map(Role::Treatment),
        "C" => rest.parse().ok().filter(|k| *k >= 1).map(Role::Censor),
        "Y" => rest.parse().ok().filter(|k| *k >= 1).map(Role::Outcome),
        _ => None,
    }
}

struct Layout {
    tau: usize,
    names: Vec<Vec<String>>,
    cov_cols: Vec<Vec<usize>>,
    a_cols: Vec<usize>,
    c_cols: Vec<usize>,
    y_cols: Vec<usize>,
}

fn layout(headers: &csv::StringRecord, schema: &CsvSchema) -> Result<Layout, DataError> {
    let mut covs: BTreeMap<usize, Vec<(String, usize)>> = BTreeMap::new();
    let mut a = BTreeMap::new();
    let mut c = BTreeMap::new();
    let mut y = BTreeMap::new();
    for (col, h) in headers.iter().enumerate() {
        let dup = |name: &str| DataError::Parse {
            row: 1,
            column: name.to_string(),
            message: "duplicate column".into(),
        };
        match parse_role(h) {
            Some(Role::Covariate(k, name)) => {
                let entry = covs.entry(k).or_default();
                if entry.iter().any(|(n, _)| *n == name) {
                    return Err(dup(h));
                }
                entry.push((name, col));
            }
            Some(Role::Treatment(k)) => {
                if a.insert(k, col).is_some() {
                    return Err(dup(h));
                }
            }
            Some(Role::Censor(k)) => {
                if c.insert(k, col).is_some() {
                    return Err(dup(h));
                }
            }
            Some(Role::Outcome(k)) => {
                if y.insert(k, col).is_some() {
                    return Err(dup(h));
                }
            }
            None if schema.strict => {
                return Err(DataError::Parse {
                    row: 1,
                    column: h.to_string(),
                    message: "column matches no role".into(),
                })
            }
            None => {}
        }
    }
    let tau = a.len();
    if tau == 0 {
        return Err(DataError::MissingColumn {
            name: "A0".into(),
            time: 0,
        });
    }
    let take = |map: &BTreeMap<usize, usize>, prefix: &str, range: std::ops::Range<usize>| {
        range
            .map(|k| {
                map.get(&k)
                    .copied()
                    .ok_or_else(|| DataError::MissingColumn {
                        name: format!("{prefix}{k}"),
                        time: k,
                    })
            })
            .collect::<Result<Vec<_>, _>>()
    };
    let a_cols = take(&a, "A", 0..tau)?;
    let c_cols = take(&c, "C", 1..tau + 1)?;
    let y_cols = take(&y, "Y", 1..tau + 1)?;
    if c.len() != tau || y.len() != tau {
        return Err(DataError::InvalidSpec(format!(
            "expected C1..C{tau} and Y1..Y{tau} to match A0..A{}",
            tau - 1
        )));
    }
    if let Some(k) = covs.keys().find(|k| **k >= tau) {
        return Err(DataError::InvalidSpec(format!(
            "covariate columns at time {k} beyond the last treatment time"
        )));
    }
    let mut names = Vec::with_capacity(tau);
    let mut cov_cols = Vec::with_capacity(tau);
    for k in 0..tau {
        let found = covs.remove(&k).unwrap_or_default();
        let selected: Vec<(String, usize)> = match &schema.covariates {
            Some(sel) => {
                let wanted = sel.get(k).cloned().unwrap_or_default();
                wanted
                    .into_iter()
                    .map(|n| {
                        found
                            .iter()
                            .find(|(f, _)| *f == n)
                            .cloned()
                            .ok_or(DataError::MissingColumn { name: n, time: k })
                    })
                    .collect::<Result<_, _>>()?
            }
            None => found,
        };
        names.push(selected.iter().map(|(n, _)| n.clone()).collect());
        cov_cols.push(selected.iter().map(|(_, c)| *c).collect());
    }
    Ok(Layout {
        tau,
        names,
        cov_cols,
        a_cols,
        c_cols,
        y_cols,
    })
}

fn parse_real(cell: &str, row: usize, column: &str) -> Result<Option<f64>, DataError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>().map(Some).map_err(|_| DataError::Parse {
        row,
        column: column.to_string(),
        message: format!("'{cell}' is not a number"),
    })
}

fn parse_binary(cell: &str, row: usize, column: &str) -> Result<Option<u8>, DataError> {
    match parse_real(cell, row, column)? {
        None => Ok(None),
        Some(v) if v == 0.0 => Ok(Some(0)),
        Some(v) if v == 1.0 => Ok(Some(1)),
        Some(_) => Err(DataError::Parse {
            row,
            column: column.to_string(),
            message: format!("'{}' is not binary", cell.trim()),
        }),
    }
}

/// Read a dataset from CSV text. Row numbers in errors count the header as row 1.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<LongitudinalDataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let lay = layout(&headers, schema)?;
    let mut units = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = idx + 2;
        let cell = |c: usize| rec.get(c).unwrap_or("");
        let name = |c: usize| headers.get(c).unwrap_or("").to_string();
        let mut covariates = Vec::with_capacity(lay.tau);
        for cols in &lay.cov_cols {
            covariates.push(
                cols.iter()
                    .map(|&c| parse_real(cell(c), row, &name(c)))
                    .collect::<Result<Vec<_>, _>>()?,
            );
        }
        let treatment = lay
            .a_cols
            .iter()
            .map(|&c| parse_binary(cell(c), row, &name(c)))
            .collect::<Result<Vec<_>, _>>()?;
        let censor = lay
            .c_cols
            .iter()
            .map(|&c| {
                parse_binary(cell(c), row, &name(c))?.ok_or_else(|| DataError::Parse {
                    row,
                    column: name(c),
                    message: "censoring indicator may not be empty".into(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let outcome = lay
            .y_cols
            .iter()
            .map(|&c| parse_real(cell(c), row, &name(c)))
            .collect::<Result<Vec<_>, _>>()?;
        units.push(UnitRecord {
            covariates,
            treatment,
            censor,
            outcome,
        });
    }
    Ok(LongitudinalDataset::new(lay.names, units)?)
}

pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
) -> Result<LongitudinalDataset, DataError> {
    let f = std::fs::File::open(path.as_ref())?;
    read_csv(std::io::BufReader::new(f), schema)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write in the canonical column order `L0_*, A0, C1, Y1, L1_*, A1, ...`.
pub fn write_csv<W: Write>(dataset: &LongitudinalDataset, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let tau = dataset.tau();
    let mut header = Vec::new();
    for k in 0..tau {
        header.extend(
            dataset
                .covariate_names(k)
                .iter()
                .map(|n| format!("L{k}_{n}")),
        );
        header.push(format!("A{k}"));
        header.push(format!("C{}", k + 1));
        header.push(format!("Y{}", k + 1));
    }
    w.write_record(&header)?;
    for u in dataset.units() {
        let mut rec = Vec::with_capacity(header.len());
        for k in 0..tau {
            rec.extend(u.covariates[k].iter().map(|v| fmt_opt(*v)));
            rec.push(u.treatment[k].map(|a| a.to_string()).unwrap_or_default());
            rec.push(u.censor[k].to_string());
            rec.push(fmt_opt(u.outcome[k]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(dataset: &LongitudinalDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let f = std::fs::File::create(path.as_ref())?;
    write_csv(dataset, std::io::BufWriter::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
L0_x,L0_g,A0,C1,Y1,L1_x,L1_g,A1,C2,Y2
0.25,1,1,0,0,1.5,0,1,0,1
-2,0,0,0,1,3,1,0,1,
0.5,2,1,1,,,,,1,
";

    #[test]
    fn round_trip_is_bit_identical() {
        let ds = read_csv(SMALL.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.tau(), 2);
        assert_eq!(ds.covariate_names(1), &["x".to_string(), "g".to_string()]);
        let mut out = Vec::new();
        write_csv(&ds, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), SMALL);
    }

    #[test]
    fn non_binary_treatment_is_parse_error() {
        let text = SMALL.replace("0.25,1,1,0", "0.25,1,2,0");
        match read_csv(text.as_bytes(), &CsvSchema::default()) {
            Err(DataError::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "A0");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_failure_names_unit() {
        // outcome recorded after censoring at time 1
        let text = SMALL.replace("0.5,2,1,1,,", "0.5,2,1,1,1,");
        match read_csv(text.as_bytes(), &CsvSchema::default()) {
            Err(DataError::Validation(e)) => assert_eq!((e.unit, e.time), (2, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_selection_and_strict_mode() {
        let schema = CsvSchema {
            covariates: Some(vec![vec!["g".into()], vec![]]),
            strict: false,
        };
        let ds = read_csv(SMALL.as_bytes(), &schema).unwrap();
        assert_eq!(ds.covariate_names(0), &["g".to_string()]);
        assert!(ds.covariate_names(1).is_empty());

        let text = SMALL.replacen("L0_x", "id", 1);
        let strict = CsvSchema {
            strict: true,
            ..CsvSchema::default()
        };
        assert!(matches!(
            read_csv(text.as_bytes(), &strict),
            Err(DataError::Parse { .. })
        ));
        assert!(read_csv(text.as_bytes(), &CsvSchema::default()).is_ok());
    }

    #[test]
    fn missing_role_column() {
        let text = "L0_x,A0,Y1\n1,0,1\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &CsvSchema::default()),
            Err(DataError::MissingColumn { .. })
        ));
    }
}
