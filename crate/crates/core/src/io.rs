//! CSV matrix and data-file formats.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimators::{ObservedData, PotentialOutcomes};
use crate::layout::{Assignment, IndexLayout};
use crate::prob::{self, Rational};

/// Shortest decimal that parses back to the same double.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes a matrix with a header row of 1-based column indices. Entries are
/// exact fractions when `exact` is given, shortest round-trip decimals otherwise.
pub fn write_matrix_csv<W: Write>(
    w: W,
    m: &DMatrix<f64>,
    exact: Option<&[Rational]>,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record((1..=m.ncols()).map(|j| j.to_string()))?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| match exact {
                Some(e) => prob::format(&e[i * m.ncols() + j]),
                None => format_float(m[(i, j)]),
            })
            .collect();
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// A matrix read back from CSV. `exact` is present when every entry was an
/// integer or a fraction, so the rational values are the true ones.
#[derive(Debug, Clone)]
pub struct MatrixCsv {
    pub values: DMatrix<f64>,
    pub exact: Option<Vec<Rational>>,
}

pub fn read_matrix_csv<R: Read>(r: R) -> Result<MatrixCsv> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let header = rdr.headers()?.clone();
    let cols = header.len();
    for (j, h) in header.iter().enumerate() {
        if h.parse::<usize>().ok() != Some(j + 1) {
            return Err(Error::InvalidInput(format!(
                "matrix header column {} is '{h}', expected {}",
                j + 1,
                j + 1
            )));
        }
    }
    let mut values = Vec::new();
    let mut exact = Vec::new();
    let mut all_exact = true;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(Error::InvalidInput(format!(
                "matrix row {} has {} entries, expected {cols}",
                rows + 1,
                rec.len()
            )));
        }
        for field in rec.iter() {
            let q = prob::parse(field)?;
            all_exact &= !field.contains(['.', 'e', 'E']);
            values.push(prob::to_f64(&q));
            exact.push(q);
        }
        rows += 1;
    }
    if rows != cols {
        return Err(Error::InvalidInput(format!(
            "matrix has {rows} rows and {cols} columns"
        )));
    }
    Ok(MatrixCsv {
        values: DMatrix::from_row_slice(rows, cols, &values),
        exact: all_exact.then_some(exact),
    })
}

/// `flat_index,arm,unit,value` rows for a kn-vector.
pub fn write_vector_csv<W: Write>(
    w: W,
    layout: &IndexLayout,
    v: &[f64],
    exact: Option<&[Rational]>,
) -> Result<()> {
    layout.ensure_len(v.len(), "vector")?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["flat_index", "arm", "unit", "value"])?;
    for (a, &x) in v.iter().enumerate() {
        let (r, i) = layout.arm_unit(a);
        let value = match exact {
            Some(e) => prob::format(&e[a]),
            None => format_float(x),
        };
        out.write_record([
            (a + 1).to_string(),
            (r + 1).to_string(),
            (i + 1).to_string(),
            value,
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn expect_header(rdr: &mut csv::Reader<impl Read>, want: &[&str]) -> Result<()> {
    let header = rdr.headers()?;
    if header.len() < want.len() || header.iter().zip(want).any(|(h, w)| h != *w) {
        return Err(Error::InvalidInput(format!(
            "expected columns {}, found {}",
            want.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn parse_id(field: &str, what: &str) -> Result<usize> {
    match field.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v - 1),
        _ => Err(Error::InvalidInput(format!(
            "{what} '{field}' is not a positive integer"
        ))),
    }
}

fn parse_real(field: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::InvalidInput(format!("'{field}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::NonFinite("csv value"));
    }
    Ok(v)
}

/// Long format `unit_id,arm,y`; every (unit, arm) pair exactly once.
pub fn read_outcomes_csv<R: Read>(r: R) -> Result<PotentialOutcomes> {
    let mut rdr = reader(r);
    expect_header(&mut rdr, &["unit_id", "arm", "y"])?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push((
            parse_id(&rec[0], "unit_id")?,
            parse_id(&rec[1], "arm")?,
            parse_real(&rec[2])?,
        ));
    }
    let n = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let k = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    let layout = IndexLayout::new(k, n)?;
    let mut y = vec![None; layout.len()];
    for (i, r, v) in rows {
        let slot = &mut y[layout.flat(r, i)];
        if slot.is_some() {
            return Err(Error::InvalidInput(format!(
                "unit {} arm {} listed twice",
                i + 1,
                r + 1
            )));
        }
        *slot = Some(v);
    }
    let y = y
        .into_iter()
        .enumerate()
        .map(|(a, v)| {
            v.ok_or_else(|| {
                let (r, i) = layout.arm_unit(a);
                Error::InvalidInput(format!("missing outcome for unit {} arm {}", i + 1, r + 1))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PotentialOutcomes::new(layout, y)
}

/// `unit_id,x1,...,xl`, one row per unit 1..n.
pub fn read_covariates_csv<R: Read>(r: R) -> Result<DMatrix<f64>> {
    let mut rdr = reader(r);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("unit_id") {
        return Err(Error::InvalidInput(
            "covariate file must start with a unit_id column".into(),
        ));
    }
    let l = header.len() - 1;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let x = rec
            .iter()
            .skip(1)
            .map(parse_real)
            .collect::<Result<Vec<_>>>()?;
        rows.push((parse_id(&rec[0], "unit_id")?, x));
    }
    rows.sort_by_key(|r| r.0);
    for (expect, (id, _)) in rows.iter().enumerate() {
        if *id != expect {
            return Err(Error::InvalidInput(format!(
                "covariate unit ids must be 1..n, found {}",
                id + 1
            )));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), l, |i, j| rows[i].1[j]))
}

/// `unit_id,arm_assigned,y_obs`, one row per unit 1..n.
pub fn read_observed_csv<R: Read>(r: R, k: usize) -> Result<ObservedData> {
    let mut rdr = reader(r);
    expect_header(&mut rdr, &["unit_id", "arm_assigned", "y_obs"])?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push((
            parse_id(&rec[0], "unit_id")?,
            parse_id(&rec[1], "arm_assigned")?,
            parse_real(&rec[2])?,
        ));
    }
    rows.sort_by_key(|r| r.0);
    for (expect, row) in rows.iter().enumerate() {
        if row.0 != expect {
            return Err(Error::InvalidInput(format!(
                "observed unit ids must be 1..n, found {}",
                row.0 + 1
            )));
        }
    }
    let layout = IndexLayout::new(k, rows.len())?;
    let assignment = Assignment::new(rows.iter().map(|r| r.1).collect(), &layout)?;
    let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
    ObservedData::new(layout, assignment, &y)
}

/// `unit_id,arm,m`: WLS weights in long format.
pub fn read_weights_csv<R: Read>(r: R, layout: &IndexLayout) -> Result<Vec<f64>> {
    let mut rdr = reader(r);
    expect_header(&mut rdr, &["unit_id", "arm", "m"])?;
    let mut m = vec![None; layout.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let (i, r) = (parse_id(&rec[0], "unit_id")?, parse_id(&rec[1], "arm")?);
        if i >= layout.n() || r >= layout.k() {
            return Err(Error::InvalidInput(format!(
                "weight for unit {} arm {} out of range",
                i + 1,
                r + 1
            )));
        }
        m[layout.flat(r, i)] = Some(parse_real(&rec[2])?);
    }
    m.into_iter()
        .map(|v| {
            v.ok_or_else(|| {
                Error::InvalidInput("weights file misses some (unit, arm) pairs".into())
            })
        })
        .collect()
}
