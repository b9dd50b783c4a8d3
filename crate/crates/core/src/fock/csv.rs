//! Matrix CSV files: header `row,col,value,sigma`, row-major, optional `# config_hash:` comment line.

use crate::error::{Error, Result};
use crate::json::fmt17;
use nalgebra::DMatrix;
use std::io::{Read, Write};

/// A matrix with optional per-entry standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixCsv {
    pub value: DMatrix<f64>,
    pub sigma: Option<DMatrix<f64>>,
    pub config_hash: Option<String>,
}

pub fn write_matrix_csv<W: Write>(mut w: W, value: &DMatrix<f64>, sigma: Option<&DMatrix<f64>>, config_hash: Option<&str>) -> Result<()> {
    if let Some(s) = sigma {
        if s.shape() != value.shape() {
            return Err(Error::InvalidInput(format!("sigma shape {:?} differs from value shape {:?}", s.shape(), value.shape())));
        }
    }
    if let Some(h) = config_hash {
        writeln!(w, "# config_hash: {h}")?;
    }
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(["row", "col", "value", "sigma"]).map_err(csv_err)?;
    for r in 0..value.nrows() {
        for c in 0..value.ncols() {
            let s = sigma.map(|s| fmt17(s[(r, c)])).unwrap_or_default();
            out.write_record([r.to_string(), c.to_string(), fmt17(value[(r, c)]), s]).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(r: R) -> Result<MatrixCsv> {
    let mut text = String::new();
    let mut r = r;
    r.read_to_string(&mut text)?;
    let config_hash = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix("# config_hash:").map(|h| h.trim().to_string()));
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != ["row", "col", "value", "sigma"] {
        return Err(Error::Parse(format!("matrix csv: unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut entries = Vec::new();
    let (mut nr, mut nc) = (0, 0);
    let mut any_sigma = false;
    let mut all_sigma = true;
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let parse_idx = |i: usize| field(i).parse::<usize>().map_err(|e| Error::Parse(format!("matrix csv record {}: {e}", line + 1)));
        let parse_f = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("matrix csv record {}: {e}", line + 1)));
        let (row, col) = (parse_idx(0)?, parse_idx(1)?);
        let value = parse_f(field(2))?;
        let sigma = if field(3).is_empty() { None } else { Some(parse_f(field(3))?) };
        any_sigma |= sigma.is_some();
        all_sigma &= sigma.is_some();
        nr = nr.max(row + 1);
        nc = nc.max(col + 1);
        entries.push((row, col, value, sigma));
    }
    if any_sigma && !all_sigma {
        return Err(Error::Parse("matrix csv: sigma column is only partially filled".into()));
    }
    if entries.len() != nr * nc {
        return Err(Error::Parse(format!("matrix csv: {} records for a {nr}x{nc} matrix", entries.len())));
    }
    let mut value = DMatrix::from_element(nr, nc, f64::NAN);
    let mut sigma = any_sigma.then(|| DMatrix::zeros(nr, nc));
    for (row, col, v, s) in entries {
        if !value[(row, col)].is_nan() {
            return Err(Error::Parse(format!("matrix csv: duplicate entry ({row}, {col})")));
        }
        value[(row, col)] = v;
        if let (Some(m), Some(s)) = (sigma.as_mut(), s) {
            m[(row, col)] = s;
        }
    }
    Ok(MatrixCsv { value, sigma, config_hash })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("matrix csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_sigma_and_hash() {
        let v = DMatrix::<f64>::from_row_slice(2, 3, &[0.1, -2.5e-17, 1.0 / 3.0, 4.0, 5.5, -6.0]);
        let s = v.map(|x| x.abs() * 0.01);
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &v, Some(&s), Some("abc123")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# config_hash: abc123\nrow,col,value,sigma\n0,0,"));
        assert!(!text.contains('\r'));
        let back = read_matrix_csv(buf.as_slice()).unwrap();
        assert_eq!(back.value, v);
        assert_eq!(back.sigma, Some(s));
        assert_eq!(back.config_hash.as_deref(), Some("abc123"));
    }

    #[test]
    fn theory_matrix_has_empty_sigma() {
        let v = DMatrix::<f64>::identity(2, 2);
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &v, None, None).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "0,0,1.0000000000000000e0,");
        let back = read_matrix_csv(buf.as_slice()).unwrap();
        assert_eq!(back.value, v);
        assert!(back.sigma.is_none());
    }

    #[test]
    fn rejects_missing_entries() {
        let text = "row,col,value,sigma\n0,0,1,\n1,1,1,\n";
        assert!(read_matrix_csv(text.as_bytes()).is_err());
        let text = "r,c,v,s\n0,0,1,\n";
        assert!(read_matrix_csv(text.as_bytes()).is_err());
    }
}
