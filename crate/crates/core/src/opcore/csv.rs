//! Matrix dumps: row-major CSV, each entry `re+imj` with 17 significant digits.

use std::io::Write;
use std::path::Path;

use crate::opcore::dense::Mat;
use crate::{Error, Result, C64};

pub fn format_entry(z: C64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{:.16e}{}{:.16e}j", z.re, sign, z.im.abs())
}

pub fn parse_entry(s: &str) -> Result<C64> {
    let s = s.trim();
    let body = s.strip_suffix('j').ok_or_else(|| Error::Numerical(format!("entry {s:?} lacks 'j'")))?;
    // The split is the first sign that does not follow an exponent marker.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && bytes[i - 1] != b'e' && bytes[i - 1] != b'E')
        .ok_or_else(|| Error::Numerical(format!("entry {s:?} has no imaginary part")))?;
    let bad = |_| Error::Numerical(format!("unparsable entry {s:?}"));
    let re: f64 = body[..split].parse().map_err(bad)?;
    let im: f64 = body[split..].parse().map_err(bad)?;
    Ok(C64::new(re, im))
}

pub fn to_csv(m: &Mat) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_entry(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, m: &Mat) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(to_csv(m).as_bytes())?;
    f.flush()
}

pub fn from_csv(text: &str) -> Result<Mat> {
    let rows: Vec<Vec<C64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(parse_entry).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Numerical("ragged CSV matrix".into()));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
