//! Plain-text and image export of nodal fields.

use super::{Grid2D, ScalarField};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

const CSV_HEADER: &str = "n,xmin,xmax";

/// Writes `n,xmin,xmax`, the corresponding values, then one value per line
/// in storage order. `{:.16e}` keeps 17 significant digits, enough for an
/// exact round trip.
pub fn write_csv(field: &ScalarField, path: &Path) -> Result<()> {
    let n = field.grid().n();
    let mut out = String::with_capacity(26 * field.data().len() + 32);
    writeln!(out, "{CSV_HEADER}").unwrap();
    writeln!(out, "{n},-1,1").unwrap();
    for v in field.data() {
        writeln!(out, "{v:.16e}").unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<ScalarField> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut meta = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV".into()))?;
    if meta.trim() == CSV_HEADER {
        meta = lines
            .next()
            .ok_or_else(|| Error::Format("missing grid line".into()))?;
    }
    let parts: Vec<&str> = meta.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Format(format!("bad grid line {meta:?}")));
    }
    let n: usize = parts[0]
        .parse()
        .map_err(|_| Error::Format(format!("bad grid size {:?}", parts[0])))?;
    let (xmin, xmax): (f64, f64) = match (parts[1].parse(), parts[2].parse()) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return Err(Error::Format(format!("bad domain in {meta:?}"))),
    };
    if xmin != -1.0 || xmax != 1.0 {
        return Err(Error::Format(format!("unsupported domain [{xmin}, {xmax}]")));
    }
    let grid = Grid2D::new(n)?;
    let data = lines
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad value {l:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if data.len() != grid.len() {
        return Err(Error::Format(format!(
            "expected {} values, found {}",
            grid.len(),
            data.len()
        )));
    }
    ScalarField::new(grid, data)
}

/// Sidecar holding the scaling of a PGM image: `<path>.txt`.
pub fn pgm_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

/// Binary 8-bit greyscale image, linearly scaled from `[min, max]` to
/// `[0, 255]`; the top image row is `x2 = 1`. The scaling is written to
/// [`pgm_sidecar`].
pub fn write_pgm(field: &ScalarField, path: &Path) -> Result<()> {
    let n = field.grid().n();
    let (lo, hi) = (field.min(), field.max());
    let span = hi - lo;
    let mut bytes = format!("P5\n{n} {n}\n255\n").into_bytes();
    for i2 in (0..n).rev() {
        for i1 in 0..n {
            let v = field.data()[field.grid().index(i1, i2)];
            let level = if span > 0.0 {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            };
            bytes.push(level);
        }
    }
    fs::write(path, bytes)?;
    fs::write(
        pgm_sidecar(path),
        format!("min {lo:.16e}\nmax {hi:.16e}\n"),
    )?;
    Ok(())
}
