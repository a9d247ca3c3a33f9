//! Grid-function files: CSV with one value per line, or raw little-endian
//! `f64` preceded by the sample count as a little-endian `u64`.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dyadic::{GridFunction, GridSpec};
use crate::{Error, Result};

pub fn write_csv<W: Write>(mut w: W, values: &[f64]) -> Result<()> {
    for v in values {
        writeln!(w, "{v:e}")?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(
            t.parse()
                .map_err(|_| Error::Format(format!("line {}: bad value `{t}`", i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_bin<W: Write>(mut w: W, values: &[f64]) -> Result<()> {
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_bin<R: Read>(mut r: R) -> Result<Vec<f64>> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    let n = u64::from_le_bytes(head) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != n * 8 {
        return Err(Error::Format(format!(
            "header declares {n} values, payload holds {} bytes",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn is_bin(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("bin" | "f64" | "raw"))
}

/// Reads values by extension (`.bin`/`.f64`/`.raw` binary, anything else CSV).
pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    let f = std::fs::File::open(path)?;
    if is_bin(path) {
        read_bin(f)
    } else {
        read_csv(f)
    }
}

pub fn write_values(path: &Path, values: &[f64]) -> Result<()> {
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    if is_bin(path) {
        write_bin(&mut f, values)?;
    } else {
        write_csv(&mut f, values)?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_grid_function(path: &Path, spec: GridSpec) -> Result<GridFunction> {
    GridFunction::new(spec, read_values(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_bin_round_trip() {
        let v = vec![1.0, -2.5, 3.0e-300, 0.1];
        let mut buf = Vec::new();
        write_csv(&mut buf, &v).unwrap();
        assert_eq!(read_csv(&buf[..]).unwrap(), v);
        let mut buf = Vec::new();
        write_bin(&mut buf, &v).unwrap();
        assert_eq!(buf.len(), 8 + 32);
        assert_eq!(&buf[..8], &4u64.to_le_bytes());
        assert_eq!(read_bin(&buf[..]).unwrap(), v);
        assert!(read_bin(&buf[..20]).is_err());
        assert!(read_csv("1\nx\n".as_bytes()).is_err());
    }
}
