//! The `EFLD1` field-file format: one JSON header line, then the payload as
//! little-endian `f64`, node-major and component-minor.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

pub const MAGIC: &str = "EFLD1";
pub const LAYOUT: &str = "row-major-x-fastest";
pub const DTYPE: &str = "f64-le";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub magic: String,
    pub dims: [usize; 3],
    pub spacing: f64,
    pub origin: [f64; 3],
    pub components: usize,
    pub layout: String,
    pub dtype: String,
}

impl Header {
    pub fn for_field(f: &Field<f64>) -> Self {
        Self {
            magic: MAGIC.into(),
            dims: f.grid.dims,
            spacing: f.grid.spacing,
            origin: f.grid.origin,
            components: f.components,
            layout: LAYOUT.into(),
            dtype: DTYPE.into(),
        }
    }

    fn validate(&self) -> Result<Grid<f64>> {
        if self.magic != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", self.magic)));
        }
        if self.layout != LAYOUT || self.dtype != DTYPE {
            return Err(Error::Format(format!(
                "unsupported layout/dtype {}/{}",
                self.layout, self.dtype
            )));
        }
        if self.components == 0 {
            return Err(Error::Format("zero components".into()));
        }
        Grid::new(self.dims, self.spacing, self.origin).map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn write_field<W: Write>(mut w: W, f: &Field<f64>) -> Result<()> {
    if !f.is_finite() {
        return Err(Error::Format("field contains non-finite values".into()));
    }
    let header = serde_json::to_string(&Header::for_field(f)).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(header.as_bytes())?;
    w.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(f.data.len() * 8);
    for v in &f.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_field<R: Read>(r: R) -> Result<Field<f64>> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("missing header terminator".into()));
    }
    line.pop();
    let header: Header = serde_json::from_slice(&line).map_err(|e| Error::Format(format!("header: {e}")))?;
    let grid = header.validate()?;
    let expected = grid.len() * header.components * 8;
    let mut payload = Vec::with_capacity(expected);
    r.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload has {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("payload contains non-finite values".into()));
    }
    Field::from_data(grid, header.components, data)
}

pub fn save(path: impl AsRef<Path>, f: &Field<f64>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_field(std::io::BufWriter::new(file), f)
}

pub fn load(path: impl AsRef<Path>) -> Result<Field<f64>> {
    read_field(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Field<f64> {
        let g = Grid::new([3, 4, 3], 0.5, [0.0, 1.0, -2.0]).unwrap();
        Field::from_fn(g, 2, |x| vec![x[0] + 10.0 * x[1], -x[2]])
    }

    #[test]
    fn header_is_exact() {
        let mut buf = Vec::new();
        write_field(&mut buf, &sample()).unwrap();
        let end = buf.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(
            std::str::from_utf8(&buf[..end]).unwrap(),
            r#"{"magic":"EFLD1","dims":[3,4,3],"spacing":0.5,"origin":[0.0,1.0,-2.0],"components":2,"layout":"row-major-x-fastest","dtype":"f64-le"}"#
        );
        assert_eq!(buf.len() - end - 1, 36 * 2 * 8);
        // second node, first component: x = 0.5, y = 1
        assert_eq!(&buf[end + 1 + 16..end + 1 + 24], &10.5f64.to_le_bytes());
    }

    #[test]
    fn round_trip() {
        let f = sample();
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        assert_eq!(read_field(&buf[..]).unwrap(), f);
    }

    #[test]
    fn rejects_corrupt_files() {
        let mut buf = Vec::new();
        write_field(&mut buf, &sample()).unwrap();
        buf.pop();
        assert!(matches!(read_field(&buf[..]), Err(Error::Format(_))));
        assert!(read_field(&b"{\"magic\":\"EFLD2\"}\n"[..]).is_err());
        let mut f = sample();
        f.data[0] = f64::NAN;
        assert!(write_field(Vec::new(), &f).is_err());
    }
}
