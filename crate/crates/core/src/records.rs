//! Binary framing shared by checkpoint and language-model files.
//!
//! ```text
//! magic[4] version:u32 { name_len:u32 name[name_len] rank:u32 dims:u64*rank values:f32*prod(dims) }*
//! ```
//!
//! All integers and floats are little-endian. Records run to end of file.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// One named array of `f32` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl Record {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f32>) -> Self {
        Record {
            name: name.into(),
            shape,
            values,
        }
    }

    /// Bytes stored one per value.
    pub fn bytes(name: impl Into<String>, bytes: &[u8]) -> Self {
        Record::new(name, vec![bytes.len()], bytes.iter().map(|&b| b as f32).collect())
    }

    /// Integers stored bit-exactly as pairs of `f32` bit patterns.
    pub fn u64s(name: impl Into<String>, xs: &[u64]) -> Self {
        let values = xs
            .iter()
            .flat_map(|&x| [f32::from_bits(x as u32), f32::from_bits((x >> 32) as u32)])
            .collect();
        Record::new(name, vec![xs.len(), 2], values)
    }

    pub fn f64s(name: impl Into<String>, xs: &[f64]) -> Self {
        let bits: Vec<u64> = xs.iter().map(|x| x.to_bits()).collect();
        Record::u64s(name, &bits)
    }

    pub fn as_bytes(&self) -> Result<Vec<u8>> {
        self.values
            .iter()
            .map(|&v| {
                if (0.0..=255.0).contains(&v) && v.fract() == 0.0 {
                    Ok(v as u8)
                } else {
                    Err(Error::Format(format!("record {} is not a byte string", self.name)))
                }
            })
            .collect()
    }

    pub fn as_u64s(&self) -> Result<Vec<u64>> {
        if self.shape.len() != 2 || self.shape[1] != 2 {
            return Err(Error::Format(format!("record {} is not an integer array", self.name)));
        }
        Ok(self
            .values
            .chunks(2)
            .map(|p| p[0].to_bits() as u64 | ((p[1].to_bits() as u64) << 32))
            .collect())
    }

    pub fn as_f64s(&self) -> Result<Vec<f64>> {
        Ok(self.as_u64s()?.into_iter().map(f64::from_bits).collect())
    }
}

pub fn encode(magic: &[u8; 4], version: u32, records: &[Record]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    for r in records {
        let name = r.name.as_bytes();
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
        for &d in &r.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &r.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated file while reading {what} at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses `bytes`, checking the magic and that the version is one of
/// `versions`. Returns the version and records.
pub fn decode(bytes: &[u8], magic: &[u8; 4], versions: &[u32]) -> Result<(u32, Vec<Record>)> {
    let mut c = Cursor { bytes, pos: 0 };
    let m = c.take(4, "magic")?;
    if m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(m),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = c.u32("version")?;
    if !versions.contains(&version) {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let mut records = Vec::new();
    while c.pos < bytes.len() {
        let n = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(n, "record name")?)
            .map_err(|_| Error::Format("record name is not UTF-8".into()))?
            .to_string();
        let rank = c.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        let mut count: usize = 1;
        for _ in 0..rank {
            let d = usize::try_from(c.u64("dimension")?).map_err(|_| Error::Format("dimension too large".into()))?;
            count = count
                .checked_mul(d)
                .ok_or_else(|| Error::Format(format!("record {name} is too large")))?;
            shape.push(d);
        }
        let raw = c.take(
            count
                .checked_mul(4)
                .ok_or_else(|| Error::Format(format!("record {name} is too large")))?,
            &format!("values of {name}"),
        )?;
        let values = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        records.push(Record { name, shape, values });
    }
    Ok((version, records))
}

pub fn write_file(path: &Path, magic: &[u8; 4], version: u32, records: &[Record]) -> Result<()> {
    let bytes = encode(magic, version, records);
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn read_file(path: &Path, magic: &[u8; 4], versions: &[u32]) -> Result<(u32, Vec<Record>)> {
    decode(&fs::read(path)?, magic, versions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Record> {
        vec![
            Record::new("w", vec![2, 3], vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5, f32::MAX, 1e-30]),
            Record::new("empty", vec![0], vec![]),
            Record::new("scalar", vec![], vec![7.0]),
            Record::bytes("text", "key=value\n".as_bytes()),
            Record::u64s("n", &[0, 1, u64::MAX, 1 << 40]),
            Record::f64s("x", &[0.1, -2.5e300, f64::NAN]),
        ]
    }

    #[test]
    fn round_trip() {
        let bytes = encode(b"TEST", 1, &sample());
        let (v, back) = decode(&bytes, b"TEST", &[1]).unwrap();
        assert_eq!(v, 1);
        assert_eq!(back.len(), 6);
        for (a, b) in sample().iter().zip(&back) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
            let bits = |r: &Record| r.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(back[3].as_bytes().unwrap(), b"key=value\n");
        assert_eq!(back[4].as_u64s().unwrap(), vec![0, 1, u64::MAX, 1 << 40]);
        let x = back[5].as_f64s().unwrap();
        assert_eq!(x[0], 0.1);
        assert!(x[2].is_nan());
    }

    #[test]
    fn rejects_magic_version_and_truncation() {
        let bytes = encode(b"TEST", 1, &sample());
        assert!(decode(&bytes, b"NOPE", &[1]).is_err());
        assert!(decode(&bytes, b"TEST", &[2]).is_err());
        for cut in [0, 3, 7, 9, 20, bytes.len() - 1] {
            assert!(decode(&bytes[..cut], b"TEST", &[1]).is_err(), "cut at {cut}");
        }
    }
}
