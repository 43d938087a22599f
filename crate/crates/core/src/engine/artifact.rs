//! Self-describing binary container for stored values.
//!
//! Layout: magic `IFLA`, format version (u8), value tag (u8), then a
//! tag-specific payload. Integers and floats are little-endian; strings are a
//! u32 byte length followed by UTF-8; sequences are a u64 count followed by
//! their elements.

use std::collections::BTreeMap;

use super::value::{Column, ColumnData, FeatureMatrix, Model, Predictions, SimBlob, Table, Value};

pub const MAGIC: &[u8; 4] = b"IFLA";
pub const FORMAT_VERSION: u8 = 1;

const TAG_TABLE: u8 = 1;
const TAG_FEATURES: u8 = 2;
const TAG_MODEL: u8 = 3;
const TAG_PREDICTIONS: u8 = 4;
const TAG_SCALAR: u8 = 5;
const TAG_SIM: u8 = 6;

/// Bytes before a sim payload's padding: header, tag and declared size.
const SIM_OVERHEAD: u64 = 4 + 1 + 1 + 8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("not an artifact (bad magic)")]
    BadMagic,
    #[error("unsupported artifact format version {0}")]
    Version(u8),
    #[error("unknown value tag {0}")]
    Tag(u8),
    #[error("truncated artifact")]
    Truncated,
    #[error("malformed artifact: {0}")]
    Malformed(&'static str),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|x| self.f64(*x));
    }
    fn strs(&mut self, v: &[String]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|s| self.str(s));
    }
    fn label_map(&mut self, m: &BTreeMap<String, Vec<String>>) {
        self.u64(m.len() as u64);
        for (k, v) in m {
            self.str(k);
            self.strs(v);
        }
    }
}

pub fn encode(value: &Value) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(64));
    w.0.extend_from_slice(MAGIC);
    w.u8(FORMAT_VERSION);
    match value {
        Value::Table(t) => {
            w.u8(TAG_TABLE);
            w.u64(t.columns.len() as u64);
            for c in &t.columns {
                w.str(&c.name);
                match &c.data {
                    ColumnData::Float(v) => {
                        w.u8(0);
                        w.f64s(v);
                    }
                    ColumnData::Text(v) => {
                        w.u8(1);
                        w.strs(v);
                    }
                }
            }
        }
        Value::Features(f) => {
            w.u8(TAG_FEATURES);
            w.u64(f.rows as u64);
            w.strs(&f.names);
            w.f64s(&f.data);
            w.label_map(&f.labels);
        }
        Value::Model(m) => {
            w.u8(TAG_MODEL);
            w.strs(&m.features);
            w.f64s(&m.weights);
            w.f64(m.bias);
            w.str(&m.label);
            w.strs(&m.classes);
        }
        Value::Predictions(p) => {
            w.u8(TAG_PREDICTIONS);
            w.f64s(&p.scores);
            w.strs(&p.labels);
            w.strs(&p.classes);
            w.label_map(&p.truth);
        }
        Value::Scalar(x) => {
            w.u8(TAG_SCALAR);
            w.f64(*x);
        }
        Value::Sim(s) => {
            w.u8(TAG_SIM);
            w.u64(s.size_bytes);
            let pad = s.size_bytes.saturating_sub(SIM_OVERHEAD) as usize;
            w.0.resize(w.0.len() + pad, 0);
        }
    }
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).ok_or(DecodeError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(DecodeError::Truncated)?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self, elem: usize) -> Result<usize, DecodeError> {
        let n = self.u64()? as usize;
        // reject counts the remaining bytes cannot possibly hold
        if n.saturating_mul(elem) > self.buf.len() - self.pos {
            return Err(DecodeError::Truncated);
        }
        Ok(n)
    }
    fn str(&mut self) -> Result<String, DecodeError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| DecodeError::Malformed("utf-8"))
    }
    fn f64s(&mut self) -> Result<Vec<f64>, DecodeError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn strs(&mut self) -> Result<Vec<String>, DecodeError> {
        let n = self.len(4)?;
        (0..n).map(|_| self.str()).collect()
    }
    fn pair(&mut self) -> Result<[String; 2], DecodeError> {
        let v = self.strs()?;
        v.try_into()
            .map_err(|_| DecodeError::Malformed("class pair"))
    }
    fn label_map(&mut self) -> Result<BTreeMap<String, Vec<String>>, DecodeError> {
        let n = self.len(12)?;
        (0..n).map(|_| Ok((self.str()?, self.strs()?))).collect()
    }
}

pub fn decode(buf: &[u8]) -> Result<Value, DecodeError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4).map_err(|_| DecodeError::BadMagic)? != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    let version = r.u8()?;
    if version != FORMAT_VERSION {
        return Err(DecodeError::Version(version));
    }
    let value = match r.u8()? {
        TAG_TABLE => {
            let n = r.len(5)?;
            let mut columns = Vec::with_capacity(n);
            for _ in 0..n {
                let name = r.str()?;
                let data = match r.u8()? {
                    0 => ColumnData::Float(r.f64s()?),
                    1 => ColumnData::Text(r.strs()?),
                    _ => return Err(DecodeError::Malformed("column type")),
                };
                columns.push(Column { name, data });
            }
            Value::Table(Table { columns })
        }
        TAG_FEATURES => {
            let rows = r.u64()? as usize;
            let names = r.strs()?;
            let data = r.f64s()?;
            if data.len() != rows * names.len() {
                return Err(DecodeError::Malformed("matrix shape"));
            }
            let labels = r.label_map()?;
            Value::Features(FeatureMatrix {
                names,
                rows,
                data,
                labels,
            })
        }
        TAG_MODEL => Value::Model(Model {
            features: r.strs()?,
            weights: r.f64s()?,
            bias: r.f64()?,
            label: r.str()?,
            classes: r.pair()?,
        }),
        TAG_PREDICTIONS => Value::Predictions(Predictions {
            scores: r.f64s()?,
            labels: r.strs()?,
            classes: r.pair()?,
            truth: r.label_map()?,
        }),
        TAG_SCALAR => Value::Scalar(r.f64()?),
        TAG_SIM => {
            let size_bytes = r.u64()?;
            r.pos = buf.len();
            Value::Sim(SimBlob { size_bytes })
        }
        t => return Err(DecodeError::Tag(t)),
    };
    if r.pos != buf.len() {
        return Err(DecodeError::Malformed("trailing bytes"));
    }
    Ok(value)
}
