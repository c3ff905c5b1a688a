//! Raw trajectory dump.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic     8 bytes  "GCTRAJ\0\x01"
//! hlen      u32      length of the JSON header
//! header    hlen     UTF-8 JSON, see DumpHeader
//! records   repeated until end of file:
//!   rlen    u32      bytes that follow in this record = 8 + 16 dim^2 + 8 modes
//!   time    f64
//!   state   2 dim^2 f64, (re, im) pairs in row-major order
//!   signal  modes f64, per-mode signal integrated since the previous record
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::model::MAX_CONFIGURATIONS;
use crate::trajectories::TrajectoryRecord;
use num_complex::Complex64;

pub const MAGIC: &[u8; 8] = b"GCTRAJ\0\x01";
pub const FORMAT_VERSION: u32 = 1;
/// Largest JSON header accepted by the decoder.
pub const MAX_HEADER_BYTES: u32 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpHeader {
    pub format_version: u32,
    pub master_seed: u64,
    pub trajectory_index: u64,
    pub dim: usize,
    pub modes: usize,
    pub dt: f64,
    /// Free-form description of the run (model, parameters).
    pub parameters: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DumpRecord {
    pub time: f64,
    pub state: CMatrix,
    pub signal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDump {
    pub header: DumpHeader,
    pub records: Vec<DumpRecord>,
}

fn record_len(dim: usize, modes: usize) -> Option<usize> {
    dim.checked_mul(dim)?.checked_mul(16)?.checked_add(8)?.checked_add(modes.checked_mul(8)?)
}

impl TrajectoryDump {
    pub fn from_record(record: &TrajectoryRecord, dt: f64, parameters: serde_json::Value) -> Self {
        let dim = record.states.first().map_or(0, CMatrix::dim);
        let modes = record.signals.first().map_or(0, Vec::len);
        let header = DumpHeader {
            format_version: FORMAT_VERSION,
            master_seed: record.master_seed,
            trajectory_index: record.index,
            dim,
            modes,
            dt,
            parameters,
        };
        let records = record
            .times
            .iter()
            .zip(&record.states)
            .zip(&record.signals)
            .map(|((&time, state), signal)| DumpRecord { time, state: state.clone(), signal: signal.clone() })
            .collect();
        Self { header, records }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        let rlen = record_len(h.dim, h.modes).filter(|&n| n <= u32::MAX as usize).ok_or_else(|| Error::Validation("record too large".into()))?;
        let json = serde_json::to_vec(h).map_err(|e| Error::Validation(format!("dump header: {e}")))?;
        let mut out = Vec::with_capacity(12 + json.len() + self.records.len() * (rlen + 4));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for r in &self.records {
            if r.state.dim() != h.dim || r.signal.len() != h.modes {
                return Err(Error::Validation("record shape does not match the dump header".into()));
            }
            out.extend_from_slice(&(rlen as u32).to_le_bytes());
            out.extend_from_slice(&r.time.to_le_bytes());
            for v in r.state.as_slice() {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }
            for v in &r.signal {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::Parse("not a trajectory dump (bad magic)".into()));
        }
        let hlen = cur.u32()?;
        if hlen > MAX_HEADER_BYTES {
            return Err(Error::Parse(format!("dump header of {hlen} bytes exceeds {MAX_HEADER_BYTES}")));
        }
        let header: DumpHeader =
            serde_json::from_slice(cur.take(hlen as usize)?).map_err(|e| Error::Parse(format!("dump header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported dump version {}", header.format_version)));
        }
        if header.dim == 0 || header.dim > MAX_CONFIGURATIONS || header.modes > MAX_CONFIGURATIONS * 64 {
            return Err(Error::Parse("dump header has an out-of-range shape".into()));
        }
        let expected = record_len(header.dim, header.modes).ok_or_else(|| Error::Parse("record size overflows".into()))?;
        let mut records = Vec::new();
        while !cur.at_end() {
            let rlen = cur.u32()? as usize;
            if rlen != expected {
                return Err(Error::Parse(format!("record {} has length {rlen}, expected {expected}", records.len())));
            }
            let body = cur.take(rlen)?;
            let f = |i: usize| f64::from_le_bytes(body[8 * i..8 * i + 8].try_into().expect("8 bytes"));
            let d2 = header.dim * header.dim;
            let data = (0..d2).map(|k| Complex64::new(f(1 + 2 * k), f(2 + 2 * k))).collect();
            let state = CMatrix::from_vec(header.dim, data)?;
            let signal = (0..header.modes).map(|k| f(1 + 2 * d2 + k)).collect();
            records.push(DumpRecord { time: f(0), state, signal });
        }
        Ok(Self { header, records })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Parse("truncated dump".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrajectoryDump {
        let state = CMatrix::from_fn(2, |x, y| Complex64::new(0.5, if x < y { 0.25 } else if x > y { -0.25 } else { 0.0 }));
        TrajectoryDump {
            header: DumpHeader {
                format_version: FORMAT_VERSION,
                master_seed: 42,
                trajectory_index: 3,
                dim: 2,
                modes: 1,
                dt: 1e-3,
                parameters: serde_json::json!({"model": "dp-monitoring"}),
            },
            records: vec![
                DumpRecord { time: 0.0, state: state.clone(), signal: vec![0.0] },
                DumpRecord { time: 0.5, state, signal: vec![-1.5] },
            ],
        }
    }

    #[test]
    fn roundtrip() {
        let dump = sample();
        let bytes = dump.encode().unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(TrajectoryDump::decode(&bytes).unwrap(), dump);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().encode().unwrap();
        assert!(TrajectoryDump::decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(TrajectoryDump::decode(&bytes[..5]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(TrajectoryDump::decode(&bad).is_err());
        let mut huge = bytes.clone();
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(TrajectoryDump::decode(&huge).is_err());
    }

    #[test]
    fn shape_mismatch_rejected_on_encode() {
        let mut dump = sample();
        dump.records[1].signal.push(1.0);
        assert!(dump.encode().is_err());
    }
}
