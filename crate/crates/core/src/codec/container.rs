//! `.s2c` byte layout (all integers little-endian):
//!
//! ```text
//! "S2C1" version:u8 variant:u8 lambda:u8
//! orig_h:u32 orig_w:u32 padded_h:u32 padded_w:u32
//! z_len:u32 z_stream  y_count:u16 (y_len:u32 y_stream)*
//! ```

use super::CodingError;
use crate::error::{Result, S2cError};

pub const MAGIC: &[u8; 4] = b"S2C1";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u8,
    pub variant_id: u8,
    pub lambda_index: u8,
    pub orig_height: u32,
    pub orig_width: u32,
    pub padded_height: u32,
    pub padded_width: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedObject {
    pub header: Header,
    pub z_stream: Vec<u8>,
    pub y_streams: Vec<Vec<u8>>,
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or(S2cError::Coding(CodingError::Truncated))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn stream(&mut self) -> Result<Vec<u8>> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }
}

impl CompressedObject {
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(self.total_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[h.version, h.variant_id, h.lambda_index]);
        for v in [h.orig_height, h.orig_width, h.padded_height, h.padded_width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.z_stream.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.z_stream);
        out.extend_from_slice(&(self.y_streams.len() as u16).to_le_bytes());
        for s in &self.y_streams {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s);
        }
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader { data, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(S2cError::Incompatible("not an .s2c stream (bad magic)".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(S2cError::Incompatible(format!(
                "stream version {version}, this build reads {VERSION}"
            )));
        }
        let header = Header {
            version,
            variant_id: r.u8()?,
            lambda_index: r.u8()?,
            orig_height: r.u32()?,
            orig_width: r.u32()?,
            padded_height: r.u32()?,
            padded_width: r.u32()?,
        };
        let z_stream = r.stream()?;
        let count = r.u16()?;
        let y_streams = (0..count).map(|_| r.stream()).collect::<Result<_>>()?;
        if r.pos != data.len() {
            return Err(CodingError::TrailingData(data.len() - r.pos).into());
        }
        Ok(Self {
            header,
            z_stream,
            y_streams,
        })
    }

    /// Serialized size in bytes.
    pub fn total_len(&self) -> usize {
        self.overhead_len() + self.z_stream.len() + self.y_streams.iter().map(Vec::len).sum::<usize>()
    }

    /// Bytes that are pure framing: fixed header plus length prefixes.
    pub fn overhead_len(&self) -> usize {
        4 + 3 + 16 + 4 + 2 + 4 * self.y_streams.len()
    }

    /// Actual bits per original pixel.
    pub fn bpp(&self) -> f64 {
        let px = f64::from(self.header.orig_height) * f64::from(self.header.orig_width);
        self.total_len() as f64 * 8.0 / px
    }
}
