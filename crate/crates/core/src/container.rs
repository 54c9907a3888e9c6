//! Bitstream container.
//!
//! Layout (all multi-byte fields big-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SDDC"
//! 4       1     version (1)
//! 5       2     width (original, pre-padding)
//! 7       2     height
//! 9       2     frame_count
//! 11      1     intra_period
//! 12      1     lambda_index
//! 13      1     flags (bit0 = no_long_term, bit1 = no_detail)
//! 14      ...   frame records
//! ```
//!
//! Each frame record is one type byte (0 = intra, 1 = inter) followed by
//! length-prefixed segments (u32 length + payload). Intra records carry one
//! segment; inter records carry four: motion-hyper, motion-y, frame-hyper,
//! frame-y. The sum of all headers and segment lengths equals the file size
//! exactly; readers reject trailing or missing bytes.

use crate::error::{CodecError, Result};
use crate::model::AblationFlags;

pub const MAGIC: [u8; 4] = *b"SDDC";
pub const VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 14;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FrameRecord {
    Intra {
        payload: Vec<u8>,
    },
    Inter {
        motion_hyper: Vec<u8>,
        motion_y: Vec<u8>,
        frame_hyper: Vec<u8>,
        frame_y: Vec<u8>,
    },
}

impl FrameRecord {
    pub fn segments(&self) -> Vec<&[u8]> {
        match self {
            FrameRecord::Intra { payload } => vec![payload],
            FrameRecord::Inter {
                motion_hyper,
                motion_y,
                frame_hyper,
                frame_y,
            } => vec![motion_hyper, motion_y, frame_hyper, frame_y],
        }
    }

    /// Serialized size: type byte plus length-prefixed segments.
    pub fn byte_len(&self) -> usize {
        1 + self
            .segments()
            .iter()
            .map(|s| 4 + s.len())
            .sum::<usize>()
    }

    pub fn is_intra(&self) -> bool {
        matches!(self, FrameRecord::Intra { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Container {
    pub width: u16,
    pub height: u16,
    pub intra_period: u8,
    pub lambda_index: u8,
    pub flags: AblationFlags,
    pub frames: Vec<FrameRecord>,
}

impl Container {
    /// Total serialized size; the accounting identity every file satisfies.
    pub fn byte_len(&self) -> usize {
        HEADER_BYTES + self.frames.iter().map(|f| f.byte_len()).sum::<usize>()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.width.to_be_bytes());
        out.extend_from_slice(&self.height.to_be_bytes());
        out.extend_from_slice(&(self.frames.len() as u16).to_be_bytes());
        out.push(self.intra_period);
        out.push(self.lambda_index);
        out.push(self.flags.to_byte());
        for rec in &self.frames {
            out.push(if rec.is_intra() { 0 } else { 1 });
            for seg in rec.segments() {
                out.extend_from_slice(&(seg.len() as u32).to_be_bytes());
                out.extend_from_slice(seg);
            }
        }
        debug_assert_eq!(out.len(), self.byte_len());
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Container> {
        let corrupt = |m: &str| CodecError::CorruptBitstream(m.to_string());
        if data.len() < HEADER_BYTES {
            return Err(corrupt("file shorter than header"));
        }
        if data[0..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        if data[4] != VERSION {
            return Err(CodecError::CorruptBitstream(format!(
                "unsupported version {}",
                data[4]
            )));
        }
        let width = u16::from_be_bytes([data[5], data[6]]);
        let height = u16::from_be_bytes([data[7], data[8]]);
        let frame_count = u16::from_be_bytes([data[9], data[10]]) as usize;
        let intra_period = data[11];
        let lambda_index = data[12];
        let flags = AblationFlags::from_byte(data[13]);

        let mut pos = HEADER_BYTES;
        let read_segment = |pos: &mut usize| -> Result<Vec<u8>> {
            if *pos + 4 > data.len() {
                return Err(corrupt("truncated segment length"));
            }
            let len =
                u32::from_be_bytes([data[*pos], data[*pos + 1], data[*pos + 2], data[*pos + 3]])
                    as usize;
            *pos += 4;
            if *pos + len > data.len() {
                return Err(corrupt("truncated segment payload"));
            }
            let seg = data[*pos..*pos + len].to_vec();
            *pos += len;
            Ok(seg)
        };

        let mut frames = Vec::with_capacity(frame_count);
        for _ in 0..frame_count {
            if pos >= data.len() {
                return Err(corrupt("missing frame record"));
            }
            let ftype = data[pos];
            pos += 1;
            match ftype {
                0 => frames.push(FrameRecord::Intra {
                    payload: read_segment(&mut pos)?,
                }),
                1 => frames.push(FrameRecord::Inter {
                    motion_hyper: read_segment(&mut pos)?,
                    motion_y: read_segment(&mut pos)?,
                    frame_hyper: read_segment(&mut pos)?,
                    frame_y: read_segment(&mut pos)?,
                }),
                t => {
                    return Err(CodecError::CorruptBitstream(format!(
                        "unknown frame type {t}"
                    )))
                }
            }
        }
        if pos != data.len() {
            return Err(corrupt("trailing bytes after last frame record"));
        }
        Ok(Container {
            width,
            height,
            intra_period,
            lambda_index,
            flags,
            frames,
        })
    }
}
