//! `FGT1` trace files.
//!
//! ```text
//! "FGT1" | u32 version=1 | u32 d | u32 N | u32 flags (bit0: eoc_prob present)
//! N·d × f32 hidden (row-major) | [N × f32 eoc_prob] | u32 meta_len | meta_len bytes UTF-8
//! ```

use std::path::Path;

use crate::binio::{put_u32, read_file, to_u32, write_atomic, ByteReader};
use crate::error::{Error, Result};

use super::trace::Trace;

pub const MAGIC: &[u8; 4] = b"FGT1";
pub const VERSION: u32 = 1;
const FLAG_EOC: u32 = 1;

pub fn encode(trace: &Trace) -> Result<Vec<u8>> {
    let n = trace.len();
    let eoc = trace.eoc_prob();
    let mut out = Vec::with_capacity(24 + 4 * trace.hidden().len() + 4 * n + trace.meta().len());
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, to_u32(trace.dim(), "hidden dim")?);
    put_u32(&mut out, to_u32(n, "trace length")?);
    put_u32(&mut out, if eoc.is_some() { FLAG_EOC } else { 0 });
    for v in trace.hidden() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(p) = eoc {
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    put_u32(&mut out, to_u32(trace.meta().len(), "metadata length")?);
    out.extend_from_slice(trace.meta().as_bytes());
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Trace> {
    let mut r = ByteReader::new(bytes);
    if r.bytes(4, "magic")? != MAGIC {
        return ByteReader::new(bytes).fail("bad magic, expected FGT1");
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return r.fail(format!("unsupported trace version {version}"));
    }
    let d = r.u32("hidden dim")? as usize;
    let n = r.u32("trace length")? as usize;
    let flags_offset = r.offset();
    let flags = r.u32("flags")?;
    if flags & !FLAG_EOC != 0 {
        return Err(Error::Format {
            offset: flags_offset,
            message: format!("unknown flag bits {flags:#x}"),
        });
    }
    if d == 0 || n == 0 {
        return r.fail(format!("empty trace header (d={d}, N={n})"));
    }
    let count = n
        .checked_mul(d)
        .ok_or_else(|| Error::Format {
            offset: r.offset(),
            message: "N·d overflows".into(),
        })?;
    let hidden = r.f32_vec(count, "hidden states")?;
    let eoc = if flags & FLAG_EOC != 0 {
        Some(r.f32_vec(n, "eoc_prob")?)
    } else {
        None
    };
    let meta_len = r.u32("metadata length")? as usize;
    let meta_offset = r.offset();
    let meta = std::str::from_utf8(r.bytes(meta_len, "metadata")?)
        .map_err(|e| Error::Format {
            offset: meta_offset + e.valid_up_to() as u64,
            message: "metadata is not UTF-8".into(),
        })?
        .to_owned();
    r.expect_end()?;
    Trace::new(d, hidden, eoc, meta).map_err(|e| Error::Format {
        offset: 0,
        message: format!("invalid trace payload: {e}"),
    })
}

pub fn write_trace(trace: &Trace, path: &Path) -> Result<()> {
    write_atomic(path, &encode(trace)?)
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    decode(&read_file(path)?)
}
