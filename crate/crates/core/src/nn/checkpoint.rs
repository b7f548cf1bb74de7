//! `FGNN` checkpoint format.
//!
//! ```text
//! "FGNN" | u32 version | u32 d | u32 C | u32 W |
//! 7 × ( u32 count | count × f64 )      -- blocks in `Block::ALL` order
//! ```
//! All integers and floats little-endian.

use std::path::Path;

use crate::binio::{put_u32, read_file, to_u32, write_atomic, ByteReader};
use crate::error::Result;

use super::params::{Architecture, Block, LayerParams};

pub const MAGIC: &[u8; 4] = b"FGNN";
pub const VERSION: u32 = 1;

pub fn encode(params: &LayerParams) -> Result<Vec<u8>> {
    let arch = params.arch();
    let mut out = Vec::with_capacity(20 + Block::ALL.len() * 4 + params.len() * 8);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, to_u32(arch.hidden_dim, "hidden dim")?);
    put_u32(&mut out, to_u32(arch.channels, "channels")?);
    put_u32(&mut out, to_u32(arch.window, "window")?);
    for block in Block::ALL {
        let values = params.block(block);
        put_u32(&mut out, to_u32(values.len(), "block length")?);
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<LayerParams> {
    let mut r = ByteReader::new(bytes);
    if r.bytes(4, "magic")? != MAGIC {
        return ByteReader::new(bytes).fail("bad magic, expected FGNN");
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return r.fail(format!("unsupported checkpoint version {version}"));
    }
    let d = r.u32("hidden dim")? as usize;
    let c = r.u32("channels")? as usize;
    let w = r.u32("window")? as usize;
    let arch = match Architecture::new(d, c, w) {
        Ok(a) => a,
        Err(e) => return r.fail(e.to_string()),
    };
    let mut blocks = Vec::with_capacity(Block::ALL.len());
    for block in Block::ALL {
        let n = r.u32("block length")? as usize;
        if n != block.len(&arch) {
            return r.fail(format!(
                "block {block:?} has {n} values, architecture requires {}",
                block.len(&arch)
            ));
        }
        blocks.push(r.f64_vec(n, "parameter block")?);
    }
    r.expect_end()?;
    LayerParams::from_blocks(arch, blocks)
}

pub fn save(params: &LayerParams, path: &Path) -> Result<()> {
    write_atomic(path, &encode(params)?)
}

pub fn load(path: &Path) -> Result<LayerParams> {
    decode(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_bit_exact() {
        let arch = Architecture::new(5, 3, 8).unwrap();
        let params = LayerParams::init(arch, &mut ChaCha8Rng::seed_from_u64(9));
        let bytes = encode(&params).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!(
            params.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            back.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(encode(&back).unwrap(), bytes);
        assert_eq!(bytes.len(), 20 + 7 * 4 + arch.param_count() * 8);
    }

    #[test]
    fn truncation_and_magic_errors() {
        let arch = Architecture::new(2, 2, 2).unwrap();
        let bytes = encode(&LayerParams::zeros(arch)).unwrap();
        for cut in [0, 3, 10, 20, bytes.len() - 1] {
            assert!(matches!(decode(&bytes[..cut]), Err(Error::Format { .. })));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Format { offset: 0, .. })));
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
