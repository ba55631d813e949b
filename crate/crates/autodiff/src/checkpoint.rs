//! `FDDW` tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "FDDW" | version u16 | count u32
//! per tensor: name_len u16 | name (UTF-8) | rank u8 | dims u32 * rank | values f64 * prod(dims)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::params::NamedTensor;
use crate::CheckpointError;

pub const MAGIC: &[u8; 4] = b"FDDW";
pub const VERSION: u16 = 1;

pub fn write_fddw<W: Write>(mut w: W, tensors: &[NamedTensor]) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(u32::try_from(tensors.len()).map_err(|_| CheckpointError::TooLarge("tensor count"))?)?;
    for t in tensors {
        let name = t.name.as_bytes();
        w.write_u16::<LittleEndian>(u16::try_from(name.len()).map_err(|_| CheckpointError::TooLarge("name"))?)?;
        w.write_all(name)?;
        w.write_u8(u8::try_from(t.shape.len()).map_err(|_| CheckpointError::TooLarge("rank"))?)?;
        for &d in &t.shape {
            w.write_u32::<LittleEndian>(u32::try_from(d).map_err(|_| CheckpointError::TooLarge("dimension"))?)?;
        }
        for &v in &t.values {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn truncated(e: std::io::Error) -> CheckpointError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        CheckpointError::Truncated
    } else {
        CheckpointError::Io(e)
    }
}

pub fn read_fddw<R: Read>(mut r: R) -> Result<Vec<NamedTensor>, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.read_u16::<LittleEndian>().map_err(truncated)?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let count = r.read_u32::<LittleEndian>().map_err(truncated)?;
    let mut out = Vec::with_capacity(count.min(1 << 16) as usize);
    for _ in 0..count {
        let len = r.read_u16::<LittleEndian>().map_err(truncated)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| CheckpointError::BadName)?;
        let rank = r.read_u8().map_err(truncated)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.read_u32::<LittleEndian>().map_err(truncated)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut values = vec![0.0; n];
        r.read_f64_into::<LittleEndian>(&mut values).map_err(truncated)?;
        out.push(NamedTensor { name, shape, values });
    }
    Ok(out)
}

pub fn save_fddw(path: impl AsRef<Path>, tensors: &[NamedTensor]) -> Result<(), CheckpointError> {
    write_fddw(BufWriter::new(File::create(path)?), tensors)
}

pub fn load_fddw(path: impl AsRef<Path>) -> Result<Vec<NamedTensor>, CheckpointError> {
    read_fddw(BufReader::new(File::open(path)?))
}
