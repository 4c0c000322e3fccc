//! Parameter checkpoint files.
//!
//! Little-endian layout:
//!
//! ```text
//! "AVGC" | u32 version=1 | u32 param_count
//! param_count × (u16 name length, UTF-8 name, u32 rows, u32 cols, rows·cols × f32)
//! first moments, same layout
//! second moments, same layout
//! u64 adam step
//! ```
//!
//! Values are narrowed to `f32` on write, so a store survives a
//! write/read/write cycle with byte-identical output.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::matrix::Matrix;
use super::params::ParamStore;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"AVGC";
pub const VERSION: u32 = 1;

pub fn save_checkpoint(store: &ParamStore, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(store, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamStore> {
    let mut r = BufReader::new(File::open(path)?);
    read_checkpoint(&mut r)
}

pub fn write_checkpoint<W: Write>(store: &ParamStore, w: &mut W) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(store.len() as u32)?;
    let ids: Vec<_> = store.ids().collect();
    for &id in &ids {
        write_block(w, store.name(id), store.value(id))?;
    }
    for &id in &ids {
        write_block(w, store.name(id), store.first_moment(id))?;
    }
    for &id in &ids {
        write_block(w, store.name(id), store.second_moment(id))?;
    }
    w.write_u64::<LittleEndian>(store.step())?;
    Ok(())
}

fn write_block<W: Write>(w: &mut W, name: &str, m: &Matrix) -> Result<()> {
    let len = u16::try_from(name.len())
        .map_err(|_| Error::InvalidArgument(format!("parameter name too long: {name}")))?;
    w.write_u16::<LittleEndian>(len)?;
    w.write_all(name.as_bytes())?;
    w.write_u32::<LittleEndian>(m.rows() as u32)?;
    w.write_u32::<LittleEndian>(m.cols() as u32)?;
    for &v in m.as_slice() {
        w.write_f32::<LittleEndian>(v as f32)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<ParamStore> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof)?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found: magic,
        });
    }
    let version = r.read_u32::<LittleEndian>().map_err(eof)?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            expected: VERSION,
            found: version,
        });
    }
    let count = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let (name, m) = read_block(r)?;
        store.insert(name, m)?;
    }
    let mut moments = [Vec::with_capacity(count), Vec::with_capacity(count)];
    for block in &mut moments {
        for k in 0..count {
            let (name, m) = read_block(r)?;
            if name != store.names()[k] {
                return Err(Error::Malformed(format!(
                    "moment block `{name}` does not match parameter `{}`",
                    store.names()[k]
                )));
            }
            block.push(m);
        }
    }
    let step = r.read_u64::<LittleEndian>().map_err(eof)?;
    let [first, second] = moments;
    store.restore_state(first, second, step)?;
    Ok(store)
}

fn read_block<R: Read>(r: &mut R) -> Result<(String, Matrix)> {
    let len = r.read_u16::<LittleEndian>().map_err(eof)?;
    let mut buf = vec![0u8; usize::from(len)];
    r.read_exact(&mut buf).map_err(eof)?;
    let name = String::from_utf8(buf)
        .map_err(|_| Error::Malformed("parameter name is not UTF-8".into()))?;
    let rows = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
    let cols = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
    let count = rows
        .checked_mul(cols)
        .filter(|&c| c <= 1 << 28)
        .ok_or_else(|| Error::Malformed(format!("implausible shape {rows}x{cols} for `{name}`")))?;
    let mut raw = vec![0f32; count];
    r.read_f32_into::<LittleEndian>(&mut raw).map_err(eof)?;
    let m = Matrix::new(rows, cols, raw.into_iter().map(f64::from).collect())?;
    Ok((name, m))
}

fn eof(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Truncated("unexpected end of checkpoint".into())
    } else {
        Error::Io(e)
    }
}
