//! Binary dataset container.
//!
//! Little-endian layout:
//!
//! ```text
//! "AVGD" | u32 version=1 | u32 classes | u32 frame_length | u32 frame_count
//! classes × (u16 byte length, UTF-8 name)
//! frame_count × (u8 label, i8 snr_db, n × f32 I, n × f32 Q)
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Dataset, IqFrame, LabeledFrame};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"AVGD";
pub const VERSION: u32 = 1;

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset_to(dataset, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset_to<W: Write>(dataset: &Dataset, w: &mut W) -> Result<()> {
    if dataset.num_classes() > usize::from(u8::MAX) + 1 {
        return Err(Error::InvalidArgument(
            "container stores labels as u8 (at most 256 classes)".into(),
        ));
    }
    w.write_all(&MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(to_u32(dataset.num_classes())?)?;
    w.write_u32::<LittleEndian>(to_u32(dataset.frame_length())?)?;
    w.write_u32::<LittleEndian>(to_u32(dataset.len())?)?;
    for name in dataset.class_names() {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::InvalidArgument(format!("class name too long: {name}")))?;
        w.write_u16::<LittleEndian>(len)?;
        w.write_all(name.as_bytes())?;
    }
    for f in dataset.frames() {
        w.write_u8(f.label as u8)?;
        w.write_i8(f.snr_db)?;
        for channel in [f.frame.i(), f.frame.q()] {
            for &v in channel.values() {
                w.write_f32::<LittleEndian>(v as f32)?;
            }
        }
    }
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    read_dataset_from(&mut r)
}

pub fn read_dataset_from<R: Read>(r: &mut R) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| eof(e, "magic"))?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found: magic,
        });
    }
    let version = r.read_u32::<LittleEndian>().map_err(|e| eof(e, "header"))?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            expected: VERSION,
            found: version,
        });
    }
    let classes = r.read_u32::<LittleEndian>().map_err(|e| eof(e, "header"))? as usize;
    let n = r.read_u32::<LittleEndian>().map_err(|e| eof(e, "header"))? as usize;
    let count = r.read_u32::<LittleEndian>().map_err(|e| eof(e, "header"))? as usize;

    let mut names = Vec::with_capacity(classes.min(256));
    for k in 0..classes {
        let len = r
            .read_u16::<LittleEndian>()
            .map_err(|e| eof(e, "class names"))?;
        let mut buf = vec![0u8; usize::from(len)];
        r.read_exact(&mut buf).map_err(|e| eof(e, "class names"))?;
        let name = String::from_utf8(buf)
            .map_err(|_| Error::Malformed(format!("class name {k} is not UTF-8")))?;
        names.push(name);
    }

    let mut frames = Vec::with_capacity(count.min(1 << 20));
    let mut raw = vec![0f32; 2 * n];
    for idx in 0..count {
        let what = || format!("frame {idx} of {count}");
        let label = usize::from(r.read_u8().map_err(|e| eof(e, &what()))?);
        let snr_db = r.read_i8().map_err(|e| eof(e, &what()))?;
        r.read_f32_into::<LittleEndian>(&mut raw)
            .map_err(|e| eof(e, &what()))?;
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let (i, q) = raw.split_at(n);
        let widen = |c: &[f32]| c.iter().map(|&v| f64::from(v)).collect::<Vec<_>>();
        let frame = IqFrame::from_vecs(widen(i), widen(q))
            .map_err(|e| Error::Malformed(format!("frame {idx}: {e}")))?;
        frames.push(LabeledFrame {
            frame,
            label,
            snr_db,
        });
    }
    Dataset::new(names, n, frames)
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} does not fit in u32")))
}

fn eof(e: io::Error, what: &str) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Truncated(format!("unexpected end of file in {what}"))
    } else {
        Error::Io(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{Modulation, Series};

    fn small() -> Dataset {
        let frames = (0..3)
            .map(|k| LabeledFrame {
                frame: IqFrame::new(
                    Series::new(vec![0.5 * k as f64, -1.25, 3.0]).unwrap(),
                    Series::new(vec![1.0, 2.0, -0.125 * k as f64]).unwrap(),
                )
                .unwrap(),
                label: k % 2,
                snr_db: -20 + 2 * k as i8,
            })
            .collect();
        Dataset::new(vec!["BPSK".into(), "QPSK".into()], 3, frames).unwrap()
    }

    fn encode(d: &Dataset) -> Vec<u8> {
        let mut buf = Vec::new();
        write_dataset_to(d, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_identity() {
        let d = small();
        let back = read_dataset_from(&mut encode(&d).as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn round_trip_generated() {
        let d = Dataset::synthesize(&[Modulation::Qam16, Modulation::Wbfm], &[-4, 10], 3, 40, 5)
            .unwrap();
        let back = read_dataset_from(&mut encode(&d).as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn header_layout() {
        let buf = encode(&small());
        assert_eq!(&buf[..4], b"AVGD");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 3);
        // 2 names of 4 bytes, 3 frames of 2 + 6 * 4 bytes
        assert_eq!(buf.len(), 20 + 2 * (2 + 4) + 3 * (2 + 24));
    }

    #[test]
    fn bad_magic() {
        let mut buf = encode(&small());
        buf[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            read_dataset_from(&mut buf.as_slice()),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn version_mismatch() {
        let mut buf = encode(&small());
        buf[4] = 2;
        assert!(matches!(
            read_dataset_from(&mut buf.as_slice()),
            Err(Error::VersionMismatch {
                expected: 1,
                found: 2
            })
        ));
    }

    #[test]
    fn truncated_mid_frame() {
        let buf = encode(&small());
        let cut = &buf[..buf.len() - 5];
        assert!(matches!(
            read_dataset_from(&mut &cut[..]),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn label_out_of_range() {
        let mut buf = encode(&small());
        let first_frame = 20 + 2 * (2 + 4);
        buf[first_frame] = 7;
        assert!(matches!(
            read_dataset_from(&mut buf.as_slice()),
            Err(Error::LabelOutOfRange {
                label: 7,
                classes: 2
            })
        ));
    }
}
