//! CDS1 dataset container.
//!
//! Magic `CDS1`, then u32 LE count, height, width and class count, then
//! `count` records of one label byte followed by `h·w` row-major pixel bytes.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: [u8; 4] = *b"CDS1";
const HEADER_LEN: usize = 20;

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_container<W: Write>(data: &Dataset, mut out: W) -> Result<()> {
    if data.num_classes() > 256 {
        return Err(Error::InvalidArgument(format!("CDS1 stores labels as bytes; {} classes", data.num_classes())));
    }
    let (h, w) = data.image_size();
    let mut buf = Vec::with_capacity(HEADER_LEN + data.len() * (1 + h * w));
    buf.extend_from_slice(&DATASET_MAGIC);
    for v in [data.len(), h, w, data.num_classes()] {
        let v = u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} does not fit in u32")))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for (image, &label) in data.images().iter().zip(data.labels()) {
        buf.push(label as u8);
        buf.extend(image.data().iter().map(|&v| to_byte(v)));
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn save_container(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    write_container(data, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_container<R: Read>(mut input: R) -> Result<Dataset> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 4 {
        return Err(Error::Truncated(format!("{} bytes, no magic", bytes.len())));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != DATASET_MAGIC {
        return Err(Error::BadMagic { expected: DATASET_MAGIC, found: magic });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated(format!("{} bytes, header needs {HEADER_LEN}", bytes.len())));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (count, h, w, num_classes) = (field(0), field(1), field(2), field(3));
    if h == 0 || w == 0 {
        return Err(Error::InvalidDims(format!("image size {h}x{w}")));
    }
    let record = 1 + h * w;
    let expected = HEADER_LEN + count * record;
    if bytes.len() < expected {
        let present = (bytes.len() - HEADER_LEN) / record;
        return Err(Error::Truncated(format!("header says {count} records, {present} complete records present")));
    }
    if bytes.len() > expected {
        return Err(Error::InvalidArgument(format!("{} trailing bytes after {count} records", bytes.len() - expected)));
    }
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for rec in bytes[HEADER_LEN..].chunks_exact(record) {
        let label = rec[0] as usize;
        if label >= num_classes {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        labels.push(label);
        let pixels = rec[1..].iter().map(|&b| b as f32 / 255.0).collect();
        images.push(Tensor::from_values((1, 1, h, w), pixels)?);
    }
    Dataset::new(images, labels, num_classes, Vec::new())
}

pub fn load_container(path: impl AsRef<Path>) -> Result<Dataset> {
    read_container(std::io::BufReader::new(fs::File::open(path)?))
}
