//! Binary PGM (P5) parsing and class-folder import.

use std::fs;
use std::path::{Path, PathBuf};

use super::Dataset;
use crate::error::{Error, Result};
use crate::image::resize_bilinear;
use crate::tensor::Tensor;

/// A decoded grayscale image with values scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

/// Parses a P5 image. Header fields may be separated by any whitespace and
/// interleaved with `#` comments; 16-bit samples are big-endian.
pub fn parse_pgm(bytes: &[u8]) -> std::result::Result<Pgm, String> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err("not a binary PGM (missing P5 signature)".into());
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(format!("malformed header at byte {start}"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| format!("header number too large at byte {start}"))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(format!("invalid size {width}x{height}"));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(format!("invalid maxval {maxval}"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("missing whitespace after maxval".into());
    }
    pos += 1;
    let sample = if maxval < 256 { 1 } else { 2 };
    let need = width * height * sample;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(format!("raster has {} bytes, expected {need}", raster.len()));
    }
    let scale = maxval as f32;
    let pixels = if sample == 1 {
        raster[..need].iter().map(|&b| (b as f32 / scale).min(1.0)).collect()
    } else {
        raster[..need]
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f32 / scale).min(1.0))
            .collect()
    };
    Ok(Pgm { width, height, pixels })
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Loads one subdirectory per class (sorted by name, giving labels `0..K`),
/// each holding PGM files read in name order and resized to `size`
/// (height, width). Top-level plain files are ignored.
pub fn import_directory(path: impl AsRef<Path>, size: (usize, usize)) -> Result<Dataset> {
    let (nh, nw) = size;
    if nh == 0 || nw == 0 {
        return Err(Error::InvalidDims(format!("target size {nh}x{nw}")));
    }
    let class_dirs: Vec<PathBuf> = sorted_entries(path.as_ref())?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut class_names = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        class_names.push(dir.file_name().unwrap_or_default().to_string_lossy().into_owned());
        let files: Vec<PathBuf> = sorted_entries(dir)?.into_iter().filter(|p| p.is_file()).collect();
        if files.is_empty() {
            return Err(Error::BadImage { path: dir.clone(), message: "class directory has no images".into() });
        }
        for file in files {
            let bytes = fs::read(&file)?;
            let img = parse_pgm(&bytes).map_err(|message| Error::BadImage { path: file.clone(), message })?;
            let pixels = resize_bilinear(&img.pixels, img.height, img.width, nh, nw);
            images.push(Tensor::from_values((1, 1, nh, nw), pixels)?);
            labels.push(label);
        }
    }
    Dataset::new(images, labels, class_dirs.len(), class_names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_with_comments_and_sixteen_bit() {
        let mut bytes = b"P5\n# made by hand\n2 1\n# max\n65535\n".to_vec();
        bytes.extend_from_slice(&[0xff, 0xff, 0x00, 0x00]);
        let img = parse_pgm(&bytes).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.pixels, vec![1.0, 0.0]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_pgm(b"P2 1 1 255\n0").is_err());
        assert!(parse_pgm(b"P5 2 2 255\n\x00").is_err());
        assert!(parse_pgm(b"P5 0 2 255\n").is_err());
        assert!(parse_pgm(b"P5 1 1 255").is_err());
    }
}
