use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::image::Image;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            offset: offset as u64,
            message: format!("truncated header while reading {what}"),
        })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses an IDX image file (`0x00000803`, dims `n x rows x cols`) and an IDX
/// label file (`0x00000801`, dim `n`). Pixel bytes are divided by 255.
pub fn load_idx(images_path: &Path, labels_path: &Path, num_classes: usize) -> Result<Dataset> {
    let (images, labels) = parse_idx(&read_file(images_path)?, &read_file(labels_path)?, num_classes)?;
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".to_owned());
    Dataset::new(name, images, labels, num_classes)
}

pub(crate) fn parse_idx(
    image_bytes: &[u8],
    label_bytes: &[u8],
    num_classes: usize,
) -> Result<(Vec<Image>, Vec<usize>)> {
    let magic = read_u32(image_bytes, 0, "image magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        });
    }
    let n = read_u32(image_bytes, 4, "image count")? as usize;
    let rows = read_u32(image_bytes, 8, "row count")? as usize;
    let cols = read_u32(image_bytes, 12, "column count")? as usize;
    let p = rows * cols;
    let payload = &image_bytes[16..];
    if payload.len() != n * p {
        return Err(Error::Parse {
            offset: 16 + payload.len().min(n * p) as u64,
            message: format!(
                "image payload has {} bytes, header declares {n} images of {rows}x{cols} = {} bytes",
                payload.len(),
                n * p
            ),
        });
    }

    let magic = read_u32(label_bytes, 0, "label magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        });
    }
    let n_labels = read_u32(label_bytes, 4, "label count")? as usize;
    if n_labels != n {
        return Err(Error::Parse {
            offset: 4,
            message: format!("label file declares {n_labels} items, image file declares {n}"),
        });
    }
    let label_payload = &label_bytes[8..];
    if label_payload.len() != n {
        return Err(Error::Parse {
            offset: 8 + label_payload.len().min(n) as u64,
            message: format!("label payload has {} bytes, expected {n}", label_payload.len()),
        });
    }
    let mut labels = Vec::with_capacity(n);
    for (i, &b) in label_payload.iter().enumerate() {
        if b as usize >= num_classes {
            return Err(Error::Parse {
                offset: 8 + i as u64,
                message: format!("label {b} out of range for {num_classes} classes"),
            });
        }
        labels.push(b as usize);
    }

    let images = payload
        .chunks_exact(p.max(1))
        .take(n)
        .map(|chunk| {
            let pixels = chunk.iter().map(|&b| f64::from(b) / 255.0).collect();
            Image::new(pixels, cols, rows, 1)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((images, labels))
}

/// Writes a single-channel dataset as an IDX image/label pair. Pixels are
/// quantized with `round(255 * v)`.
pub fn write_idx(dataset: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (w, h, c) = dataset
        .shape()
        .ok_or_else(|| Error::input("cannot write an empty dataset"))?;
    if c != 1 {
        return Err(Error::input("IDX output supports single-channel images only"));
    }
    if dataset.num_classes > 256 {
        return Err(Error::input("IDX labels are single bytes"));
    }
    let n = dataset.len() as u32;
    let mut img = Vec::with_capacity(16 + dataset.len() * w * h);
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&n.to_be_bytes());
    img.extend_from_slice(&(h as u32).to_be_bytes());
    img.extend_from_slice(&(w as u32).to_be_bytes());
    for im in &dataset.images {
        img.extend(im.pixels.iter().map(|v| (v * 255.0).round() as u8));
    }
    let mut lab = Vec::with_capacity(8 + dataset.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&n.to_be_bytes());
    lab.extend(dataset.labels.iter().map(|&l| l as u8));
    fs::write(images_path, img).map_err(|e| Error::io(images_path, e))?;
    fs::write(labels_path, lab).map_err(|e| Error::io(labels_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v
    }

    #[test]
    fn scales_byte_endpoints() {
        let mut img = header(IMAGES_MAGIC, &[1, 1, 2]);
        img.extend([0x00, 0xFF]);
        let mut lab = header(LABELS_MAGIC, &[1]);
        lab.push(1);
        let (images, labels) = parse_idx(&img, &lab, 2).unwrap();
        assert_eq!(images[0].pixels, vec![0.0, 1.0]);
        assert_eq!(labels, vec![1]);
    }

    #[test]
    fn ten_mnist_sized_images() {
        let mut img = header(IMAGES_MAGIC, &[10, 28, 28]);
        img.extend(std::iter::repeat(7u8).take(7840));
        let mut lab = header(LABELS_MAGIC, &[10]);
        lab.extend(0..10u8);
        let (images, _) = parse_idx(&img, &lab, 10).unwrap();
        assert_eq!(images.len(), 10);
        assert!(images.iter().all(|im| im.len() == 784));
    }

    #[test]
    fn label_equal_to_class_count_is_rejected() {
        let mut img = header(IMAGES_MAGIC, &[2, 1, 1]);
        img.extend([0, 0]);
        let mut lab = header(LABELS_MAGIC, &[2]);
        lab.extend([3, 10]);
        match parse_idx(&img, &lab, 10) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 9),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_truncation() {
        let lab = {
            let mut l = header(LABELS_MAGIC, &[1]);
            l.push(0);
            l
        };
        let bad = header(0x0000_0802, &[1, 1, 1]);
        assert!(matches!(parse_idx(&bad, &lab, 2), Err(Error::Parse { offset: 0, .. })));

        let mut short = header(IMAGES_MAGIC, &[2, 2, 2]);
        short.extend([1, 2, 3]);
        assert!(matches!(parse_idx(&short, &lab, 2), Err(Error::Parse { offset: 19, .. })));

        assert!(matches!(
            parse_idx(&IMAGES_MAGIC.to_be_bytes()[..3], &lab, 2),
            Err(Error::Parse { offset: 0, .. })
        ));
    }

    #[test]
    fn count_mismatch() {
        let mut img = header(IMAGES_MAGIC, &[2, 1, 1]);
        img.extend([0, 0]);
        let mut lab = header(LABELS_MAGIC, &[3]);
        lab.extend([0, 0, 0]);
        assert!(matches!(parse_idx(&img, &lab, 2), Err(Error::Parse { offset: 4, .. })));
    }
}
