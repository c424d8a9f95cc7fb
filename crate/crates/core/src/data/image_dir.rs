use std::collections::BTreeMap;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::image::Image;

/// Loads every image listed in a `filename,label` CSV (header row required)
/// from `dir`. Grayscale files yield one channel, anything else is decoded as
/// RGB. All problems are collected and reported together.
pub fn load_image_dir(dir: &Path, labels_csv: &Path, num_classes: usize) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(labels_csv).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(
            labels_csv,
            std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
        ),
        _ => Error::Csv(e),
    })?;
    let mut label_of = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let name = row.get(0).unwrap_or_default().trim().to_owned();
        let label: usize = row
            .get(1)
            .unwrap_or_default()
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("bad label for {name:?} in {}", labels_csv.display())))?;
        label_of.insert(name, label);
    }

    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file() && p != labels_csv)
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "bmp" | "pgm" | "ppm" | "pnm"))
        })
        .collect();
    entries.sort();

    let mut problems = Vec::new();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for path in entries {
        let fname = path.file_name().unwrap().to_string_lossy().into_owned();
        let Some(&label) = label_of.get(&fname) else {
            problems.push(format!("{fname}: no label row"));
            continue;
        };
        match decode(&path) {
            Ok(im) => {
                images.push(im);
                labels.push(label);
            }
            Err(e) => problems.push(format!("{fname}: {e}")),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Decode {
            path: dir.to_path_buf(),
            message: problems.join("; "),
        });
    }
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "images".to_owned());
    Dataset::new(name, images, labels, num_classes)
}

fn decode(path: &Path) -> Result<Image> {
    let dynamic = ::image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    if dynamic.color().has_color() {
        let rgb = dynamic.to_rgb8();
        let pixels = rgb.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
        Image::new(pixels, w, h, 3)
    } else {
        let gray = dynamic.to_luma8();
        let pixels = gray.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
        Image::new(pixels, w, h, 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_gray_and_rgb_and_reports_missing_labels() {
        let dir = tempfile::tempdir().unwrap();
        ::image::GrayImage::from_raw(2, 1, vec![0, 255])
            .unwrap()
            .save(dir.path().join("a.png"))
            .unwrap();
        let csv_path = dir.path().join("labels.csv");
        std::fs::write(&csv_path, "filename,label\na.png,1\n").unwrap();
        let d = load_image_dir(dir.path(), &csv_path, 2).unwrap();
        assert_eq!(d.images[0].pixels, vec![0.0, 1.0]);
        assert_eq!(d.labels, vec![1]);

        let rgb_dir = tempfile::tempdir().unwrap();
        ::image::RgbImage::from_raw(1, 1, vec![255, 0, 51])
            .unwrap()
            .save(rgb_dir.path().join("c.png"))
            .unwrap();
        let rgb_csv = rgb_dir.path().join("labels.csv");
        std::fs::write(&rgb_csv, "filename,label\nc.png,0\n").unwrap();
        let d = load_image_dir(rgb_dir.path(), &rgb_csv, 2).unwrap();
        assert_eq!(d.images[0].channels, 3);
        assert_eq!(d.images[0].pixels, vec![1.0, 0.0, 0.2]);

        ::image::GrayImage::from_raw(2, 1, vec![1, 2])
            .unwrap()
            .save(dir.path().join("b.png"))
            .unwrap();
        std::fs::write(dir.path().join("broken.png"), b"not a png").unwrap();
        let err = load_image_dir(dir.path(), &csv_path, 2).unwrap_err().to_string();
        assert!(err.contains("b.png: no label row"), "{err}");
        assert!(err.contains("broken.png"), "{err}");
    }
}
