//! File outputs: success-rate tables, image-level mFI listings, per-pixel
//! heatmaps, perturbation maps and attack result records.
//!
//! Tables are CSV with a header row. Raster outputs are 8-bit grayscale PNG,
//! one file per channel, each with a JSON sidecar carrying the exact scaling.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversary::{AdversarialResult, ImageScore};
use crate::error::{Error, Result};
use crate::mfi::MfiMap;

pub const SIDECAR_VERSION: u32 = 1;

/// One attacked image as seen by the success-rate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    /// Free-form split name, e.g. `train` or `test`.
    pub split: String,
    pub image_mfi: f64,
    pub success: bool,
}

/// Success rate in percent with two decimals, or `None` for an empty bucket.
pub fn format_rate(successes: usize, n: usize) -> Option<String> {
    (n > 0).then(|| format!("{:.2}", 100.0 * successes as f64 / n as f64))
}

/// One row per `(split, threshold)`: images with `image_mfi >= threshold`,
/// their count and success rate. Splits appear in first-seen order.
pub fn success_rate_table(records: &[AttackRecord], thresholds: &[f64]) -> Result<String> {
    let mut splits: Vec<&str> = Vec::new();
    for r in records {
        if !splits.contains(&r.split.as_str()) {
            splits.push(&r.split);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["split", "mfi_img", "n", "successes", "success_rate"])?;
    for split in splits {
        for &t in thresholds {
            let bucket: Vec<&AttackRecord> =
                records.iter().filter(|r| r.split == split && r.image_mfi >= t).collect();
            let n = bucket.len();
            let s = bucket.iter().filter(|r| r.success).count();
            w.write_record([
                split.to_owned(),
                t.to_string(),
                n.to_string(),
                s.to_string(),
                format_rate(s, n).unwrap_or_default(),
            ])?;
        }
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Numerical(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `(image index, class, image-level mFI)` for every correctly classified image.
pub fn manhattan_csv(scores: &[ImageScore], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "class", "image_mfi"])?;
    for s in scores {
        if let Some(v) = s.image_mfi {
            w.write_record([s.index.to_string(), s.y_true.to_string(), v.to_string()])?;
        }
    }
    write_text(path, &finish_csv(w)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSidecar {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub channel: usize,
    /// Value mapped to byte 0.
    pub min: f64,
    /// Value mapped to byte 255 (equal to `min` for a flat map).
    pub max: f64,
}

fn channel_path(path: &Path, channel: usize, channels: usize) -> PathBuf {
    if channels == 1 {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let ext = path.extension().map_or_else(|| "png".to_owned(), |e| e.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}_c{channel}.{ext}"))
}

fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

fn save_gray(path: &Path, width: usize, height: usize, bytes: Vec<u8>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let img = ::image::GrayImage::from_raw(width as u32, height as u32, bytes)
        .ok_or_else(|| Error::input("raster size does not match its dimensions"))?;
    img.save_with_format(path, ::image::ImageFormat::Png).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Min-max scaling to `[0, 255]`; flat maps render black.
pub fn heatmap_bytes(values: &[f64]) -> (Vec<u8>, f64, f64) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let bytes = values
        .iter()
        .map(|&v| if range > 0.0 { (255.0 * (v - min) / range).round() as u8 } else { 0 })
        .collect();
    (bytes, min, max)
}

/// Writes one grayscale PNG (plus sidecar) per channel; returns the PNG paths.
/// Multi-channel maps get `_c{channel}` suffixes.
pub fn emit_heatmap(map: &MfiMap, shape: (usize, usize, usize), path: &Path) -> Result<Vec<PathBuf>> {
    let (width, height, channels) = shape;
    if width * height * channels != map.len() {
        return Err(Error::input(format!(
            "map of {} values does not fit shape {width}x{height}x{channels}",
            map.len()
        )));
    }
    let mut written = Vec::with_capacity(channels);
    for c in 0..channels {
        let values: Vec<f64> = map.values.iter().skip(c).step_by(channels).copied().collect();
        let (bytes, min, max) = heatmap_bytes(&values);
        let png = channel_path(path, c, channels);
        save_gray(&png, width, height, bytes)?;
        let sidecar = HeatmapSidecar {
            version: SIDECAR_VERSION,
            width,
            height,
            channel: c,
            min,
            max,
        };
        write_text(&sidecar_path(&png), &serde_json::to_string_pretty(&sidecar)?)?;
        written.push(png);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSidecar {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Perturbation magnitude mapped to bytes 1 and 255.
    pub scale: f64,
    pub coords: Vec<usize>,
    pub omega: Vec<f64>,
}

/// Diverging rendering: byte 128 is zero, `+scale` is 255, `-scale` is 1.
pub fn perturbation_bytes(delta: &[f64], scale: f64) -> Vec<u8> {
    delta
        .iter()
        .map(|&d| {
            if scale > 0.0 {
                (128.0 + 127.0 * (d / scale).clamp(-1.0, 1.0)).round() as u8
            } else {
                128
            }
        })
        .collect()
}

/// Renders `adversarial - original` scaled by the attack's epsilon, one PNG
/// per channel, with a single JSON sidecar next to `path`.
pub fn emit_perturbation_map(result: &AdversarialResult, path: &Path) -> Result<Vec<PathBuf>> {
    let (width, height, channels) = result.original.shape();
    let delta: Vec<f64> = result
        .adversarial
        .pixels
        .iter()
        .zip(&result.original.pixels)
        .map(|(a, o)| a - o)
        .collect();
    let mut written = Vec::with_capacity(channels);
    for c in 0..channels {
        let values: Vec<f64> = delta.iter().skip(c).step_by(channels).copied().collect();
        let png = channel_path(path, c, channels);
        save_gray(&png, width, height, perturbation_bytes(&values, result.epsilon))?;
        written.push(png);
    }
    let sidecar = PerturbationSidecar {
        version: SIDECAR_VERSION,
        width,
        height,
        channels,
        scale: result.epsilon,
        coords: result.coords.clone(),
        omega: result.omega.clone(),
    };
    write_text(&sidecar_path(path), &serde_json::to_string_pretty(&sidecar)?)?;
    Ok(written)
}

/// Writes the adversarial image itself as 8-bit grayscale (one channel) or
/// RGB PNG. Quantization makes this lossy; the JSON record holds exact values.
pub fn emit_image(image: &crate::image::Image, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = image.pixels.iter().map(|v| (v * 255.0).round() as u8).collect();
    let (w, h, c) = image.shape();
    match c {
        1 => save_gray(path, w, h, bytes),
        3 => {
            let img = ::image::RgbImage::from_raw(w as u32, h as u32, bytes)
                .ok_or_else(|| Error::input("raster size does not match its dimensions"))?;
            img.save_with_format(path, ::image::ImageFormat::Png).map_err(|e| Error::Decode {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        }
        _ => Err(Error::input(format!("cannot render an image with {c} channels"))),
    }
}

pub fn write_result_json(result: &AdversarialResult, path: &Path) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(result)?)
}

pub fn read_result_json(path: &Path) -> Result<AdversarialResult> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Per-image row of an [`AttackReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub index: usize,
    pub y_true: Option<usize>,
    pub label_before: usize,
    pub label_after: usize,
    pub prob_before: f64,
    pub prob_after: f64,
    pub image_mfi: Option<f64>,
    pub m: usize,
    pub success: bool,
    pub l2_norm: f64,
    pub linf_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub rows: Vec<ReportRow>,
    pub selected: usize,
    pub successes: usize,
    pub success_rate: Option<f64>,
}

impl AttackReport {
    /// Rows sorted by image index; `image_mfi` is looked up in `scores` when given.
    pub fn new(results: &[AdversarialResult], scores: Option<&[ImageScore]>) -> Self {
        let mut rows: Vec<ReportRow> = results
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let index = r.image_index.unwrap_or(k);
                ReportRow {
                    index,
                    y_true: r.criteria.y_true,
                    label_before: r.label_before,
                    label_after: r.label_after,
                    prob_before: r.probs_before[r.label_before],
                    prob_after: r.probs_after[r.label_after],
                    image_mfi: scores.and_then(|s| s.iter().find(|s| s.index == index)).and_then(|s| s.image_mfi),
                    m: r.coords.len(),
                    success: r.success,
                    l2_norm: r.l2_norm,
                    linf_norm: r.linf_norm,
                    iterations: r.iterations,
                }
            })
            .collect();
        rows.sort_by_key(|r| r.index);
        let successes = rows.iter().filter(|r| r.success).count();
        Self {
            selected: rows.len(),
            successes,
            success_rate: (!rows.is_empty()).then(|| successes as f64 / rows.len() as f64),
            rows,
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "index", "y_true", "label_before", "label_after", "prob_before", "prob_after", "image_mfi", "m",
            "success", "l2_norm", "linf_norm", "iterations",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.index.to_string(),
                r.y_true.map(|v| v.to_string()).unwrap_or_default(),
                r.label_before.to_string(),
                r.label_after.to_string(),
                r.prob_before.to_string(),
                r.prob_after.to_string(),
                r.image_mfi.map(|v| v.to_string()).unwrap_or_default(),
                r.m.to_string(),
                r.success.to_string(),
                r.l2_norm.to_string(),
                r.linf_norm.to_string(),
                r.iterations.to_string(),
            ])?;
        }
        finish_csv(w)
    }
}
