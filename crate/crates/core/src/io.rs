//! File formats: raw little-endian arrays with JSON sidecars, 16-bit PGM
//! previews, checkpoints and CSV tables.
//!
//! Arrays are stored as `name.f32` (little-endian `f32`, image rows or
//! sinogram views contiguous) next to `name.json`. Every write goes to a
//! temporary file in the target directory and is renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{Geometry, GridSpec};
use crate::image::{ImageGrid, Sinogram, SinogramKind};
use crate::interp::{BasisSet, LcrMode};
use crate::learn::{LearnedModel, LossRecord, ModelParams, NetShape, OptimState, TrainConfig, TrainState};
use crate::metrics::MetricReport;
use crate::projector::DoseSpec;
use crate::spectral::FilterKind;

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("in-memory JSON serialization");
    bytes.push(b'\n');
    bytes
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Sidecar path for an array file: same stem, `.json` extension.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn format_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn encode_f32(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect()
}

pub fn decode_f32(path: &Path, bytes: &[u8], expected: usize) -> Result<Vec<f64>> {
    if bytes.len() != 4 * expected {
        return Err(format_error(
            path,
            format!("expected {} bytes of f32 data, found {}", 4 * expected, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

const F32_FORMAT: &str = "f32le";

fn check_format(path: &Path, format: &str) -> Result<()> {
    if format != F32_FORMAT {
        return Err(format_error(path, format!("unsupported sample format `{format}`")));
    }
    Ok(())
}

fn check_not_json(path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "json") {
        return Err(Error::invalid(format!("{}: array files must not use the .json extension", path.display())));
    }
    Ok(())
}

/// Metadata stored next to a raw image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSidecar {
    pub format: String,
    pub grid: GridSpec,
    /// Recipe that regenerates the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Value>,
}

/// Metadata stored next to a raw sinogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinogramSidecar {
    pub format: String,
    pub geometry: Geometry,
    pub kind: SinogramKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dose: Option<DoseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Value>,
}

pub fn write_image(path: &Path, image: &ImageGrid, provenance: Option<Value>) -> Result<()> {
    check_not_json(path)?;
    let sidecar = ImageSidecar {
        format: F32_FORMAT.into(),
        grid: *image.grid(),
        provenance,
    };
    write_atomic(path, &encode_f32(image.values()))?;
    write_json(&sidecar_path(path), &sidecar)
}

pub fn read_image(path: &Path) -> Result<(ImageGrid, ImageSidecar)> {
    let sidecar: ImageSidecar = read_json(&sidecar_path(path))?;
    check_format(path, &sidecar.format)?;
    sidecar.grid.validate()?;
    let values = decode_f32(path, &read_bytes(path)?, sidecar.grid.len())?;
    Ok((ImageGrid::from_values(sidecar.grid, values)?, sidecar))
}

pub fn write_sinogram(path: &Path, sino: &Sinogram, dose: Option<DoseSpec>, provenance: Option<Value>) -> Result<()> {
    check_not_json(path)?;
    let sidecar = SinogramSidecar {
        format: F32_FORMAT.into(),
        geometry: sino.geometry().clone(),
        kind: sino.kind(),
        dose,
        provenance,
    };
    write_atomic(path, &encode_f32(sino.samples()))?;
    write_json(&sidecar_path(path), &sidecar)
}

pub fn read_sinogram(path: &Path) -> Result<(Sinogram, SinogramSidecar)> {
    let sidecar: SinogramSidecar = read_json(&sidecar_path(path))?;
    check_format(path, &sidecar.format)?;
    sidecar.geometry.validate()?;
    let g = &sidecar.geometry;
    let values = decode_f32(path, &read_bytes(path)?, g.n_bins * g.n_views)?;
    Ok((Sinogram::from_samples(g.clone(), sidecar.kind, values)?, sidecar))
}

/// Linear display window: `low` maps to 0 and `high` to 65535.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub low: f64,
    pub high: f64,
}

impl Window {
    /// Window spanning the image's own range.
    pub fn full_range(image: &ImageGrid) -> Self {
        let (low, high) = image.min_max();
        Window { low, high }
    }

    /// Grey level for a value, clamped to the window.
    pub fn level(&self, v: f64) -> u16 {
        let span = self.high - self.low;
        if !(span > 0.0) {
            return 0;
        }
        (((v - self.low) / span).clamp(0.0, 1.0) * 65535.0).round() as u16
    }
}

/// Binary 16-bit PGM (`P5`, maxval 65535, big-endian samples).
pub fn encode_pgm(image: &ImageGrid, window: Window) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", image.width(), image.height()).into_bytes();
    for v in image.values() {
        out.extend_from_slice(&window.level(*v).to_be_bytes());
    }
    out
}

pub fn write_pgm(path: &Path, image: &ImageGrid, window: Window) -> Result<()> {
    write_atomic(path, &encode_pgm(image, window))
}

/// Reads a 16-bit PGM written by [`write_pgm`] as `(width, height, levels)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let bytes = read_bytes(path)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_error(path, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "65535" {
        return Err(format_error(path, "expected a 16-bit binary PGM"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| format_error(path, format!("bad dimension `{s}`")));
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let data = bytes.get(pos..).unwrap_or_default();
    if data.len() != 2 * w * h {
        return Err(format_error(path, "PGM data length does not match its header"));
    }
    Ok((w, h, data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()))
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"LINFBPCK";

/// JSON header of a checkpoint file.
///
/// Layout: the 8-byte magic `LINFBPCK`, the header length as a
/// little-endian `u64`, the UTF-8 JSON header, then `param_count`
/// little-endian `f64` parameters in the order conv1 weights, conv1 biases,
/// conv2 weights, conv2 biases. When `optimizer_state` is set, the RMSProp
/// running mean squares and momentum buffers follow, `param_count` values
/// each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub architecture: NetShape,
    pub basis: BasisSet,
    pub channels: usize,
    pub filter: FilterKind,
    pub mode: LcrMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Geometry>,
    pub seed: u64,
    pub epoch: usize,
    pub param_count: usize,
    pub optimizer_state: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_config: Option<TrainConfig>,
}

/// Everything a checkpoint carries.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn new(state: TrainState, geometry: Option<Geometry>, train_config: Option<TrainConfig>) -> Self {
        let model = &state.model;
        let shape = *model.params.shape();
        let header = CheckpointHeader {
            architecture: shape,
            basis: model.basis,
            channels: model.basis.len(),
            filter: model.filter,
            mode: model.mode,
            geometry,
            seed: state.seed,
            epoch: state.epochs_done,
            param_count: shape.param_count(),
            optimizer_state: true,
            train_config,
        };
        Checkpoint { header, state }
    }

    pub fn model(&self) -> &LearnedModel {
        &self.state.model
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("in-memory JSON serialization");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let mut put = |vals: &[f64]| vals.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        put(self.state.model.params.as_slice());
        if self.header.optimizer_state {
            put(&self.state.optim.mean_square);
            put(&self.state.optim.velocity);
        }
        out
    }

    pub fn decode(path: &Path, bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(format_error(path, "not a checkpoint file"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let header_bytes = bytes
            .get(16..16usize.saturating_add(len))
            .ok_or_else(|| format_error(path, "truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(header_bytes).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        header.architecture.validate()?;
        if header.architecture.param_count() != header.param_count || header.channels != header.basis.len() {
            return Err(format_error(path, "header counts are inconsistent"));
        }
        let n = header.param_count;
        let blocks = if header.optimizer_state { 3 } else { 1 };
        let blob = &bytes[16 + len..];
        if blob.len() != 8 * n * blocks {
            return Err(format_error(
                path,
                format!("expected {} bytes of parameters, found {}", 8 * n * blocks, blob.len()),
            ));
        }
        let mut values = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut take = || values.by_ref().take(n).collect::<Vec<f64>>();
        let params = ModelParams::from_flat(header.architecture, take())?;
        let optim = if header.optimizer_state {
            OptimState {
                mean_square: take(),
                velocity: take(),
            }
        } else {
            OptimState::new(n)
        };
        let model = LearnedModel::new(header.basis, header.filter, header.mode, params)?;
        let state = TrainState {
            model,
            optim,
            epochs_done: header.epoch,
            seed: header.seed,
        };
        Ok(Checkpoint { header, state })
    }
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    write_atomic(path, &checkpoint.encode())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::decode(path, &read_bytes(path)?)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    format_error(path, e.to_string())
}

fn encode_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.into_inner().map_err(|e| format_error(path, e.to_string()))
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let bytes = read_bytes(path)?;
    csv::Reader::from_reader(bytes.as_slice())
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| csv_error(path, e))
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub sample_index: usize,
    pub loss: f64,
    pub loss_per_pixel: f64,
}

pub fn write_train_log(path: &Path, records: &[LossRecord], pixels: usize) -> Result<()> {
    let rows: Vec<LogRow> = records
        .iter()
        .map(|r| LogRow {
            epoch: r.epoch,
            sample_index: r.sample_index,
            loss: r.loss,
            loss_per_pixel: r.loss / pixels.max(1) as f64,
        })
        .collect();
    write_atomic(path, &encode_csv(path, &rows)?)
}

pub fn read_train_log(path: &Path) -> Result<Vec<LogRow>> {
    read_csv(path)
}

/// One row of a metric table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub sample_id: String,
    pub method: String,
    pub psnr_db: f64,
    pub nmse: f64,
    pub ssim: f64,
}

impl MetricRow {
    pub fn new(sample_id: impl Into<String>, method: impl Into<String>, report: &MetricReport) -> Self {
        MetricRow {
            sample_id: sample_id.into(),
            method: method.into(),
            psnr_db: report.psnr_db,
            nmse: report.nmse,
            ssim: report.ssim,
        }
    }
}

pub fn encode_metric_csv(rows: &[MetricRow]) -> Result<Vec<u8>> {
    encode_csv(Path::new("<metrics>"), rows)
}

pub fn write_metric_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    write_atomic(path, &encode_csv(path, rows)?)
}

pub fn read_metric_csv(path: &Path) -> Result<Vec<MetricRow>> {
    read_csv(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::InitScheme;
    use crate::rng;
    use rand::RngExt;

    fn random_image(h: usize, w: usize, seed: u64) -> ImageGrid {
        let mut rng = rng::seeded(seed);
        let grid = GridSpec::new(h, w, 0.5).unwrap();
        ImageGrid::from_values(grid, (0..h * w).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn image_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.f32");
        let img = random_image(5, 7, 1);
        write_image(&path, &img, Some(serde_json::json!({"op": "test"}))).unwrap();
        let (back, side) = read_image(&path).unwrap();
        assert_eq!(side.provenance.unwrap()["op"], "test");
        for (a, b) in back.values().iter().zip(img.values()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        let again = dir.path().join("again.f32");
        write_image(&again, &back, side_provenance(&path)).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
        assert_eq!(fs::read(sidecar_path(&path)).unwrap(), fs::read(sidecar_path(&again)).unwrap());
    }

    fn side_provenance(path: &Path) -> Option<Value> {
        read_json::<ImageSidecar>(&sidecar_path(path)).unwrap().provenance
    }

    #[test]
    fn sinogram_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.f32");
        let g = Geometry::half_rotation(9, 0.7, 4).unwrap().with_center_offset(0.25).unwrap();
        let mut rng = rng::seeded(3);
        let s = Sinogram::from_samples(g, SinogramKind::Filtered, (0..36).map(|_| rng.random::<f32>() as f64).collect())
            .unwrap();
        let dose = DoseSpec {
            incident_counts: 1e6,
            dose_fraction: 0.25,
            seed: 3,
        };
        write_sinogram(&path, &s, Some(dose), None).unwrap();
        let (back, side) = read_sinogram(&path).unwrap();
        assert_eq!(back, s);
        assert_eq!(side.dose, Some(dose));
    }

    #[test]
    fn truncated_array_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.f32");
        write_image(&path, &random_image(3, 3, 2), None).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_image(&path), Err(Error::Format { .. })));
        assert!(write_image(&dir.path().join("x.json"), &random_image(2, 2, 1), None).is_err());
    }

    #[test]
    fn pgm_mapping_and_roundtrip() {
        let grid = GridSpec::new(1, 4, 1.0).unwrap();
        let img = ImageGrid::from_values(grid, vec![-1.0, 0.0, 0.5, 3.0]).unwrap();
        let window = Window { low: 0.0, high: 1.0 };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.pgm");
        write_pgm(&path, &img, window).unwrap();
        let (w, h, levels) = read_pgm(&path).unwrap();
        assert_eq!((w, h), (4, 1));
        assert_eq!(levels, vec![0, 0, 32768, 65535]);
        assert!(fs::read(&path).unwrap().starts_with(b"P5\n4 1\n65535\n"));
    }

    #[test]
    fn missing_directory_fails_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nope").join("img.f32");
        assert!(matches!(write_image(&path, &random_image(2, 2, 1), None), Err(Error::Io { .. })));
        assert!(!dir.path().join("nope").exists());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let cfg = TrainConfig {
            init: InitScheme::FanIn,
            seed: 9,
            epochs: 3,
            ..Default::default()
        };
        let model = cfg.init_model().unwrap();
        let n = model.params.shape().param_count();
        let mut optim = OptimState::new(n);
        optim.mean_square.iter_mut().enumerate().for_each(|(i, v)| *v = i as f64 * 1e-3);
        let state = TrainState {
            model,
            optim,
            epochs_done: 2,
            seed: 9,
        };
        let geometry = Geometry::half_rotation(11, 1.0, 6).unwrap();
        let ck = Checkpoint::new(state, Some(geometry), Some(cfg));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        write_checkpoint(&path, &ck).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.encode(), fs::read(&path).unwrap());
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        assert!(Checkpoint::decode(&path, &bytes).is_err());
        assert!(Checkpoint::decode(&path, b"garbage").is_err());
    }

    #[test]
    fn csv_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![
            MetricRow {
                sample_id: "a".into(),
                method: "li_fbp".into(),
                psnr_db: 31.25,
                nmse: 0.1,
                ssim: 0.9,
            },
            MetricRow {
                sample_id: "b".into(),
                method: "li_fbp".into(),
                psnr_db: f64::INFINITY,
                nmse: 0.0,
                ssim: 1.0,
            },
        ];
        write_metric_csv(&path, &rows).unwrap();
        assert_eq!(read_metric_csv(&path).unwrap(), rows);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("sample_id,method,psnr_db,nmse,ssim\n"));

        let log = dir.path().join("log.csv");
        let records = vec![LossRecord {
            epoch: 0,
            sample_index: 1,
            loss: 8.0,
        }];
        write_train_log(&log, &records, 4).unwrap();
        let back = read_train_log(&log).unwrap();
        assert_eq!(back[0].loss_per_pixel, 2.0);
        assert_eq!(back[0].sample_index, 1);
    }
}
