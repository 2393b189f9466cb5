//! Augmented dataset files: detection records plus teacher embeddings.
//!
//! Text layout:
//!
//! ```text
//! # distilltrack augmented
//! dim=<D_t>
//! embedder=<name>
//! crop=<height>x<width>
//! seed=<u64>
//! float_width=4
//! records=<N>
//! ---
//! <image_id>,<x_min>,<y_min>,<x_max>,<y_max>,<class_id>,<v_1>,...,<v_D_t>
//! ```
//!
//! Binary layout, all integers and floats little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `DTAUGv1\0` |
//! | 4 | `u32` D_t |
//! | 4 | `u32` float width, always 4 |
//! | 8 | `u64` seed |
//! | 4 + 4 | `u32` crop height, `u32` crop width |
//! | 4 + n | `u32` embedder name length, UTF-8 bytes |
//! | 8 | `u64` record count N |
//!
//! then N records, each
//!
//! | bytes | content |
//! |---|---|
//! | 4 + n | `u32` image id length, UTF-8 bytes |
//! | 32 | `f64` x_min, y_min, x_max, y_max |
//! | 4 | `u32` class id |
//! | 4 * D_t | `f32` embedding values |
//!
//! The embedding block of a record is exactly `D_t * 4` bytes, so a file's
//! size minus the size of the same file written with `D_t = 0` equals the
//! payload counted by [`crate::distill::storage_overhead`].

use std::fmt::Write as _;

use super::IoError;
use crate::distill::{
    AugmentedRecord, CropContract, DatasetMetadata, DetectionRecord, DistilledDataset,
    TeacherEmbedding,
};
use crate::geometry::BBox;

pub const MAGIC: &[u8; 8] = b"DTAUGv1\0";
const TEXT_BANNER: &str = "# distilltrack augmented";

fn check_image_id(id: &str) -> Result<(), IoError> {
    if id.is_empty() || id.contains([',', '\n', '\r']) || id.trim() != id {
        return Err(IoError::Invalid(format!(
            "image id {id:?} must be non-empty without commas, newlines or surrounding spaces"
        )));
    }
    Ok(())
}

fn check_dataset(ds: &DistilledDataset) -> Result<(), IoError> {
    if ds.metadata.float_width != 4 {
        return Err(IoError::Invalid(format!(
            "unsupported float width {}",
            ds.metadata.float_width
        )));
    }
    if ds.metadata.embedder.contains(['\n', '\r']) {
        return Err(IoError::Invalid(
            "embedder name must be a single line".into(),
        ));
    }
    for r in &ds.records {
        if r.teacher.dim() != ds.metadata.dim {
            return Err(IoError::Invalid(format!(
                "record dimension {} does not match header dimension {}",
                r.teacher.dim(),
                ds.metadata.dim
            )));
        }
    }
    Ok(())
}

pub fn write_text(ds: &DistilledDataset) -> Result<String, IoError> {
    check_dataset(ds)?;
    let m = &ds.metadata;
    let mut out = String::new();
    let _ = writeln!(out, "{TEXT_BANNER}");
    let _ = writeln!(out, "dim={}", m.dim);
    let _ = writeln!(out, "embedder={}", m.embedder);
    let _ = writeln!(out, "crop={}", m.crop);
    let _ = writeln!(out, "seed={}", m.seed);
    let _ = writeln!(out, "float_width={}", m.float_width);
    let _ = writeln!(out, "records={}", ds.records.len());
    out.push_str("---\n");
    for r in &ds.records {
        check_image_id(&r.record.image_id)?;
        let b = &r.record.bbox;
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            r.record.image_id, b.x_min, b.y_min, b.x_max, b.y_max, r.record.class_id
        );
        for v in r.teacher.values() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    Ok(out)
}

fn parse_crop(s: &str) -> Option<CropContract> {
    let (h, w) = s.split_once('x')?;
    Some(CropContract {
        height: h.parse().ok()?,
        width: w.parse().ok()?,
    })
}

pub fn read_text(text: &str) -> Result<DistilledDataset, IoError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l == TEXT_BANNER => {}
        _ => return Err(IoError::line(1, "missing augmented dataset banner")),
    }
    let mut header: Vec<(usize, String, String)> = Vec::new();
    let mut saw_separator = false;
    for (n, l) in lines.by_ref() {
        if l == "---" {
            saw_separator = true;
            break;
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| IoError::line(n, format!("expected key=value, got {l:?}")))?;
        header.push((n, k.to_string(), v.to_string()));
    }
    if !saw_separator {
        return Err(IoError::line(
            text.lines().count() + 1,
            "missing header separator",
        ));
    }
    let get = |key: &str| -> Result<(usize, &str), IoError> {
        header
            .iter()
            .find(|(_, k, _)| k == key)
            .map(|(n, _, v)| (*n, v.as_str()))
            .ok_or_else(|| IoError::Invalid(format!("header is missing {key}")))
    };
    let num = |key: &str| -> Result<u64, IoError> {
        let (n, v) = get(key)?;
        v.parse().map_err(|_| {
            IoError::line(n, format!("{key}: expected an unsigned integer, got {v:?}"))
        })
    };
    let dim = num("dim")? as usize;
    let seed = num("seed")?;
    let float_width = num("float_width")? as u32;
    if float_width != 4 {
        return Err(IoError::line(
            get("float_width")?.0,
            format!("unsupported float width {float_width}"),
        ));
    }
    let count = num("records")? as usize;
    let (crop_line, crop_text) = get("crop")?;
    let crop = parse_crop(crop_text)
        .ok_or_else(|| IoError::line(crop_line, format!("bad crop {crop_text:?}")))?;
    let embedder = get("embedder")?.1.to_string();

    let mut records = Vec::with_capacity(count.min(1 << 20));
    for (n, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 6 + dim {
            return Err(IoError::line(
                n,
                format!(
                    "expected {} fields for dimension {dim}, found {}",
                    6 + dim,
                    f.len()
                ),
            ));
        }
        let real = |s: &str| -> Result<f64, IoError> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| IoError::line(n, format!("expected a finite number, got {s:?}")))
        };
        let bbox = BBox::new(real(f[1])?, real(f[2])?, real(f[3])?, real(f[4])?)
            .map_err(|e| IoError::line(n, e.to_string()))?;
        let class_id: u32 = f[5].parse().map_err(|_| {
            IoError::line(
                n,
                format!("class id: expected an unsigned integer, got {:?}", f[5]),
            )
        })?;
        let values = f[6..]
            .iter()
            .map(|s| {
                s.parse::<f32>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| IoError::line(n, format!("expected a finite number, got {s:?}")))
            })
            .collect::<Result<Vec<f32>, _>>()?;
        let teacher =
            TeacherEmbedding::from_unit(values).map_err(|e| IoError::line(n, e.to_string()))?;
        records.push(AugmentedRecord {
            record: DetectionRecord {
                image_id: f[0].to_string(),
                bbox,
                class_id,
            },
            teacher,
        });
    }
    if records.len() != count {
        return Err(IoError::Invalid(format!(
            "header declares {count} records, found {}",
            records.len()
        )));
    }
    Ok(DistilledDataset {
        metadata: DatasetMetadata {
            dim,
            embedder,
            crop,
            seed,
            float_width,
        },
        records,
    })
}

pub fn write_binary(ds: &DistilledDataset) -> Result<Vec<u8>, IoError> {
    check_dataset(ds)?;
    let m = &ds.metadata;
    let per_record: usize = 4 + 32 + 4 + 4 * m.dim;
    let mut out = Vec::with_capacity(64 + ds.records.len() * (per_record + 16));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.dim as u32).to_le_bytes());
    out.extend_from_slice(&m.float_width.to_le_bytes());
    out.extend_from_slice(&m.seed.to_le_bytes());
    out.extend_from_slice(&m.crop.height.to_le_bytes());
    out.extend_from_slice(&m.crop.width.to_le_bytes());
    out.extend_from_slice(&(m.embedder.len() as u32).to_le_bytes());
    out.extend_from_slice(m.embedder.as_bytes());
    out.extend_from_slice(&(ds.records.len() as u64).to_le_bytes());
    for r in &ds.records {
        let id = r.record.image_id.as_bytes();
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id);
        let b = &r.record.bbox;
        for v in [b.x_min, b.y_min, b.x_max, b.y_max] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&r.record.class_id.to_le_bytes());
        for v in r.teacher.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], IoError> {
        if self.bytes.len() - self.pos < n {
            return Err(IoError::Offset {
                offset: self.pos as u64,
                message: format!(
                    "truncated {what}: need {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self, what: &str) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self, what: &str) -> Result<String, IoError> {
        let at = self.pos as u64;
        let n = self.u32(what)? as usize;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| IoError::Offset {
            offset: at,
            message: format!("{what} is not valid UTF-8"),
        })
    }

    fn fail(&self, at: usize, message: impl Into<String>) -> IoError {
        IoError::Offset {
            offset: at as u64,
            message: message.into(),
        }
    }
}

pub fn read_binary(bytes: &[u8]) -> Result<DistilledDataset, IoError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(r.fail(0, "bad magic"));
    }
    let dim = r.u32("dimension")? as usize;
    let at = r.pos;
    let float_width = r.u32("float width")?;
    if float_width != 4 {
        return Err(r.fail(at, format!("unsupported float width {float_width}")));
    }
    let seed = r.u64("seed")?;
    let crop = CropContract {
        height: r.u32("crop height")?,
        width: r.u32("crop width")?,
    };
    let embedder = r.string("embedder name")?;
    let count = r.u64("record count")? as usize;
    let mut records = Vec::with_capacity(count.min(bytes.len() / (40 + 4 * dim).max(1) + 1));
    for _ in 0..count {
        let start = r.pos;
        let image_id = r.string("image id")?;
        let coords = [r.f64("box")?, r.f64("box")?, r.f64("box")?, r.f64("box")?];
        let bbox = BBox::new(coords[0], coords[1], coords[2], coords[3])
            .map_err(|e| r.fail(start, e.to_string()))?;
        let class_id = r.u32("class id")?;
        let emb_at = r.pos;
        let raw = r.take(4 * dim, "embedding")?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let teacher =
            TeacherEmbedding::from_unit(values).map_err(|e| r.fail(emb_at, e.to_string()))?;
        records.push(AugmentedRecord {
            record: DetectionRecord {
                image_id,
                bbox,
                class_id,
            },
            teacher,
        });
    }
    if r.pos != bytes.len() {
        return Err(r.fail(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(DistilledDataset {
        metadata: DatasetMetadata {
            dim,
            embedder,
            crop,
            seed,
            float_width,
        },
        records,
    })
}

/// Picks the binary layout for `.bin` paths and text otherwise.
pub fn is_binary_path(path: &std::path::Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

pub fn write_file(path: &std::path::Path, ds: &DistilledDataset) -> Result<Vec<u8>, IoError> {
    if is_binary_path(path) {
        write_binary(ds)
    } else {
        write_text(ds).map(String::into_bytes)
    }
}

pub fn read_file(path: &std::path::Path) -> Result<DistilledDataset, IoError> {
    let bytes = std::fs::read(path)?;
    if is_binary_path(path) {
        read_binary(&bytes)
    } else {
        let text =
            String::from_utf8(bytes).map_err(|e| IoError::Invalid(format!("not UTF-8: {e}")))?;
        read_text(&text)
    }
}
