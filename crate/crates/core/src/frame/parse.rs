use std::io::Read;
use std::path::{Path, PathBuf};

use base64::Engine;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde_json::{Map, Value};

use super::{
    BBox, CameraIntrinsics, DepthImage, Detection, FrameRecord, InstanceMask, Pose,
    SequenceHeader, SCHEMA_VERSION,
};
use crate::embedding;
use crate::error::{Error, FrameRef, Result};

const QUATERNION_TOLERANCE: f64 = 1e-6;

/// A parsed frame-record file.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub header: SequenceHeader,
    pub frames: Vec<FrameRecord>,
}

pub fn parse_header(line: &[u8]) -> Result<SequenceHeader> {
    let value: Value =
        serde_json::from_slice(line).map_err(|e| Error::Header(format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Header("expected a JSON object".into()))?;
    let get_uint = |key: &str| -> Result<u64> {
        obj.get(key)
            .ok_or_else(|| Error::Header(format!("missing field `{key}`")))?
            .as_u64()
            .ok_or_else(|| Error::Header(format!("`{key}` must be a non-negative integer")))
    };
    let version = get_uint("schema_version")?;
    if version != SCHEMA_VERSION as u64 {
        return Err(Error::Header(format!(
            "unsupported schema_version {version} (expected {SCHEMA_VERSION})"
        )));
    }
    let d_clip = get_uint("d_clip")? as usize;
    let d_dino = get_uint("d_dino")? as usize;
    if d_clip == 0 || d_dino == 0 {
        return Err(Error::Header("embedding dimensions must be positive".into()));
    }
    match obj.get("depth_unit").and_then(Value::as_str) {
        Some("mm") => {}
        Some(other) => return Err(Error::Header(format!("unsupported depth_unit `{other}`"))),
        None => return Err(Error::Header("missing field `depth_unit`".into())),
    }
    Ok(SequenceHeader {
        schema_version: version as u32,
        d_clip,
        d_dino,
    })
}

/// Parses one frame line. Relative depth PNG paths resolve against `base_dir`.
pub fn parse_frame_record(
    line: &[u8],
    header: &SequenceHeader,
    base_dir: Option<&Path>,
) -> Result<FrameRecord> {
    let value: Value = serde_json::from_slice(line).map_err(|e| Error::Frame {
        frame: FrameRef::Unknown,
        field: "<record>".into(),
        message: format!("invalid JSON: {e}"),
    })?;
    let frame = value
        .get("frame_id")
        .and_then(Value::as_u64)
        .map_or(FrameRef::Unknown, FrameRef::Id);
    Parser { frame, header, base_dir }.record(&value)
}

/// Reads a whole JSON-lines file: header first, then one frame per line.
/// Blank lines are skipped. Frame ids must be strictly increasing.
pub fn read_frame_file(path: &Path) -> Result<FrameSequence> {
    let mut text = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut text))
        .map_err(|e| Error::io(path, e))?;
    let base_dir = path.parent().map(Path::to_path_buf);

    let mut lines = text
        .split(|&b| b == b'\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix(b"\r").unwrap_or(l)))
        .filter(|(_, l)| !l.iter().all(u8::is_ascii_whitespace));
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::Header("file is empty".into()))?;
    let header = parse_header(header_line)?;

    let body: Vec<(usize, &[u8])> = lines.collect();
    let parsed: Vec<Result<FrameRecord>> = body
        .par_iter()
        .map(|(line_no, line)| {
            parse_frame_record(line, &header, base_dir.as_deref()).map_err(|e| match e {
                Error::Frame { frame: FrameRef::Unknown, field, message } => Error::Frame {
                    frame: FrameRef::Line(*line_no),
                    field,
                    message,
                },
                other => other,
            })
        })
        .collect();

    let mut frames = Vec::with_capacity(parsed.len());
    for record in parsed {
        let record = record?;
        if let Some(prev) = frames.last().map(|f: &FrameRecord| f.frame_id) {
            if record.frame_id <= prev {
                return Err(Error::Frame {
                    frame: FrameRef::Id(record.frame_id),
                    field: "frame_id".into(),
                    message: format!("not increasing (previous frame {prev})"),
                });
            }
        }
        frames.push(record);
    }
    Ok(FrameSequence { header, frames })
}

struct Parser<'a> {
    frame: FrameRef,
    header: &'a SequenceHeader,
    base_dir: Option<&'a Path>,
}

impl Parser<'_> {
    fn err(&self, field: &str, message: impl Into<String>) -> Error {
        Error::Frame {
            frame: self.frame,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn object<'v>(&self, v: &'v Value, path: &str) -> Result<&'v Map<String, Value>> {
        v.as_object().ok_or_else(|| self.err(path, "expected an object"))
    }

    fn field<'v>(&self, obj: &'v Map<String, Value>, key: &str, path: &str) -> Result<&'v Value> {
        obj.get(key)
            .ok_or_else(|| self.err(&join(path, key), "missing field"))
    }

    fn number(&self, v: &Value, path: &str) -> Result<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Ok(x),
            _ => Err(self.err(path, "expected a finite number")),
        }
    }

    fn uint(&self, v: &Value, path: &str) -> Result<u64> {
        v.as_u64()
            .ok_or_else(|| self.err(path, "expected a non-negative integer"))
    }

    fn num_field(&self, obj: &Map<String, Value>, key: &str, path: &str) -> Result<f64> {
        self.number(self.field(obj, key, path)?, &join(path, key))
    }

    fn u32_field(&self, obj: &Map<String, Value>, key: &str, path: &str) -> Result<u32> {
        let p = join(path, key);
        let x = self.uint(self.field(obj, key, path)?, &p)?;
        u32::try_from(x).map_err(|_| self.err(&p, "value too large"))
    }

    fn numbers(&self, v: &Value, path: &str) -> Result<Vec<f64>> {
        let arr = v.as_array().ok_or_else(|| self.err(path, "expected an array"))?;
        arr.iter()
            .enumerate()
            .map(|(i, x)| self.number(x, &format!("{path}[{i}]")))
            .collect()
    }

    fn record(&self, v: &Value) -> Result<FrameRecord> {
        let obj = self.object(v, "<record>")?;
        let frame_id = self.uint(self.field(obj, "frame_id", "")?, "frame_id")?;
        let intrinsics = self.intrinsics(self.field(obj, "intrinsics", "")?)?;
        let pose = self.pose(self.field(obj, "pose", "")?)?;
        let depth = self.depth(self.field(obj, "depth", "")?, &intrinsics)?;
        let dets = self
            .field(obj, "detections", "")?
            .as_array()
            .ok_or_else(|| self.err("detections", "expected an array"))?;
        let detections = dets
            .iter()
            .enumerate()
            .map(|(i, d)| self.detection(d, &format!("detections[{i}]"), &intrinsics))
            .collect::<Result<Vec<_>>>()?;
        Ok(FrameRecord {
            frame_id,
            intrinsics,
            pose,
            depth,
            detections,
        })
    }

    fn intrinsics(&self, v: &Value) -> Result<CameraIntrinsics> {
        let p = "intrinsics";
        let obj = self.object(v, p)?;
        let k = CameraIntrinsics {
            fx: self.num_field(obj, "fx", p)?,
            fy: self.num_field(obj, "fy", p)?,
            cx: self.num_field(obj, "cx", p)?,
            cy: self.num_field(obj, "cy", p)?,
            width: self.u32_field(obj, "width", p)?,
            height: self.u32_field(obj, "height", p)?,
        };
        k.check().map_err(|m| self.err(p, m))?;
        Ok(k)
    }

    fn pose(&self, v: &Value) -> Result<Pose> {
        let obj = self.object(v, "pose")?;
        let t = self.numbers(self.field(obj, "translation", "pose")?, "pose.translation")?;
        if t.len() != 3 {
            return Err(self.err("pose.translation", "expected 3 components"));
        }
        let q = self.numbers(self.field(obj, "rotation", "pose")?, "pose.rotation")?;
        if q.len() != 4 {
            return Err(self.err("pose.rotation", "expected 4 components [w, x, y, z]"));
        }
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        if (quat.norm() - 1.0).abs() > QUATERNION_TOLERANCE {
            return Err(self.err(
                "pose.rotation",
                format!("bad quaternion: norm {} is not 1", quat.norm()),
            ));
        }
        Ok(Pose {
            translation: Vector3::new(t[0], t[1], t[2]),
            rotation: UnitQuaternion::new_normalize(quat),
        })
    }

    fn depth(&self, v: &Value, k: &CameraIntrinsics) -> Result<DepthImage> {
        let obj = self.object(v, "depth")?;
        let expected = k.width as usize * k.height as usize;
        let values = match (obj.get("inline"), obj.get("path")) {
            (Some(data), None) => {
                let text = data
                    .as_str()
                    .ok_or_else(|| self.err("depth.inline", "expected a base64 string"))?;
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(text)
                    .map_err(|e| self.err("depth.inline", format!("invalid base64: {e}")))?;
                if bytes.len() != expected * 2 {
                    return Err(self.err(
                        "depth.inline",
                        format!(
                            "depth size mismatch: {} bytes for a {}x{} image",
                            bytes.len(),
                            k.width,
                            k.height
                        ),
                    ));
                }
                bytes
                    .chunks_exact(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]]))
                    .collect()
            }
            (None, Some(path)) => {
                let rel = path
                    .as_str()
                    .ok_or_else(|| self.err("depth.path", "expected a string"))?;
                let full = match self.base_dir {
                    Some(base) => base.join(rel),
                    None => PathBuf::from(rel),
                };
                let img = read_depth_png(&full).map_err(|e| self.err("depth.path", e.to_string()))?;
                if img.width != k.width || img.height != k.height {
                    return Err(self.err(
                        "depth.path",
                        format!(
                            "depth size mismatch: png is {}x{}, intrinsics say {}x{}",
                            img.width, img.height, k.width, k.height
                        ),
                    ));
                }
                img.values
            }
            _ => return Err(self.err("depth", "expected exactly one of `inline` or `path`")),
        };
        Ok(DepthImage {
            width: k.width,
            height: k.height,
            values,
        })
    }

    fn detection(&self, v: &Value, path: &str, k: &CameraIntrinsics) -> Result<Detection> {
        let obj = self.object(v, path)?;
        let label = self
            .field(obj, "label", path)?
            .as_str()
            .ok_or_else(|| self.err(&join(path, "label"), "expected a string"))?
            .to_string();

        let bbox_path = join(path, "bbox");
        let b = self.numbers(self.field(obj, "bbox", path)?, &bbox_path)?;
        if b.len() != 4 {
            return Err(self.err(&bbox_path, "expected [x_min, y_min, x_max, y_max]"));
        }
        let bbox = BBox { x_min: b[0], y_min: b[1], x_max: b[2], y_max: b[3] };
        if !(bbox.x_min >= 0.0
            && bbox.y_min >= 0.0
            && bbox.x_min < bbox.x_max
            && bbox.y_min < bbox.y_max
            && bbox.x_max <= k.width as f64
            && bbox.y_max <= k.height as f64)
        {
            return Err(self.err(&bbox_path, "box is empty or outside the image"));
        }

        let conf_path = join(path, "confidence");
        let confidence = self.num_field(obj, "confidence", path)?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(self.err(&conf_path, "confidence must lie in [0, 1]"));
        }

        let mask_path = join(path, "mask");
        let m = self.object(self.field(obj, "mask", path)?, &mask_path)?;
        let runs_path = join(&mask_path, "runs");
        let runs = self
            .field(m, "runs", &mask_path)?
            .as_array()
            .ok_or_else(|| self.err(&runs_path, "expected an array"))?
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let p = format!("{runs_path}[{i}]");
                u32::try_from(self.uint(r, &p)?).map_err(|_| self.err(&p, "value too large"))
            })
            .collect::<Result<Vec<u32>>>()?;
        let mask = InstanceMask {
            width: self.u32_field(m, "width", &mask_path)?,
            height: self.u32_field(m, "height", &mask_path)?,
            runs,
        };
        if mask.width != k.width || mask.height != k.height {
            return Err(self.err(&mask_path, "mask size differs from the frame"));
        }
        mask.check().map_err(|reason| self.err(&mask_path, reason))?;

        let clip_embedding = self.embedding(obj, "clip_embedding", path, self.header.d_clip)?;
        let dino_embedding = self.embedding(obj, "dino_embedding", path, self.header.d_dino)?;
        Ok(Detection {
            label,
            bbox,
            confidence,
            mask,
            clip_embedding,
            dino_embedding,
        })
    }

    fn embedding(&self, obj: &Map<String, Value>, key: &str, path: &str, dim: usize) -> Result<Vec<f64>> {
        let p = join(path, key);
        let raw = self.numbers(self.field(obj, key, path)?, &p)?;
        if raw.len() != dim {
            return Err(self.err(
                &p,
                format!("wrong dimension: {} (header declares {dim})", raw.len()),
            ));
        }
        let n = embedding::norm(&raw);
        if (n - 1.0).abs() <= UNIT_TOLERANCE {
            // Already unit within rounding; rescaling again would only
            // perturb the last bits and break write/read round trips.
            return Ok(raw);
        }
        embedding::normalized(&raw).ok_or_else(|| self.err(&p, "zero-norm embedding"))
    }
}

/// Norm deviation below which an embedding is taken as already unit.
const UNIT_TOLERANCE: f64 = 1e-12;

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Reads a single-channel 16-bit PNG of millimeter depths.
pub(crate) fn read_depth_png(path: &Path) -> Result<DepthImage> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, format!("png: {e}")))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::format(path, "depth png must be 16-bit grayscale"));
    }
    let (width, height) = (info.width, info.height);
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, format!("png: {e}")))?;
    let values = buf[..frame.buffer_size()]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok(DepthImage { width, height, values })
}
