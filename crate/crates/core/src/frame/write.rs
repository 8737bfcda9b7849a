use std::io::Write;
use std::path::Path;

use base64::Engine;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{DepthImage, FrameRecord, SequenceHeader};
use crate::error::{Error, Result};

pub fn header_json(header: &SequenceHeader) -> Value {
    json!({
        "schema_version": header.schema_version,
        "d_clip": header.d_clip,
        "d_dino": header.d_dino,
        "depth_unit": "mm",
    })
}

/// Serializes a frame with its depth inlined as base64 little-endian u16.
pub fn frame_record_json(frame: &FrameRecord) -> Value {
    let k = &frame.intrinsics;
    let bytes: Vec<u8> = frame.depth.values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let t = frame.pose.translation;
    let detections: Vec<Value> = frame
        .detections
        .iter()
        .map(|d| {
            json!({
                "label": d.label,
                "bbox": [d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max],
                "confidence": d.confidence,
                "mask": {"width": d.mask.width, "height": d.mask.height, "runs": d.mask.runs},
                "clip_embedding": d.clip_embedding,
                "dino_embedding": d.dino_embedding,
            })
        })
        .collect();
    json!({
        "frame_id": frame.frame_id,
        "intrinsics": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy, "width": k.width, "height": k.height},
        "pose": {"translation": [t.x, t.y, t.z], "rotation": frame.pose.wxyz()},
        "depth": {"inline": base64::engine::general_purpose::STANDARD.encode(bytes)},
        "detections": detections,
    })
}

/// Hex SHA-256 of a sequence's canonical serialization. Frames whose depth
/// was read from PNG files hash the same as their inlined form.
pub fn sequence_sha256(header: &SequenceHeader, frames: &[FrameRecord]) -> String {
    let mut h = Sha256::new();
    h.update(header_json(header).to_string());
    for f in frames {
        h.update(b"\n");
        h.update(frame_record_json(f).to_string());
    }
    hex::encode(h.finalize())
}

pub fn write_frame_file(path: &Path, header: &SequenceHeader, frames: &[FrameRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut emit = |v: &Value| -> std::io::Result<()> {
        serde_json::to_writer(&mut out, v)?;
        out.write_all(b"\n")
    };
    emit(&header_json(header)).map_err(|e| Error::io(path, e))?;
    for frame in frames {
        emit(&frame_record_json(frame)).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes a 16-bit grayscale PNG of millimeter depths.
pub fn write_depth_png(path: &Path, depth: &DepthImage) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), depth.width, depth.height);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Sixteen);
    let bytes: Vec<u8> = depth.values.iter().flat_map(|v| v.to_be_bytes()).collect();
    encoder
        .write_header()
        .and_then(|mut w| w.write_image_data(&bytes))
        .map_err(|e| Error::format(path, format!("png: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{parse_frame_record, parse_header, read_frame_file, Pose};
    use crate::frame::{BBox, CameraIntrinsics, Detection, InstanceMask};

    fn frame(id: u64) -> FrameRecord {
        let k = CameraIntrinsics { fx: 50.0, fy: 50.0, cx: 3.5, cy: 2.5, width: 8, height: 6 };
        FrameRecord {
            frame_id: id,
            intrinsics: k,
            pose: Pose::identity(),
            depth: DepthImage { width: 8, height: 6, values: (0..48).map(|v| v * 100).collect() },
            detections: vec![Detection {
                label: "lamp".into(),
                bbox: BBox { x_min: 1.0, y_min: 1.0, x_max: 3.0, y_max: 2.0 },
                confidence: 0.5,
                mask: InstanceMask::encode(8, 6, &[9, 10]).unwrap(),
                clip_embedding: vec![0.6, 0.8],
                dino_embedding: vec![1.0, 0.0, 0.0],
            }],
        }
    }

    #[test]
    fn json_round_trip() {
        let header = SequenceHeader::new(2, 3);
        let f = frame(3);
        let line = frame_record_json(&f).to_string();
        assert_eq!(parse_header(header_json(&header).to_string().as_bytes()).unwrap(), header);
        assert_eq!(parse_frame_record(line.as_bytes(), &header, None).unwrap(), f);
    }

    #[test]
    fn png_depth_reference() {
        let dir = tempfile::tempdir().unwrap();
        let f = frame(0);
        write_depth_png(&dir.path().join("d0.png"), &f.depth).unwrap();
        let mut v = frame_record_json(&f);
        v["depth"] = json!({"path": "d0.png"});
        let header = SequenceHeader::new(2, 3);
        let path = dir.path().join("frames.jsonl");
        std::fs::write(&path, format!("{}\n{}\n", header_json(&header), v)).unwrap();
        let seq = read_frame_file(&path).unwrap();
        assert_eq!(seq.frames[0].depth, f.depth);
        assert_eq!(sequence_sha256(&header, &seq.frames), sequence_sha256(&header, std::slice::from_ref(&f)));
        let mut g = f;
        g.depth.values[0] += 1;
        assert_ne!(sequence_sha256(&header, &seq.frames), sequence_sha256(&header, &[g]));
    }

    #[test]
    fn file_ordering_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let header = SequenceHeader::new(2, 3);
        let path = dir.path().join("frames.jsonl");
        write_frame_file(&path, &header, &[frame(1), frame(2), frame(5)]).unwrap();
        let ids: Vec<u64> = read_frame_file(&path).unwrap().frames.iter().map(|f| f.frame_id).collect();
        assert_eq!(ids, [1, 2, 5]);

        write_frame_file(&path, &header, &[frame(2), frame(2)]).unwrap();
        let e = read_frame_file(&path).unwrap_err().to_string();
        assert!(e.contains("frame 2: frame_id"), "{e}");
    }

    #[test]
    fn corrupt_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let header = SequenceHeader::new(2, 3);
        let path = dir.path().join("frames.jsonl");
        let text = format!("{}\n{}\n{{not json\n", header_json(&header), frame_record_json(&frame(0)));
        std::fs::write(&path, text).unwrap();
        let e = read_frame_file(&path).unwrap_err().to_string();
        assert!(e.starts_with("line 3:"), "{e}");
    }
}
