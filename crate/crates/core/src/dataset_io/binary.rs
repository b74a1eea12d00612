//! Little-endian binary containers for point clouds (`UNPC`) and feature
//! maps (`UNFT`).

use std::fs;
use std::path::Path;

use super::{DatasetError, FeatureMap};

pub const POINT_CLOUD_MAGIC: &[u8; 4] = b"UNPC";
pub const FEATURE_MAP_MAGIC: &[u8; 4] = b"UNFT";

const POINT_RECORD_BYTES: usize = 12;

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn format_err(&self, offset: usize, message: impl Into<String>) -> DatasetError {
        DatasetError::Format {
            path: self.path.to_path_buf(),
            offset,
            message: message.into(),
        }
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<(), DatasetError> {
        let got = self
            .bytes
            .get(self.offset..self.offset + 4)
            .ok_or_else(|| self.format_err(self.offset, "truncated header: missing magic"))?;
        if got != expected {
            return Err(self.format_err(
                self.offset,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expected)
                ),
            ));
        }
        self.offset += 4;
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32, DatasetError> {
        let got = self
            .bytes
            .get(self.offset..self.offset + 4)
            .ok_or_else(|| {
                self.format_err(self.offset, format!("truncated header: missing {what}"))
            })?;
        self.offset += 4;
        Ok(u32::from_le_bytes([got[0], got[1], got[2], got[3]]))
    }

    fn f32_payload(&self, count: usize, record: usize) -> Result<Vec<f32>, DatasetError> {
        let body = &self.bytes[self.offset..];
        if !body.len().is_multiple_of(record) {
            return Err(self.format_err(
                self.offset + body.len() - body.len() % record,
                format!(
                    "payload of {} bytes is not a multiple of the {record}-byte record",
                    body.len()
                ),
            ));
        }
        if body.len() != count * 4 {
            return Err(self.format_err(
                self.offset,
                format!(
                    "header declares {} bytes of payload, found {}",
                    count * 4,
                    body.len()
                ),
            ));
        }
        let values: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(self.format_err(self.offset + 4 * i, "non-finite value"));
        }
        Ok(values)
    }
}

pub fn parse_point_cloud(bytes: &[u8], path: &Path) -> Result<Vec<[f32; 3]>, DatasetError> {
    let mut r = Reader {
        bytes,
        offset: 0,
        path,
    };
    r.magic(POINT_CLOUD_MAGIC)?;
    let count = r.u32("point count")? as usize;
    let flat = r.f32_payload(count * 3, POINT_RECORD_BYTES)?;
    Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

pub fn encode_point_cloud(points: &[[f32; 3]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + points.len() * POINT_RECORD_BYTES);
    out.extend_from_slice(POINT_CLOUD_MAGIC);
    out.extend_from_slice(&(points.len() as u32).to_le_bytes());
    for p in points {
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn parse_feature_map(bytes: &[u8], path: &Path) -> Result<FeatureMap, DatasetError> {
    let mut r = Reader {
        bytes,
        offset: 0,
        path,
    };
    r.magic(FEATURE_MAP_MAGIC)?;
    let height = r.u32("H_F")? as usize;
    let width = r.u32("W_F")? as usize;
    let channels = r.u32("C_F")? as usize;
    let patch_offset = r.offset;
    let patch_size = r.u32("patch_size")? as usize;
    if patch_size == 0 {
        return Err(r.format_err(patch_offset, "patch_size must be positive"));
    }
    let data = r.f32_payload(height * width * channels, 4)?;
    FeatureMap::new(height, width, channels, patch_size, data)
}

pub fn encode_feature_map(map: &FeatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + map.data().len() * 4);
    out.extend_from_slice(FEATURE_MAP_MAGIC);
    for v in [map.height(), map.width(), map.channels(), map.patch_size()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in map.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_point_cloud(path: &Path) -> Result<Vec<[f32; 3]>, DatasetError> {
    let bytes = fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    parse_point_cloud(&bytes, path)
}

pub fn write_point_cloud(path: &Path, points: &[[f32; 3]]) -> Result<(), DatasetError> {
    fs::write(path, encode_point_cloud(points)).map_err(|e| DatasetError::io(path, e))
}

pub fn read_feature_map(path: &Path) -> Result<FeatureMap, DatasetError> {
    let bytes = fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    parse_feature_map(&bytes, path)
}

pub fn write_feature_map(path: &Path, map: &FeatureMap) -> Result<(), DatasetError> {
    fs::write(path, encode_feature_map(map)).map_err(|e| DatasetError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem.bin")
    }

    proptest! {
        #[test]
        fn point_cloud_round_trip(points in prop::collection::vec(prop::array::uniform3(-1e3f32..1e3), 0..64)) {
            let bytes = encode_point_cloud(&points);
            prop_assert_eq!(parse_point_cloud(&bytes, p()).unwrap(), points);
        }
    }

    #[test]
    fn truncated_record_is_format_error() {
        let mut bytes = encode_point_cloud(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        bytes.truncate(bytes.len() - 5);
        match parse_point_cloud(&bytes, p()) {
            Err(DatasetError::Format { offset, .. }) => assert_eq!(offset, 8 + 12),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let mut bytes = encode_point_cloud(&[]);
        bytes[0] = b'X';
        assert!(matches!(
            parse_point_cloud(&bytes, p()),
            Err(DatasetError::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let mut bytes = encode_point_cloud(&[[1.0, 2.0, 3.0]]);
        bytes[4] = 2;
        assert!(matches!(
            parse_point_cloud(&bytes, p()),
            Err(DatasetError::Format { offset: 8, .. })
        ));
    }

    #[test]
    fn feature_map_round_trip() {
        let map = FeatureMap::new(2, 3, 2, 14, (0..12).map(|v| v as f32).collect()).unwrap();
        let bytes = encode_feature_map(&map);
        assert_eq!(&bytes[..4], b"UNFT");
        assert_eq!(parse_feature_map(&bytes, p()).unwrap(), map);
    }

    #[test]
    fn truncated_feature_header() {
        let bytes = b"UNFT\x01\x00\x00\x00";
        assert!(matches!(
            parse_feature_map(bytes, p()),
            Err(DatasetError::Format { offset: 8, .. })
        ));
    }
}
