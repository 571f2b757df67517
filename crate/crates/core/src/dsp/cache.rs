//! Per-track feature cache: `"MELS"`, version, `n_mels`, `n_frames` (all
//! little-endian `u32`), then `n_mels · n_frames` little-endian `f32` values,
//! mel-major.

use std::io::Write;
use std::path::Path;

use super::{MelSpectrogram, HOP_LEN, SAMPLE_RATE};
use crate::{Error, Result};

pub const FEATURE_CACHE_MAGIC: &[u8; 4] = b"MELS";
pub const FEATURE_CACHE_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_feature_cache(spec: &MelSpectrogram) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * spec.values().len());
    out.extend_from_slice(FEATURE_CACHE_MAGIC);
    out.extend_from_slice(&FEATURE_CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.n_mels() as u32).to_le_bytes());
    out.extend_from_slice(&(spec.n_frames() as u32).to_le_bytes());
    for v in spec.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Writes via a temporary sibling and a rename so readers never see a partial file.
pub fn write_feature_cache(path: &Path, spec: &MelSpectrogram) -> Result<()> {
    let tmp = path.with_extension("mels.tmp");
    let mut file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(&encode_feature_cache(spec)).and_then(|_| file.sync_all()).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_feature_cache_bytes(bytes: &[u8]) -> Result<MelSpectrogram> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("feature cache truncated at {} bytes", bytes.len())));
    }
    if &bytes[..4] != FEATURE_CACHE_MAGIC {
        return Err(Error::Format("feature cache magic is not \"MELS\"".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != FEATURE_CACHE_VERSION {
        return Err(Error::Unsupported(format!("feature cache version {version}")));
    }
    let (n_mels, n_frames) = (word(8) as usize, word(12) as usize);
    let expected = HEADER_LEN + 4 * n_mels * n_frames;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "feature cache for {n_mels}x{n_frames} should be {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let values = bytes[HEADER_LEN..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    MelSpectrogram::new(values, n_mels, n_frames, HOP_LEN as f64 / SAMPLE_RATE as f64)
}

pub fn read_feature_cache(path: &Path) -> Result<MelSpectrogram> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_feature_cache_bytes(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn byte_layout() {
        let spec = MelSpectrogram::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, 3, 0.01).unwrap();
        let bytes = encode_feature_cache(&spec);
        assert_eq!(&bytes[..4], b"MELS");
        assert_eq!(&bytes[4..16], &[1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 24);
    }

    #[test]
    fn rejects_corruption() {
        let spec = MelSpectrogram::new(vec![0.5; 6], 2, 3, 0.01).unwrap();
        let bytes = encode_feature_cache(&spec);
        assert!(matches!(read_feature_cache_bytes(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(read_feature_cache_bytes(&bytes[..10]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_feature_cache_bytes(&bad), Err(Error::Format(_))));
        let mut bad = bytes;
        bad[4] = 9;
        assert!(matches!(read_feature_cache_bytes(&bad), Err(Error::Unsupported(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mels");
        let spec = MelSpectrogram::new(vec![0.25; 64 * 300], 64, 300, 0.01).unwrap();
        write_feature_cache(&path, &spec).unwrap();
        assert_eq!(read_feature_cache(&path).unwrap().values(), spec.values());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            (n_mels, values) in (1usize..8, 1usize..20).prop_flat_map(|(m, t)| {
                (Just(m), prop::collection::vec(0.0f32..100.0, m * t))
            })
        ) {
            let n_frames = values.len() / n_mels;
            let spec = MelSpectrogram::new(values, n_mels, n_frames, 0.01).unwrap();
            let back = read_feature_cache_bytes(&encode_feature_cache(&spec)).unwrap();
            prop_assert_eq!(back.values(), spec.values());
            prop_assert_eq!(back.n_frames(), n_frames);
        }
    }
}
