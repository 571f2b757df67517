use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavReader};

use super::AudioClip;
use crate::{Error, Result};

/// Decodes a RIFF/WAVE byte buffer into a mono clip.
///
/// Accepts 16-bit integer or 32-bit float PCM with one or two channels.
/// Stereo is downmixed by averaging the two channels; integer samples are
/// scaled by `1 / 32768`.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    let reader = WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.channels != 1 && spec.channels != 2 {
        return Err(Error::Unsupported(format!("{} channels", spec.channels)));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        (SampleFormat::Float, 32) => {
            reader.into_samples::<f32>().collect::<std::result::Result<_, _>>().map_err(map_hound)?
        }
        (format, bits) => {
            return Err(Error::Unsupported(format!("{bits}-bit {format:?} samples")));
        }
    };
    let samples = if spec.channels == 2 {
        interleaved.chunks_exact(2).map(|lr| 0.5 * (lr[0] + lr[1])).collect()
    } else {
        interleaved
    };
    AudioClip::new(samples, spec.sample_rate)
}

pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

fn map_hound(err: hound::Error) -> Error {
    match err {
        hound::Error::Unsupported => Error::Unsupported("WAVE encoding".into()),
        hound::Error::FormatError(msg) => Error::Format(msg.into()),
        hound::Error::IoError(e) => Error::Format(format!("truncated or unreadable WAVE data: {e}")),
        other => Error::Format(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use hound::{WavSpec, WavWriter};

    use super::*;

    fn encode<S: hound::Sample + Copy>(spec: WavSpec, samples: &[S]) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        let mut w = WavWriter::new(&mut buf, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        buf.into_inner()
    }

    fn spec(channels: u16, bits: u16, format: SampleFormat) -> WavSpec {
        WavSpec { channels, sample_rate: 22_050, bits_per_sample: bits, sample_format: format }
    }

    #[test]
    fn zero_signal() {
        let bytes = encode(spec(1, 16, SampleFormat::Int), &[0i16; 100]);
        let clip = decode_wav(&bytes).unwrap();
        assert_eq!(clip.sample_rate, 22_050);
        assert_eq!(clip.samples, vec![0.0; 100]);
    }

    #[test]
    fn fixed_point_scaling() {
        let bytes = encode(spec(1, 16, SampleFormat::Int), &[32767i16, -32768, 16384]);
        let clip = decode_wav(&bytes).unwrap();
        assert_eq!(clip.samples, vec![32767.0 / 32768.0, -1.0, 0.5]);
        assert!((clip.samples[0] - 0.99997).abs() < 1e-5);
    }

    #[test]
    fn stereo_is_mean_downmixed() {
        let bytes = encode(spec(2, 32, SampleFormat::Float), &[0.5f32, -0.5, 0.25, 0.75]);
        let clip = decode_wav(&bytes).unwrap();
        assert_eq!(clip.samples, vec![0.0, 0.5]);
    }

    #[test]
    fn unsupported_bit_depth() {
        let bytes = encode(spec(1, 24, SampleFormat::Int), &[0i32; 4]);
        assert!(matches!(decode_wav(&bytes), Err(Error::Unsupported(_))));
    }

    #[test]
    fn too_many_channels() {
        let bytes = encode(spec(3, 16, SampleFormat::Int), &[0i16; 6]);
        assert!(matches!(decode_wav(&bytes), Err(Error::Unsupported(_))));
    }

    #[test]
    fn malformed_header() {
        assert!(matches!(decode_wav(b"RIFX\0\0\0\0WAVE"), Err(Error::Format(_))));
        assert!(matches!(decode_wav(b""), Err(Error::Format(_))));
        let mut bytes = encode(spec(1, 16, SampleFormat::Int), &[1i16; 10]);
        bytes[8..12].copy_from_slice(b"AVI ");
        assert!(matches!(decode_wav(&bytes), Err(Error::Format(_))));
    }
}
