//! Minimal RIFF/WAVE PCM16 reader and writer.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WavError {
    #[error("bad magic: expected RIFF/WAVE, found {0:?}")]
    BadMagic(String),
    #[error("truncated {chunk} chunk: declared {declared} bytes, {available} available")]
    Truncated {
        chunk: String,
        declared: usize,
        available: usize,
    },
    #[error("format code {0} is not PCM")]
    NotPcm(u16),
    #[error("unsupported bit depth {0} (only 16-bit PCM)")]
    UnsupportedBitDepth(u16),
    #[error("missing {0} chunk")]
    MissingChunk(&'static str),
}

impl WavError {
    /// Stable machine-readable code for each failure kind.
    pub fn code(&self) -> &'static str {
        match self {
            WavError::BadMagic(_) => "bad-magic",
            WavError::Truncated { .. } => "truncated-chunk",
            WavError::NotPcm(_) => "not-pcm",
            WavError::UnsupportedBitDepth(_) => "unsupported-bit-depth",
            WavError::MissingChunk(_) => "missing-chunk",
        }
    }
}

/// Decoded audio: one sample vector per channel, values in `[-1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WavClip {
    pub sample_rate: u32,
    pub channels: Vec<Vec<f64>>,
}

impl WavClip {
    pub fn mono(sample_rate: u32, samples: Vec<f64>) -> Self {
        WavClip {
            sample_rate,
            channels: vec![samples],
        }
    }

    pub fn num_frames(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    /// Zero-pads (or truncates) every channel to `len` frames.
    pub fn pad_to(&mut self, len: usize) {
        for ch in &mut self.channels {
            ch.resize(len, 0.0);
        }
    }
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

pub fn read_wav(bytes: &[u8]) -> Result<WavClip, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        let head = &bytes[..bytes.len().min(4)];
        return Err(WavError::BadMagic(String::from_utf8_lossy(head).into_owned()));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        let name = String::from_utf8_lossy(id).into_owned();
        if body + size > bytes.len() {
            return Err(WavError::Truncated {
                chunk: name,
                declared: size,
                available: bytes.len() - body,
            });
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(WavError::Truncated {
                        chunk: name,
                        declared: 16,
                        available: size,
                    });
                }
                fmt = Some((
                    u16_at(bytes, body),
                    u16_at(bytes, body + 2),
                    u32_at(bytes, body + 4),
                    u16_at(bytes, body + 14),
                ));
            }
            b"data" => data = Some(&bytes[body..body + size]),
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    let (format, channels, rate, bits) = fmt.ok_or(WavError::MissingChunk("fmt"))?;
    if format != 1 {
        return Err(WavError::NotPcm(format));
    }
    if bits != 16 {
        return Err(WavError::UnsupportedBitDepth(bits));
    }
    let data = data.ok_or(WavError::MissingChunk("data"))?;
    let nch = channels.max(1) as usize;
    let frames = data.len() / (2 * nch);
    let mut out = vec![Vec::with_capacity(frames); nch];
    for f in 0..frames {
        for (c, ch) in out.iter_mut().enumerate() {
            let i = (f * nch + c) * 2;
            let v = i16::from_le_bytes([data[i], data[i + 1]]);
            ch.push(v as f64 / 32768.0);
        }
    }
    Ok(WavClip {
        sample_rate: rate,
        channels: out,
    })
}

/// Encodes as 16-bit PCM; samples are clamped to the representable range.
pub fn write_wav(clip: &WavClip) -> Vec<u8> {
    let nch = clip.channels.len().max(1);
    let frames = clip.num_frames();
    let data_len = frames * nch * 2;
    let mut b = Vec::with_capacity(44 + data_len);
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    b.extend_from_slice(b"WAVE");
    b.extend_from_slice(b"fmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&(nch as u16).to_le_bytes());
    b.extend_from_slice(&clip.sample_rate.to_le_bytes());
    b.extend_from_slice(&(clip.sample_rate * nch as u32 * 2).to_le_bytes());
    b.extend_from_slice(&(nch as u16 * 2).to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&(data_len as u32).to_le_bytes());
    for f in 0..frames {
        for ch in &clip.channels {
            let v = (ch[f] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine() -> WavClip {
        let rate = 16_000;
        let s = (0..1600)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / rate as f64).sin())
            .collect();
        WavClip::mono(rate, s)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let bytes = write_wav(&sine());
        let clip = read_wav(&bytes).unwrap();
        assert_eq!(clip.sample_rate, 16_000);
        assert_eq!(write_wav(&clip), bytes);
        assert_eq!(read_wav(&write_wav(&clip)).unwrap(), clip);
    }

    #[test]
    fn stereo_is_deinterleaved() {
        let clip = WavClip {
            sample_rate: 8000,
            channels: vec![vec![0.25, -0.5], vec![0.0, 0.125]],
        };
        let back = read_wav(&write_wav(&clip)).unwrap();
        assert_eq!(back, clip);
    }

    #[test]
    fn malformed_headers_have_distinct_codes() {
        let good = write_wav(&sine());
        let mut rifx = good.clone();
        rifx[3] = b'X';
        let mut truncated = good.clone();
        truncated.truncate(good.len() - 10);
        let mut float = good.clone();
        float[20] = 3;
        let mut bits = good.clone();
        bits[34] = 24;
        let errs: Vec<WavError> = [rifx, truncated, float, bits]
            .iter()
            .map(|b| read_wav(b).unwrap_err())
            .collect();
        assert!(matches!(errs[0], WavError::BadMagic(_)));
        assert!(matches!(errs[1], WavError::Truncated { .. }));
        assert_eq!(errs[2], WavError::NotPcm(3));
        assert_eq!(errs[3], WavError::UnsupportedBitDepth(24));
        let mut codes: Vec<_> = errs.iter().map(WavError::code).collect();
        codes.dedup();
        assert_eq!(codes.len(), 4);
    }

    #[test]
    fn pad_to_zero_fills() {
        let mut c = WavClip::mono(8000, vec![0.5; 3]);
        c.pad_to(5);
        assert_eq!(c.channels[0], vec![0.5, 0.5, 0.5, 0.0, 0.0]);
    }
}
