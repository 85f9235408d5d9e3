//! Binary PGM (P5) and PPM (P6) images.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A decoded image: row-major samples, interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub max_value: u16,
    pub samples: Vec<u16>,
}

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Option<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()?
            .parse()
            .ok()
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Image> {
    if bytes.len() < 2 {
        return Err(bad(path, "file too short"));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(bad(
                path,
                format!(
                    "unsupported magic {:?}; expected binary PGM (P5) or PPM (P6)",
                    String::from_utf8_lossy(other)
                ),
            ))
        }
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number().ok_or_else(|| bad(path, "missing width"))?;
    let height = h.number().ok_or_else(|| bad(path, "missing height"))?;
    let max_value = h.number().ok_or_else(|| bad(path, "missing maxval"))?;
    if width == 0 || height == 0 {
        return Err(bad(path, "zero image extent"));
    }
    if max_value == 0 || max_value > u16::MAX as usize {
        return Err(bad(path, format!("maxval {max_value} outside 1..=65535")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if h.pos >= bytes.len() || !bytes[h.pos].is_ascii_whitespace() {
        return Err(bad(path, "header not terminated by whitespace"));
    }
    let raster = &bytes[h.pos + 1..];
    let count = width * height * channels;
    let wide = max_value > 255;
    let need = if wide { 2 * count } else { count };
    if raster.len() < need {
        return Err(bad(
            path,
            format!("raster has {} bytes, expected {need}", raster.len()),
        ));
    }
    let samples = if wide {
        raster[..need]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    } else {
        raster[..need].iter().map(|&b| b as u16).collect()
    };
    Ok(Image {
        width,
        height,
        channels,
        max_value: max_value as u16,
        samples,
    })
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Encodes a single-channel frame with values in [0, 1] as 8-bit P5,
/// scaling by 255 and rounding half up.
pub fn encode_pgm<T: Scalar>(frame: &Tensor<T>) -> Result<Vec<u8>> {
    let (h, w) = frame_extent(frame)?;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(frame.data().iter().map(|&v| to_byte(v.as_f64())));
    Ok(out)
}

pub fn to_byte(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn write_pgm<T: Scalar>(frame: &Tensor<T>, path: &Path) -> Result<()> {
    let bytes = encode_pgm(frame)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn frame_extent<T: Scalar>(frame: &Tensor<T>) -> Result<(usize, usize)> {
    let d = frame.dims();
    match d {
        [h, w] | [h, w, 1] => Ok((*h, *w)),
        _ => Err(Error::shape(format!("expected an H×W×1 frame, got {d:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_with_comments_and_16_bit() {
        let mut b = b"P5\n# comment\n2 1\n255\n".to_vec();
        b.extend_from_slice(&[0, 255]);
        let img = decode(&b, Path::new("x.pgm")).unwrap();
        assert_eq!((img.width, img.height, img.channels), (2, 1, 1));
        assert_eq!(img.samples, vec![0, 255]);

        let mut b = b"P5 1 1 1000\n".to_vec();
        b.extend_from_slice(&700u16.to_be_bytes());
        let img = decode(&b, Path::new("y.pgm")).unwrap();
        assert_eq!(img.samples, vec![700]);
        assert_eq!(img.max_value, 1000);
    }

    #[test]
    fn rejects_malformed() {
        assert!(decode(b"P2\n1 1\n255\n0", Path::new("a")).is_err());
        assert!(decode(b"P5\n2 2\n255\n\x00", Path::new("a")).is_err());
        assert!(decode(b"P5\n0 2\n255\n", Path::new("a")).is_err());
    }

    #[test]
    fn encode_rounds_half_up() {
        let f = Tensor::<f64>::from_vec(&[1, 3, 1], vec![0.0, 0.5 / 255.0, 1.0]).unwrap();
        let bytes = encode_pgm(&f).unwrap();
        assert_eq!(&bytes[bytes.len() - 3..], &[0, 1, 255]);
        let img = decode(&bytes, Path::new("z")).unwrap();
        assert_eq!((img.width, img.height), (3, 1));
    }
}
