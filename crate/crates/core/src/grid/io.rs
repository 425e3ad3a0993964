//! Netpbm-family readers and writers.
//!
//! * PFM (`Pf`, single channel, 32-bit float) for depth maps, residual fields
//!   and masks. Written little-endian with rows stored bottom-to-top as the
//!   format requires. Reading accepts either byte order and `PF` color files
//!   (channels are averaged).
//! * PGM (`P5`, 8-bit) for weight-map visualization, mapping `[0, 1]` to
//!   `[0, 255]`.
//! * PPM (`P6`, 8-bit) for color images.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ColorImage, ScalarGrid};
use crate::error::{Error, Result};

/// Encodes a grid as a little-endian grayscale PFM.
///
/// Values are stored as `f32`; grids holding `f32`-representable values
/// round-trip bit-exactly.
pub fn encode_pfm(grid: &ScalarGrid) -> Vec<u8> {
    let (w, h) = grid.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(grid.get(x, y) as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<ScalarGrid> {
    let mut reader = HeaderReader::new(bytes);
    let channels = match reader.token().as_deref() {
        Some("Pf") => 1,
        Some("PF") => 3,
        other => {
            return Err(Error::format(
                path,
                format!("not a PFM file (magic {other:?})"),
            ))
        }
    };
    let w = reader.number::<usize>(path, "width")?;
    let h = reader.number::<usize>(path, "height")?;
    let scale = reader.number::<f64>(path, "scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(path, "PFM scale must be non-zero"));
    }
    let little_endian = scale < 0.0;
    let data = reader.rest();
    let expected = w * h * channels * 4;
    if data.len() < expected {
        return Err(Error::format(
            path,
            format!(
                "truncated PFM: need {expected} data bytes, got {}",
                data.len()
            ),
        ));
    }
    let mut values = vec![0.0; w * h];
    for (k, chunk) in data[..expected].chunks_exact(4 * channels).enumerate() {
        let mut acc = 0.0;
        for c in chunk.chunks_exact(4) {
            let b = [c[0], c[1], c[2], c[3]];
            let v = if little_endian {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
            acc += v as f64;
        }
        let (x, row) = (k % w, k / w);
        values[(h - 1 - row) * w + x] = acc / channels as f64;
    }
    ScalarGrid::new(w, h, values).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_pfm(path: impl AsRef<Path>, grid: &ScalarGrid) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pfm(grid))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<ScalarGrid> {
    let path = path.as_ref();
    decode_pfm(&read_bytes(path)?, path)
}

#[inline]
fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes a grid as 8-bit PGM, clamping values into `[0, 1]` first.
pub fn encode_pgm(grid: &ScalarGrid) -> Vec<u8> {
    let (w, h) = grid.dims();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(grid.values().iter().map(|&v| to_byte(v)));
    out
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<ScalarGrid> {
    let (w, h, data) = decode_netpbm(bytes, path, "P5", 1)?;
    Ok(ScalarGrid::from_values(
        w,
        h,
        data.iter().map(|&b| b as f64 / 255.0).collect(),
    ))
}

pub fn write_pgm(path: impl AsRef<Path>, grid: &ScalarGrid) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pgm(grid))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<ScalarGrid> {
    let path = path.as_ref();
    decode_pgm(&read_bytes(path)?, path)
}

pub fn encode_ppm(img: &ColorImage) -> Vec<u8> {
    let (w, h) = img.dims();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            out.extend(img.pixel(x, y).map(to_byte));
        }
    }
    out
}

pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<ColorImage> {
    let (w, h, data) = decode_netpbm(bytes, path, "P6", 3)?;
    let channel = |c: usize| {
        ScalarGrid::from_values(
            w,
            h,
            data.chunks_exact(3)
                .map(|px| px[c] as f64 / 255.0)
                .collect(),
        )
    };
    ColorImage::new([channel(0), channel(1), channel(2)])
}

pub fn write_ppm(path: impl AsRef<Path>, img: &ColorImage) -> Result<()> {
    write_bytes(path.as_ref(), &encode_ppm(img))
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<ColorImage> {
    let path = path.as_ref();
    decode_ppm(&read_bytes(path)?, path)
}

fn decode_netpbm<'a>(
    bytes: &'a [u8],
    path: &Path,
    magic: &str,
    channels: usize,
) -> Result<(usize, usize, &'a [u8])> {
    let mut reader = HeaderReader::new(bytes);
    let found = reader.token();
    if found.as_deref() != Some(magic) {
        return Err(Error::format(
            path,
            format!("expected {magic} magic, found {found:?}"),
        ));
    }
    let w = reader.number::<usize>(path, "width")?;
    let h = reader.number::<usize>(path, "height")?;
    let maxval = reader.number::<u32>(path, "maxval")?;
    if w == 0 || h == 0 {
        return Err(Error::format(path, "zero image dimension"));
    }
    if maxval != 255 {
        return Err(Error::format(
            path,
            format!("only 8-bit files are supported (maxval {maxval})"),
        ));
    }
    let data = reader.rest();
    let n = w * h * channels;
    if data.len() < n {
        return Err(Error::format(
            path,
            format!("truncated image: need {n} bytes, got {}", data.len()),
        ));
    }
    Ok((w, h, &data[..n]))
}

/// Whitespace-separated header tokens with `#` comments, followed by exactly
/// one whitespace byte before the raster.
struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn token(&mut self) -> Option<String> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        let tok = String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned();
        Some(tok)
    }

    fn number<T: std::str::FromStr>(&mut self, path: &Path, what: &str) -> Result<T> {
        let tok = self
            .token()
            .ok_or_else(|| Error::format(path, format!("missing {what} in header")))?;
        tok.parse()
            .map_err(|_| Error::format(path, format!("invalid {what} {tok:?}")))
    }

    fn rest(mut self) -> &'a [u8] {
        if self.pos < self.bytes.len() {
            self.pos += 1;
        }
        &self.bytes[self.pos..]
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    File::create(path)
        .and_then(|f| {
            let mut w = BufWriter::new(f);
            w.write_all(bytes)?;
            w.flush()
        })
        .map_err(|e| Error::io(path, e))
}

/// Reads a whole text file, mapping IO failures to [`Error::Io`].
pub(crate) fn read_text(path: &Path) -> Result<String> {
    let mut s = String::new();
    BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_string(&mut s)
        .map_err(|e| Error::io(path, e))?;
    Ok(s)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    proptest! {
        #[test]
        fn pfm_round_trip_is_bit_exact(
            w in 1usize..9,
            h in 1usize..9,
            seed in proptest::collection::vec(-1.0e6f32..1.0e6, 64),
        ) {
            let vals: Vec<f64> = (0..w * h).map(|i| seed[i % seed.len()] as f64).collect();
            let g = ScalarGrid::new(w, h, vals).unwrap();
            let back = decode_pfm(&encode_pfm(&g), p()).unwrap();
            prop_assert_eq!(back.dims(), g.dims());
            for (a, b) in g.values().iter().zip(back.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn pfm_rows_are_bottom_to_top() {
        let g = ScalarGrid::new(1, 2, vec![1.0, 2.0]).unwrap();
        let bytes = encode_pfm(&g);
        let header = b"Pf\n1 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(
            &bytes[header.len()..header.len() + 4],
            &2.0f32.to_le_bytes()
        );
    }

    #[test]
    fn pfm_reads_big_endian_and_color() {
        let mut bytes = b"PF\n1 1\n1.0\n".to_vec();
        for v in [0.25f32, 0.5, 0.75] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let g = decode_pfm(&bytes, p()).unwrap();
        assert_eq!(g.values(), &[0.5]);
    }

    #[test]
    fn pfm_rejects_garbage() {
        assert!(decode_pfm(b"P6\n1 1\n255\n", p()).is_err());
        assert!(decode_pfm(b"Pf\n2 2\n-1.0\n\0\0\0\0", p()).is_err());
        let mut nan = b"Pf\n1 1\n-1.0\n".to_vec();
        nan.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_pfm(&nan, p()).is_err());
    }

    #[test]
    fn pgm_maps_unit_interval_to_bytes() {
        let g = ScalarGrid::new(4, 1, vec![0.0, 0.5, 1.0, 2.0]).unwrap();
        let bytes = encode_pgm(&g);
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 128, 255, 255]);
        let back = decode_pgm(&bytes, p()).unwrap();
        assert_eq!(back.values()[2], 1.0);
    }

    #[test]
    fn ppm_round_trips_quantized_values() {
        let ch =
            |k: f64| ScalarGrid::from_fn(3, 2, |x, y| ((x + 2 * y) as f64 * k).round() / 255.0);
        let img = ColorImage::new([ch(10.0), ch(20.0), ch(30.0)]).unwrap();
        let back = decode_ppm(&encode_ppm(&img), p()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn netpbm_header_comments_are_skipped() {
        let bytes = b"P5\n# made by hand\n2 1\n255\n\x00\xff";
        let g = decode_pgm(bytes, p()).unwrap();
        assert_eq!(g.values(), &[0.0, 1.0]);
        assert!(decode_pgm(b"P5\n2 1\n65535\n\0\0\0\0", p()).is_err());
    }
}
