//! Binary portable graymap (P5) and pixmap (P6) images.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::ImageGrid;

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return format_err("not a binary PNM (expected P5 or P6)"),
    };
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return format_err("PNM header ends early"),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("bad PNM header number".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return format_err("PNM header must end in one whitespace byte");
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return format_err(format!("PNM maxval {maxval} out of range"));
    }
    Ok(Header { channels, width: width as usize, height: height as usize, maxval, data_start: pos + 1 })
}

pub fn decode_pnm(bytes: &[u8]) -> Result<ImageGrid> {
    let h = parse_header(bytes)?;
    let samples = h.width * h.height * h.channels;
    let wide = h.maxval > 255;
    let need = samples * if wide { 2 } else { 1 };
    let data = &bytes[h.data_start..];
    if data.len() < need {
        return format_err(format!("PNM payload has {} bytes, expected {need}", data.len()));
    }
    let scale = f64::from(h.maxval);
    let values = if wide {
        data[..need].chunks_exact(2).map(|b| f64::from(u16::from_be_bytes([b[0], b[1]])) / scale).collect()
    } else {
        data[..need].iter().map(|&b| f64::from(b) / scale).collect()
    };
    ImageGrid::new(h.height, h.width, h.channels, values)
}

/// 8-bit encoding; 1-channel images become P5 and 3-channel images P6.
pub fn encode_pnm(image: &ImageGrid) -> Result<Vec<u8>> {
    let magic = match image.channels() {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::InvalidArgument(format!("PNM cannot hold {c} channels"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.values().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    Ok(out)
}

pub fn read_pnm(path: &Path) -> Result<ImageGrid> {
    decode_pnm(&fs::read(path)?)
}

pub fn write_pnm(path: &Path, image: &ImageGrid) -> Result<()> {
    fs::write(path, encode_pnm(image)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_graymap_with_comment() {
        let mut bytes = b"P5\n# made by hand\n8 8\n255\n".to_vec();
        bytes.extend((0..64).map(|i| (i * 4) as u8));
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (8, 8, 1));
        assert!((img.get(0, 1, 0) - 4.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn sixteen_bit_samples_are_big_endian() {
        let mut bytes = b"P5 8 8 65535\n".to_vec();
        for _ in 0..64 {
            bytes.extend_from_slice(&[0xff, 0xff]);
        }
        assert_eq!(decode_pnm(&bytes).unwrap().get(7, 7, 0), 1.0);
    }

    #[test]
    fn pixmap_roundtrip_at_8_bits() {
        let vals: Vec<f64> = (0..8 * 9 * 3).map(|i| f64::from((i % 256) as u8) / 255.0).collect();
        let img = ImageGrid::new(8, 9, 3, vals).unwrap();
        assert_eq!(decode_pnm(&encode_pnm(&img).unwrap()).unwrap(), img);
    }

    #[test]
    fn rejects_ascii_and_short_files() {
        assert!(decode_pnm(b"P2\n8 8\n255\n").is_err());
        assert!(decode_pnm(b"P5\n8 8\n255\n\x00\x01").is_err());
        assert!(decode_pnm(b"P5\n8 8\n0\n").is_err());
    }
}
