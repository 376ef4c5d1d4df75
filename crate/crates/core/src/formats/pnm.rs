use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::video::{ImageGrid, MaskGrid};

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_offset: usize,
}

fn malformed(format: &'static str, offset: usize, message: impl Into<String>) -> Error {
    Error::Malformed {
        format,
        offset,
        message: message.into(),
    }
}

fn skip_space(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        match bytes.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            Some(b'#') => {
                while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                    pos += 1;
                }
            }
            _ => return pos,
        }
    }
}

fn read_number(format: &'static str, bytes: &[u8], pos: usize, what: &str) -> Result<(usize, usize)> {
    let start = skip_space(bytes, pos);
    let end = start + bytes[start..].iter().take_while(|b| b.is_ascii_digit()).count();
    if end == start {
        return Err(malformed(format, start, format!("expected {what}")));
    }
    let text = std::str::from_utf8(&bytes[start..end]).expect("ascii digits");
    let value = text.parse().map_err(|_| malformed(format, start, format!("{what} is too large")))?;
    Ok((value, end))
}

fn parse_header(format: &'static str, bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' || !matches!(bytes[1], b'5' | b'6') {
        return Err(malformed(format, 0, "expected magic P5 or P6"));
    }
    let (width, pos) = read_number(format, bytes, 2, "width")?;
    let (height, pos) = read_number(format, bytes, pos, "height")?;
    let (maxval, pos) = read_number(format, bytes, pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(malformed(format, pos, "zero image dimension"));
    }
    if !(1..=255).contains(&maxval) {
        return Err(malformed(format, pos, format!("maxval {maxval} is not 8-bit")));
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(malformed(format, pos, "expected whitespace before pixel data"));
    }
    Ok(Header {
        magic: [bytes[0], bytes[1]],
        width,
        height,
        maxval,
        data_offset: pos + 1,
    })
}

fn pixel_data<'a>(format: &'static str, bytes: &'a [u8], header: &Header, channels: usize) -> Result<&'a [u8]> {
    let needed = header.width * header.height * channels;
    let data = &bytes[header.data_offset..];
    if data.len() < needed {
        return Err(malformed(format, bytes.len(), format!("pixel data ends early: need {needed} bytes, found {}", data.len())));
    }
    if data.len() > needed {
        return Err(malformed(format, header.data_offset + needed, "trailing bytes after pixel data"));
    }
    Ok(data)
}

/// Parses a binary PGM (P5, one channel) or PPM (P6, three channels) image.
pub fn decode_image(bytes: &[u8]) -> Result<ImageGrid> {
    let header = parse_header("PNM", bytes)?;
    let channels = if header.magic[1] == b'6' { 3 } else { 1 };
    let data = pixel_data("PNM", bytes, &header, channels)?;
    let mut values = Vec::with_capacity(data.len());
    for (i, &b) in data.iter().enumerate() {
        if b as usize > header.maxval {
            return Err(malformed("PNM", header.data_offset + i, format!("sample {b} exceeds maxval {}", header.maxval)));
        }
        values.push(b as f64 / header.maxval as f64);
    }
    ImageGrid::new(header.height, header.width, channels, values)
}

/// Encodes as P6 for colour and P5 for grey images, rounding to 8 bits.
pub fn encode_image(image: &ImageGrid) -> Vec<u8> {
    let magic = if image.channels() == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.values().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Parses a P5 mask; samples at or above half of maxval are true.
pub fn decode_mask(bytes: &[u8]) -> Result<MaskGrid> {
    let header = parse_header("PGM", bytes)?;
    if header.magic[1] != b'5' {
        return Err(malformed("PGM", 0, "masks must be P5 greyscale"));
    }
    let data = pixel_data("PGM", bytes, &header, 1)?;
    let threshold = (header.maxval as f64 / 2.0).max(1.0);
    let cells = data.iter().map(|&b| b as f64 >= threshold).collect();
    MaskGrid::new(header.height, header.width, cells)
}

pub fn encode_mask(mask: &MaskGrid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.cells().iter().map(|&c| if c { 255 } else { 0 }));
    out
}

pub fn read_image(path: &Path) -> Result<ImageGrid> {
    decode_image(&read_bytes(path)?)
}

pub fn write_image(path: &Path, image: &ImageGrid) -> Result<()> {
    write_bytes(path, &encode_image(image))
}

pub fn read_mask(path: &Path) -> Result<MaskGrid> {
    decode_mask(&read_bytes(path)?)
}

pub fn write_mask(path: &Path, mask: &MaskGrid) -> Result<()> {
    write_bytes(path, &encode_mask(mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_is_byte_exact() {
        let mut bytes = b"P6\n# comment\n3 2\n255\n".to_vec();
        bytes.extend((0u8..18).map(|i| i * 13));
        let img = decode_image(&bytes).unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (2, 3, 3));
        assert_eq!(img.get(0, 1, 0), 39.0 / 255.0);
        let again = encode_image(&img);
        assert_eq!(decode_image(&again).unwrap(), img);
        assert_eq!(&again[again.len() - 18..], &bytes[bytes.len() - 18..]);
    }

    #[test]
    fn errors_carry_byte_offsets() {
        let offset = |b: &[u8]| match decode_image(b) {
            Err(Error::Malformed { offset, .. }) => offset,
            other => panic!("{other:?}"),
        };
        assert_eq!(offset(b"P3\n1 1\n255\n"), 0);
        assert_eq!(offset(b"P5\n1 x\n255\n\0"), 5);
        assert_eq!(offset(b"P5\n2 2\n255\n\0\0"), 13);
        assert_eq!(offset(b"P5\n1 1\n255\n\0\0"), 12);
        assert_eq!(offset(b"P5 1 1 9\n\x0a"), 9);
    }

    #[test]
    fn mask_threshold_and_round_trip() {
        let mut bytes = b"P5 3 3 255\n".to_vec();
        bytes.extend([0, 0, 0, 0, 128, 0, 0, 0, 0]);
        let m = decode_mask(&bytes).unwrap();
        assert!(m.get(1, 1));
        assert_eq!(m.count(), 1);
        assert_eq!(decode_mask(&encode_mask(&m)).unwrap(), m);
        bytes[11] = 255;
        assert!(decode_mask(&bytes).is_err());
    }
}
