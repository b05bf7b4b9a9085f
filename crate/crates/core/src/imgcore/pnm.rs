//! Binary netpbm: P5 (gray) and P6 (RGB), maxval 255.

use std::fs;
use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let bad = |msg: &str| Error::invalid(format!("netpbm: {msg}"));
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(bad("missing magic number"));
    }
    let channels = match bytes[1] {
        b'5' => 1,
        b'6' => 3,
        m => return Err(bad(&format!("unsupported format P{}", m as char))),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments before each header token
        loop {
            match bytes.get(pos) {
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(bad("expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("header field out of range"))?;
    }
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(bad("missing whitespace after maxval")),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(bad(&format!("only maxval 255 is supported, got {maxval}")));
    }
    Ok(Header {
        channels,
        width,
        height,
        data_start: pos,
    })
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let h = parse_header(bytes)?;
    let n = h
        .width
        .checked_mul(h.height)
        .and_then(|v| v.checked_mul(h.channels))
        .ok_or_else(|| Error::invalid("netpbm: dimensions overflow"))?;
    let data = bytes
        .get(h.data_start..h.data_start + n)
        .ok_or_else(|| Error::invalid("netpbm: truncated pixel data"))?;
    Image::new(h.width, h.height, h.channels, data.to_vec())
}

pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.is_gray() { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_pnm(&bytes).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::InvalidInput(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_pnm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pnm(img)).map_err(|e| Error::file(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments() {
        let mut bytes = b"P5\n# made by hand\n3 2 # trailing\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (3, 2, 1));
        assert_eq!(img.data(), &[1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn rejects_ascii_and_wide_formats() {
        assert!(decode_pnm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pnm(b"P5\n1 1\n65535\n\0\0").is_err());
        assert!(decode_pnm(b"P6\n2 2\n255\n\0\0\0").is_err());
        assert!(decode_pnm(b"").is_err());
    }

    #[test]
    fn pixel_bytes_that_look_like_whitespace_survive() {
        let img = Image::rgb(2, 1, vec![b'\n', b' ', b'#', 9, 13, 0]).unwrap();
        assert_eq!(decode_pnm(&encode_pnm(&img)).unwrap(), img);
    }

    proptest::proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            w in 1usize..9, h in 1usize..9, rgb in proptest::bool::ANY, seed in proptest::collection::vec(0u8..=255, 243)
        ) {
            let c = if rgb { 3 } else { 1 };
            let data: Vec<u8> = seed.iter().copied().cycle().take(w * h * c).collect();
            let img = Image::new(w, h, c, data).unwrap();
            let bytes = encode_pnm(&img);
            proptest::prop_assert_eq!(decode_pnm(&bytes).unwrap(), img.clone());
            proptest::prop_assert_eq!(encode_pnm(&decode_pnm(&bytes).unwrap()), bytes);
        }
    }
}
