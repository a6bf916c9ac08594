//! Binary greyscale PGM (`P5`, maxval 255) carrying one class id per pixel.

use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use segrecall_core::LabelMap;

#[derive(Debug, thiserror::Error)]
pub enum PgmError {
    #[error("not a binary PGM (expected magic P5)")]
    BadMagic,
    #[error("malformed PGM header: {0}")]
    Header(String),
    #[error("unsupported maxval {0}; label maps must use 255")]
    MaxVal(u32),
    #[error("truncated pixel data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error(transparent)]
    Label(#[from] segrecall_core::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn next_byte<R: BufRead>(r: &mut R) -> io::Result<Option<u8>> {
    let buf = r.fill_buf()?;
    let Some(&b) = buf.first() else { return Ok(None) };
    r.consume(1);
    Ok(Some(b))
}

/// Reads one header token, skipping whitespace and `#` comments. Consumes the
/// single whitespace byte that terminates the token.
fn token<R: BufRead>(r: &mut R) -> Result<String, PgmError> {
    let mut out = String::new();
    loop {
        match next_byte(r)? {
            None if out.is_empty() => return Err(PgmError::Header("unexpected end of header".into())),
            None => return Ok(out),
            Some(b'#') if out.is_empty() => while !matches!(next_byte(r)?, None | Some(b'\n') | Some(b'\r')) {},
            Some(b) if b.is_ascii_whitespace() => {
                if !out.is_empty() {
                    return Ok(out);
                }
            }
            Some(b) => out.push(b as char),
        }
    }
}

fn number<R: BufRead>(r: &mut R, what: &str) -> Result<u32, PgmError> {
    let t = token(r)?;
    t.parse().map_err(|_| PgmError::Header(format!("{what} {t:?} is not a non-negative integer")))
}

/// Parses the header and returns `(height, width)`.
fn header<R: BufRead>(r: &mut R) -> Result<(usize, usize), PgmError> {
    if token(r)? != "P5" {
        return Err(PgmError::BadMagic);
    }
    let width = number(r, "width")? as usize;
    let height = number(r, "height")? as usize;
    let maxval = number(r, "maxval")?;
    if maxval != 255 {
        return Err(PgmError::MaxVal(maxval));
    }
    Ok((height, width))
}

pub fn read_pgm<R: Read>(reader: R) -> Result<LabelMap, PgmError> {
    let mut r = BufReader::new(reader);
    let (height, width) = header(&mut r)?;
    let expected = width * height;
    let mut data = Vec::new();
    r.take(expected as u64).read_to_end(&mut data)?;
    if data.len() != expected {
        return Err(PgmError::Truncated { expected, found: data.len() });
    }
    Ok(LabelMap::new(height, width, data)?)
}

pub fn write_pgm<W: Write>(mut w: W, map: &LabelMap) -> io::Result<()> {
    write!(w, "P5\n{} {}\n255\n", map.width(), map.height())?;
    w.write_all(map.data())
}

pub fn load(path: &Path) -> Result<LabelMap, PgmError> {
    read_pgm(fs::File::open(path)?)
}

/// `(height, width)` from the header alone.
pub fn load_dims(path: &Path) -> Result<(usize, usize), PgmError> {
    header(&mut BufReader::new(fs::File::open(path)?))
}

pub fn save(path: &Path, map: &LabelMap) -> io::Result<()> {
    let mut buf = Vec::with_capacity(map.len() + 32);
    write_pgm(&mut buf, map)?;
    fs::write(path, buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = LabelMap::new(2, 3, vec![0, 1, 2, 255, 4, 5]).unwrap();
        let mut buf = Vec::new();
        write_pgm(&mut buf, &m).unwrap();
        assert_eq!(&buf[..11], b"P5\n3 2\n255\n");
        assert_eq!(read_pgm(&buf[..]).unwrap(), m);
    }

    #[test]
    fn tolerates_comments() {
        let mut buf = b"P5 # label map\n# size\n2 1\n# depth\n255\n".to_vec();
        buf.extend_from_slice(&[7, 255]);
        let m = read_pgm(&buf[..]).unwrap();
        assert_eq!(m.data(), &[7, 255]);
    }

    #[test]
    fn pixel_bytes_that_look_like_whitespace_are_data() {
        let mut buf = b"P5\n2 1\n255\n".to_vec();
        buf.extend_from_slice(b"\n ");
        assert_eq!(read_pgm(&buf[..]).unwrap().data(), b"\n ");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(read_pgm(&b"P2\n1 1\n255\n0"[..]), Err(PgmError::BadMagic)));
        assert!(matches!(read_pgm(&b"P5\n1 1\n65535\n\0\0"[..]), Err(PgmError::MaxVal(65535))));
        assert!(matches!(read_pgm(&b"P5\n2 2\n255\n\0\0"[..]), Err(PgmError::Truncated { expected: 4, found: 2 })));
        assert!(matches!(read_pgm(&b"P5\nx 2\n255\n"[..]), Err(PgmError::Header(_))));
    }
}
