//! File formats: binary PGM (P5), the grid binary layout for time
//! functions, and CSV helpers.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{GridTime, StopSet, TimeFunction};
use crate::grid::{read_f64s, read_header, write_header, Grid, TIME_MAGIC};

/// Writes an 8-bit binary PGM.
pub fn write_pgm<W: Write>(mut w: W, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    assert_eq!(pixels.len(), width * height, "pixel buffer size mismatch");
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(pixels)?;
    Ok(())
}

/// Parses an 8-bit binary PGM (`P5`, maxval 255). Errors carry the byte offset
/// at which parsing failed.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let err = |offset: usize, message: &str| Error::Pgm {
        offset,
        message: message.to_string(),
    };
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(err(0, "expected magic 'P5'"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (n, field) in fields.iter_mut().enumerate() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(b) = bytes.get(pos) {
                        pos += 1;
                        if *b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(err(pos, "unexpected end of header")),
            }
        }
        if n == 0 && pos == 2 {
            return Err(err(pos, "missing whitespace after magic"));
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(err(pos, "expected a decimal number"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap();
        *field = text.parse().map_err(|_| err(start, "number out of range"))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(err(pos, "zero image dimension"));
    }
    if maxval != 255 {
        return Err(err(pos, "only maxval 255 is supported"));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(err(pos, "expected single whitespace before raster")),
    }
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(err(bytes.len(), "raster is truncated"));
    }
    Ok((width, height, bytes[pos..pos + need].to_vec()))
}

pub fn read_pgm_file(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    parse_pgm(&bytes)
}

/// Writes a sampled time function in the grid binary layout: magic `CTGT`,
/// u32 version, u32 width, u32 height, f64 xmin, ymin, xmax, ymax, f64 q,
/// then width*height f64 values row-major. All little-endian.
pub fn write_grid_time<W: Write>(mut w: W, time: &GridTime) -> Result<()> {
    let (nx, ny) = time.dims();
    write_header(&mut w, TIME_MAGIC, &Grid::new(time.bbox(), nx, ny), time.q())?;
    for v in time.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a time function written by [`write_grid_time`]. The stop set is
/// recovered as the cells attaining the maximum sample.
pub fn read_grid_time<R: Read>(mut r: R) -> Result<GridTime> {
    let (grid, q) = read_header(&mut r, TIME_MAGIC)?;
    let values = read_f64s(&mut r, grid.len())?;
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ridge = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= max)
        .map(|(k, _)| grid.center_of(k))
        .collect::<Vec<_>>();
    let stop = if ridge.len() == 1 {
        StopSet::IsolatedPoint(ridge[0])
    } else {
        StopSet::PixelRidge(ridge)
    };
    GridTime::new(grid.bbox, grid.nx, grid.ny, values, q, stop)
}

/// Serializes rows to CSV bytes with a header line.
pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BBox, DiskTime, Point2};

    #[test]
    fn pgm_round_trip_with_comment() {
        let mut buf = Vec::new();
        write_pgm(&mut buf, 3, 2, &[0, 1, 2, 3, 4, 255]).unwrap();
        let (w, h, px) = parse_pgm(&buf).unwrap();
        assert_eq!((w, h, px), (3, 2, vec![0, 1, 2, 3, 4, 255]));
        let commented = b"P5 # hi\n3 2\n255\n\x00\x01\x02\x03\x04\x05";
        assert_eq!(parse_pgm(commented).unwrap().2.len(), 6);
    }

    #[test]
    fn pgm_errors_name_offsets() {
        match parse_pgm(b"P6\n1 1\n255\n\x00") {
            Err(Error::Pgm { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
        match parse_pgm(b"P5\n4 x\n255\n") {
            Err(Error::Pgm { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        match parse_pgm(b"P5\n2 2\n255\n\x00") {
            Err(Error::Pgm { offset, .. }) => assert_eq!(offset, 12),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_pgm(b"P5\n1 1\n65535\n\x00\x00"), Err(Error::Pgm { .. })));
    }

    #[test]
    fn grid_time_round_trip() {
        let bbox = BBox::new(Point2::new(-1.0, -1.0), Point2::new(1.0, 1.0));
        let g = GridTime::sample(&DiskTime::new(3.0), bbox, 9, 7).unwrap();
        let mut buf = Vec::new();
        write_grid_time(&mut buf, &g).unwrap();
        assert_eq!(buf.len(), 56 + 9 * 7 * 8);
        let back = read_grid_time(buf.as_slice()).unwrap();
        assert_eq!(back.values(), g.values());
        assert_eq!(back.q(), 3.0);
        assert_eq!(back.bbox(), bbox);
    }
}
