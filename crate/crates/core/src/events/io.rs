//! Event CSV (`t_us,x,y,p`) and the EVT1 little-endian binary container.
//!
//! EVT1 layout: magic `EVT1`, u16 width, u16 height, u64 count, then `count`
//! 16-byte records of u64 t_us, u16 x, u16 y, i8 p and three zero pad bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_bounds, Event, EventError, EventStream, Geometry, Polarity, Result};

pub const CSV_HEADER: &str = "t_us,x,y,p";
pub const EVT1_MAGIC: &[u8; 4] = b"EVT1";
const EVT1_HEADER_LEN: u64 = 16;
const EVT1_RECORD_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventFormat {
    Csv,
    Evt1,
}

impl EventFormat {
    /// Guess from the file extension; anything but `.csv` is treated as EVT1.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EventFormat::Csv,
            _ => EventFormat::Evt1,
        }
    }
}

/// Reads an event file. CSV carries no geometry so `geometry` is required for
/// it; for EVT1 a supplied geometry must match the header.
pub fn read_events(path: &Path, format: EventFormat, geometry: Option<Geometry>) -> Result<EventStream> {
    let file = File::open(path)?;
    match format {
        EventFormat::Csv => {
            let g = geometry.ok_or(EventError::MissingGeometry)?;
            read_csv(BufReader::new(file), g)
        }
        EventFormat::Evt1 => {
            let stream = read_evt1(BufReader::new(file))?;
            if let Some(expected) = geometry {
                if expected != stream.geometry() {
                    return Err(EventError::GeometryMismatch { expected, found: stream.geometry() });
                }
            }
            Ok(stream)
        }
    }
}

pub fn write_events(stream: &EventStream, path: &Path, format: EventFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        EventFormat::Csv => write_csv(stream, &mut out)?,
        EventFormat::Evt1 => write_evt1(stream, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: BufRead>(reader: R, geometry: Geometry) -> Result<EventStream> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(malformed(1, "missing header")),
    };
    if header.trim() != CSV_HEADER {
        return Err(malformed(1, format!("expected header `{CSV_HEADER}`, found `{}`", header.trim())));
    }

    let mut events = Vec::new();
    let mut prev = 0u64;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let mut next = |name: &str| {
            fields
                .next()
                .ok_or_else(|| malformed(line_no, format!("missing field `{name}`")))
        };
        let t: u64 = parse_field(next("t_us")?, line_no, "t_us")?;
        let x: u32 = parse_field(next("x")?, line_no, "x")?;
        let y: u32 = parse_field(next("y")?, line_no, "y")?;
        let p: i64 = parse_field(next("p")?, line_no, "p")?;
        if fields.next().is_some() {
            return Err(malformed(line_no, "too many fields"));
        }
        let index = events.len();
        let (x, y) = narrow_coords(geometry, index, x, y)?;
        let p = Polarity::from_i64(p).map_err(|e| malformed(line_no, e.to_string()))?;
        if t < prev {
            return Err(EventError::Decreasing { index, prev, t });
        }
        prev = t;
        events.push(Event { t, x, y, p });
    }
    EventStream::new(geometry, events)
}

pub fn write_csv<W: Write>(stream: &EventStream, out: &mut W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for e in stream.events() {
        writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.p.as_i8())?;
    }
    Ok(())
}

pub fn read_evt1<R: Read>(mut reader: R) -> Result<EventStream> {
    let mut header = [0u8; EVT1_HEADER_LEN as usize];
    read_exact_at(&mut reader, &mut header, 0)?;
    if &header[0..4] != EVT1_MAGIC {
        return Err(EventError::MalformedBinary { offset: 0, message: "bad magic, expected EVT1".into() });
    }
    let width = u16::from_le_bytes([header[4], header[5]]);
    let height = u16::from_le_bytes([header[6], header[7]]);
    let count = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
    let geometry = Geometry::new(width, height);

    let mut events = Vec::with_capacity(count.min(1 << 24) as usize);
    let mut record = [0u8; EVT1_RECORD_LEN];
    let mut prev = 0u64;
    for index in 0..count {
        let offset = EVT1_HEADER_LEN + index * EVT1_RECORD_LEN as u64;
        read_exact_at(&mut reader, &mut record, offset)?;
        let t = u64::from_le_bytes(record[0..8].try_into().expect("8 bytes"));
        let x = u16::from_le_bytes([record[8], record[9]]);
        let y = u16::from_le_bytes([record[10], record[11]]);
        let p = Polarity::from_i64(record[12] as i8 as i64).map_err(|e| EventError::MalformedBinary {
            offset: offset + 12,
            message: e.to_string(),
        })?;
        if record[13..16] != [0, 0, 0] {
            return Err(EventError::MalformedBinary { offset: offset + 13, message: "nonzero padding".into() });
        }
        let index = index as usize;
        check_bounds(geometry, index, x, y)?;
        if t < prev {
            return Err(EventError::Decreasing { index, prev, t });
        }
        prev = t;
        events.push(Event { t, x, y, p });
    }
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(EventError::MalformedBinary {
            offset: EVT1_HEADER_LEN + count * EVT1_RECORD_LEN as u64,
            message: "trailing bytes after last record".into(),
        });
    }
    EventStream::new(geometry, events)
}

pub fn write_evt1<W: Write>(stream: &EventStream, out: &mut W) -> Result<()> {
    let g = stream.geometry();
    out.write_all(EVT1_MAGIC)?;
    out.write_all(&g.width.to_le_bytes())?;
    out.write_all(&g.height.to_le_bytes())?;
    out.write_all(&(stream.len() as u64).to_le_bytes())?;
    let mut record = [0u8; EVT1_RECORD_LEN];
    for e in stream.events() {
        record[0..8].copy_from_slice(&e.t.to_le_bytes());
        record[8..10].copy_from_slice(&e.x.to_le_bytes());
        record[10..12].copy_from_slice(&e.y.to_le_bytes());
        record[12] = e.p.as_i8() as u8;
        out.write_all(&record)?;
    }
    Ok(())
}

fn read_exact_at<R: Read>(reader: &mut R, buf: &mut [u8], offset: u64) -> Result<()> {
    reader.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => EventError::MalformedBinary {
            offset,
            message: "unexpected end of file".into(),
        },
        _ => EventError::Io(e),
    })
}

fn narrow_coords(g: Geometry, index: usize, x: u32, y: u32) -> Result<(u16, u16)> {
    if x >= g.width as u32 {
        return Err(EventError::OutOfBounds { index, axis: 'x', value: x, limit: g.width.into() });
    }
    if y >= g.height as u32 {
        return Err(EventError::OutOfBounds { index, axis: 'y', value: y, limit: g.height.into() });
    }
    Ok((x as u16, y as u16))
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, name: &str) -> Result<T> {
    s.parse().map_err(|_| malformed(line, format!("cannot parse `{s}` as {name}")))
}

fn malformed(line: usize, message: impl Into<String>) -> EventError {
    EventError::MalformedLine { line, message: message.into() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream_from(g: Geometry, raw: &[(u64, u16, u16, i8)]) -> EventStream {
        let events = raw
            .iter()
            .map(|&(t, x, y, p)| Event::new(t, x, y, Polarity::from_i64(p.into()).unwrap()))
            .collect();
        EventStream::new(g, events).unwrap()
    }

    #[test]
    fn smallest_csv() {
        let text = "t_us,x,y,p\n0,0,0,1\n10,1,0,-1\n";
        let s = read_csv(text.as_bytes(), Geometry::new(2, 1)).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.events()[1], Event::new(10, 1, 0, Polarity::Off));
    }

    #[test]
    fn csv_bound_violation() {
        let text = "t_us,x,y,p\n5,400,10,1\n";
        let err = read_csv(text.as_bytes(), Geometry::new(346, 260)).unwrap_err();
        assert!(err.to_string().contains("x out of bounds"), "{err}");
    }

    #[test]
    fn csv_reports_line_of_malformed_record() {
        let text = "t_us,x,y,p\n0,0,0,1\n1,zz,0,1\n";
        match read_csv(text.as_bytes(), Geometry::new(2, 1)).unwrap_err() {
            EventError::MalformedLine { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "t_us,x,y,p\n0,0,0,2\n";
        assert!(matches!(
            read_csv(text.as_bytes(), Geometry::new(2, 1)),
            Err(EventError::MalformedLine { line: 2, .. })
        ));
    }

    #[test]
    fn csv_rejects_decreasing_timestamps() {
        let text = "t_us,x,y,p\n10,0,0,1\n9,1,0,1\n";
        assert!(matches!(
            read_csv(text.as_bytes(), Geometry::new(2, 1)),
            Err(EventError::Decreasing { index: 1, .. })
        ));
    }

    #[test]
    fn csv_rejects_bad_header() {
        let text = "t,x,y,p\n";
        assert!(read_csv(text.as_bytes(), Geometry::new(2, 1)).is_err());
    }

    #[test]
    fn empty_stream_is_header_only() {
        let g = Geometry::new(8, 8);
        let s = EventStream::empty(g);
        let mut bin = Vec::new();
        write_evt1(&s, &mut bin).unwrap();
        assert_eq!(bin.len(), 16);
        assert_eq!(read_evt1(bin.as_slice()).unwrap(), s);

        let mut text = Vec::new();
        write_csv(&s, &mut text).unwrap();
        assert_eq!(String::from_utf8(text.clone()).unwrap(), "t_us,x,y,p\n");
        assert_eq!(read_csv(text.as_slice(), g).unwrap(), s);
    }

    #[test]
    fn single_record_round_trip() {
        let g = Geometry::new(4, 4);
        let s = stream_from(g, &[(42, 1, 2, 1)]);
        let mut bin = Vec::new();
        write_evt1(&s, &mut bin).unwrap();
        assert_eq!(bin.len(), 32);
        assert_eq!(&bin[16..24], &42u64.to_le_bytes());
        assert_eq!(bin[28], 1);
        assert_eq!(read_evt1(bin.as_slice()).unwrap(), s);
    }

    #[test]
    fn evt1_truncation_reports_offset() {
        let g = Geometry::new(4, 4);
        let s = stream_from(g, &[(1, 1, 1, 1), (2, 2, 2, -1)]);
        let mut bin = Vec::new();
        write_evt1(&s, &mut bin).unwrap();
        bin.truncate(40);
        match read_evt1(bin.as_slice()).unwrap_err() {
            EventError::MalformedBinary { offset, .. } => assert_eq!(offset, 32),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn evt1_bad_magic() {
        let bin = b"EVT2\0\0\0\0\0\0\0\0\0\0\0\0";
        assert!(matches!(read_evt1(&bin[..]), Err(EventError::MalformedBinary { offset: 0, .. })));
    }

    #[test]
    fn file_round_trip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let g = Geometry::new(16, 8);
        let s = stream_from(g, &[(0, 0, 0, 1), (3, 15, 7, -1), (3, 2, 2, 1)]);
        for (name, fmt) in [("e.csv", EventFormat::Csv), ("e.evt1", EventFormat::Evt1)] {
            let path = dir.path().join(name);
            write_events(&s, &path, fmt).unwrap();
            assert_eq!(EventFormat::from_path(&path), fmt);
            assert_eq!(read_events(&path, fmt, Some(g)).unwrap(), s);
        }
        let path = dir.path().join("e.evt1");
        assert!(matches!(
            read_events(&path, EventFormat::Evt1, Some(Geometry::new(3, 3))),
            Err(EventError::GeometryMismatch { .. })
        ));
        assert!(matches!(
            read_events(&dir.path().join("e.csv"), EventFormat::Csv, None),
            Err(EventError::MissingGeometry)
        ));
    }

    fn arb_stream() -> impl Strategy<Value = EventStream> {
        (1u16..400, 1u16..300).prop_flat_map(|(w, h)| {
            prop::collection::vec((0u64..1000, 0..w, 0..h, any::<bool>()), 0..200).prop_map(move |raw| {
                let mut t = 0;
                let events = raw
                    .into_iter()
                    .map(|(dt, x, y, on)| {
                        t += dt;
                        Event::new(t, x, y, if on { Polarity::On } else { Polarity::Off })
                    })
                    .collect();
                EventStream::new(Geometry::new(w, h), events).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn round_trip_evt1(s in arb_stream()) {
            let mut bin = Vec::new();
            write_evt1(&s, &mut bin).unwrap();
            prop_assert_eq!(read_evt1(bin.as_slice()).unwrap(), s);
        }

        #[test]
        fn round_trip_csv(s in arb_stream()) {
            let mut text = Vec::new();
            write_csv(&s, &mut text).unwrap();
            prop_assert_eq!(read_csv(text.as_slice(), s.geometry()).unwrap(), s);
        }
    }
}
