//! Energy-series CSV, binary snapshots and PGM previews.
//!
//! Snapshot layout (little-endian throughout):
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `NCHF` |
//! | 4     | format version, `u32` |
//! | 4 + 4 | `N1`, `N2`, `u32` |
//! | 8 x 3 | `X1`, `X2`, `t`, `f64` |
//! | 8 N1 N2 | values, `f64`, x-major (`i * N2 + j`) |

use std::fs;
use std::path::Path;

use crate::energetics::EnergyRecord;
use crate::error::{Error, Result};
use crate::grid::{Grid, RealField};

pub const ENERGY_CSV_HEADER: &str = "t,mass,E,E_mod,linf,min,max,dt";
pub const SNAPSHOT_MAGIC: &[u8; 4] = b"NCHF";
pub const SNAPSHOT_VERSION: u32 = 1;
const SNAPSHOT_HEADER_LEN: usize = 4 + 4 + 8 + 24;

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn format_energy_csv(records: &[EnergyRecord]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(ENERGY_CSV_HEADER.split(',')).expect("in-memory write");
    for r in records {
        let e_mod = r.modified_energy.map(fmt17).unwrap_or_default();
        w.write_record([
            fmt17(r.t),
            fmt17(r.mass),
            fmt17(r.energy),
            e_mod,
            fmt17(r.linf),
            fmt17(r.min),
            fmt17(r.max),
            fmt17(r.dt),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn write_energy_csv(records: &[EnergyRecord], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_energy_csv(records))?;
    Ok(())
}

pub fn parse_energy_csv(text: &str, path: &Path) -> Result<Vec<EnergyRecord>> {
    let bad = |line: u64, msg: String| Error::Format {
        path: path.to_path_buf(),
        msg: format!("line {line}: {msg}"),
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = rdr.records();
    match rows.next() {
        Some(Ok(h)) if h.iter().eq(ENERGY_CSV_HEADER.split(',')) => {}
        Some(Ok(h)) => {
            let found: Vec<&str> = h.iter().collect();
            return Err(bad(1, format!("expected header `{ENERGY_CSV_HEADER}`, found `{}`", found.join(","))));
        }
        Some(Err(e)) => return Err(bad(1, e.to_string())),
        None => return Err(bad(1, "missing header".into())),
    }
    let mut out = Vec::new();
    for row in rows {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            bad(line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != 8 {
            return Err(bad(line, format!("expected 8 fields, found {}", row.len())));
        }
        let num = |i: usize| -> Result<f64> {
            row[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| bad(line, format!("field {}: {e}", i + 1)))
        };
        let e_mod = if row[3].trim().is_empty() { None } else { Some(num(3)?) };
        out.push(EnergyRecord {
            t: num(0)?,
            mass: num(1)?,
            energy: num(2)?,
            modified_energy: e_mod,
            linf: num(4)?,
            min: num(5)?,
            max: num(6)?,
            dt: num(7)?,
        });
    }
    Ok(out)
}

pub fn read_energy_csv(path: impl AsRef<Path>) -> Result<Vec<EnergyRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_energy_csv(&text, path)
}

pub fn encode_snapshot(field: &RealField, t: f64) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(SNAPSHOT_HEADER_LEN + 8 * g.len());
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(g.n1() as u32).to_le_bytes());
    out.extend_from_slice(&(g.n2() as u32).to_le_bytes());
    for v in [g.x1(), g.x2(), t] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_snapshot(bytes: &[u8], path: &Path) -> Result<(RealField, f64)> {
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < SNAPSHOT_HEADER_LEN {
        return Err(bad(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[0..4] != SNAPSHOT_MAGIC {
        return Err(bad(format!("bad magic {:?}", &bytes[0..4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != SNAPSHOT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let (n1, n2) = (u32_at(8) as usize, u32_at(12) as usize);
    let (x1, x2, t) = (f64_at(16), f64_at(24), f64_at(32));
    let payload = &bytes[SNAPSHOT_HEADER_LEN..];
    let expected = n1 * n2 * 8;
    if payload.len() != expected {
        return Err(bad(format!(
            "payload holds {} bytes, expected {expected} for {n1}x{n2}",
            payload.len()
        )));
    }
    let grid = Grid::new(x1, x2, n1, n2).map_err(|e| bad(e.to_string()))?;
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let field = RealField::new(grid, values).map_err(|e| bad(e.to_string()))?;
    Ok((field, t))
}

pub fn write_snapshot(field: &RealField, t: f64, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_snapshot(field, t))?;
    Ok(())
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<(RealField, f64)> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_snapshot(&bytes, path)
}

/// `phi` mapped linearly from `[-1.1, 1.1]` to `[0, 255]`, rounded and clamped.
pub fn gray_level(v: f64) -> u8 {
    (255.0 * (v + 1.1) / 2.2).round().clamp(0.0, 255.0) as u8
}

/// Binary PGM (`P5`) with `N1` rows and `N2` columns; row `i` holds `phi(x_i, .)`.
pub fn encode_pgm(field: &RealField) -> Vec<u8> {
    let g = field.grid();
    let mut out = format!("P5\n{} {}\n255\n", g.n2(), g.n1()).into_bytes();
    out.extend(field.values().iter().map(|&v| gray_level(v)));
    out
}

pub fn write_pgm(field: &RealField, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(field))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64, e_mod: Option<f64>) -> EnergyRecord {
        EnergyRecord {
            t,
            mass: 0.1 + t,
            energy: 1.0 / (1.0 + t),
            modified_energy: e_mod,
            linf: 0.9,
            min: -0.9,
            max: 0.8,
            dt: 1e-3,
        }
    }

    #[test]
    fn empty_series_is_header_only() {
        assert_eq!(format_energy_csv(&[]), format!("{ENERGY_CSV_HEADER}\n"));
    }

    #[test]
    fn absent_modified_energy_round_trips() {
        let recs = vec![rec(0.0, None), rec(0.1, Some(0.3))];
        let text = format_energy_csv(&recs);
        let back = parse_energy_csv(&text, Path::new("mem")).unwrap();
        assert_eq!(back, recs);
        assert!(text.lines().nth(1).unwrap().split(',').nth(3).unwrap().is_empty());
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = format!("{ENERGY_CSV_HEADER}\n1,2,3,,4,5,6,7\n1,2,x,,4,5,6,7\n");
        let err = parse_energy_csv(&text, Path::new("e.csv")).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = parse_energy_csv("a,b\n", Path::new("e.csv")).unwrap_err();
        assert!(err.to_string().contains("header"));
    }

    #[test]
    fn snapshot_rejects_corruption() {
        let g = Grid::square(1.0, 4).unwrap();
        let f = RealField::from_fn(g, |x, y| x - y);
        let bytes = encode_snapshot(&f, 2.5);
        let (back, t) = decode_snapshot(&bytes, Path::new("s")).unwrap();
        assert_eq!(t, 2.5);
        assert_eq!(back, f);
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode_snapshot(&wrong, Path::new("s")).unwrap_err().to_string().contains("magic"));
        let mut ver = bytes.clone();
        ver[4] = 9;
        assert!(decode_snapshot(&ver, Path::new("s")).unwrap_err().to_string().contains("version"));
        assert!(decode_snapshot(&bytes[..bytes.len() - 1], Path::new("s")).is_err());
        assert!(decode_snapshot(&bytes[..10], Path::new("s")).is_err());
    }

    #[test]
    fn pgm_mapping() {
        // 255 * 2.1 / 2.2 = 243.41
        assert_eq!(gray_level(1.0), 243);
        assert_eq!(gray_level(-1.1), 0);
        assert_eq!(gray_level(1.1), 255);
        assert_eq!(gray_level(5.0), 255);
        assert_eq!(gray_level(-5.0), 0);
        let g = Grid::new(1.0, 1.0, 4, 6).unwrap();
        let pgm = encode_pgm(&RealField::constant(g, 1.0));
        let header = b"P5\n6 4\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert!(pgm[header.len()..].iter().all(|&p| p == 243));
        assert_eq!(pgm.len() - header.len(), 24);
    }
}
