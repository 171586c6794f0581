use std::fs;
use std::path::PathBuf;

use nch::energetics::EnergyRecord;
use nch::experiments::InitialCondition;
use nch::grid::{Grid, RealField};
use nch::io::{
    parse_config, read_energy_csv, read_snapshot, write_energy_csv, write_pgm, write_snapshot, ENERGY_CSV_HEADER,
};
use nch::rng::XorShift64Star;
use nch::Error;

fn presets_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../presets")
}

#[test]
fn every_preset_parses() {
    let mut count = 0;
    for entry in fs::read_dir(presets_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 5);
}

#[test]
fn full_scale_preset() {
    let cfg = parse_config(presets_dir().join("coarsen_512_d005.json")).unwrap();
    assert_eq!((cfg.grid.n1, cfg.grid.n2), (512, 512));
    assert_eq!(cfg.domain.x1, 2.0 * std::f64::consts::PI);
    assert_eq!((cfg.scheme.a0, cfg.scheme.a1), (2.0, 5.0));
    assert_eq!((cfg.model.epsilon, cfg.model.delta), (0.1, 0.05));
    let seg: Vec<(f64, f64)> = cfg.schedule.iter().map(|s| (s.t_end, s.dt)).collect();
    assert_eq!(seg, vec![(1000.0, 0.001), (10_000.0, 0.01)]);
    assert!(matches!(cfg.initial, InitialCondition::Random { amplitude, .. } if amplitude == 0.1));
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    fs::write(&empty, "").unwrap();
    assert!(matches!(parse_config(&empty), Err(Error::Parse { .. })));

    let text = fs::read_to_string(presets_dir().join("smoke_32.json")).unwrap();
    let bad = text.replacen("\"epsilon\": 0.1", "\"epsilon\": -0.1", 1);
    let path = dir.path().join("bad.json");
    fs::write(&path, bad).unwrap();
    match parse_config(&path).unwrap_err() {
        Error::Parse { key, path: p, .. } => {
            assert_eq!(key, "model.epsilon");
            assert!(p.ends_with("bad.json"));
        }
        other => panic!("{other}"),
    }
    assert!(parse_config(dir.path().join("missing.json")).is_err());
}

fn random_records(n: usize) -> Vec<EnergyRecord> {
    let mut r = XorShift64Star::new(99);
    (0..n)
        .map(|i| EnergyRecord {
            t: i as f64 * 0.1 + r.next_f64() * 1e-3,
            mass: r.uniform(-1.0, 1.0) * 1e-17,
            energy: r.uniform(0.0, 1e3),
            modified_energy: if i % 3 == 0 { None } else { Some(r.uniform(-1e-300, 1e300)) },
            linf: r.next_f64(),
            min: -r.next_f64(),
            max: r.next_f64() * f64::EPSILON,
            dt: 1.0 / 3.0,
        })
        .collect()
}

#[test]
fn csv_round_trip_is_value_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.csv");
    let recs = random_records(1000);
    write_energy_csv(&recs, &path).unwrap();
    let back = read_energy_csv(&path).unwrap();
    assert_eq!(back.len(), 1000);
    for (a, b) in recs.iter().zip(&back) {
        assert_eq!(a.t.to_bits(), b.t.to_bits());
        assert_eq!(a.mass.to_bits(), b.mass.to_bits());
        assert_eq!(a.energy.to_bits(), b.energy.to_bits());
        assert_eq!(a.modified_energy.map(f64::to_bits), b.modified_energy.map(f64::to_bits));
        assert_eq!(a.max.to_bits(), b.max.to_bits());
    }
    write_energy_csv(&[], &path).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), format!("{ENERGY_CSV_HEADER}\n"));
}

#[test]
fn snapshot_round_trip_is_byte_exact() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::new(3.0, 1.0, 8, 6).unwrap();
    let mut r = XorShift64Star::new(4);
    let f = RealField::new(g.clone(), (0..g.len()).map(|_| r.uniform(-1.0, 1.0)).collect()).unwrap();
    let (a, b) = (dir.path().join("a.nchf"), dir.path().join("b.nchf"));
    write_snapshot(&f, 12.5, &a).unwrap();
    let (back, t) = read_snapshot(&a).unwrap();
    assert_eq!(t, 12.5);
    assert_eq!(back, f);
    write_snapshot(&back, t, &b).unwrap();
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    assert_eq!(bytes.len(), 40 + 8 * 48);
    assert_eq!(&bytes[..4], b"NCHF");

    fs::write(&b, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(read_snapshot(&b), Err(Error::Format { .. })));
}

#[test]
fn pgm_of_constant_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.pgm");
    let g = Grid::new(1.0, 1.0, 4, 8).unwrap();
    write_pgm(&RealField::constant(g, 1.0), &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    let header = b"P5\n8 4\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert!(bytes[header.len()..].iter().all(|&p| p == 243));
}
