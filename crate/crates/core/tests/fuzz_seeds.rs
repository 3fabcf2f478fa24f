//! The checked-in fuzz seeds parse (or fail) the way their names say.

use std::fs;
use std::path::{Path, PathBuf};

use voxfp::analysis::EnergyTable;
use voxfp::potentials::RadialTable;
use voxfp::{Config, DensityField, ExternalPotential};

fn corpus(target: &str) -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path: PathBuf = e.unwrap().path();
            let name = path.file_stem().unwrap().to_str().unwrap().to_string();
            (name, fs::read_to_string(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn check<T, E: std::fmt::Display>(target: &str, rejected: &[&str], parse: impl Fn(&str) -> Result<T, E>) {
    for (name, text) in corpus(target) {
        let result = parse(&text);
        let want_ok = !rejected.contains(&name.as_str());
        match result {
            Ok(_) => assert!(want_ok, "{target}/{name} should be rejected"),
            Err(e) => assert!(!want_ok, "{target}/{name} rejected: {e}"),
        }
    }
}

#[test]
fn config_seeds() {
    check("config", &["unknown_key", "beta_and_alpha"], |t| Config::parse(t, Path::new(".")));
}

#[test]
fn field_seeds() {
    check("field_csv", &["negative", "short"], DensityField::parse_csv);
}

#[test]
fn radial_table_seeds() {
    check("radial_table_csv", &["unsorted"], |t| {
        let far = 2.0 + f64::from(t.as_bytes()[0] % 8);
        RadialTable::parse_csv(&t[1..], far)
    });
}

#[test]
fn energy_seeds() {
    check("energy_csv", &["nan"], EnergyTable::parse_csv);
}

#[test]
fn external_table_seeds() {
    check("external_table_csv", &[], ExternalPotential::parse_csv);
}
