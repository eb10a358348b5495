//! Printed outputs compared against checked-in files.
//! Set SYMRED_BLESS=1 to rewrite them.

use std::path::PathBuf;

use symred::detsys::{classical_determining, nonclassical_determining, HeatPDE};
use symred::preset::{reduce_preset, ExamplePreset};
use symred::symkernel::parse;

fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("SYMRED_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected =
        std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(
        expected, actual,
        "{name} differs; rerun with SYMRED_BLESS=1 if intended"
    );
}

/// Every line is `#[key] expr` with `expr` in the expression grammar.
fn assert_parsable(text: &str) {
    for line in text.lines() {
        let (_, eq) = line
            .split_once("] ")
            .unwrap_or_else(|| panic!("no key: {line}"));
        parse(eq).unwrap_or_else(|e| panic!("{eq}: {e}"));
    }
}

#[test]
fn classical_system() {
    let text = classical_determining(&HeatPDE::new()).unwrap().to_string();
    assert_parsable(&text);
    golden("detsys_classical.txt", &text);
}

#[test]
fn nonclassical_system() {
    let text = nonclassical_determining(&HeatPDE::new())
        .unwrap()
        .to_string();
    assert_parsable(&text);
    golden("detsys_nonclassical.txt", &text);
}

#[test]
fn reduced_odes() {
    let mut text = String::new();
    for preset in ExamplePreset::all() {
        let (ode, matches) = reduce_preset(&preset).unwrap();
        assert!(matches, "example {}", preset.id);
        text.push_str(&format!("#[example{}.c1] {}\n", preset.id, ode.c1));
        text.push_str(&format!("#[example{}.c0] {}\n", preset.id, ode.c0));
        text.push_str(&format!("#[example{}.r] {}\n", preset.id, ode.r));
    }
    assert_parsable(&text);
    golden("reduced_odes.txt", &text);
}
