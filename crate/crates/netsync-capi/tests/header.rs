//! Keeps the hand-maintained header in sync with the exported symbols.

use std::path::Path;

fn read(rel: &str) -> String {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(root.join(rel)).expect("crate file readable")
}

fn exported_symbols(source: &str) -> Vec<String> {
    let mut names = Vec::new();
    let mut pending = false;
    for line in source.lines() {
        let line = line.trim();
        if line.starts_with("#[no_mangle]") {
            pending = true;
            continue;
        }
        if pending {
            if let Some(rest) = line.split("extern \"C\" fn ").nth(1) {
                let name: String = rest
                    .chars()
                    .take_while(|c| c.is_alphanumeric() || *c == '_')
                    .collect();
                assert!(!name.is_empty(), "could not parse symbol from `{line}`");
                names.push(name);
                pending = false;
            }
        }
    }
    assert!(!names.is_empty(), "no exported symbols found");
    names
}

#[test]
fn every_exported_symbol_is_declared_in_the_header() {
    let source = read("src/lib.rs");
    let header = read("include/netsync.h");
    for name in exported_symbols(&source) {
        assert!(
            header.contains(&format!("{name}(")),
            "header is missing a declaration for `{name}`"
        );
    }
}

#[test]
fn header_status_codes_match_the_crate_constants() {
    let header = read("include/netsync.h");
    let expect = [
        ("NETSYNC_OK", netsync_capi::NETSYNC_OK),
        ("NETSYNC_ERR_INVALID_INPUT", netsync_capi::NETSYNC_ERR_INVALID_INPUT),
        ("NETSYNC_ERR_NUMERICAL", netsync_capi::NETSYNC_ERR_NUMERICAL),
        ("NETSYNC_ERR_NULL_POINTER", netsync_capi::NETSYNC_ERR_NULL_POINTER),
        ("NETSYNC_ERR_UTF8", netsync_capi::NETSYNC_ERR_UTF8),
        ("NETSYNC_ERR_PANIC", netsync_capi::NETSYNC_ERR_PANIC),
    ];
    for (name, value) in expect {
        assert!(
            header.contains(&format!("{name} = {value}")),
            "header code `{name}` does not equal {value}"
        );
    }
}
