use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").expect("set by cargo"));
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let config = cbindgen::Config::from_file(crate_dir.join("cbindgen.toml")).expect("valid cbindgen.toml");
    let bindings = cbindgen::generate_with_config(&crate_dir, config).expect("header generation");
    let out = crate_dir.join("include").join("sras.h");
    std::fs::create_dir_all(out.parent().expect("has parent")).expect("create include dir");
    bindings.write_to_file(out);
}
