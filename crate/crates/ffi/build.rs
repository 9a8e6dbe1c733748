fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();
    let header = std::path::Path::new(&crate_dir).join("include/smcr.h");
    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("SMCR_H".into()),
        cpp_compat: true,
        documentation: true,
        ..Default::default()
    };
    match cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
    {
        Ok(bindings) => {
            bindings.write_to_file(header);
        }
        Err(cbindgen::Error::ParseSyntaxError { .. }) => {
            // In-progress source edits; keep the previous header.
        }
        Err(e) => panic!("cbindgen failed: {e}"),
    }
    println!("cargo:rerun-if-changed=src/lib.rs");
}
