use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

fn collect(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(entries) = fs::read_dir(dir) else { return };
    for e in entries.flatten() {
        let p = e.path();
        if p.is_dir() {
            collect(&p, out);
        } else if p.extension().is_some_and(|x| x == "rs" || x == "toml") {
            out.push(p);
        }
    }
}

fn main() {
    let here = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").unwrap());
    let core = here.join("../core");
    let mut files = Vec::new();
    for root in [here.join("src"), core.join("src")] {
        println!("cargo:rerun-if-changed={}", root.display());
        collect(&root, &mut files);
    }
    for m in [here.join("Cargo.toml"), core.join("Cargo.toml")] {
        println!("cargo:rerun-if-changed={}", m.display());
        files.push(m);
    }
    files.sort();
    let mut h = Sha256::new();
    for f in &files {
        let rel = f.strip_prefix(&here).unwrap_or(f);
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(fs::read(f).unwrap_or_default());
    }
    println!("cargo:rustc-env=GEOSSL_CODE_HASH={}", hex::encode(h.finalize()));
}
