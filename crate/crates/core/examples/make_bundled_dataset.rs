//! Regenerates `data/synthetic/{trace,features,models}.csv`.

use std::path::Path;

use adaptive_premodel::synthetic::bundled_dataset;
use adaptive_premodel::trace_store::save_dataset;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic");
    std::fs::create_dir_all(&dir).expect("create data dir");
    save_dataset(
        &bundled_dataset(),
        &dir.join("trace.csv"),
        &dir.join("features.csv"),
        &dir.join("models.csv"),
    )
    .expect("write bundled dataset");
    println!("wrote {}", dir.display());
}
