//! Regenerates the bundled benchmark stand-ins under data/. Both files
//! are deterministic, so a rerun must leave the tree unchanged.

use std::path::Path;

use ctxad_core::synth::{cmc_fixture, sf_fixture};
use ctxad_core::tabular::RawTable;

fn write_csv(raw: &RawTable, path: &Path) {
    let mut w = csv::Writer::from_path(path).expect("open output");
    w.write_record(&raw.header).expect("header");
    for row in &raw.rows {
        w.write_record(row).expect("row");
    }
    w.flush().expect("flush");
    println!("wrote {} ({} rows)", path.display(), raw.rows.len());
}

fn main() {
    let dir = Path::new("data");
    std::fs::create_dir_all(dir).expect("create data dir");
    write_csv(&cmc_fixture(), &dir.join("cmc.csv"));
    write_csv(&sf_fixture(), &dir.join("sf.csv"));
}
