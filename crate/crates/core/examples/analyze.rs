//! Prints the loop table and variable references of a C file.
//!
//! `cargo run --example analyze -- path/to/file.c`

use std::path::PathBuf;

use offload_tuner::pipeline;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/safety/matrix.c")
    });
    let desc = pipeline::analyze(&[path])?;
    for file in &desc.files {
        println!("{}", file.file_id.as_str());
        for l in &file.loops {
            let parent = l.parent.map_or("-".to_string(), |p| p.0.to_string());
            println!(
                "  loop {:>3} bytes {:>5}..{:<5} parent {:>3} {:?} trips {:?}",
                l.loop_id.0, l.span[0], l.span[1], parent, l.shape, l.trip_count
            );
        }
        for v in &file.vars {
            let regions: Vec<&str> = v.refs.iter().map(|r| r.region.as_str()).collect();
            println!("  var {} ({:?}) in {}", v.name, v.scope, regions.join(", "));
        }
    }
    Ok(())
}
