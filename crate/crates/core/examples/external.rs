//! Tunes a small program by compiling and timing each variant with the host
//! compiler, then checks the best variant's output against the original.
//!
//! `cargo run --example external -- [compiler]`

use offload_tuner::pipeline::{run_pipeline, ToolConfig, Verification};

const SOURCE: &str = r#"#include <stdio.h>

double a[200000];
double b[200000];

int main() {
    for (int i = 0; i < 200000; i++) {
        a[i] = i * 0.001;
    }
    for (int r = 0; r < 50; r++) {
        for (int i = 0; i < 200000; i++) {
            b[i] = a[i] * a[i] + 1.0;
        }
    }
    printf("%f %f\n", b[1], b[199999]);
    return 0;
}
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cc = std::env::args().nth(1).unwrap_or_else(|| "cc".into());
    let dir = tempfile::tempdir()?;
    let src = dir.path().join("kernel.c");
    std::fs::write(&src, SOURCE)?;
    let config = serde_json::json!({
        "inputs": [src],
        "evaluator": {
            "kind": "external",
            "compile": format!("{cc} -O2 {{src}} -o {{bin}}"),
            "run": "{bin}",
            "timeout_s": 20.0
        },
        "ga": {"population": 4, "generations": 2}
    });
    let report = run_pipeline(&ToolConfig::from_json(&config.to_string())?)?;
    println!(
        "baseline {:.4} s, best {} {:.4} s",
        report.baseline_time_s, report.best_genome, report.best_time_s
    );
    match &report.verification {
        Verification::Compared(d) => println!("outputs match: {} ({} values)", d.pass, d.compared),
        Verification::NotRun(why) => println!("not verified: {why}"),
    }
    Ok(())
}
