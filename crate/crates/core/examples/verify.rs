//! Compares two output streams with absolute and relative tolerances.

use offload_tuner::pipeline::verify_results;

fn main() {
    let baseline = "checksum 1.000000 2.500000 1024";
    for tuned in ["checksum 1.0000001 2.5 1024", "checksum 1.01 2.5 1024", "checksum 1.0 2.5"] {
        let d = verify_results(baseline, tuned, 1e-6, 1e-4);
        println!(
            "{:<28} pass={} max_abs={:.2e} max_rel={:.2e} {}",
            tuned,
            d.pass,
            d.max_abs_err,
            d.max_rel_err,
            d.diagnostic.unwrap_or_default()
        );
    }
}
