//! Prints the default sweep (k = 3, batch 4096, 32 × 32) as CSV.

fn main() {
    let spec = ukan_bench::SweepSpec::default();
    let mut out = std::io::stdout().lock();
    if let Err(e) = ukan_bench::write_sweep_csv(&spec, &mut out) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
