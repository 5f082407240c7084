use ukan_bench::{parallel_forward, write_sweep_csv, Arm, SweepSpec, CSV_HEADER};
use ukan_core::{kan_forward, Tape};

fn small_spec() -> SweepSpec {
    SweepSpec {
        orders: vec![1, 3],
        grids: vec![4, 32],
        batch: 64,
        d_in: 4,
        d_out: 3,
        reps: 5,
        ..SweepSpec::default()
    }
}

#[test]
fn csv_rows_are_complete() {
    let mut out = Vec::new();
    let rows = write_sweep_csv(&small_spec(), &mut out).unwrap();
    assert_eq!(rows.len(), 8);
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let width = CSV_HEADER.split(',').count();
    for line in lines {
        assert_eq!(line.split(',').count(), width, "{line}");
        assert!(!line.contains("OOM"));
    }
}

#[test]
fn naive_over_budget_reports_oom() {
    let spec = SweepSpec {
        memory_budget: 1024,
        ..small_spec()
    };
    let rows = write_sweep_csv(&spec, &mut Vec::new()).unwrap();
    for row in rows {
        assert_eq!(row.timing.is_none(), row.arm == Arm::Naive);
    }
}

#[test]
fn parallel_forward_is_partition_independent() {
    let spec = small_spec();
    let (layer, x) = ukan_bench::bench_instance(&spec, 3, 16).unwrap();
    let serial = kan_forward(&layer, &mut Tape::new(), &x).unwrap();
    for threads in [2, 3, 7] {
        let par = parallel_forward(Arm::Matrix, &layer, &x, threads).unwrap();
        assert_eq!(serial.values(), par.values());
    }
}
