use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use softland::exec::Exec;
use softland::optimize::sweep::{sweep_impedance, Axis, GridSpec, SweepOptions};
use softland::Params;

fn sweep(c: &mut Criterion) {
    let params = Params::new(5.0, 20.0).unwrap();
    let grid = GridSpec {
        k_p: Axis::new(0.0, 1.0, 31),
        k_d: Axis::new(0.0, 1.0, 31),
    };
    let mut group = c.benchmark_group("impedance_sweep_31x31");
    group.sample_size(10);
    for (name, exec) in [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)] {
        let opts = SweepOptions {
            exec,
            ..SweepOptions::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| sweep_impedance(-3.0, &params, &grid, opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
