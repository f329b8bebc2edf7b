use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use lerw3d::analysis::tube::TubeSampler;
use lerw3d::estimators::LerwSampler;
use lerw3d::ust::wilson_ust;
use lerw3d::walk::DEFAULT_MAX_STEPS;
use lerw3d::{erase_loops, sample_walk, Domain, LatticePoint, RandomSource, StopRule, TubePartition};

fn walk_to_exit(c: &mut Criterion) {
    let mut g = c.benchmark_group("walk");
    for n in [4u8, 6] {
        let rule = StopRule::ExitDomain(Domain::unit_ball(n));
        let mut rng = RandomSource::new(1, n as u64);
        g.bench_function(format!("srw_exit_n{n}"), |b| {
            b.iter(|| black_box(sample_walk(LatticePoint::origin(n), &rule, &mut rng).unwrap().len()))
        });
    }
    g.finish();
}

fn loop_erasure(c: &mut Criterion) {
    let mut g = c.benchmark_group("loop_erasure");
    let rule = StopRule::ExitDomain(Domain::unit_ball(6));
    let mut rng = RandomSource::new(2, 0);
    g.bench_function("erase_loops_n6", |b| {
        b.iter_batched(
            || sample_walk(LatticePoint::origin(6), &rule, &mut rng).unwrap(),
            |w| black_box(erase_loops(&w).len()),
            BatchSize::SmallInput,
        )
    });
    for n in [5u8, 7] {
        let mut s = LerwSampler::new(n).unwrap();
        let mut rng = RandomSource::new(3, n as u64);
        g.bench_function(format!("lerw_streaming_n{n}"), |b| b.iter(|| black_box(s.sample_len(&mut rng).unwrap())));
    }
    g.finish();
}

fn wilson(c: &mut Criterion) {
    let mut g = c.benchmark_group("wilson");
    g.sample_size(20);
    for n in [2u8, 3] {
        let d = Domain::unit_ball(n);
        let mut rng = RandomSource::new(4, n as u64);
        g.bench_function(format!("ust_unit_ball_n{n}"), |b| b.iter(|| black_box(wilson_ust(&d, None, &mut rng).unwrap().vertices().len())));
    }
    g.finish();
}

fn tube(c: &mut Criterion) {
    let mut g = c.benchmark_group("tube");
    g.sample_size(20);
    let mut s = TubeSampler::new(TubePartition::new(3, 2, 10).unwrap(), 10.0, 1.6, DEFAULT_MAX_STEPS).unwrap();
    let mut rng = RandomSource::new(5, 0);
    g.bench_function("tube_sample_3_2_10", |b| b.iter(|| black_box(s.sample(&mut rng).unwrap().a_m)));
    g.finish();
}

criterion_group!(benches, walk_to_exit, loop_erasure, wilson, tube);
criterion_main!(benches);
