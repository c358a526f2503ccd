//! Parallel vs sequential throughput of the data-parallel inner loops:
//! batched backproject+decode, the spectral forward model over a batch, and
//! dataset synthesis. Build with the default `parallel` feature to compare
//! both paths; without it only the sequential arm runs.

use codi::data::{synth_cassi_sample, DatasetSpec};
use codi::decoder::{DecoderConfig, DecoderNet};
use codi::par::map_collect_seq;
use codi::sensing::{
    BinarizeMode, CassiEncoder, Modality, MriEncoder, SceneTensor, SensingOperator,
};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

#[cfg(feature = "parallel")]
use codi::par::map_collect_par;

fn mri_batch(n: usize) -> (SensingOperator, DecoderNet, Vec<SceneTensor>) {
    let op =
        SensingOperator::Mri(MriEncoder::seeded(64, 4.0, BinarizeMode::Heaviside, 1).unwrap());
    let net = DecoderNet::new(DecoderConfig::for_modality(Modality::Mri, 64, 1, 2)).unwrap();
    let mut spec = DatasetSpec::defaults(Modality::Mri, 3);
    spec.train = n;
    spec.val = 0;
    spec.test = 0;
    let data = codi::data::build(&spec).unwrap();
    (op, net, data.train)
}

fn bench_decode_batch(c: &mut Criterion) {
    let (op, net, batch) = mri_batch(16);
    let work = |x: &SceneTensor| {
        let bp = op.backproject(x).unwrap();
        let (recon, _) = net.decode(&bp).unwrap();
        recon.data.sum()
    };
    let mut group = c.benchmark_group("mri_backproject_decode_16");
    group.sample_size(10);
    group.bench_function("seq", |b| {
        b.iter_batched(|| (), |_| map_collect_seq(&batch, work), BatchSize::SmallInput)
    });
    #[cfg(feature = "parallel")]
    group.bench_function("par", |b| {
        b.iter_batched(|| (), |_| map_collect_par(&batch, work), BatchSize::SmallInput)
    });
    group.finish();
}

fn bench_cassi_forward_batch(c: &mut Criterion) {
    let op = SensingOperator::Cassi(
        CassiEncoder::seeded(32, 32, 8, 1, BinarizeMode::Heaviside, 4).unwrap(),
    );
    let mut spec = DatasetSpec::defaults(Modality::Cassi, 5);
    spec.train = 32;
    spec.val = 0;
    spec.test = 0;
    let batch = codi::data::build(&spec).unwrap().train;
    let work = |x: &SceneTensor| op.forward(x).unwrap().values.norm_sqr();
    let mut group = c.benchmark_group("cassi_forward_32");
    group.sample_size(20);
    group.bench_function("seq", |b| b.iter(|| map_collect_seq(&batch, work)));
    #[cfg(feature = "parallel")]
    group.bench_function("par", |b| b.iter(|| map_collect_par(&batch, work)));
    group.finish();
}

fn bench_synthesis(c: &mut Criterion) {
    let seeds: Vec<u64> = (0..64).collect();
    let work = |&s: &u64| synth_cassi_sample(32, 8, s).data.sum();
    let mut group = c.benchmark_group("synth_cassi_64");
    group.sample_size(10);
    group.bench_function("seq", |b| b.iter(|| map_collect_seq(&seeds, work)));
    #[cfg(feature = "parallel")]
    group.bench_function("par", |b| b.iter(|| map_collect_par(&seeds, work)));
    group.finish();
}

criterion_group!(
    benches,
    bench_decode_batch,
    bench_cassi_forward_batch,
    bench_synthesis
);
criterion_main!(benches);
