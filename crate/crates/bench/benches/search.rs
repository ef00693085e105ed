use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snipsearch::eval::{mean_ap, Detection};
use snipsearch::fusion::check::random_inputs;
use snipsearch::fusion::{forward, FusionConfig, FusionWeights};
use snipsearch::similarity::Dedup;
use snipsearch::synth::{planted_corpus, PlantConfig};
use snipsearch::{find_similar_subsequences, g_sim, mine_pairs, Alphabet, BBox, MineParams, DEFAULT_TH_SIM};

fn symbols(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| b"THLBF"[rng.gen_range(0..5)]).collect()
}

fn similarity(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("similarity");
    for m in [8usize, 32] {
        let q = symbols(&mut rng, m);
        let cand = symbols(&mut rng, m);
        group.bench_with_input(BenchmarkId::new("g_sim", m), &m, |b, _| b.iter(|| g_sim(black_box(&q), black_box(&cand))));
        let target = symbols(&mut rng, 2000);
        group.bench_with_input(BenchmarkId::new("subsequences_2000", m), &m, |b, _| {
            b.iter(|| find_similar_subsequences(black_box(&q), black_box(&target), DEFAULT_TH_SIM, Dedup::BestPerStart))
        });
    }
    group.finish();
}

fn mining(c: &mut Criterion) {
    let cfg = PlantConfig {
        n_pages: 100,
        n_queries: 10,
        seed: 3,
        ..PlantConfig::default()
    };
    let pc = planted_corpus(&Alphabet::publaynet(), &cfg).expect("planted corpus");
    let params = MineParams {
        parallel: false,
        ..MineParams::default()
    };
    let mut group = c.benchmark_group("mining");
    group.sample_size(10);
    group.bench_function("mine_pairs_100_pages", |b| b.iter(|| mine_pairs(black_box(&pc.corpus), &params)));
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut boxes = |n: usize| -> Vec<BBox> {
        (0..n)
            .map(|_| {
                let (x, y) = (rng.gen_range(0.0..500.0), rng.gen_range(0.0..700.0));
                BBox::new(x, y, x + rng.gen_range(10.0..100.0), y + rng.gen_range(10.0..80.0)).expect("valid box")
            })
            .collect()
    };
    let gts: Vec<Vec<BBox>> = (0..500).map(|_| boxes(3)).collect();
    let preds: Vec<Vec<Detection>> = gts
        .iter()
        .enumerate()
        .map(|(i, g)| g.iter().map(|b| Detection::new(*b, (i % 10) as f64 / 10.0).expect("score in range")).collect())
        .collect();
    c.bench_function("mean_ap_500_images", |b| b.iter(|| mean_ap(black_box(&preds), black_box(&gts))));
}

fn fusion(c: &mut Criterion) {
    let cfg = FusionConfig::tiny();
    let weights = FusionWeights::random(&cfg, 1);
    let inputs = random_inputs(&cfg, 2).expect("tiny inputs");
    c.bench_function("fusion_forward_tiny", |b| b.iter(|| forward(black_box(&inputs), &weights, &cfg)));
}

criterion_group!(benches, similarity, mining, metrics, fusion);
criterion_main!(benches);
