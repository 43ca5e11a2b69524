use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use seqsynth_core::combine::{combine, Estimator, PerSynthesisEstimates};
use seqsynth_core::fit::{fit_cart, CartControls, Response};
use seqsynth_core::rng::stream;
use seqsynth_core::sim::{stand_in_plan, stand_in_survey};
use seqsynth_core::synth::synthesize;
use seqsynth_core::table::{encode_design, DataTable};

fn survey(n: usize) -> DataTable {
    stand_in_survey(n, 0.0, &mut stream(1)).expect("stand-in survey")
}

fn cart_fit(c: &mut Criterion) {
    let mut g = c.benchmark_group("cart_fit");
    for n in [1_000, 10_000] {
        let t = survey(n);
        let x = encode_design(&t, &["AGE9", "SEX9", "MSTAT9"]).unwrap();
        let def = t.schema().get("ILL9").unwrap();
        let y = Response::from_cells(def, t.column("ILL9").unwrap()).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| fit_cart(black_box(&y), black_box(&x), CartControls::default()))
        });
    }
    g.finish();
}

fn synthesis(c: &mut Criterion) {
    let mut g = c.benchmark_group("synthesize");
    g.sample_size(10);
    for n in [2_000, 20_000] {
        let t = survey(n);
        let plan = stand_in_plan(2, 7);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| synthesize(black_box(&t), &plan).unwrap())
        });
    }
    g.finish();
}

fn estimators(c: &mut Criterion) {
    let (m, p) = (100, 20);
    let q: Vec<Vec<f64>> = (0..m)
        .map(|l| (0..p).map(|j| (l * p + j) as f64 * 1e-3).collect())
        .collect();
    let v = vec![vec![0.5; p]; m];
    let per = PerSynthesisEstimates::new(q, v, 1000, 1000).unwrap();
    let names: Vec<String> = (0..p).map(|j| format!("b{j}")).collect();
    let mut g = c.benchmark_group("combine");
    for est in [
        Estimator::Ts,
        Estimator::TsPpd,
        Estimator::Tp,
        Estimator::Tm,
        Estimator::TmAdjusted,
    ] {
        g.bench_function(est.to_string(), |b| {
            b.iter(|| combine(black_box(&per), &names, est, 0.95).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, cart_fit, synthesis, estimators);
criterion_main!(benches);
