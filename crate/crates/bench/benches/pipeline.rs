use criterion::{black_box, criterion_group, criterion_main, Criterion};
use pchart_bench::{HUBBLE, PUMP, RFID, SENDER_RECEIVER};
use pchart_core::analysis::{compile, verify};
use pchart_core::checker::CheckOptions;
use pchart_core::codegen::{generate_code, CodegenOptions};
use pchart_core::dsl::parse_chart;
use pchart_core::mdp::BuildOptions;
use pchart_core::normalize::normalize;

fn frontend(c: &mut Criterion) {
    c.bench_function("parse rfid", |b| b.iter(|| parse_chart(black_box(RFID))));
    let pump = parse_chart(PUMP).chart.unwrap();
    c.bench_function("normalize pump", |b| b.iter(|| normalize(black_box(&pump)).unwrap()));
    c.bench_function("codegen pump", |b| b.iter(|| generate_code(black_box(&pump), CodegenOptions::default()).unwrap()));
}

fn checking(c: &mut Criterion) {
    for (name, src) in [("sender_receiver", SENDER_RECEIVER), ("rfid", RFID), ("hubble", HUBBLE)] {
        let chart = parse_chart(src).chart.unwrap();
        c.bench_function(&format!("build {name}"), |b| b.iter(|| compile(black_box(&chart), BuildOptions::default()).unwrap()));
        let compiled = compile(&chart, BuildOptions::default()).unwrap();
        c.bench_function(&format!("verify {name}"), |b| {
            b.iter(|| verify(black_box(&chart), &compiled, &CheckOptions::default()))
        });
    }
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = frontend, checking
}
criterion_main!(benches);
