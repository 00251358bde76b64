use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use duet_core::fixtures::planted_pairs;
use duet_core::robot::mpc_step;
use duet_core::session::{run_replay, scripted_pieces, DecisionSource, Performer, StrokeBank};
use duet_core::{ChordClassifier, KeyboardGeometry, ModelConfig, MpcConfig, SessionConfig};

fn classifier(c: &mut Criterion) {
    let model = ChordClassifier::seeded(ModelConfig::default(), 1);
    let pairs = planted_pairs(256, 2);
    let bar = pairs[0].melody();
    c.bench_function("lstm forward, one bar", |b| {
        b.iter(|| model.forward(black_box(&bar)))
    });
    let batch: Vec<_> = pairs.iter().map(|p| p.tokens).collect();
    let labels: Vec<usize> = pairs.iter().map(|p| p.chord_label.index()).collect();
    c.bench_function("lstm loss and gradient, batch 256", |b| {
        b.iter(|| model.loss_and_grad(black_box(&batch), black_box(&labels), None))
    });
}

fn control(c: &mut Criterion) {
    let cfg = MpcConfig::default();
    let g = KeyboardGeometry::default();
    let reference: Vec<f64> = (0..=cfg.horizon).map(|k| 10.0 * k as f64).collect();
    c.bench_function("mpc step", |b| {
        b.iter(|| mpc_step(black_box(0.0), black_box(&reference), &cfg, &g, 3, 0.667))
    });

    let session = SessionConfig::default();
    let bank = StrokeBank::tune(&session).expect("tuning");
    let model = ChordClassifier::seeded(ModelConfig::default(), 3);
    c.bench_function("performer step, idle", |b| {
        let mut p = Performer::new(
            session.clone(),
            DecisionSource::Model(Box::new(model.clone())),
            bank.clone(),
            true,
        );
        b.iter(|| p.step())
    });

    let piece = &scripted_pieces()[0];
    let melody = piece
        .track(session.tempo, session.signature.beats)
        .expect("piece");
    c.bench_function("replay, eight bars", |b| {
        b.iter(|| {
            run_replay(
                &melody,
                DecisionSource::Chart(piece.chart.clone()),
                &bank,
                &session,
            )
        })
    });
}

criterion_group!(benches, classifier, control);
criterion_main!(benches);
