use criterion::{criterion_group, criterion_main, Criterion};
use relaychain::mesh::compute_tables;
use relaychain::nsb::{compose, DEFAULT_DAMPING};
use relaychain::{Scenario, Simulation, Vec2};
use relaychain_bench::{chain_graph, on_path_stack};
use std::hint::black_box;

fn nsb_compose(c: &mut Criterion) {
    let stack = on_path_stack(Vec2::new(3.0, -1.5));
    c.bench_function("compose_3_tasks", |b| {
        b.iter(|| compose(black_box(&stack), DEFAULT_DAMPING, 0.2))
    });
}

fn routing(c: &mut Criterion) {
    let graph = chain_graph(8);
    c.bench_function("compute_tables_8_nodes", |b| {
        b.iter(|| compute_tables(black_box(&graph)))
    });
}

fn corridor_tick(c: &mut Criterion) {
    let mut sim = Simulation::new(Scenario::corridor());
    sim.run_ticks(600);
    c.bench_function("corridor_tick", |b| b.iter(|| black_box(sim.step())));
}

criterion_group!(benches, nsb_compose, routing, corridor_tick);
criterion_main!(benches);
