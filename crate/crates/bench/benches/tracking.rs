use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use isctrack_core::beamforming::alignment_indicator;
use isctrack_core::mpc::{build_problem, build_stacked, solve, ConstraintParams};
use isctrack_core::simkit::next_beam;
use isctrack_core::{load_config, run_episode, ControllerKind, Scenario};
use nalgebra::{Vector2, Vector4};

fn scenario(overrides: &[&str]) -> Scenario {
    load_config(None, Some("case2"), overrides).unwrap().resolve().unwrap()
}

fn beam(c: &mut Criterion) {
    let sc = scenario(&[]);
    let (p_uav, p_tgt) = (Vector2::new(0.0, 150.0), Vector2::new(10.0, 390.0));
    c.bench_function("next_beam", |b| b.iter(|| next_beam(&sc, black_box(&p_uav), black_box(&p_tgt)).unwrap()));
}

fn mpc(c: &mut Criterion) {
    let sc = scenario(&[]);
    let s_uav = Vector4::new(0.0, 150.0, 0.0, 0.0);
    let s_hat = Vector4::new(0.0, 400.0, 1.5, -2.0);
    let predictions: Vec<Vector4<f64>> = (1..=sc.horizon).map(|i| sc.model.a_power(i) * s_hat).collect();
    let params = ConstraintParams {
        gamma_th: sc.gamma_th,
        eta: sc.eta,
        gamma: sc.gamma,
        altitude: sc.rf.altitude,
        p_gu: sc.p_gu,
        deltas: predictions.iter().map(|s| alignment_indicator(&Vector2::new(s[0], s[1]), &sc.p_gu)).collect(),
        a_max: sc.a_max,
        v_max: sc.v_max,
    };
    let m_hat = sc.model.qs;
    c.bench_function("mpc_build", |b| {
        b.iter(|| {
            let sm = build_stacked(&(s_uav - s_hat), &s_uav, &m_hat, &sc.model, sc.horizon, &sc.q, &sc.r).unwrap();
            build_problem(&sm, &params).unwrap()
        })
    });
    let sm = build_stacked(&(s_uav - s_hat), &s_uav, &m_hat, &sc.model, sc.horizon, &sc.q, &sc.r).unwrap();
    let problem = build_problem(&sm, &params).unwrap();
    c.bench_function("mpc_solve", |b| b.iter(|| solve(black_box(&problem), &sc.solver).unwrap()));
}

fn episode(c: &mut Criterion) {
    let sc = scenario(&["slots=20"]);
    let mut group = c.benchmark_group("episode_20_slots");
    group.sample_size(10);
    for kind in ControllerKind::ALL {
        group.bench_with_input(BenchmarkId::from_parameter(kind), &kind, |b, &k| {
            b.iter(|| run_episode(&sc, k, 1).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, beam, mpc, episode);
criterion_main!(benches);
