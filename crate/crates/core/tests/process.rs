use rarebench_core::pipeline::settle;
use rarebench_core::process::{
    coolant_flow, polystyrene_coolant_flow, simulate, ExothermicParams, NoiseSpec, PolystyreneParams, ProcessModel,
    ProcessState, SimConfig, Simulator,
};
use rarebench_core::rng;

fn exothermic() -> ProcessModel {
    ProcessModel::Exothermic(ExothermicParams::default())
}

fn polystyrene() -> ProcessModel {
    ProcessModel::Polystyrene(PolystyreneParams::default())
}

fn run_quiet(model: &ProcessModel, start: &ProcessState, dt: f64, steps: usize) -> ProcessState {
    let sim = Simulator::new(model.clone(), NoiseSpec::silent(), dt).unwrap();
    let mut r = rng::stream(0, &[]);
    let mut s = start.clone();
    for _ in 0..steps {
        s = sim.step_with(&s, &mut r).unwrap();
    }
    s
}

#[test]
fn steady_states_do_not_drift() {
    for (model, dt, warm, physical) in [(exothermic(), 0.1, 20_000.0, 3), (polystyrene(), 0.01, 3000.0, 4)] {
        let s0 = settle(&model, dt, warm).unwrap();
        let s1 = run_quiet(&model, &s0, dt, 1000);
        for i in 0..physical {
            let drift = (s1.x[i] - s0.x[i]).abs();
            assert!(
                drift < 1e-6 * s0.x[i].abs().max(1e-12),
                "{} x[{i}]: {drift}",
                model.name()
            );
        }
    }
}

#[test]
fn coolant_flows_stay_within_bounds() {
    let exo = ExothermicParams::default();
    let cfg = SimConfig {
        dt: 0.1,
        t_sim: 2000.0,
        seed: 4,
        stop_on_basin: None,
    };
    let traj = simulate(&exothermic().initial_state(), &exothermic(), NoiseSpec::new(0.5), &cfg).unwrap();
    for s in &traj.states {
        let f = coolant_flow(&exo, s.x[1], s.x[3]);
        assert!((30.0..=70.0).contains(&f), "F_C = {f}");
    }

    let ps = PolystyreneParams::default();
    let cfg = SimConfig {
        dt: 0.01,
        t_sim: 50.0,
        seed: 4,
        stop_on_basin: None,
    };
    let traj = simulate(
        &polystyrene().initial_state(),
        &polystyrene(),
        NoiseSpec::new(0.01),
        &cfg,
    )
    .unwrap();
    for w in traj.states.windows(2) {
        let (prev, now) = (&w[0], &w[1]);
        let d_err = ((ps.x3_sp - now.x[2]) - (ps.x3_sp - prev.x[2])) / cfg.dt;
        let q = polystyrene_coolant_flow(&ps, now.x[2], now.x[4], d_err);
        assert!((0.0..=5.0).contains(&q), "q_c = {q}");
    }
}

#[test]
fn halving_dt_shows_fourth_order_convergence() {
    let model = exothermic();
    let start = model.initial_state();
    let (dt, steps) = (0.5, 100);
    let coarse = run_quiet(&model, &start, dt, steps);
    let half = run_quiet(&model, &start, dt / 2.0, steps * 2);
    let quarter = run_quiet(&model, &start, dt / 4.0, steps * 4);
    for i in 0..3 {
        let e1 = (coarse.x[i] - quarter.x[i]).abs();
        let e2 = (half.x[i] - quarter.x[i]).abs();
        assert!(e1 > 0.0 && e2 > 0.0);
        let order = (e1 / e2 - 1.0).log2();
        assert!(order > 3.0, "x[{i}]: observed order {order} (e1 {e1:e}, e2 {e2:e})");
    }
}

#[test]
fn trajectories_are_pure_functions_of_seed_and_config() {
    let cfg = SimConfig {
        dt: 0.1,
        t_sim: 300.0,
        seed: 77,
        stop_on_basin: None,
    };
    let model = exothermic();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate(&model.initial_state(), &model, NoiseSpec::new(0.02), &cfg).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a, b);
    let other = simulate(
        &model.initial_state(),
        &model,
        NoiseSpec::new(0.02),
        &SimConfig {
            seed: 78,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert_ne!(a.states, other.states);
}
