use edgeworth_kinetics::analysis::{
    contraction_audit, contraction_constant, decay_bound, ds_distance, market_scaled, recentered,
    FourierGrid,
};
use edgeworth_kinetics::ensemble::{run, InitialCondition, Mode, SimConfig};
use edgeworth_kinetics::rng::stream;
use edgeworth_kinetics::{AgentState, NoiseSpec, TradeParams, UtilityParams};
use rand::Rng;
use rand_distr::{Distribution, Exp1};

#[test]
fn distance_between_equal_mean_runs_respects_the_gronwall_bound() {
    let (lambda, alpha) = (0.4, 0.55);
    let tp = TradeParams::new(
        lambda,
        UtilityParams::from_alpha(alpha).unwrap(),
        NoiseSpec::uniform(0.05).unwrap(),
    )
    .unwrap();
    assert!(
        contraction_audit(&tp, 2.0, 50_000, &mut stream(201, 0))
            .unwrap()
            .contractive
    );

    let n = 4_000;
    let mut rng = stream(201, 1);
    let first: Vec<AgentState> = (0..n)
        .map(|_| AgentState::new(2.0 * rng.random::<f64>(), rng.random::<f64>()).unwrap())
        .collect();
    let mut second: Vec<AgentState> = (0..n)
        .map(|_| AgentState::new(Exp1.sample(&mut rng), Exp1.sample(&mut rng)).unwrap())
        .collect();
    let mean = |v: &[AgentState]| {
        let s = v
            .iter()
            .fold((0.0, 0.0), |acc, a| (acc.0 + a.x, acc.1 + a.y));
        (s.0 / n as f64, s.1 / n as f64)
    };
    let (m1, m2) = (mean(&first), mean(&second));
    for a in &mut second {
        a.x *= m1.0 / m2.0;
        a.y *= m1.1 / m2.1;
    }

    let trajectory = |agents: Vec<AgentState>, seed: u64| {
        let mut sc = SimConfig::new(n, tp, Mode::Linear, InitialCondition::Agents(agents));
        sc.horizon = 5.0;
        sc.snapshot_interval = Some(0.5);
        sc.seed = seed;
        run(&sc).unwrap()
    };
    let (ta, tb) = (trajectory(first, 202), trajectory(second, 203));
    let means = ta.reference_means;
    let target = (means.1 * means.0, means.0 * means.1);
    let grid = FourierGrid::diagonal(2.0, lambda * (1.0 - alpha), lambda * alpha).unwrap();
    let c_s = contraction_constant(&tp, &grid, 2_000, &mut stream(201, 2)).unwrap();

    let distance = |i: usize| {
        let a = recentered(&market_scaled(&ta.snapshots[i].agents, means), target).unwrap();
        let b = recentered(&market_scaled(&tb.snapshots[i].agents, means), target).unwrap();
        ds_distance(&a, &b, &grid).unwrap().distance
    };
    let d0 = distance(0);
    assert!(d0 > 0.0);
    for i in 1..ta.snapshots.len() {
        let t = ta.snapshots[i].time;
        assert!(distance(i) <= decay_bound(d0, c_s, t) * 1.1, "t = {t}");
    }
}
