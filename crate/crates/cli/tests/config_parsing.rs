use edgeworth_cli::config::{ExperimentKind, InitialSpec};
use edgeworth_cli::{parse_config, Overrides};
use edgeworth_kinetics::ensemble::{InitialCondition, Selection};
use edgeworth_kinetics::NoiseKind;

fn issues(text: &str) -> Vec<String> {
    parse_config(text)
        .expect_err("config should be rejected")
        .issues()
        .iter()
        .map(|i| i.to_string())
        .collect()
}

#[test]
fn minimal_config_gets_defaults() {
    let cfg = parse_config("kind = \"linear\"\n").unwrap();
    assert_eq!(cfg.kind, ExperimentKind::Linear);
    assert_eq!(cfg.seed, 0);
    assert_eq!(cfg.agents, 10_000);
    assert_eq!(cfg.horizon, 1.0);
    assert_eq!(cfg.snapshot_interval, None);
    assert_eq!(cfg.rate, 1.0);
    assert_eq!(cfg.selection, Selection::Random);
    assert_eq!(cfg.precision, 17);
    assert_eq!(cfg.workers, 1);
    assert_eq!(cfg.trade.lambda(), 0.5);
    assert_eq!(cfg.trade.utility().alpha(), 0.5);
    assert_eq!(cfg.trade.noise().kind(), NoiseKind::Zero);
    assert_eq!(
        cfg.initial,
        InitialSpec::Generated(InitialCondition::Exponential {
            mean_x: 1.0,
            mean_y: 1.0
        })
    );
    assert_eq!(cfg.sweep.epsilons, vec![0.5, 0.1, 0.02]);
    assert_eq!(cfg.tail.fraction, 0.05);
    assert_eq!(cfg.metric.reference_time, 5.0);
}

#[test]
fn full_config() {
    let cfg = parse_config(
        r#"
        kind = "metric-study"
        seed = 7
        agents = 500
        horizon = 2
        snapshot_interval = 0.5
        selection = "sweep"
        precision = 6
        [trade]
        lambda = 0.3
        alpha = 0.6
        rule = "difference"
        [noise]
        kind = "uniform"
        half_width = 0.05
        [initial]
        kind = "uniform"
        x = [0, 2]
        y = [0, 1]
        [metric]
        exponent = 2
        reference_time = 10
        recenter = false
        "#,
    )
    .unwrap();
    assert_eq!(cfg.kind, ExperimentKind::MetricStudy);
    assert_eq!(cfg.selection, Selection::Sweep);
    assert_eq!(cfg.trade.noise().half_width(), 0.05);
    assert_eq!(cfg.metric.exponent, Some(2.0));
    assert!(!cfg.metric.recenter);
    assert_eq!(
        cfg.initial,
        InitialSpec::Generated(InitialCondition::Uniform {
            x: (0.0, 2.0),
            y: (0.0, 1.0)
        })
    );
}

#[test]
fn lambda_out_of_range_names_the_invariant() {
    let all = issues("kind = \"linear\"\n[trade]\nlambda = 1.5\n");
    assert_eq!(all.len(), 1);
    assert!(all[0].contains("trade.lambda"), "{all:?}");
    assert!(all[0].contains("0 < lambda <= 1"), "{all:?}");
}

#[test]
fn noise_support_bound() {
    // largest admissible half-width: min(l b, 1 - l b, l a, 1 - l a)
    let (lambda, alpha) = (0.4f64, 0.3f64);
    let beta = 1.0 - alpha;
    let bound = [
        lambda * beta,
        1.0 - lambda * beta,
        lambda * alpha,
        1.0 - lambda * alpha,
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    let text = |delta: f64| {
        format!(
            "kind = \"linear\"\n[trade]\nlambda = {lambda}\nalpha = {alpha}\n[noise]\nkind = \"uniform\"\nhalf_width = {delta}\n"
        )
    };
    assert!(parse_config(&text(0.99 * bound)).is_ok());
    let all = issues(&text(1.01 * bound));
    assert_eq!(all.len(), 1);
    assert!(all[0].starts_with("noise.half_width"), "{all:?}");
    assert!(all[0].contains("min(lambda beta, 1 - lambda beta, lambda alpha, 1 - lambda alpha)"));
}

#[test]
fn every_problem_is_reported() {
    let all = issues(
        r#"
        kind = "bogus"
        seed = -3
        horizon = -1
        extra = true
        [trade]
        lambda = 0
        alpha = 1.2
        colour = "red"
        [noise]
        kind = "cauchy"
        [tail]
        fraction = 0.5
        "#,
    );
    let expect = [
        "kind:",
        "seed:",
        "horizon:",
        "extra: unknown key",
        "trade.lambda:",
        "trade.alpha:",
        "trade.colour: unknown key",
        "noise.kind:",
        "tail.fraction:",
    ];
    for e in expect {
        assert!(
            all.iter().any(|i| i.starts_with(e)),
            "missing {e} in {all:?}"
        );
    }
}

#[test]
fn syntax_errors_carry_position() {
    let err = parse_config("kind = \"linear\"\nhorizon = = 2\n").unwrap_err();
    let issue = &err.issues()[0];
    assert_eq!(issue.position.map(|p| p.0), Some(2));
    assert!(issue.to_string().starts_with("line 2, column"));
}

#[test]
fn type_mismatches() {
    let all = issues("kind = \"linear\"\nagents = \"many\"\ntrade = 3\n");
    assert!(all
        .iter()
        .any(|i| i.starts_with("agents: expected an integer")));
    assert!(all.iter().any(|i| i.starts_with("trade: expected a table")));
}

#[test]
fn missing_kind() {
    let all = issues("seed = 1\n");
    assert!(all[0].starts_with("kind: required"));
}

#[test]
fn quasi_invariant_scales_are_checked() {
    let base = "kind = \"quasi-invariant-sweep\"\n[trade]\nlambda = 0.5\n[noise]\nkind = \"uniform\"\nhalf_width = 0.03\n";
    assert!(parse_config(base).is_ok());
    let bad = format!("{base}[sweep]\nepsilons = [0.5, 0]\n");
    assert!(issues(&bad).iter().any(|i| i.starts_with("sweep.epsilons")));
    // noise shrinks like sqrt(eps) but lambda like eps
    let bad = format!("{base}[sweep]\nepsilons = [0.5, 0.001]\n");
    let all = issues(&bad);
    assert_eq!(all.len(), 1);
    assert!(
        all[0].starts_with("sweep.epsilons") && all[0].contains("inadmissible"),
        "{all:?}"
    );
}

#[test]
fn particle_initial_data_needs_a_particle_kind() {
    let all = issues("kind = \"linear\"\n[initial]\nkind = \"vw-point\"\n");
    assert!(all[0].starts_with("initial.kind"));
    let all = issues("kind = \"fokker-planck\"\n[initial]\nkind = \"vw-point\"\nv = 1\nw = 2\n");
    assert!(all[0].contains("|w| <= v"));
    assert!(parse_config("kind = \"fokker-planck\"\n[initial]\nkind = \"vw-point\"\n").is_ok());
}

#[test]
fn tail_study_needs_enough_particles() {
    let all = issues("kind = \"tail-study\"\nagents = 10\n");
    assert!(all[0].starts_with("agents:"));
}

#[test]
fn overrides_take_precedence() {
    let cfg = parse_config("kind = \"linear\"\nseed = 4\nout = \"a\"\n").unwrap();
    let cfg = Overrides {
        seed: Some(9),
        out: None,
        workers: Some(0),
    }
    .apply(cfg);
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.out, std::path::PathBuf::from("a"));
    assert_eq!(cfg.workers, 1);
}

#[test]
fn canonical_form_ignores_output_location() {
    let a = parse_config("kind = \"linear\"\nout = \"x\"\nworkers = 3\n").unwrap();
    let b = parse_config("kind = \"linear\"\nout = \"y\"\n").unwrap();
    let c = parse_config("kind = \"linear\"\nseed = 1\n").unwrap();
    assert_eq!(a.canonical(), b.canonical());
    assert_ne!(a.canonical(), c.canonical());
}

#[test]
fn shipped_configs_are_valid() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            edgeworth_cli::load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert_eq!(seen, 6);
}
