use mfgz_core::config::GameConfig;
use mfgz_core::dpp::{brute_force_value, dpp_value, DppConfig, DppMode};
use mfgz_core::hamiltonian::Kind;
use mfgz_core::hji;

// Constant drift u + v, payoff x(T): the minimizer sits at u = 0 and the
// maximizer at v = 1, so both values equal x0 + T whatever the information.
const DRIFT: &str = r#"
horizon = 0.5
dim = 1
f = ["u1 + v1"]
l = "0"
m = "x1 - z1"
U = [[0.0, 1.0]]
V = [[0.0, 1.0]]
particles = 1
control_resolution = 3
time_steps = 3

[x_law]
family = "dirac"
point = [0.25]

[z_law]
family = "dirac"
point = [0.0]

[grid]
lo = [-1.0]
hi = [2.0]
points = [61]

[dpp]
points = 61
substeps = 2
"#;

fn game() -> GameConfig {
    GameConfig::from_toml_str("drift", DRIFT).unwrap()
}

#[test]
fn dynamic_programming_recovers_the_closed_form() {
    let cfg = game();
    let ens = cfg.ensemble().unwrap();
    for kind in [Kind::Lower, Kind::Upper] {
        let exact = DppConfig {
            mode: DppMode::Exact,
            ..cfg.dpp_config()
        };
        let v = dpp_value(&cfg.spec, &ens, kind, &exact).unwrap().value;
        assert!((v - 0.75).abs() <= 1e-12, "{v}");
        let brute = brute_force_value(&cfg.spec, &ens, kind, &exact).unwrap().value;
        assert_eq!(v.to_bits(), brute.to_bits());
        let adaptive = dpp_value(&cfg.spec, &ens, kind, &cfg.dpp_config()).unwrap().value;
        assert!((adaptive - 0.75).abs() <= 1e-12, "{adaptive}");
    }
}

#[test]
fn hji_is_exact_on_linear_data() {
    let cfg = game();
    let ens = cfg.ensemble().unwrap();
    let grid = cfg.hji_grid(1).unwrap();
    for kind in [Kind::Lower, Kind::Upper] {
        let sol = hji::solve(&cfg.spec, &grid, &ens.z, kind, &cfg.scheme()).unwrap();
        let v = hji::value_at_measure(&sol.field, &ens.x).unwrap();
        assert!((v - 0.75).abs() <= 1e-9, "{v}");
    }
}
