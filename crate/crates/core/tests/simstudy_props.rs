mod common;

use common::{dense_field_precision, dense_inverse};
use runoff_lgm::model::Support;
use runoff_lgm::simstudy::{
    sim_mesh_settings, simulate_dataset, synthetic_layout, systematic_bias_probability, table3, ClimateRecord, SimScenario,
};

#[test]
fn site_variance_matches_dense_oracle() {
    let layout = synthetic_layout(&sim_mesh_settings()).unwrap();
    let g = &layout.geometry;
    let mut scenario = table3()[2].clone();
    scenario.climates = 200;
    let v = scenario.theta().natural();
    let cov_c = dense_inverse(&dense_field_precision(g.fem(), v[0], v[1]));
    let cov_x = dense_inverse(&dense_field_precision(g.fem(), v[2], v[3]));
    let m = g.m();
    let quad = |cov: &nalgebra::DMatrix<f64>, a: &[f64]| -> f64 {
        (0..m).map(|i| a[i] * (0..m).map(|j| cov[(i, j)] * a[j]).sum::<f64>()).sum()
    };
    let sites = [0usize, 6, 11];
    let oracle: Vec<f64> = sites
        .iter()
        .map(|&s| {
            let a = g.row(Support::Site(s)).to_dense(m);
            1.0 / scenario.tau_beta + quad(&cov_c, &a) + quad(&cov_x, &a)
        })
        .collect();

    let mut sums = vec![0.0; sites.len()];
    let mut n = 0usize;
    for climate in 0..scenario.climates {
        let data = simulate_dataset(g, &scenario, climate).unwrap();
        for (o, t) in data.observed.observations().iter().zip(&data.truth) {
            if let Support::Site(s) = o.support {
                if let Some(k) = sites.iter().position(|&x| x == s) {
                    sums[k] += (t - scenario.beta_c).powi(2);
                    if k == 0 {
                        n += 1;
                    }
                }
            }
        }
    }
    for (k, &s) in sites.iter().enumerate() {
        let emp = sums[k] / n as f64;
        println!("site {s}: empirical {emp:.4}, oracle {:.4}", oracle[k]);
        assert!((emp / oracle[k] - 1.0).abs() < 0.15, "site {s}: {emp} vs {}", oracle[k]);
    }
}

#[test]
fn degenerate_scenario_simulates_the_intercept() {
    let layout = synthetic_layout(&sim_mesh_settings()).unwrap();
    let mut s = SimScenario::new(99, 1e-9, 1e-9, 20.0, 20.0);
    s.tau_beta = 1e18;
    s.point_sd_fraction = 0.0;
    s.areal_sd_fraction = 0.0;
    let data = simulate_dataset(&layout.geometry, &s, 0).unwrap();
    for o in data.observed.observations().iter().chain(data.future.observations()) {
        assert!((o.value - 2.0).abs() < 1e-6, "{}", o.value);
    }
    assert_eq!(data.future.len(), 17 * 5);
}

#[test]
fn same_seed_same_data() {
    let layout = synthetic_layout(&sim_mesh_settings()).unwrap();
    let s = &table3()[4];
    let a = simulate_dataset(&layout.geometry, s, 3).unwrap();
    let b = simulate_dataset(&layout.geometry, s, 3).unwrap();
    assert_eq!(a.observed.observations(), b.observed.observations());
    assert_eq!(a.future_truth, b.future_truth);
    let c = simulate_dataset(&layout.geometry, s, 4).unwrap();
    assert_ne!(a.truth, c.truth);
    let mut other = s.clone();
    other.seed = 2;
    assert_ne!(simulate_dataset(&layout.geometry, &other, 3).unwrap().truth, a.truth);
}

fn record(values: Vec<f64>, medians: Vec<f64>) -> ClimateRecord {
    let n = values.len();
    ClimateRecord {
        climate: 0,
        target: "C1".into(),
        gauged_years: vec![],
        values,
        medians,
        lo: vec![0.0; n],
        hi: vec![5.0; n],
        future_rmse: 0.0,
        theta_map: [1.0; 7],
    }
}

#[test]
fn bias_probability_examples() {
    let below = record(vec![1.0, 1.5, 1.9], vec![2.0; 3]);
    assert!(below.systematic());
    assert_eq!(below.covered(), 3);
    assert_eq!(systematic_bias_probability(&[below.clone(), below.clone()]).unwrap(), 1.0);
    let mixed = record(vec![1.0, 2.5], vec![2.0; 2]);
    assert!(!mixed.systematic());
    assert_eq!(systematic_bias_probability(&[below, mixed.clone()]).unwrap(), 0.5);
    assert!(systematic_bias_probability(&[]).is_err());
    assert!(systematic_bias_probability(&[record(vec![1.0], vec![])]).is_err());
}

#[test]
fn wide_extensions_leave_no_isolated_vertices() {
    use runoff_lgm::geometry::MeshSettings;
    for (ext, outer) in [(30.0, 12.0), (60.0, 15.0), (100.0, 20.0), (150.0, 25.0)] {
        let layout = synthetic_layout(&MeshSettings::new(5.0).with_outer_edge(outer).with_extension(ext)).unwrap();
        assert!(layout.geometry.fem().c.iter().all(|&c| c > 0.0));
    }
}

#[test]
fn true_theta_coverage_is_nominal() {
    use runoff_lgm::simstudy::{run_scenario, SimOptions};
    let layout = synthetic_layout(&sim_mesh_settings()).unwrap();
    let opts = SimOptions { fixed_theta: true, ..SimOptions::default() };
    for set in [0usize, 2] {
        let mut s = table3()[set].clone();
        // years within a climate share the climatic error, so 500 events from
        // 25 climates are too few for a stable ±0.03 band
        s.climates = 150;
        let res = run_scenario(&layout, &s, 0, &opts).unwrap();
        let events: usize = res.records.iter().map(|r| r.values.len()).sum();
        assert!(events >= 500);
        println!("set {}: coverage {:.3} over {events} events", set + 1, res.coverage);
        assert!((res.coverage - 0.95).abs() <= 0.03, "set {}: {}", set + 1, res.coverage);
    }
}
