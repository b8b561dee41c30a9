use fracmort::fgn::{generate_fgn, HurstIndex};
use fracmort::fou::{fou_variance, simulate_fou, FouParams};
use fracmort::hurst::{self, compare_sliding, HurstMethod};
use fracmort::qgv::{classical_filter, daubechies_filter, estimate_h_sigma};
use fracmort::special::gamma;

fn h(v: f64) -> HurstIndex {
    HurstIndex::new(v).unwrap()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[test]
fn estimates_increase_with_persistence() {
    for method in HurstMethod::ALL {
        let means: Vec<f64> = [0.55, 0.65, 0.75]
            .iter()
            .map(|&hv| {
                let e: Vec<f64> = (0..30)
                    .map(|s| {
                        let x = generate_fgn(h(hv), 1 << 13, 1.0, 300 + s)
                            .unwrap()
                            .increments;
                        hurst::estimate(method, &x).unwrap().value
                    })
                    .collect();
                mean(&e)
            })
            .collect();
        assert!(
            means[0] < means[1] && means[1] < means[2],
            "{}: {means:?}",
            method.name()
        );
    }
}

#[test]
fn whittle_varies_more_across_windows_than_rs() {
    let x = generate_fgn(h(0.7), 1 << 14, 1.0, 17).unwrap().increments;
    let rows = compare_sliding(&x, 512, 256).unwrap();
    let rs: Vec<f64> = rows.iter().map(|r| r.rs_analysis.unwrap()).collect();
    let lw: Vec<f64> = rows.iter().map(|r| r.local_whittle.unwrap()).collect();
    assert!(
        sd(&lw) > sd(&rs),
        "whittle sd {} vs rs sd {}",
        sd(&lw),
        sd(&rs)
    );
}

#[test]
fn brownian_fou_variance_at_two() {
    let p = FouParams::new(1.0, 1.0, h(0.5), 0.01).unwrap();
    let sq: Vec<f64> = (0..200)
        .map(|s| {
            let y = simulate_fou(p, 10_000, s).unwrap().values;
            y[200] * y[200]
        })
        .collect();
    let target = 0.5 * (1.0 - (-4.0f64).exp());
    assert!((target - 0.4908).abs() < 1e-4);
    let se = sd(&sq) / (sq.len() as f64).sqrt();
    assert!(
        (mean(&sq) - target).abs() < 3.0 * se,
        "{} vs {target} (se {se})",
        mean(&sq)
    );
}

#[test]
fn simulator_matches_variance_formula() {
    for hv in [0.5, 0.6, 0.7] {
        let p = FouParams::new(0.8, 1.5, h(hv), 0.02).unwrap();
        let paths: Vec<Vec<f64>> = (0..400)
            .map(|s| simulate_fou(p, 250, 7_000 + s).unwrap().values)
            .collect();
        for k in [25, 100, 250] {
            let sq: Vec<f64> = paths.iter().map(|y| y[k] * y[k]).collect();
            let v = fou_variance(&p, k as f64 * 0.02).unwrap();
            let se = sd(&sq) / (sq.len() as f64).sqrt();
            assert!(
                (mean(&sq) - v).abs() < 3.0 * se,
                "H={hv} k={k}: {} vs {v}",
                mean(&sq)
            );
        }
    }
}

#[test]
fn long_run_second_moment_reaches_stationary_limit() {
    let p = FouParams::new(2.0, 0.7, h(0.65), 0.05).unwrap();
    let limit = 0.49 * gamma(2.3) / (2.0 * 2.0f64.powf(1.3));
    assert!((p.stationary_variance() - limit).abs() < 1e-14);
    let sq: Vec<f64> = (0..400)
        .map(|s| {
            let y = simulate_fou(p, 400, 90 + s).unwrap().values;
            y[400] * y[400]
        })
        .collect();
    let se = sd(&sq) / (sq.len() as f64).sqrt();
    assert!(
        (mean(&sq) - limit).abs() < 3.0 * se,
        "{} vs {limit}",
        mean(&sq)
    );
}

#[test]
fn refining_the_mesh_keeps_estimates() {
    let run = |mesh: f64, n: usize| {
        let p = FouParams::new(1.0, 1.0, h(0.65), mesh).unwrap();
        let (mut hs, mut ss) = (Vec::new(), Vec::new());
        for s in 0..30 {
            let y = simulate_fou(p, n, 500 + s).unwrap().values;
            let e = estimate_h_sigma(&y, &classical_filter(2).unwrap(), mesh).unwrap();
            hs.push(e.h_hat);
            ss.push(e.sigma_hat);
        }
        (mean(&hs), mean(&ss))
    };
    let (h1, s1) = run(0.01, 2000);
    let (h2, s2) = run(0.005, 4000);
    assert!((h1 - h2).abs() < 0.02, "{h1} vs {h2}");
    assert!((s1 - s2).abs() < 0.05, "{s1} vs {s2}");
    assert!((h2 - 0.65).abs() < 0.03 && (s2 - 1.0).abs() < 0.08);
}

#[test]
fn daubechies_filter_recovers_fbm_parameters() {
    let x = generate_fgn(h(0.6), 1 << 15, 1.0, 8).unwrap().cumulative;
    let scaled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let e = estimate_h_sigma(&scaled, &daubechies_filter(), 1.0).unwrap();
    assert!((e.h_hat - 0.6).abs() < 0.02, "{}", e.h_hat);
    assert!((e.sigma_hat - 2.0).abs() < 0.1, "{}", e.sigma_hat);
}
