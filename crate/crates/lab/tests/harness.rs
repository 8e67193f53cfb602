use mmimo_core::combining::Scheme;
use mmimo_core::engine::Reported;
use mmimo_lab::config::ExperimentSpec;
use mmimo_lab::harness::{cdf_experiment, run_single, run_sweep, summarize, with_threads};
use mmimo_lab::{cov, output, LabError};

const SMALL: &str = r#"
scenario_preset = "running-example"
drops = 2
blocks = 15
seed = 11
schemes = ["mmmse", "smmse", "zf", "mr"]
dl = true

[scenario]
L = 4
K = 2
M = 12
area_m = 500.0
"#;

fn small() -> ExperimentSpec {
    ExperimentSpec::from_toml(SMALL).unwrap()
}

fn csv_bytes(spec: &ExperimentSpec, threads: usize) -> Vec<u8> {
    let rows = with_threads(Some(threads), || run_sweep(spec)).unwrap().unwrap();
    let mut buf = Vec::new();
    output::write_se(&mut buf, &rows).unwrap();
    buf
}

#[test]
fn output_is_byte_identical_across_thread_counts() {
    let mut spec = small();
    spec.m = vec![6, 12];
    let one = csv_bytes(&spec, 1);
    let three = csv_bytes(&spec, 3);
    assert_eq!(one, three);
    let text = String::from_utf8(one).unwrap();
    assert!(text.starts_with("# mmimo se-report v1\nscenario,M,K,L,f,scheme,"));
    // 2 points × 2 drops × 4 schemes × (UL + DL) × 8 UEs.
    assert_eq!(text.lines().count(), 2 + 2 * 2 * 4 * 2 * 8);
}

#[test]
fn invalid_triple_is_rejected_before_running() {
    let text = format!("{SMALL}\n").replace("schemes = [\"mmmse\", \"smmse\", \"zf\", \"mr\"]", "schemes = [\"obe\"]\nestimators = [\"mmse\"]");
    match ExperimentSpec::from_toml(&text) {
        Err(e @ LabError::Core(_)) => assert_eq!(e.exit_code(), 2, "{e}"),
        other => panic!("expected a configuration error, got {other:?}"),
    }
    let bad_f = SMALL.replace("seed = 11", "seed = 11\nf = [1, 200]");
    assert_eq!(ExperimentSpec::from_toml(&bad_f).unwrap_err().exit_code(), 2);
}

#[test]
fn single_drop_cdf_has_one_step_per_ue() {
    let mut spec = small();
    spec.drops = 1;
    let curves = cdf_experiment(&spec, false).unwrap();
    assert_eq!(curves.len(), 4 * 2);
    for c in &curves {
        assert_eq!(c.se.len(), spec.scenario.l * spec.scenario.k);
        assert!(c.se.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(c.at(f64::INFINITY), 1.0);
        assert_eq!(c.at(c.se[0] - 1.0), 0.0);
    }
}

#[test]
fn correlation_helps_m_mmse_and_hurts_mr() {
    let spec = ExperimentSpec::from_toml(
        r#"
scenario_preset = "running-example"
drops = 3
blocks = 40
seed = 4
schemes = ["mmmse", "mr"]
[scenario]
L = 4
K = 4
M = 32
area_m = 500.0
"#,
    )
    .unwrap();
    let curves = cdf_experiment(&spec, true).unwrap();
    let mean = |fading: &str, s: Scheme| {
        let c = curves.iter().find(|c| c.fading == fading && c.evaluation.scheme == s && c.bound == Reported::Uatf).unwrap();
        c.se.iter().sum::<f64>() / c.se.len() as f64
    };
    assert!(mean("correlated", Scheme::Mmmse) > mean("uncorrelated", Scheme::Mmmse));
    assert!(mean("correlated", Scheme::Mr) < mean("uncorrelated", Scheme::Mr));
}

#[test]
fn summary_orders_schemes() {
    let rows = run_single(&small()).unwrap();
    let summary = summarize(&rows);
    let ul = |s: Scheme| summary.iter().find(|r| r.evaluation.scheme == s && r.bound == Reported::Uatf).unwrap().sum_se_per_cell;
    assert!(ul(Scheme::Mmmse) >= ul(Scheme::Smmse));
    assert!(ul(Scheme::Smmse) >= ul(Scheme::Mr));
    let dl = summary.iter().filter(|r| r.bound == Reported::Hardening).count();
    assert_eq!(dl, 4);
}

#[test]
fn sample_nmse_falls_with_more_observations() {
    let spec = ExperimentSpec::from_toml(
        r#"
preset = "acq-nmse"
drops = 1
[nmse]
ms = [16]
ns = [10, 100, 1000]
"#,
    )
    .unwrap();
    let rows = cov::nmse_experiment(&spec, spec.nmse.as_ref().unwrap()).unwrap();
    let sample: Vec<f64> = rows.iter().filter(|r| r.method == "sample").map(|r| r.nmse).collect();
    assert_eq!(sample.len(), 3);
    assert!(sample[0] > sample[1] && sample[1] > sample[2], "{sample:?}");
    for n in [10, 100, 1000] {
        let of = |m: &str| rows.iter().find(|r| r.method == m && r.n == n).unwrap().nmse;
        assert!(of("regularized") <= of("sample") + 1e-12);
    }
}
