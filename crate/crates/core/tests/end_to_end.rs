use duetbench::analysis::Verdict;
use duetbench::harness::{self, emit_report, read_raw_csv, read_summary_csv, ReportFormat, HarnessError};
use duetbench::simenv::VariabilityModel;
use duetbench::{ExperimentConfig, Strategy};

fn quick(strategies: Vec<Strategy>, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        strategies,
        seed,
        repetitions: 600,
        resamples: 2_000,
        ..ExperimentConfig::default()
    }
}

#[test]
fn aa_duet_passes_near_zero() {
    let cfg = ExperimentConfig {
        regression_pct: 0.0,
        ..quick(vec![Strategy::Duet], 1)
    };
    let report = harness::run_experiment(&cfg).unwrap();
    let duet = report.strategy(Strategy::Duet).unwrap();
    assert_eq!(report.verdict, Verdict::Pass);
    assert!(duet.median_change_pct.abs() < 0.5);
    assert!(duet.ci.contains(0.0));
}

#[test]
fn five_percent_is_flagged() {
    let report = harness::run_experiment(&quick(vec![Strategy::Duet], 2)).unwrap();
    let duet = report.strategy(Strategy::Duet).unwrap();
    assert_eq!(report.verdict, Verdict::Regression);
    assert!(duet.ci.contains(5.0), "{:?}", duet.ci);
}

#[test]
fn repetitions_are_spread_over_instances() {
    let cfg = ExperimentConfig {
        repetitions: 1_500,
        model: VariabilityModel {
            cold_penalty_ms: 0.0,
            ..VariabilityModel::default()
        },
        ..quick(vec![Strategy::Duet], 3)
    };
    let report = harness::run_experiment(&cfg).unwrap();
    assert_eq!(report.strategies[0].samples.pairs_before_filter, 1_500);
    for instance in 0..4 {
        let n = report.raw.iter().filter(|m| m.instance_id == instance).count();
        assert_eq!(n, 2 * 375, "instance {instance}");
    }
}

#[test]
fn noise_free_platform_gives_zero_width_everywhere() {
    let cfg = ExperimentConfig {
        model: VariabilityModel::noise_free(),
        ..quick(Strategy::ALL.to_vec(), 4)
    };
    let (report, rows) = harness::compare_strategies(&cfg).unwrap();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert_eq!(row.width_pp, 0.0, "{:?}", row.strategy);
        assert!((row.median_change_pct - 5.0).abs() < 1e-9);
    }
    assert_eq!(report.verdict, Verdict::Regression);
}

#[test]
fn single_strategy_compare_has_one_row() {
    let (_, rows) = harness::compare_strategies(&quick(vec![Strategy::Rmit], 5)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].strategy, Strategy::Rmit);
}

#[test]
fn reruns_are_identical_apart_from_timestamps() {
    let cfg = quick(Strategy::ALL.to_vec(), 6);
    let a = harness::run_experiment(&cfg).unwrap();
    let b = harness::run_experiment(&cfg).unwrap();
    assert_eq!(a.reproducible_summary_json(), b.reproducible_summary_json());
    assert_eq!(a.raw, b.raw);
    assert_ne!(
        a.reproducible_summary_json(),
        harness::run_experiment(&quick(Strategy::ALL.to_vec(), 7)).unwrap().reproducible_summary_json()
    );
}

#[test]
fn archived_raw_measurements_reproduce_the_report() {
    let cfg = quick(Strategy::ALL.to_vec(), 8);
    let report = harness::run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path(), ReportFormat::Json).unwrap();
    let raw = read_raw_csv(&dir.path().join(harness::RAW_CSV)).unwrap();
    assert_eq!(raw, report.raw);
    let again = harness::analyze_measurements(&cfg, raw).unwrap();
    assert_eq!(again.strategies, report.strategies);
}

#[test]
fn emitted_files_agree_across_formats() {
    let cfg = ExperimentConfig {
        repetitions: 1_500,
        model: VariabilityModel {
            cold_penalty_ms: 0.0,
            ..VariabilityModel::default()
        },
        ..quick(vec![Strategy::Duet], 9)
    };
    let report = harness::run_experiment(&cfg).unwrap();
    let json_dir = tempfile::tempdir().unwrap();
    let csv_dir = tempfile::tempdir().unwrap();
    let written = emit_report(&report, json_dir.path(), ReportFormat::Json).unwrap();
    assert_eq!(written.len(), 2);
    emit_report(&report, csv_dir.path(), ReportFormat::Csv).unwrap();

    let raw = std::fs::read_to_string(json_dir.path().join(harness::RAW_CSV)).unwrap();
    assert_eq!(raw.lines().count(), 1 + 3_000);

    let parsed: duetbench::Report =
        serde_json::from_str(&std::fs::read_to_string(json_dir.path().join(harness::SUMMARY_JSON)).unwrap()).unwrap();
    let rows = read_summary_csv(&csv_dir.path().join(harness::SUMMARY_CSV)).unwrap();
    assert_eq!(rows.len(), 1);
    let json = &parsed.strategies[0];
    assert_eq!(rows[0].ci_lower_pct, json.ci.lower_pct);
    assert_eq!(rows[0].ci_upper_pct, json.ci.upper_pct);
    assert_eq!(rows[0].median_change_pct, json.median_change_pct);
    assert_eq!(rows[0].width_pp, json.ci.width_pp);
}

#[test]
fn empty_report_is_an_error() {
    let mut report = harness::run_experiment(&quick(vec![Strategy::Duet], 10)).unwrap();
    report.strategies.clear();
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        emit_report(&report, dir.path(), ReportFormat::Json),
        Err(HarnessError::EmptyReport)
    ));
    assert!(matches!(harness::analyze_measurements(&quick(vec![], 0), vec![]), Err(HarnessError::EmptyReport)));
}

#[test]
fn forced_clock_applies_to_every_strategy() {
    let cfg = ExperimentConfig {
        clock: Some(duetbench::ClockMode::WallClock),
        ..quick(Strategy::ALL.to_vec(), 11)
    };
    let report = harness::run_experiment(&cfg).unwrap();
    assert!(report.strategies.iter().all(|s| s.clock_mode == duetbench::ClockMode::WallClock));
    assert!(report.raw.iter().all(|m| m.clock_mode == duetbench::ClockMode::WallClock));
}
