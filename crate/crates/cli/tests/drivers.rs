//! Driver-level integration tests: cycle-study file outputs and the
//! qualitative degradation ordering.

use cellrom::degradation::{run_cycle_study, DegradationSchedule, DegradationTarget};
use cellrom::ParameterPoint;
use cellrom_cli::drivers::{fom_cycle_runner, run_cycle_study_driver};
use cellrom_cli::spec::RunSpec;

fn desk_spec(dir: &str) -> RunSpec {
    RunSpec {
        n_per_region: 8,
        n_micro: 6,
        out_dir: std::env::temp_dir().join(dir),
        ..RunSpec::default()
    }
}

/// Faster and deeper parameter decay loses capacity faster: capacity
/// curves are ordered across the end fraction at every sampled cycle.
#[test]
fn capacity_curves_order_by_end_fraction() {
    let spec = desk_spec("cellrom_drivers_order");
    let mesh = spec.mesh().unwrap();
    let base = ParameterPoint::default();
    let cycles = [0usize, 5, 10];
    let mut curves = Vec::new();
    for beta in [0.1, 0.5, 0.9] {
        let schedule =
            DegradationSchedule::new(0.5, beta, 10, false, DegradationTarget::Both).unwrap();
        let study = run_cycle_study(
            &schedule,
            &base,
            &cycles,
            fom_cycle_runner(&spec, &mesh, false),
        )
        .unwrap();
        assert!(study.complete);
        assert!(study.capacity_monotone_nonincreasing(1e-9));
        curves.push(
            study
                .records
                .iter()
                .map(|r| r.soc_at_emin.unwrap())
                .collect::<Vec<f64>>(),
        );
    }
    // cycle 0 is the unaged cell for every end fraction
    assert!((curves[0][0] - curves[2][0]).abs() < 1e-9);
    // beyond that, smaller end fractions sit strictly below
    for t in 1..cycles.len() {
        assert!(
            curves[0][t] < curves[1][t] && curves[1][t] < curves[2][t],
            "ordering violated at sample {t}: {:?}",
            curves.iter().map(|c| c[t]).collect::<Vec<_>>()
        );
    }
}

/// The cycle-study driver writes both the timed study (full schema) and
/// the byte-reproducible capacity file.
#[test]
fn cycle_study_driver_exports_both_files() {
    let spec = desk_spec("cellrom_drivers_files");
    let schedule =
        DegradationSchedule::new(0.5, 0.6, 4, false, DegradationTarget::ReactionRate).unwrap();
    let base = ParameterPoint::default();
    let study = run_cycle_study_driver(&spec, &schedule, &base, &[0, 2, 4], None, "study")
        .unwrap();
    assert_eq!(study.records.len(), 3);
    assert_eq!(study.runner, "fom");
    let capacity = std::fs::read_to_string(spec.out_path("study_capacity.csv")).unwrap();
    assert!(capacity.starts_with("n,d_value,l_value,c_rate,soc_at_emin\n"));
    assert_eq!(capacity.lines().count(), 4);
    let timed = std::fs::read_to_string(spec.out_path("study_cycles_timed.csv")).unwrap();
    assert!(timed.starts_with("n,d_value,l_value,c_rate,soc_at_emin,wall_seconds\n"));
    // only the reaction rate degrades in this schedule
    let last = capacity.lines().last().unwrap();
    let fields: Vec<&str> = last.split(',').collect();
    let d: f64 = fields[1].parse().unwrap();
    let l: f64 = fields[2].parse().unwrap();
    assert_eq!(d, 0.5);
    assert!((l - 0.3).abs() < 1e-12);
}
