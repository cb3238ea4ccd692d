use std::io::BufReader;

use telegraph_core::analytic::coherence_schedule;
use telegraph_core::curve::{DecayCurve, Engine};
use telegraph_core::lindblad::{build_liouvillian, initial_density, lindblad_dd, ElectronSpin, RegisterHamiltonian};
use telegraph_core::sequence::{expand, parse, validate, PulseSchedule};
use telegraph_core::stochastic::{engineered_traces, mc_coherence, TraceEnsemble};
use telegraph_core::{make_params, Drive, InitState, Level};

const MINUS: InitState = InitState::Definite(Level::Minus);

fn grid(schedule: &PulseSchedule, n: usize) -> Vec<f64> {
    let end = schedule.total_duration();
    (0..=n).map(|i| end * i as f64 / n as f64).collect()
}

#[test]
fn parsed_sequence_agrees_across_engines() {
    let p = make_params(3, 1.5, 2.16).unwrap();
    let s = expand(&parse("KDDXY16").unwrap(), 0.25, 0.0, Drive::Dq, 2).unwrap();
    let times = grid(&s, 40);

    let analytic = DecayCurve::new(Engine::Analytic, times.clone(), coherence_schedule(&p, MINUS, &s, &times).unwrap()).unwrap();
    let l = build_liouvillian(&RegisterHamiltonian::from_params(&p), p.t1()).unwrap();
    let rho = initial_density(ElectronSpin::One, MINUS).unwrap();
    let lindblad = lindblad_dd(&l, &rho, &s, &times).unwrap();
    assert!(analytic.max_abs_deviation(&lindblad).unwrap() < 1e-6);

    let mc = mc_coherence(&p, MINUS, &s, &times, 4000, 11).unwrap();
    for (k, z) in mc.mean.iter().enumerate() {
        let d = (z - analytic.values[k]).norm();
        assert!(d <= 4.5 * mc.std_err[k].max(1e-3), "t = {}: {d}", times[k]);
    }
}

#[test]
fn schedule_text_survives_round_trip() {
    let ast = parse("KDDXY16").unwrap();
    let again = parse(&ast.to_string()).unwrap();
    assert!(ast.same_shape(&again));
    let s = expand(&ast, 0.2, 0.044, Drive::Qubit, 3).unwrap();
    let back = PulseSchedule::from_text(&s.to_text()).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.pulse_count(), 240);
    assert!(!validate(&back, Some(2.16)).has_errors());
}

#[test]
fn trace_ensemble_file_round_trip() {
    let s = PulseSchedule::cpmg(200, 0.2, Drive::Dq, 0.044).unwrap();
    let e = engineered_traces(10.0, 60, 40.0, 0.044, Some(&s), 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ensemble.jsonl");
    e.write_jsonl(std::fs::File::create(&path).unwrap()).unwrap();
    let loaded = TraceEnsemble::read_jsonl(BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(loaded.digest(), e.digest());
    assert_eq!(loaded.len(), 60);
    let times: Vec<f64> = (0..=20).map(|i| i as f64 * 2.0).collect();
    assert_eq!(loaded.population_difference(&times), e.population_difference(&times));
}
