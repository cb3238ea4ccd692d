use std::fmt::Write as _;

use super::ast::{ItemKind, Macro, Phase, SequenceAst};
use crate::error::{Error, Result};
use crate::model::{Drive, TWO_PI};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pulse {
    /// Phase in radians, in `[0, 2π)`.
    pub phase: f64,
    pub target: Drive,
    /// Pulse duration in microseconds. Engines treat pulses as instantaneous
    /// at `center`; the width only matters for overlap checks.
    pub width: f64,
    pub center: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    Delay(f64),
    Pulse(Pulse),
}

/// Flat timed list of delays and π pulses. Time advances only through
/// delays; a pulse sits at the cumulative delay preceding it.
#[derive(Debug, Clone)]
pub struct PulseSchedule {
    events: Vec<Event>,
    total: f64,
    cycle_len: usize,
}

/// Equality is on the timed events; the cycle annotation is not compared.
impl PartialEq for PulseSchedule {
    fn eq(&self, other: &Self) -> bool {
        self.events == other.events && self.total == other.total
    }
}

/// Raw event before centers are assigned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventSpec {
    Delay(f64),
    Pulse { phase: f64, target: Drive, width: f64 },
}

impl PulseSchedule {
    /// Build from raw events. Adjacent delays are merged and zero delays
    /// dropped. Only non-finite or negative values are rejected here; timing
    /// conflicts are reported by [`validate`].
    pub fn from_events(specs: &[EventSpec]) -> Result<Self> {
        let mut events: Vec<Event> = Vec::with_capacity(specs.len());
        for spec in specs {
            match *spec {
                EventSpec::Delay(d) => {
                    if !(d >= 0.0) || !d.is_finite() {
                        return Err(Error::InvalidParams(format!("delay must be finite and >= 0, got {d}")));
                    }
                    if d == 0.0 {
                        continue;
                    }
                    if let Some(Event::Delay(prev)) = events.last_mut() {
                        *prev += d;
                    } else {
                        events.push(Event::Delay(d));
                    }
                }
                EventSpec::Pulse { phase, target, width } => {
                    if !phase.is_finite() {
                        return Err(Error::InvalidParams("pulse phase must be finite".into()));
                    }
                    if !(width >= 0.0) || !width.is_finite() {
                        return Err(Error::InvalidParams(format!("pulse width must be finite and >= 0, got {width}")));
                    }
                    events.push(Event::Pulse(Pulse {
                        phase: phase.rem_euclid(TWO_PI),
                        target,
                        width,
                        center: 0.0,
                    }));
                }
            }
        }
        // Centers are assigned from the merged delays so that a schedule
        // rebuilt from its own text form is bit-identical.
        let mut total = 0.0;
        for e in &mut events {
            match e {
                Event::Delay(d) => total += *d,
                Event::Pulse(p) => p.center = total,
            }
        }
        let cycle_len = events.len();
        Ok(Self { events, total, cycle_len })
    }

    /// Plain free evolution.
    pub fn free(duration: f64) -> Result<Self> {
        Self::from_events(&[EventSpec::Delay(duration)])
    }

    /// CPMG train: `τ/2 - π - τ - π - ... - π - τ/2` with `n` pulses.
    pub fn cpmg(n: usize, tau: f64, target: Drive, width: f64) -> Result<Self> {
        let mut specs = Vec::with_capacity(2 * n + 1);
        specs.push(EventSpec::Delay(tau / 2.0));
        for i in 0..n {
            specs.push(EventSpec::Pulse { phase: 0.0, target, width });
            specs.push(EventSpec::Delay(if i + 1 == n { tau / 2.0 } else { tau }));
        }
        if n == 0 {
            specs.push(EventSpec::Delay(tau / 2.0));
        }
        let mut s = Self::from_events(&specs)?;
        s.cycle_len = 2;
        Ok(s)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn total_duration(&self) -> f64 {
        self.total
    }

    /// Number of events in one repeating unit.
    pub fn cycle_len(&self) -> usize {
        self.cycle_len
    }

    pub fn pulses(&self) -> impl Iterator<Item = &Pulse> {
        self.events.iter().filter_map(|e| match e {
            Event::Pulse(p) => Some(p),
            Event::Delay(_) => None,
        })
    }

    pub fn pulse_count(&self) -> usize {
        self.pulses().count()
    }

    pub fn delays(&self) -> Vec<f64> {
        self.events
            .iter()
            .filter_map(|e| match e {
                Event::Delay(d) => Some(*d),
                Event::Pulse(_) => None,
            })
            .collect()
    }

    /// Same timing with every pulse retargeted.
    pub fn with_target(&self, target: Drive) -> Self {
        let mut s = self.clone();
        for e in &mut s.events {
            if let Event::Pulse(p) = e {
                p.target = target;
            }
        }
        s
    }

    /// Same timing with every pulse phase replaced.
    pub fn map_phases(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let mut s = self.clone();
        let mut i = 0;
        for e in &mut s.events {
            if let Event::Pulse(p) = e {
                p.phase = f(i, p.phase).rem_euclid(TWO_PI);
                i += 1;
            }
        }
        s
    }

    /// One event per line: `D <us>` or `P <phase_rad> <target> <width_us>`.
    /// Numbers use the shortest representation that round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            match e {
                Event::Delay(d) => writeln!(out, "D {d}").unwrap(),
                Event::Pulse(p) => writeln!(out, "P {} {} {}", p.phase, p.target, p.width).unwrap(),
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut specs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let bad = |message: String| Error::CorruptRecord { line: line_no, message };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("malformed number '{s}'")));
            match fields.as_slice() {
                ["D", d] => specs.push(EventSpec::Delay(num(d)?)),
                ["P", phase, target, width] => specs.push(EventSpec::Pulse {
                    phase: num(phase)?,
                    target: target.parse().map_err(|e: Error| bad(e.to_string()))?,
                    width: num(width)?,
                }),
                _ => return Err(bad(format!("unrecognised event '{line}'"))),
            }
        }
        Self::from_events(&specs)
    }
}

fn expand_kdd(phi: Phase, out: &mut Vec<Raw>) {
    let pulses = [
        Phase::Sixths(1).add(phi),
        phi,
        Phase::Sixths(3).add(phi),
        phi,
        Phase::Sixths(1).add(phi),
    ];
    out.push(Raw::HalfTau);
    for (i, p) in pulses.iter().enumerate() {
        out.push(Raw::Pulse(*p));
        out.push(if i == 4 { Raw::HalfTau } else { Raw::Tau });
    }
}

#[derive(Debug, Clone, Copy)]
enum Raw {
    Tau,
    HalfTau,
    Delay(f64),
    Pulse(Phase),
}

fn expand_item(kind: &ItemKind, out: &mut Vec<Raw>) {
    match kind {
        ItemKind::Tau => out.push(Raw::Tau),
        ItemKind::HalfTau => out.push(Raw::HalfTau),
        ItemKind::Duration(d) => out.push(Raw::Delay(*d)),
        ItemKind::Pulse(p) => out.push(Raw::Pulse(*p)),
        ItemKind::Macro(Macro::Cpmg { n, phase }) => {
            out.push(Raw::HalfTau);
            for i in 0..*n {
                out.push(Raw::Pulse(*phase));
                out.push(if i + 1 == *n { Raw::HalfTau } else { Raw::Tau });
            }
            if *n == 0 {
                out.push(Raw::HalfTau);
            }
        }
        ItemKind::Macro(Macro::Kdd(phi)) => expand_kdd(*phi, out),
        ItemKind::Macro(Macro::KddXy16) => {
            let (x, y) = (Phase::Sixths(0), Phase::Sixths(3));
            let half = [x, y, x, y, y, x, y, x];
            for shift in [Phase::Sixths(0), Phase::Sixths(6)] {
                for p in half {
                    expand_kdd(p.add(shift), out);
                }
            }
        }
    }
}

/// Flatten a parsed sequence into a timed schedule.
///
/// `tau` is the inter-pulse spacing used for `tau` items and macros, and the
/// whole sequence is repeated `repeats` times. Delays meeting at item and
/// repeat boundaries are merged, so concatenated blocks keep uniform spacing.
pub fn expand(ast: &SequenceAst, tau: f64, pulse_width: f64, target: Drive, repeats: usize) -> Result<PulseSchedule> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidParams(format!("tau must be positive, got {tau}")));
    }
    if !(pulse_width >= 0.0) || !pulse_width.is_finite() {
        return Err(Error::InvalidParams(format!("pulse width must be >= 0, got {pulse_width}")));
    }
    if pulse_width >= tau {
        return Err(Error::TimingInfeasible(format!(
            "pulse width {pulse_width} us must be shorter than tau {tau} us"
        )));
    }
    let mut unit = Vec::new();
    for item in &ast.items {
        for _ in 0..item.repeat {
            expand_item(&item.kind, &mut unit);
        }
    }
    let mut specs = Vec::with_capacity(unit.len() * repeats);
    for _ in 0..repeats {
        for raw in &unit {
            specs.push(match *raw {
                Raw::Tau => EventSpec::Delay(tau),
                Raw::HalfTau => EventSpec::Delay(tau / 2.0),
                Raw::Delay(d) => EventSpec::Delay(d),
                Raw::Pulse(p) => EventSpec::Pulse {
                    phase: p.radians(),
                    target,
                    width: pulse_width,
                },
            });
        }
    }
    let mut schedule = PulseSchedule::from_events(&specs)?;
    if let Some(f) = validate(&schedule, None).findings.iter().find(|f| f.severity == Severity::Error) {
        return Err(Error::TimingInfeasible(f.message.clone()));
    }
    if repeats > 0 {
        schedule.cycle_len = (schedule.events.len() / repeats).max(1);
    }
    Ok(schedule)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Note,
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn has_errors(&self) -> bool {
        self.findings.iter().any(|f| f.severity == Severity::Error)
    }

    pub fn has_warnings(&self) -> bool {
        self.findings.iter().any(|f| f.severity == Severity::Warning)
    }
}

/// Check timing and, given a hyperfine coupling in MHz, the decoupling
/// condition `A·τ ≲ 1` against the largest pulse spacing.
pub fn validate(schedule: &PulseSchedule, hyperfine_mhz: Option<f64>) -> ValidationReport {
    let mut findings = Vec::new();
    let mut push = |severity, message: String| findings.push(Finding { severity, message });

    for (i, e) in schedule.events.iter().enumerate() {
        match e {
            Event::Delay(d) if !(*d >= 0.0) || !d.is_finite() => {
                push(Severity::Error, format!("event {i}: invalid delay {d}"))
            }
            Event::Pulse(p) if !(p.width >= 0.0) || !p.width.is_finite() => {
                push(Severity::Error, format!("event {i}: invalid pulse width {}", p.width))
            }
            _ => {}
        }
    }

    let pulses: Vec<&Pulse> = schedule.pulses().collect();
    let mut max_spacing: f64 = 0.0;
    for (i, w) in pulses.windows(2).enumerate() {
        let gap = w[1].center - w[0].center;
        max_spacing = max_spacing.max(gap);
        if gap <= 0.0 {
            push(
                Severity::Error,
                format!("pulses {i} and {} share the center {} us", i + 1, w[0].center),
            );
        } else if gap < 0.5 * (w[0].width + w[1].width) {
            push(
                Severity::Error,
                format!(
                    "pulses {i} and {} overlap: centers {} us apart, widths {} and {} us",
                    i + 1,
                    gap,
                    w[0].width,
                    w[1].width
                ),
            );
        }
    }

    if let (Some(a), true) = (hyperfine_mhz, pulses.len() >= 2) {
        let a_tau = a * max_spacing;
        if a_tau > 1.0 {
            push(
                Severity::Warning,
                format!("A·τ = {a_tau:.3} > 1: pulse spacing {max_spacing} us is too long, DD ineffective"),
            );
        } else if TWO_PI * a_tau > 1.0 {
            push(
                Severity::Note,
                format!(
                    "2π·A·τ = {:.3} > 1: marginal decoupling regime; the protection gain is reduced but positive",
                    TWO_PI * a_tau
                ),
            );
        }
    }
    ValidationReport { findings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::parse;
    use std::f64::consts::PI;

    fn pulse_phases(s: &PulseSchedule) -> Vec<f64> {
        s.pulses().map(|p| p.phase).collect()
    }

    #[test]
    fn cpmg_delays() {
        let s = expand(&parse("CPMG(4)").unwrap(), 1.0, 0.0, Drive::Qubit, 1).unwrap();
        assert_eq!(s.delays(), vec![0.5, 1.0, 1.0, 1.0, 0.5]);
        assert_eq!(s.pulse_count(), 4);
        assert_eq!(s.total_duration(), 4.0);
        let direct = PulseSchedule::cpmg(4, 1.0, Drive::Qubit, 0.0).unwrap();
        assert_eq!(direct.events(), s.events());
    }

    #[test]
    fn echo_schedule() {
        let s = expand(&parse("tau/2-(pi)_x-tau/2").unwrap(), 2.0, 0.1, Drive::Dq, 1).unwrap();
        assert_eq!(s.delays(), vec![1.0, 1.0]);
        let p: Vec<_> = s.pulses().copied().collect();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].center, 1.0);
        assert_eq!(p[0].phase, 0.0);
        assert_eq!(p[0].target, Drive::Dq);
    }

    #[test]
    fn kdd_block() {
        let s = expand(&parse("KDD(30)").unwrap(), 1.0, 0.0, Drive::Qubit, 1).unwrap();
        let want = [PI / 3.0, PI / 6.0, 2.0 * PI / 3.0, PI / 6.0, PI / 3.0];
        assert_eq!(pulse_phases(&s), want);
        assert_eq!(s.delays(), vec![0.5, 1.0, 1.0, 1.0, 1.0, 0.5]);
    }

    #[test]
    fn kddxy16_supercycle() {
        let s = expand(&parse("KDDXY16").unwrap(), 0.2, 0.044, Drive::Qubit, 1).unwrap();
        assert_eq!(s.pulse_count(), 80);
        let d = s.delays();
        assert_eq!(d.len(), 81);
        assert_eq!(d[0], 0.1);
        assert_eq!(*d.last().unwrap(), 0.1);
        assert!(d[1..80].iter().all(|&x| x == 0.2));

        let phases = pulse_phases(&s);
        let block = |phi: f64| {
            [PI / 6.0 + phi, phi, PI / 2.0 + phi, phi, PI / 6.0 + phi].map(|p| p.rem_euclid(2.0 * PI))
        };
        let order = [0.0, 90.0, 0.0, 90.0, 90.0, 0.0, 90.0, 0.0];
        let mut want = Vec::new();
        for shift in [0.0, 180.0] {
            for deg in order {
                want.extend(block(((deg + shift) as f64).to_radians()));
            }
        }
        for (a, b) in phases.iter().zip(&want) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn forty_thousand_pulses() {
        let s = expand(&parse("KDDXY16").unwrap(), 0.2, 0.044, Drive::Qubit, 500).unwrap();
        assert_eq!(s.pulse_count(), 40_000);
        assert!((s.total_duration() - 8000.0).abs() < 1e-6);
        assert_eq!(s.cycle_len(), s.events().len() / 500);
        // Phases stay exact over the whole train.
        let first: Vec<f64> = pulse_phases(&s)[..80].to_vec();
        let last: Vec<f64> = pulse_phases(&s)[40_000 - 80..].to_vec();
        assert_eq!(first, last);
    }

    #[test]
    fn repeats_merge_boundaries() {
        let s = expand(&parse("CPMG(2)").unwrap(), 1.0, 0.0, Drive::Qubit, 3).unwrap();
        assert_eq!(s.delays(), vec![0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5]);
    }

    #[test]
    fn timing_infeasible() {
        let ast = parse("CPMG(2)").unwrap();
        assert!(matches!(expand(&ast, 0.04, 0.044, Drive::Qubit, 1), Err(Error::TimingInfeasible(_))));
        let ast = parse("tau-(pi)_x-10ns-(pi)_y").unwrap();
        assert!(matches!(expand(&ast, 1.0, 0.044, Drive::Qubit, 1), Err(Error::TimingInfeasible(_))));
    }

    #[test]
    fn validate_coupling_advisory() {
        let s = PulseSchedule::cpmg(10, 0.2, Drive::Qubit, 0.044).unwrap();
        let r = validate(&s, Some(2.16));
        assert!(!r.has_errors());
        assert!(!r.has_warnings());
        assert_eq!(r.findings.len(), 1);
        assert_eq!(r.findings[0].severity, Severity::Note);

        let s = PulseSchedule::cpmg(10, 1.0, Drive::Qubit, 0.044).unwrap();
        let r = validate(&s, Some(2.16));
        assert!(r.has_warnings());
        assert!(!r.has_errors());
    }

    #[test]
    fn validate_overlap() {
        let specs = [
            EventSpec::Delay(1.0),
            EventSpec::Pulse { phase: 0.0, target: Drive::Qubit, width: 0.1 },
            EventSpec::Delay(0.05),
            EventSpec::Pulse { phase: 0.0, target: Drive::Qubit, width: 0.1 },
            EventSpec::Delay(1.0),
        ];
        let s = PulseSchedule::from_events(&specs).unwrap();
        assert!(validate(&s, None).has_errors());
    }

    #[test]
    fn text_round_trip() {
        let s = expand(&parse("KDDXY16").unwrap(), 0.2, 0.044, Drive::SqMinus, 3).unwrap();
        let text = s.to_text();
        let back = PulseSchedule::from_text(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_text(), text);
        assert!(text.starts_with("D 0.1\nP 0.5235987755982988 sq- 0.044\n"));
    }

    #[test]
    fn text_errors_report_line() {
        let r = PulseSchedule::from_text("D 1\nP 0 qubit\n");
        assert!(matches!(r, Err(Error::CorruptRecord { line: 2, .. })));
        let r = PulseSchedule::from_text("D 1\n\nD x\n");
        assert!(matches!(r, Err(Error::CorruptRecord { line: 3, .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cpmg_structure(n in 0usize..60, tau in 0.01f64..10.0) {
                let s = expand(&parse(&format!("CPMG({n})")).unwrap(), tau, 0.0, Drive::Qubit, 1).unwrap();
                prop_assert_eq!(s.pulse_count(), n);
                let d = s.delays();
                if n > 0 {
                    prop_assert_eq!(d.len(), n + 1);
                    prop_assert_eq!(d[0], tau / 2.0);
                    prop_assert_eq!(d[n], tau / 2.0);
                    prop_assert!(d[1..n].iter().all(|&x| x == tau));
                } else {
                    prop_assert_eq!(d, vec![tau]);
                }
                let centers: Vec<f64> = s.pulses().map(|p| p.center).collect();
                prop_assert!(centers.windows(2).all(|w| w[1] > w[0]));
            }

            #[test]
            fn kdd_phase_faithful(k in 0i64..12) {
                let phi = Phase::from_sixths(k);
                let s = expand(&parse(&format!("KDD({})", k * 30)).unwrap(), 1.0, 0.0, Drive::Qubit, 1).unwrap();
                let want = [1, 0, 3, 0, 1].map(|o| Phase::from_sixths(k + o).radians());
                prop_assert_eq!(pulse_phases(&s), want.to_vec());
                prop_assert_eq!(phi.radians(), (k as f64) * PI / 6.0);
            }

            #[test]
            fn schedule_text_round_trip(ds in prop::collection::vec(0.0f64..100.0, 1..20), ph in 0.0f64..7.0) {
                let mut specs = Vec::new();
                for d in ds {
                    specs.push(EventSpec::Delay(d));
                    specs.push(EventSpec::Pulse { phase: ph, target: Drive::Dq, width: 0.0 });
                }
                let s = PulseSchedule::from_events(&specs).unwrap();
                prop_assert_eq!(PulseSchedule::from_text(&s.to_text()).unwrap(), s);
            }
        }
    }
}
