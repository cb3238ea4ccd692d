use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::trace::RtnTrace;
use crate::error::{Error, Result};
use crate::fit::{fit_exponential, FitResult};
use crate::model::Level;
use crate::sequence::PulseSchedule;

/// One predetermined flip trace between `|-1⟩` (start) and `|0⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub trace: RtnTrace,
    /// Flip pulse length (us).
    pub t_p: f64,
    /// Set when the trace ends in `|0⟩` and a final flip restores `|-1⟩`
    /// before readout.
    pub corrective_flip: bool,
}

/// Fixed-size ensemble of engineered flip traces.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEnsemble {
    /// `None` for an infinite target (no flips).
    pub t1_target: Option<f64>,
    pub horizon: f64,
    pub t_p: f64,
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    /// Traces rejected for a partial overlap with a DD pulse and redrawn.
    pub discarded: usize,
    /// Flips merged with a DD pulse (both omitted, net effect unchanged).
    pub cancelled: usize,
}

/// Relation of one flip to the DD pulse train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Overlap {
    None,
    /// More than half the flip overlaps a pulse: neither is applied.
    Cancel,
    /// Overlap of at most half the flip: the trace is unusable.
    Discard,
}

struct PulseTrain {
    /// `(center, width)` sorted by center.
    pulses: Vec<(f64, f64)>,
}

impl PulseTrain {
    fn new(schedule: &PulseSchedule, t_p: f64) -> Result<Self> {
        let pulses: Vec<(f64, f64)> = schedule.pulses().map(|p| (p.center, p.width)).collect();
        if let Some(tau) = pulses.windows(2).map(|w| w[1].0 - w[0].0).min_by(f64::total_cmp) {
            if t_p >= tau {
                return Err(Error::TimingInfeasible(format!(
                    "flip pulse length {t_p} us is not shorter than the pulse spacing {tau} us"
                )));
            }
        }
        Ok(Self { pulses })
    }

    fn classify(&self, t: f64, t_p: f64) -> Overlap {
        let k = self.pulses.partition_point(|p| p.0 < t);
        let mut worst = Overlap::None;
        for &(c, w) in self.pulses[k.saturating_sub(1)..(k + 1).min(self.pulses.len())].iter() {
            let ov = (t + t_p / 2.0).min(c + w / 2.0) - (t - t_p / 2.0).max(c - w / 2.0);
            if ov > t_p / 2.0 {
                worst = Overlap::Cancel;
            } else if ov > 0.0 {
                return Overlap::Discard;
            }
        }
        worst
    }
}

fn other(l: Level) -> Level {
    if l == Level::Minus {
        Level::Zero
    } else {
        Level::Minus
    }
}

/// Draw an antithetic pair of flip traces.
///
/// Both traces are telegraph processes with flip rate `r`, written as
/// events at rate `2r` that reset the level to a random value. The first
/// event time is drawn from stratum `k` of `n_strata`; at every event the
/// second trace takes the level opposite to the first. Before the first
/// event both sit in `|-1⟩`, after it they always disagree, so the pair's
/// population difference is exactly the first-event survival `e^{-2rt}`.
fn draw_pair<R: Rng>(rng: &mut R, rate: f64, horizon: f64, k: usize, n_strata: usize) -> [Vec<(f64, Level)>; 2] {
    let mut a = Vec::new();
    let mut b = Vec::new();
    if rate <= 0.0 {
        return [a, b];
    }
    let events = Exp::new(2.0 * rate).expect("positive rate");
    let u = (k as f64 + rng.random::<f64>()) / n_strata as f64;
    let mut t = -(-u).ln_1p() / (2.0 * rate);
    let (mut la, mut lb) = (Level::Minus, Level::Minus);
    while t < horizon {
        let v = if rng.random_bool(0.5) { Level::Minus } else { Level::Zero };
        if v != la {
            a.push((t, v));
            la = v;
        }
        if other(v) != lb {
            b.push((t, other(v)));
            lb = other(v);
        }
        t += events.sample(rng);
    }
    [a, b]
}

/// Build `n_traces` engineered traces with flip rate `1/(2·t1_target)`.
///
/// With a DD schedule, a flip overlapping a pulse by more than `t_p/2` is
/// merged with it (counted in `cancelled`); a trace with any smaller overlap
/// is discarded and its pair redrawn in the same stratum from a fresh
/// sub-seed, so the ensemble keeps its size.
pub fn engineered_traces(
    t1_target: f64,
    n_traces: usize,
    horizon: f64,
    t_p: f64,
    schedule: Option<&PulseSchedule>,
    seed: u64,
) -> Result<TraceEnsemble> {
    if !(t1_target > 0.0) {
        return Err(Error::InvalidParams(format!("target T1 must be positive, got {t1_target}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParams(format!("horizon must be positive, got {horizon}")));
    }
    if !(t_p >= 0.0) || !t_p.is_finite() {
        return Err(Error::InvalidParams(format!("pulse length must be >= 0, got {t_p}")));
    }
    let train = schedule.map(|s| PulseTrain::new(s, t_p)).transpose()?;
    let rate = if t1_target.is_finite() { 0.5 / t1_target } else { 0.0 };

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let n_pairs = n_traces.div_ceil(2);
    let mut strata: Vec<usize> = (0..n_pairs).collect();
    strata.shuffle(&mut master);

    let mut records = Vec::with_capacity(n_traces);
    let mut discarded = 0;
    let mut cancelled = 0;
    for (pair, &k) in strata.iter().enumerate() {
        let keep = if 2 * pair + 1 < n_traces { 2 } else { 1 };
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::TimingInfeasible(
                    "no overlap-free trace found; flips are too dense for the pulse train".into(),
                ));
            }
            let sub_seed = master.next_u64();
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
            let jumps = draw_pair(&mut rng, rate, horizon, k, n_pairs);
            let jumps = &jumps[..keep];
            let mut merged = 0;
            let mut clean = true;
            if let Some(train) = &train {
                for &(t, _) in jumps.iter().flatten() {
                    match train.classify(t, t_p) {
                        Overlap::None => {}
                        Overlap::Cancel => merged += 1,
                        Overlap::Discard => clean = false,
                    }
                }
            }
            if !clean {
                discarded += keep;
                continue;
            }
            cancelled += merged;
            for j in jumps {
                let trace = RtnTrace::new(Level::Minus, j, horizon, sub_seed)?;
                let corrective_flip = trace.levels().last() == Some(&Level::Zero);
                records.push(TraceRecord {
                    trace,
                    t_p,
                    corrective_flip,
                });
            }
            break;
        }
    }
    Ok(TraceEnsemble {
        t1_target: t1_target.is_finite().then_some(t1_target),
        horizon,
        t_p,
        seed,
        records,
        discarded,
        cancelled,
    })
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    t1_target: Option<f64>,
    n_traces: usize,
    horizon: f64,
    t_p: f64,
    seed: u64,
    discarded: usize,
    cancelled: usize,
}

#[derive(Serialize, Deserialize)]
struct TraceLine {
    seed: u64,
    horizon: f64,
    t_p: f64,
    initial: i8,
    jumps: Vec<(f64, i8)>,
    corrective_flip: bool,
}

fn level_of(ms: i8, line: usize) -> Result<Level> {
    Level::from_ms(ms as i64).ok_or_else(|| Error::CorruptRecord {
        line,
        message: format!("invalid level {ms}"),
    })
}

impl TraceEnsemble {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Fraction of drawn traces that were discarded.
    pub fn discard_rate(&self) -> f64 {
        self.discarded as f64 / (self.discarded + self.records.len()).max(1) as f64
    }

    /// `P(-1) - P(0)` across the ensemble at each time.
    pub fn population_difference(&self, times: &[f64]) -> Vec<f64> {
        let n = self.records.len().max(1) as f64;
        times
            .iter()
            .map(|&t| {
                self.records
                    .iter()
                    .map(|r| if r.trace.level_at(t) == Level::Minus { 1.0 } else { -1.0 })
                    .sum::<f64>()
                    / n
            })
            .collect()
    }

    /// Exponential fit of the population difference; the decay time is the
    /// ensemble T1.
    pub fn fit_t1(&self, times: &[f64]) -> Result<FitResult> {
        let pd = self.population_difference(times);
        fit_exponential(&times.iter().copied().zip(pd).collect::<Vec<_>>())
    }

    /// Traces relabelled onto the symmetric two-level model: `|-1⟩` keeps
    /// the `-v` rate and `|0⟩` takes `+v`.
    pub fn two_level_traces(&self) -> Vec<RtnTrace> {
        self.records
            .iter()
            .map(|r| r.trace.relabel(|l| if l == Level::Zero { Level::Plus } else { l }))
            .collect()
    }

    /// Line-delimited JSON: one header line, then one line per trace.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = HeaderLine {
            t1_target: self.t1_target,
            n_traces: self.records.len(),
            horizon: self.horizon,
            t_p: self.t_p,
            seed: self.seed,
            discarded: self.discarded,
            cancelled: self.cancelled,
        };
        writeln!(w, "{}", serde_json::to_string(&header).map_err(|e| Error::Io(e.to_string()))?)?;
        for r in &self.records {
            let line = TraceLine {
                seed: r.trace.seed(),
                horizon: r.trace.horizon(),
                t_p: r.t_p,
                initial: r.trace.initial().ms(),
                jumps: r.trace.jumps().map(|(t, l)| (t, l.ms())).collect(),
                corrective_flip: r.corrective_flip,
            };
            writeln!(w, "{}", serde_json::to_string(&line).map_err(|e| Error::Io(e.to_string()))?)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let corrupt = |line: usize, e: &dyn std::fmt::Display| Error::CorruptRecord {
            line,
            message: e.to_string(),
        };
        let (_, first) = lines.next().ok_or_else(|| corrupt(1, &"empty trace file"))?;
        let header: HeaderLine = serde_json::from_str(&first?).map_err(|e| corrupt(1, &e))?;
        let mut records = Vec::with_capacity(header.n_traces);
        for (i, line) in lines {
            let line_no = i + 1;
            let text = line?;
            if text.trim().is_empty() {
                continue;
            }
            let rec: TraceLine = serde_json::from_str(&text).map_err(|e| corrupt(line_no, &e))?;
            let jumps = rec
                .jumps
                .iter()
                .map(|&(t, ms)| Ok((t, level_of(ms, line_no)?)))
                .collect::<Result<Vec<_>>>()?;
            let trace = RtnTrace::new(level_of(rec.initial, line_no)?, &jumps, rec.horizon, rec.seed)
                .map_err(|e| corrupt(line_no, &e))?;
            records.push(TraceRecord {
                trace,
                t_p: rec.t_p,
                corrective_flip: rec.corrective_flip,
            });
        }
        if records.len() != header.n_traces {
            return Err(corrupt(
                records.len() + 2,
                &format!("header announces {} traces, found {}", header.n_traces, records.len()),
            ));
        }
        Ok(Self {
            t1_target: header.t1_target,
            horizon: header.horizon,
            t_p: header.t_p,
            seed: header.seed,
            records,
            discarded: header.discarded,
            cancelled: header.cancelled,
        })
    }

    /// SHA-256 of the serialized ensemble, as lowercase hex.
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_jsonl().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Drive;

    fn grid() -> Vec<f64> {
        (0..=400).map(|i| i as f64 * 0.25).collect()
    }

    fn dd() -> PulseSchedule {
        PulseSchedule::cpmg(500, 0.2, Drive::Dq, 0.044).unwrap()
    }

    #[test]
    fn fitted_t1_without_dd() {
        let e = engineered_traces(10.0, 200, 100.0, 0.044, None, 1).unwrap();
        assert_eq!(e.len(), 200);
        assert_eq!(e.discarded, 0);
        let t1 = e.fit_t1(&grid()).unwrap().decay_time.value;
        assert!((9.5..=10.5).contains(&t1), "{t1}");
    }

    #[test]
    fn fitted_t1_with_dd() {
        let e = engineered_traces(10.0, 200, 100.0, 0.044, Some(&dd()), 1).unwrap();
        assert_eq!(e.len(), 200);
        assert!(e.discarded > 0);
        let t1 = e.fit_t1(&grid()).unwrap().decay_time.value;
        assert!((9.5..=10.5).contains(&t1), "{t1}");
    }

    #[test]
    fn retained_traces_have_no_partial_overlap() {
        let s = dd();
        let e = engineered_traces(10.0, 50, 100.0, 0.044, Some(&s), 4).unwrap();
        let train = PulseTrain::new(&s, 0.044).unwrap();
        for r in &e.records {
            for &t in r.trace.jump_times() {
                assert_ne!(train.classify(t, 0.044), Overlap::Discard);
            }
        }
    }

    #[test]
    fn infinite_t1_has_no_flips() {
        let e = engineered_traces(f64::INFINITY, 20, 100.0, 0.044, None, 0).unwrap();
        assert!(e.records.iter().all(|r| r.trace.jump_count() == 0 && !r.corrective_flip));
        assert!(e.population_difference(&[0.0, 50.0]).iter().all(|&x| x == 1.0));
    }

    #[test]
    fn infeasible_pulse_length() {
        let s = PulseSchedule::cpmg(10, 0.2, Drive::Dq, 0.0).unwrap();
        assert!(matches!(
            engineered_traces(10.0, 10, 2.0, 0.2, Some(&s), 0),
            Err(Error::TimingInfeasible(_))
        ));
    }

    #[test]
    fn corrective_flag_tracks_final_level() {
        let e = engineered_traces(10.0, 40, 100.0, 0.044, None, 3).unwrap();
        for r in &e.records {
            assert_eq!(r.corrective_flip, r.trace.level_at(100.0) == Level::Zero);
        }
    }

    #[test]
    fn odd_count_and_determinism() {
        let a = engineered_traces(10.0, 7, 30.0, 0.044, None, 9).unwrap();
        let b = engineered_traces(10.0, 7, 30.0, 0.044, None, 9).unwrap();
        assert_eq!(a.len(), 7);
        assert_eq!(a, b);
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let e = engineered_traces(10.0, 30, 100.0, 0.044, Some(&dd()), 5).unwrap();
        let text = e.to_jsonl();
        let back = TraceEnsemble::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, e);
        assert_eq!(back.digest(), e.digest());
    }

    #[test]
    fn corrupt_line_is_reported() {
        let e = engineered_traces(10.0, 4, 20.0, 0.044, None, 5).unwrap();
        let mut lines: Vec<String> = e.to_jsonl().lines().map(String::from).collect();
        lines[3] = "{\"seed\": 1, oops".into();
        let err = TraceEnsemble::read_jsonl(lines.join("\n").as_bytes()).unwrap_err();
        assert!(matches!(err, Error::CorruptRecord { line: 4, .. }), "{err:?}");
    }

    #[test]
    fn pair_population_difference_is_survival() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for k in 0..20 {
            let [a, b] = draw_pair(&mut rng, 0.05, 100.0, k, 20);
            let ta = RtnTrace::new(Level::Minus, &a, 100.0, 0).unwrap();
            let tb = RtnTrace::new(Level::Minus, &b, 100.0, 0).unwrap();
            let first = a.first().map_or(f64::INFINITY, |j| j.0).min(b.first().map_or(f64::INFINITY, |j| j.0));
            for t in [0.0, 5.0, 20.0, 60.0, 99.0] {
                let s = |tr: &RtnTrace| if tr.level_at(t) == Level::Minus { 1.0 } else { -1.0 };
                let expected = if t < first { 2.0 } else { 0.0 };
                assert_eq!(s(&ta) + s(&tb), expected);
            }
        }
    }
}
