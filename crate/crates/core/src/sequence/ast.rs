use std::f64::consts::PI;
use std::fmt;

/// Pulse phase. Multiples of 30° are kept exact as a count of π/6 (mod 12)
/// until a schedule is emitted; anything else is stored in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    Sixths(u8),
    Radians(f64),
}

impl Phase {
    pub const ZERO: Phase = Phase::Sixths(0);

    pub fn from_sixths(k: i64) -> Phase {
        Phase::Sixths(k.rem_euclid(12) as u8)
    }

    pub fn from_degrees(deg: f64) -> Phase {
        let k = deg / 30.0;
        if k.fract() == 0.0 && k.abs() < 1e15 {
            Phase::from_sixths(k as i64)
        } else {
            Phase::from_radians(deg.to_radians())
        }
    }

    pub fn from_radians(rad: f64) -> Phase {
        let r = rad.rem_euclid(2.0 * PI);
        // rem_euclid can round up to exactly 2π for tiny negative inputs.
        Phase::Radians(if r >= 2.0 * PI { 0.0 } else { r })
    }

    pub fn radians(self) -> f64 {
        match self {
            Phase::Sixths(k) => k as f64 * PI / 6.0,
            Phase::Radians(r) => r,
        }
    }

    pub fn add(self, other: Phase) -> Phase {
        match (self, other) {
            (Phase::Sixths(a), Phase::Sixths(b)) => Phase::from_sixths(a as i64 + b as i64),
            _ => Phase::from_radians(self.radians() + other.radians()),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Sixths(k) => write!(f, "{}", *k as u32 * 30),
            Phase::Radians(r) => write!(f, "{r}rad"),
        }
    }
}

/// 1-based character columns, end exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Macro {
    Cpmg { n: u32, phase: Phase },
    Kdd(Phase),
    KddXy16,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ItemKind {
    Tau,
    HalfTau,
    /// Literal delay in microseconds.
    Duration(f64),
    Pulse(Phase),
    Macro(Macro),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub kind: ItemKind,
    pub repeat: u32,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequenceAst {
    pub items: Vec<Item>,
}

impl SequenceAst {
    /// Structural equality ignoring source spans.
    pub fn same_shape(&self, other: &SequenceAst) -> bool {
        self.items.len() == other.items.len()
            && self
                .items
                .iter()
                .zip(&other.items)
                .all(|(a, b)| a.kind == b.kind && a.repeat == b.repeat)
    }
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ItemKind::Tau => f.write_str("tau"),
            ItemKind::HalfTau => f.write_str("tau/2"),
            ItemKind::Duration(us) => write!(f, "{us}us"),
            ItemKind::Pulse(p) => write!(f, "(pi)_{p}"),
            ItemKind::Macro(Macro::Cpmg { n, phase }) => {
                if *phase == Phase::ZERO {
                    write!(f, "CPMG({n})")
                } else {
                    write!(f, "CPMG({n},{phase})")
                }
            }
            ItemKind::Macro(Macro::Kdd(p)) => write!(f, "KDD({p})"),
            ItemKind::Macro(Macro::KddXy16) => f.write_str("KDDXY16"),
        }
    }
}

/// Canonical text form.
impl fmt::Display for SequenceAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, item) in self.items.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{}", item.kind)?;
            if item.repeat != 1 {
                write!(f, "^{}", item.repeat)?;
            }
        }
        Ok(())
    }
}
