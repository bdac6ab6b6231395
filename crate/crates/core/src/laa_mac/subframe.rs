//! Frame structure type 3 burst layout at MAC airtime granularity.
//!
//! A burst's data may start on either slot boundary of a subframe. Interior
//! subframes carry 14 symbols; the last one carries a DwPTS-style count from
//! [`ENDING_SYMBOLS`]. Symbols are uniformly 1/14 ms.

use crate::error::{Error, Result};
use crate::sim_core::{SimDuration, SimTime};

pub const SUBFRAME: SimDuration = SimDuration::from_ms(1);
pub const SLOT: SimDuration = SimDuration::from_us(500);
pub const SYMBOLS_PER_SUBFRAME: u32 = 14;
pub const ENDING_SYMBOLS: [u32; 7] = [3, 6, 9, 10, 11, 12, 14];

/// Airtime of `n` symbols, floored to the nanosecond.
pub fn symbols_to_duration(n: u32) -> SimDuration {
    SimDuration::from_ns(n as u64 * SUBFRAME.as_ns() / SYMBOLS_PER_SUBFRAME as u64)
}

fn whole_symbols(d: SimDuration) -> u32 {
    (d.as_ns() * SYMBOLS_PER_SUBFRAME as u64 / SUBFRAME.as_ns()) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: SimTime,
    pub symbols: u32,
}

impl Segment {
    pub fn end(&self) -> SimTime {
        self.start + symbols_to_duration(self.symbols)
    }

    pub fn duration(&self) -> SimDuration {
        symbols_to_duration(self.symbols)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubframePlan {
    pub grant: SimTime,
    /// Reservation signal from the grant to the first slot boundary.
    pub reservation: SimDuration,
    pub segments: Vec<Segment>,
}

impl SubframePlan {
    pub fn data_start(&self) -> SimTime {
        self.grant + self.reservation
    }

    pub fn end(&self) -> SimTime {
        self.segments
            .last()
            .map(Segment::end)
            .unwrap_or_else(|| self.data_start())
    }

    pub fn total_symbols(&self) -> u32 {
        self.segments.iter().map(|s| s.symbols).sum()
    }

    pub fn data_airtime(&self) -> SimDuration {
        self.segments
            .iter()
            .fold(SimDuration::ZERO, |acc, s| acc + s.duration())
    }

    pub fn final_symbols(&self) -> Option<u32> {
        self.segments.last().map(|s| s.symbols)
    }

    /// Shortens the plan to carry at least `needed` symbols (or all of it if
    /// the plan is shorter), keeping the final segment length legal.
    pub fn truncated(&self, needed: u32) -> SubframePlan {
        let mut out = Vec::new();
        let mut carried = 0u32;
        let last = self.segments.len().saturating_sub(1);
        let mut i = 0;
        while i < self.segments.len() && carried < needed {
            let seg = self.segments[i];
            let rem = needed - carried;
            if rem > seg.symbols || i == last {
                out.push(seg);
                carried += seg.symbols;
                i += 1;
                continue;
            }
            match ENDING_SYMBOLS
                .iter()
                .copied()
                .find(|&s| s >= rem && s <= seg.symbols)
            {
                Some(s) => {
                    out.push(Segment { symbols: s, ..seg });
                }
                None => {
                    // a 7-symbol opening half that is fully used cannot end
                    // the burst; spill into a 3-symbol ending
                    out.push(seg);
                    let next = self.segments[i + 1];
                    out.push(Segment { symbols: 3, ..next });
                }
            }
            break;
        }
        SubframePlan {
            grant: self.grant,
            reservation: self.reservation,
            segments: out,
        }
    }
}

/// Lays out a burst granted at `grant` with `budget` of data airtime.
///
/// Data starts at the next slot boundary; the time before it is reported as
/// reservation. Interior segments fill whole subframes and the final
/// segment takes the largest legal symbol count that fits what is left.
pub fn partial_subframe_plan(grant: SimTime, budget: SimDuration) -> Result<SubframePlan> {
    if budget.is_zero() {
        return Err(Error::InvalidInput("MCOT budget must be positive".into()));
    }
    let first = grant.ceil_to(SLOT);
    let mut plan = SubframePlan {
        grant,
        reservation: first - grant,
        segments: Vec::new(),
    };
    let mut t = first;
    let mut remaining = budget;
    loop {
        let cap = if t.as_ns() % SUBFRAME.as_ns() == 0 {
            SYMBOLS_PER_SUBFRAME
        } else {
            SYMBOLS_PER_SUBFRAME / 2
        };
        let residual = whole_symbols(remaining);
        if residual >= cap && (cap == SYMBOLS_PER_SUBFRAME || residual - cap >= ENDING_SYMBOLS[0]) {
            plan.segments.push(Segment { start: t, symbols: cap });
            let d = if cap == SYMBOLS_PER_SUBFRAME { SUBFRAME } else { SLOT };
            remaining = remaining.saturating_sub(d);
            t += d;
            continue;
        }
        if let Some(s) = ENDING_SYMBOLS
            .iter()
            .rev()
            .copied()
            .find(|&s| s <= residual.min(cap))
        {
            plan.segments.push(Segment { start: t, symbols: s });
        }
        break;
    }
    Ok(plan)
}
