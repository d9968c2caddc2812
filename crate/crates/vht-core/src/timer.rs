//! Emulated microcontroller timer peripherals: counters, capture/compare
//! channels, interrupt latency, and the capture/compare resource ledger.
//!
//! Counters are unbounded integers; 16-bit overflow is out of scope.

use thiserror::Error;

use crate::oscillator::Oscillator;
use crate::rng::{CounterRng, RngKey};
use crate::time::SimTime;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimerError {
    #[error("timer is stopped")]
    Stopped,
    #[error("compare value {value} already passed (counter at {current})")]
    ComparePassed { value: u64, current: u64 },
}

/// Hardware counter incremented at the rate of its clock.
#[derive(Debug)]
pub struct TimerCounter<'a> {
    clock: &'a Oscillator,
    reset_count: u64,
    running: bool,
}

impl<'a> TimerCounter<'a> {
    /// A counter running since t = 0 with no offset.
    pub fn new(clock: &'a Oscillator) -> Self {
        TimerCounter {
            clock,
            reset_count: 0,
            running: true,
        }
    }

    pub fn clock(&self) -> &Oscillator {
        self.clock
    }

    /// Zeroes the counter at time t.
    pub fn reset_at(&mut self, t: SimTime) {
        self.reset_count = self.clock.count_edges(t);
    }

    pub fn stop(&mut self) {
        self.running = false;
    }

    pub fn start(&mut self) {
        self.running = true;
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    /// Counter value at time t: edges since the last reset.
    pub fn read(&self, t: SimTime) -> Result<u64, TimerError> {
        if !self.running {
            return Err(TimerError::Stopped);
        }
        Ok(self.clock.count_edges(t) - self.reset_count)
    }

    /// Time at which the counter reaches `value` (i.e. the edge that
    /// increments it to `value`).
    fn time_of_count(&self, value: u64) -> SimTime {
        self.clock.edge_time(value + self.reset_count)
    }
}

/// Capture channel with overwrite semantics: a new capture replaces the old
/// one, there is no FIFO. The VHT race condition depends on exactly this.
#[derive(Debug, Default)]
pub struct CaptureChannel {
    last_value: Option<u64>,
}

impl CaptureChannel {
    pub fn new() -> Self {
        CaptureChannel { last_value: None }
    }

    /// Latches the counter at the event instant. An event exactly at a clock
    /// edge includes that edge in the latched count.
    pub fn capture_on_event(
        &mut self,
        timer: &TimerCounter<'_>,
        t_event: SimTime,
    ) -> Result<u64, TimerError> {
        let v = timer.read(t_event)?;
        self.last_value = Some(v);
        Ok(v)
    }

    pub fn last_value(&self) -> Option<u64> {
        self.last_value
    }
}

/// Register value of a capture channel whose source line is the rising edge
/// of `source`: the counter value latched at the most recent source edge at
/// or before `t_read`. Returns None if no source edge has occurred yet (the
/// register still holds its reset value).
///
/// Evaluated lazily instead of replaying every edge; the overwrite semantics
/// ("last edge wins") fall out of taking the latest edge.
pub fn edge_fed_capture_at(
    timer: &TimerCounter<'_>,
    source: &Oscillator,
    t_read: SimTime,
) -> Result<Option<u64>, TimerError> {
    let m = source.count_edges(t_read);
    if m == 0 {
        return Ok(None);
    }
    timer.read(source.edge_time(m)).map(Some)
}

/// Compare channel: fires when the counter equals the armed value, exactly at
/// that edge. Arming a value the counter has already passed is an error (real
/// peripherals have no greater-or-equal catch-up).
#[derive(Debug, Default)]
pub struct CompareChannel {
    armed: Option<u64>,
}

impl CompareChannel {
    pub fn new() -> Self {
        CompareChannel { armed: None }
    }

    /// Arms the channel and returns the instant it will fire.
    pub fn arm(
        &mut self,
        timer: &TimerCounter<'_>,
        now: SimTime,
        value: u64,
    ) -> Result<SimTime, TimerError> {
        let current = timer.read(now)?;
        if value <= current {
            return Err(TimerError::ComparePassed { value, current });
        }
        self.armed = Some(value);
        Ok(timer.time_of_count(value))
    }

    pub fn disarm(&mut self) {
        self.armed = None;
    }

    pub fn armed_value(&self) -> Option<u64> {
        self.armed
    }
}

/// Fixed plus uniformly jittered interrupt service latency.
#[derive(Debug, Clone, Copy)]
pub struct InterruptLatencyModel {
    pub fixed_s: f64,
    pub jitter_uniform_max_s: f64,
}

impl InterruptLatencyModel {
    pub fn new(fixed_s: f64, jitter_uniform_max_s: f64) -> Self {
        assert!(fixed_s >= 0.0 && jitter_uniform_max_s >= 0.0);
        InterruptLatencyModel {
            fixed_s,
            jitter_uniform_max_s,
        }
    }

    pub fn zero() -> Self {
        InterruptLatencyModel {
            fixed_s: 0.0,
            jitter_uniform_max_s: 0.0,
        }
    }

    /// Microsecond-scale default typical of Cortex-M class parts.
    pub fn typical() -> Self {
        InterruptLatencyModel {
            fixed_s: 1e-6,
            jitter_uniform_max_s: 1e-6,
        }
    }

    /// Instant at which the ISR actually reads the capture registers for an
    /// event at `t_event`. Deterministic per key.
    pub fn isr_read_time(&self, t_event: SimTime, rng: &CounterRng, key: RngKey) -> SimTime {
        let jitter = if self.jitter_uniform_max_s > 0.0 {
            rng.uniform_in(key, 0.0, self.jitter_uniform_max_s)
        } else {
            0.0
        };
        t_event + (self.fixed_s + jitter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Capture,
    Compare,
}

/// Timestamping scheme a ledger belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Dual-timer timestamping ("original VHT").
    OriginalVht,
    /// Offset+skew corrected single-fast-timer scheme.
    JitterCompensatedVht,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::OriginalVht => "vht",
            Scheme::JitterCompensatedVht => "jcvht",
        }
    }
}

/// Exact accounting of capture/compare channels per timekeeper purpose.
#[derive(Debug, Clone, Default)]
pub struct ResourceLedger {
    entries: Vec<(ChannelKind, &'static str)>,
}

/// Purpose rows, in table order.
pub const LEDGER_PURPOSES: [&str; 6] = [
    "internal",
    "os_get_time",
    "os_set_event",
    "radio_get_hw_event_timestamp",
    "radio_set_hw_event",
    "application_line",
];

impl ResourceLedger {
    pub fn new() -> Self {
        ResourceLedger {
            entries: Vec::new(),
        }
    }

    pub fn allocate(&mut self, kind: ChannelKind, purpose: &'static str) {
        self.entries.push((kind, purpose));
    }

    pub fn count_for(&self, purpose: &str) -> usize {
        self.entries.iter().filter(|(_, p)| *p == purpose).count()
    }

    /// (purpose, channels) in table order, every purpose listed.
    pub fn per_purpose(&self) -> Vec<(&'static str, usize)> {
        LEDGER_PURPOSES
            .iter()
            .map(|p| (*p, self.count_for(p)))
            .collect()
    }

    pub fn total(&self) -> usize {
        self.entries.len()
    }
}

/// Channel set for a full timekeeper implemented with the original dual-timer
/// algorithm: one always-on capture of the slow clock into the fast timer,
/// and one channel on each timer per externally visible operation.
pub fn original_timekeeper_ledger() -> ResourceLedger {
    let mut l = ResourceLedger::new();
    // slow-edge capture on the fast timer (the h0 channel)
    l.allocate(ChannelKind::Capture, "internal");
    // get_time reads counters directly: no channels
    for purpose in ["os_set_event", "radio_set_hw_event"] {
        l.allocate(ChannelKind::Compare, purpose);
        l.allocate(ChannelKind::Compare, purpose);
    }
    // event timestamping captures on both timers
    l.allocate(ChannelKind::Capture, "radio_get_hw_event_timestamp");
    l.allocate(ChannelKind::Capture, "radio_get_hw_event_timestamp");
    // application line usable either way, one channel per timer
    l.allocate(ChannelKind::Capture, "application_line");
    l.allocate(ChannelKind::Capture, "application_line");
    l
}

/// Channel set for the jitter-compensated scheme: a slow-clock compare wired
/// to a fast-clock capture for offset/skew correction, then a single fast
/// channel per operation and none for get_time.
pub fn complete_timekeeper_ledger() -> ResourceLedger {
    let mut l = ResourceLedger::new();
    l.allocate(ChannelKind::Compare, "internal"); // slow-clock compare output
    l.allocate(ChannelKind::Capture, "internal"); // fast-clock capture input
    l.allocate(ChannelKind::Compare, "os_set_event");
    l.allocate(ChannelKind::Capture, "radio_get_hw_event_timestamp");
    l.allocate(ChannelKind::Compare, "radio_set_hw_event");
    l.allocate(ChannelKind::Capture, "application_line");
    l
}

/// The configured ledger for a scheme's full timekeeper.
pub fn timekeeper_ledger(scheme: Scheme) -> ResourceLedger {
    match scheme {
        Scheme::OriginalVht => original_timekeeper_ledger(),
        Scheme::JitterCompensatedVht => complete_timekeeper_ledger(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oscillator::OscillatorSpec;

    fn osc(f: u64) -> Oscillator {
        Oscillator::new(OscillatorSpec::ideal(0, f), 1, 100.0).unwrap()
    }

    #[test]
    fn counter_read_after_reset() {
        let clock = osc(1);
        let mut tc = TimerCounter::new(&clock);
        tc.reset_at(SimTime::ZERO);
        assert_eq!(tc.read(SimTime::new(2.5)).unwrap(), 2);
    }

    #[test]
    fn counter_reset_mid_run() {
        let clock = osc(1);
        let mut tc = TimerCounter::new(&clock);
        tc.reset_at(SimTime::new(5.5)); // absolute count 5
        assert_eq!(tc.read(SimTime::new(9.5)).unwrap(), 4);
    }

    #[test]
    fn stopped_counter_errors() {
        let clock = osc(1);
        let mut tc = TimerCounter::new(&clock);
        tc.stop();
        assert_eq!(tc.read(SimTime::new(1.0)).unwrap_err(), TimerError::Stopped);
    }

    #[test]
    fn capture_overwrites() {
        let clock = osc(10);
        let tc = TimerCounter::new(&clock);
        let mut ch = CaptureChannel::new();
        ch.capture_on_event(&tc, SimTime::new(0.25)).unwrap();
        let v = ch.capture_on_event(&tc, SimTime::new(0.55)).unwrap();
        assert_eq!(v, 5);
        assert_eq!(ch.last_value(), Some(5));
    }

    #[test]
    fn capture_at_edge_includes_edge() {
        let clock = osc(10);
        let tc = TimerCounter::new(&clock);
        let mut ch = CaptureChannel::new();
        let t_edge = clock.edge_time(4);
        assert_eq!(ch.capture_on_event(&tc, t_edge).unwrap(), 4);
    }

    #[test]
    fn compare_fires_where_capture_would_latch_it() {
        let clock = osc(32768);
        let tc = TimerCounter::new(&clock);
        let mut cmp = CompareChannel::new();
        let fire = cmp.arm(&tc, SimTime::ZERO, 1234).unwrap();
        let mut cap = CaptureChannel::new();
        assert_eq!(cap.capture_on_event(&tc, fire).unwrap(), 1234);
    }

    #[test]
    fn captures_nondecreasing_in_event_time() {
        let clock = Oscillator::new(
            OscillatorSpec::ideal(0, 1000).with_jitter(1e-4),
            5,
            100.0,
        )
        .unwrap();
        let tc = TimerCounter::new(&clock);
        let mut ch = CaptureChannel::new();
        let mut prev = 0;
        for i in 1..2000 {
            let v = ch.capture_on_event(&tc, SimTime::new(i as f64 * 0.0123)).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn compare_rejects_passed_value() {
        let clock = osc(100);
        let tc = TimerCounter::new(&clock);
        let mut cmp = CompareChannel::new();
        let err = cmp.arm(&tc, SimTime::new(1.0), 50).unwrap_err();
        assert!(matches!(err, TimerError::ComparePassed { .. }));
    }

    #[test]
    fn edge_fed_capture_tracks_latest_edge() {
        let fast = osc(1000);
        let slow = Oscillator::new(OscillatorSpec::ideal(1, 10), 1, 100.0).unwrap();
        let tc = TimerCounter::new(&fast);
        // just after slow edge 3 (t = 0.3): register holds fast count at 0.3
        let v = edge_fed_capture_at(&tc, &slow, SimTime::new(0.35)).unwrap();
        assert_eq!(v, Some(300));
        // before any slow edge: reset value
        assert_eq!(
            edge_fed_capture_at(&tc, &slow, SimTime::new(0.05)).unwrap(),
            None
        );
    }

    #[test]
    fn isr_read_time_fixed_and_jittered() {
        let rng = CounterRng::new(1);
        let zero = InterruptLatencyModel::zero();
        let t = SimTime::new(1.0);
        assert_eq!(zero.isr_read_time(t, &rng, RngKey::new(0, 0)), t);

        let fixed = InterruptLatencyModel::new(2e-6, 0.0);
        assert_eq!(
            fixed.isr_read_time(t, &rng, RngKey::new(0, 0)),
            SimTime::new(1.0 + 2e-6)
        );

        // sample mean over many draws approaches fixed + max/2
        let jit = InterruptLatencyModel::new(2e-6, 2e-6);
        let n = 100_000;
        let mut sum = 0.0;
        for i in 0..n {
            sum += jit.isr_read_time(t, &rng, RngKey::new(7, i)) - t;
        }
        let mean = sum / n as f64;
        assert!((mean - 3e-6).abs() < 0.02e-6, "mean latency {mean}");
    }

    #[test]
    fn ledger_totals_match_schemes() {
        let orig = timekeeper_ledger(Scheme::OriginalVht);
        let comp = timekeeper_ledger(Scheme::JitterCompensatedVht);
        assert_eq!(orig.total(), 9);
        assert_eq!(comp.total(), 6);
        let rows: Vec<usize> = orig.per_purpose().iter().map(|(_, n)| *n).collect();
        assert_eq!(rows, vec![1, 0, 2, 2, 2, 2]);
        let rows: Vec<usize> = comp.per_purpose().iter().map(|(_, n)| *n).collect();
        assert_eq!(rows, vec![2, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn empty_ledger_is_zero() {
        assert_eq!(ResourceLedger::new().total(), 0);
    }
}
