//! The complete jitter-compensated VHT node: power/sleep state machine,
//! offset resynchronization on wakeup, periodic skew correction driven by a
//! slow-clock compare channel, a rate-corrected virtual clock, and the four
//! timekeeper operations.

use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use thiserror::Error;

use crate::controller::{ControllerDesign, DiscreteController};
use crate::events::EventQueue;
use crate::naive::compute_offset;
use crate::original::VhtConfig;
use crate::oscillator::Oscillator;
use crate::time::SimTime;
use crate::timer::{complete_timekeeper_ledger, ResourceLedger};

#[derive(Debug, Error, PartialEq)]
pub enum NodeError {
    #[error("node is already powered up")]
    DoublePowerUp,
    #[error("still settling: deep sleep allowed after {remaining_s:.3} more seconds")]
    StillSettling { remaining_s: f64 },
    #[error("operation requires an active or settling node")]
    NotAwake,
    #[error("node must stay active for at least one skew-correction period after waking")]
    ForcedActiveWindow,
    #[error("cannot sleep with armed timer events pending")]
    PendingEvents,
    #[error("wake target is not far enough in the future")]
    WakeTooSoon,
    #[error("node is not sleeping")]
    NotSleeping,
    #[error("event target {target} is not in the future (now reads {now})")]
    TargetInPast { target: i64, now: i64 },
    #[error("target lies beyond the scenario horizon")]
    BeyondHorizon,
    #[error(transparent)]
    Offset(#[from] crate::naive::NaiveVhtError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeMode {
    PoweredOff,
    Settling,
    Active,
    DeepSleep,
}

impl NodeMode {
    pub fn label(self) -> &'static str {
        match self {
            NodeMode::PoweredOff => "powered-off",
            NodeMode::Settling => "settling",
            NodeMode::Active => "active",
            NodeMode::DeepSleep => "deep-sleep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Software,
    HardwareOutput,
}

/// One linear piece of the virtual-clock mapping, valid from `from_t` until
/// the next segment. While asleep the mapping is undefined (awake = false).
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub from_t: SimTime,
    pub awake: bool,
    /// absolute fast-tick count at the anchor
    pub h_base: f64,
    /// virtual time in fast-nominal ticks at the anchor
    pub v_base: f64,
    /// rate correction applied per fast tick
    pub gamma: f64,
}

impl Segment {
    /// Virtual reading (unrounded ticks) for an absolute fast count.
    pub fn reading(&self, h: f64) -> f64 {
        self.v_base + (h - self.h_base) * (1.0 + self.gamma)
    }
}

/// Per-correction trace record.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub t: SimTime,
    pub mode: NodeMode,
    pub e_hl_s: f64,
    pub u_hl_s: f64,
    pub gamma_ppm: f64,
    pub offset_ticks: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FiredEvent {
    pub id: u64,
    pub kind: EventKind,
    pub target_vht: i64,
    pub fired_at: SimTime,
    pub actual_vht: i64,
}

#[derive(Debug, Clone)]
enum NodeEvent {
    SkewUpdate { chain: u32 },
    Wakeup,
    Timer { id: u64, generation: u32 },
}

#[derive(Debug)]
struct PendingEvent {
    target_vht: i64,
    kind: EventKind,
    generation: u32,
}

/// Node configuration beyond the two oscillators.
#[derive(Debug, Clone)]
pub struct NodeParams {
    pub design: ControllerDesign,
    pub n_avg: u32,
    /// minimum time in settling before deep sleep is allowed
    pub settle_hold_s: f64,
    /// skew-correction updates that must run after each wakeup before deep
    /// sleep is allowed again; one period is the scheme's minimum, but the
    /// forced-active window is its own knob rather than being tied to any
    /// outer synchronization period
    pub min_active_periods: u32,
}

impl Default for NodeParams {
    fn default() -> Self {
        NodeParams {
            design: ControllerDesign::reference(),
            n_avg: 8,
            settle_hold_s: 14.0,
            min_active_periods: 1,
        }
    }
}

/// The complete node. Driven by its own event queue: corrections and armed
/// events execute at their true instants when the caller advances time.
pub struct CompleteVht<'a> {
    fast: &'a Oscillator,
    slow: &'a Oscillator,
    cfg: VhtConfig,
    params: NodeParams,
    mode: NodeMode,
    controller: DiscreteController,

    /// current virtual-clock anchor
    h_base: f64,
    v_base: f64,
    gamma: f64,
    preserved_gamma: f64,
    offset_ticks: Ratio<i128>,

    /// skew-correction period in whole slow ticks and master-nominal seconds
    period_slow_ticks: u64,
    t_eff_s: f64,
    next_boundary_tick: u64,
    prev_boundary_fast_count: u64,
    chain: u32,
    e_prev: f64,
    u_prev: f64,

    powered_up_at: Option<SimTime>,
    corrections_since_wake: u32,

    queue: EventQueue<NodeEvent>,
    pending: BTreeMap<u64, PendingEvent>,
    next_event_id: u64,
    fired: Vec<FiredEvent>,

    segments: Vec<Segment>,
    trace: Vec<TraceRow>,
    ledger: ResourceLedger,
}

impl<'a> CompleteVht<'a> {
    pub fn new(fast: &'a Oscillator, slow: &'a Oscillator, params: NodeParams) -> Self {
        let cfg = VhtConfig::new(fast.f_nom_hz(), slow.f_nom_hz())
            .expect("fast must be faster than slow");
        // the slow-clock compare can only fire on whole ticks
        let period_slow_ticks = (slow.f_nom() * params.design.t_hl_s()).round().max(1.0) as u64;
        let t_eff_s = period_slow_ticks as f64 / slow.f_nom();
        let controller = DiscreteController::discretize(&params.design);
        CompleteVht {
            fast,
            slow,
            cfg,
            params,
            mode: NodeMode::PoweredOff,
            controller,
            h_base: 0.0,
            v_base: 0.0,
            gamma: 0.0,
            preserved_gamma: 0.0,
            offset_ticks: Ratio::from_integer(0),
            period_slow_ticks,
            t_eff_s,
            next_boundary_tick: 0,
            prev_boundary_fast_count: 0,
            chain: 0,
            e_prev: 0.0,
            u_prev: 0.0,
            powered_up_at: None,
            corrections_since_wake: 0,
            queue: EventQueue::new(),
            pending: BTreeMap::new(),
            next_event_id: 0,
            fired: Vec::new(),
            segments: Vec::new(),
            trace: Vec::new(),
            ledger: complete_timekeeper_ledger(),
        }
    }

    pub fn mode(&self) -> NodeMode {
        self.mode
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma_ppm(&self) -> f64 {
        self.gamma * 1e6
    }

    pub fn ledger(&self) -> &ResourceLedger {
        &self.ledger
    }

    pub fn effective_period_s(&self) -> f64 {
        self.t_eff_s
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn fired_events(&self) -> &[FiredEvent] {
        &self.fired
    }

    fn is_awake(&self) -> bool {
        matches!(self.mode, NodeMode::Settling | NodeMode::Active)
    }

    fn push_segment(&mut self, from_t: SimTime, awake: bool) {
        self.segments.push(Segment {
            from_t,
            awake,
            h_base: self.h_base,
            v_base: self.v_base,
            gamma: self.gamma,
        });
    }

    fn push_trace(&mut self, t: SimTime, e: f64, u: f64) {
        self.trace.push(TraceRow {
            t,
            mode: self.mode,
            e_hl_s: e,
            u_hl_s: u,
            gamma_ppm: self.gamma * 1e6,
            offset_ticks: self.offset_ticks.to_f64().unwrap(),
        });
    }

    /// Measures the offset over the next n_avg slow edges after `t` and
    /// anchors the virtual clock at the last averaged edge.
    fn resynchronize_offset(&mut self, t: SimTime) -> Result<SimTime, NodeError> {
        let offset = compute_offset(self.fast, self.slow, &self.cfg, t, self.params.n_avg)?;
        let anchor_edge = self.slow.count_edges(t) + u64::from(self.params.n_avg);
        let t_anchor = self.slow.edge_time(anchor_edge);
        let h_anchor = self.fast.count_edges(t_anchor);
        self.offset_ticks = offset;
        self.h_base = h_anchor as f64;
        self.v_base = offset.to_f64().unwrap() + h_anchor as f64;
        self.prev_boundary_fast_count = h_anchor;
        self.next_boundary_tick = anchor_edge + self.period_slow_ticks;
        Ok(t_anchor)
    }

    fn schedule_boundary(&mut self) {
        // corrections stop once the next boundary would land past the
        // scenario horizon; a run never advances beyond it anyway
        let max_tick = ((self.slow.horizon() + 0.25) * self.slow.f_nom() * (1.0 - 1e-3)) as u64;
        if self.next_boundary_tick > max_tick {
            return;
        }
        let t = self.slow.edge_time(self.next_boundary_tick);
        self.queue
            .schedule(t, NodeEvent::SkewUpdate { chain: self.chain })
            .expect("boundaries are always scheduled forward");
    }

    /// Powers the node up at `t`: both oscillators on, offset measured,
    /// controller zeroed, skew corrections scheduled every period. Deep sleep
    /// stays refused until the settle hold elapses.
    pub fn power_up(&mut self, t: SimTime) -> Result<(), NodeError> {
        if self.mode != NodeMode::PoweredOff {
            return Err(NodeError::DoublePowerUp);
        }
        self.controller.reset();
        self.e_prev = 0.0;
        self.u_prev = 0.0;
        self.gamma = 0.0;
        self.preserved_gamma = 0.0;
        self.resynchronize_offset(t)?;
        self.mode = NodeMode::Settling;
        self.powered_up_at = Some(t);
        self.corrections_since_wake = 0;
        self.schedule_boundary();
        self.push_segment(t, true);
        self.push_trace(t, 0.0, 0.0);
        Ok(())
    }

    /// Advances the node's event loop to `t`, executing skew corrections,
    /// wakeups and armed events on the way.
    pub fn run_until(&mut self, t: SimTime) {
        while let Some((at, ev)) = self.queue.pop_due(t) {
            self.dispatch(at, ev);
        }
    }

    fn dispatch(&mut self, t: SimTime, ev: NodeEvent) {
        match ev {
            NodeEvent::SkewUpdate { chain } => {
                if chain == self.chain && self.is_awake() {
                    self.skew_update(t);
                }
            }
            NodeEvent::Wakeup => {
                self.wakeup(t)
                    .expect("wakeup event only scheduled while sleeping");
            }
            NodeEvent::Timer { id, generation } => {
                let due = match self.pending.get(&id) {
                    Some(p) => p.generation == generation,
                    None => false,
                };
                if due && self.is_awake() {
                    let p = self.pending.remove(&id).unwrap();
                    let actual = self.reading_now(t);
                    self.fired.push(FiredEvent {
                        id,
                        kind: p.kind,
                        target_vht: p.target_vht,
                        fired_at: t,
                        actual_vht: actual,
                    });
                }
            }
        }
    }

    /// One skew-correction step at a period boundary: the slow compare fires
    /// at its (jittered) edge, the fast capture latches the count, the
    /// accumulated error is updated and the controller output becomes the new
    /// rate correction. Re-anchoring is continuous: the rate steps, never the
    /// phase.
    fn skew_update(&mut self, t: SimTime) {
        let h_k = self.fast.count_edges(t);
        let actual_s = (h_k - self.prev_boundary_fast_count) as f64 / self.cfg.f_h_hz() as f64;
        let e = self.e_prev - self.u_prev + (self.t_eff_s - actual_s);
        let u = self.controller.step(e);

        // continuous re-anchor, then step the rate
        self.v_base += (h_k as f64 - self.h_base) * (1.0 + self.gamma);
        self.h_base = h_k as f64;
        self.gamma = u / self.t_eff_s;

        self.e_prev = e;
        self.u_prev = u;
        self.prev_boundary_fast_count = h_k;
        self.corrections_since_wake += 1;

        if self.mode == NodeMode::Settling {
            let held = t - self.powered_up_at.expect("powered up");
            if held >= self.params.settle_hold_s {
                self.mode = NodeMode::Active;
            }
        }

        self.push_segment(t, true);
        self.push_trace(t, e, u);

        self.rearm_pending(t);

        self.next_boundary_tick += self.period_slow_ticks;
        self.schedule_boundary();
    }

    /// Recomputes the compare value of every pending event under the shifted
    /// mapping; without this, long-horizon events would fire off-target by
    /// the accumulated correction.
    fn rearm_pending(&mut self, now: SimTime) {
        let ids: Vec<u64> = self.pending.keys().copied().collect();
        for id in ids {
            let p = self.pending.get_mut(&id).unwrap();
            p.generation += 1;
            let generation = p.generation;
            let target = p.target_vht;
            let fire_t = self.compare_instant(now, target);
            self.queue
                .schedule(fire_t, NodeEvent::Timer { id, generation })
                .expect("re-armed events are in the future");
        }
    }

    /// Fast-compare instant for a virtual-time target under the current
    /// mapping: the edge whose reading is nearest the target, clamped to the
    /// next edge if the target is imminent.
    fn compare_instant(&self, now: SimTime, target_vht: i64) -> SimTime {
        let h_exact = self.h_base + (target_vht as f64 - self.v_base) / (1.0 + self.gamma);
        let h_now = self.fast.count_edges(now);
        let h_target = (h_exact.round() as u64).max(h_now + 1);
        self.fast.edge_time(h_target)
    }

    fn reading_now(&self, t: SimTime) -> i64 {
        let h = self.fast.count_edges(t) as f64;
        (self.v_base + (h - self.h_base) * (1.0 + self.gamma)).round() as i64
    }

    /// Current virtual time in fast-nominal ticks. Monotone nondecreasing
    /// across corrections, sleeps and wakeups.
    pub fn get_time(&mut self, t: SimTime) -> Result<i64, NodeError> {
        self.run_until(t);
        if !self.is_awake() {
            return Err(NodeError::NotAwake);
        }
        Ok(self.reading_now(t))
    }

    /// Timestamp of an external event: one fast capture mapped through the
    /// virtual clock.
    pub fn get_hw_event_timestamp(&mut self, t_event: SimTime) -> Result<i64, NodeError> {
        self.run_until(t_event);
        if !self.is_awake() {
            return Err(NodeError::NotAwake);
        }
        Ok(self.reading_now(t_event))
    }

    /// Arms an event (interrupt or hardware output line) for a virtual-time
    /// target; the compare value is recomputed after every skew correction so
    /// the event lands within a tick of the target.
    pub fn set_event(
        &mut self,
        now: SimTime,
        target_vht: i64,
        kind: EventKind,
    ) -> Result<u64, NodeError> {
        self.run_until(now);
        if !self.is_awake() {
            return Err(NodeError::NotAwake);
        }
        let current = self.reading_now(now);
        if target_vht <= current {
            return Err(NodeError::TargetInPast {
                target: target_vht,
                now: current,
            });
        }
        if target_vht as f64 / self.cfg.f_h_hz() as f64 > self.slow.horizon() {
            return Err(NodeError::BeyondHorizon);
        }
        let id = self.next_event_id;
        self.next_event_id += 1;
        self.pending.insert(
            id,
            PendingEvent {
                target_vht,
                kind,
                generation: 0,
            },
        );
        let fire_t = self.compare_instant(now, target_vht);
        self.queue
            .schedule(fire_t, NodeEvent::Timer { id, generation: 0 })
            .expect("validated future target");
        Ok(id)
    }

    /// Arms a hardware output line (rising edge external to the CPU) for a
    /// virtual-time target.
    pub fn set_hw_event(&mut self, now: SimTime, target_vht: i64) -> Result<u64, NodeError> {
        self.set_event(now, target_vht, EventKind::HardwareOutput)
    }

    /// Enters deep sleep (fast oscillator off) until the virtual clock
    /// reaches `wake_at_vht`. The wake is a slow-clock compare; the last skew
    /// correction is preserved and reapplied on wakeup.
    pub fn enter_deep_sleep(&mut self, t: SimTime, wake_at_vht: i64) -> Result<SimTime, NodeError> {
        self.run_until(t);
        match self.mode {
            NodeMode::Active => {}
            NodeMode::Settling => {
                let held = t - self.powered_up_at.expect("powered up");
                return Err(NodeError::StillSettling {
                    remaining_s: self.params.settle_hold_s - held,
                });
            }
            _ => return Err(NodeError::NotAwake),
        }
        if self.corrections_since_wake < self.params.min_active_periods {
            return Err(NodeError::ForcedActiveWindow);
        }
        if !self.pending.is_empty() {
            return Err(NodeError::PendingEvents);
        }
        // wake on the slow tick whose master time covers the target
        let wake_tick_ratio = Ratio::from_integer(wake_at_vht as i128)
            * Ratio::new(self.cfg.f_l_hz() as i128, self.cfg.f_h_hz() as i128);
        let wake_tick = wake_tick_ratio.ceil().to_integer().to_u64().unwrap_or(0);
        if wake_tick <= self.slow.count_edges(t) + 1 {
            return Err(NodeError::WakeTooSoon);
        }
        if wake_tick as f64 / self.slow.f_nom() > self.slow.horizon() {
            return Err(NodeError::BeyondHorizon);
        }
        let t_wake = self.slow.edge_time(wake_tick);
        self.preserved_gamma = self.gamma;
        self.chain += 1; // orphan any in-flight correction boundary
        self.mode = NodeMode::DeepSleep;
        self.queue
            .schedule(t_wake, NodeEvent::Wakeup)
            .expect("wake is in the future");
        self.push_segment(t, false);
        self.push_trace(t, self.e_prev, self.u_prev);
        Ok(t_wake)
    }

    /// Leaves deep sleep: fast oscillator back on, offset re-measured, the
    /// preserved rate correction applied immediately (no re-settling), and
    /// the node forced active for at least one correction period.
    fn wakeup(&mut self, t: SimTime) -> Result<(), NodeError> {
        if self.mode != NodeMode::DeepSleep {
            return Err(NodeError::NotSleeping);
        }
        self.resynchronize_offset(t)?;
        self.gamma = self.preserved_gamma;
        // the offset resync re-zeroes the observable phase error; the
        // controller keeps its rate memory so steady state carries through
        self.e_prev = 0.0;
        self.controller.clear_error_history();
        self.mode = NodeMode::Active;
        self.corrections_since_wake = 0;
        self.chain += 1;
        self.schedule_boundary();
        self.push_segment(t, true);
        self.push_trace(t, 0.0, self.u_prev);
        Ok(())
    }

    /// Offline reading at any past instant, using the recorded mapping
    /// history. None while powered off or asleep. Only meaningful for
    /// t at or before the last time the node was advanced to.
    pub fn reading_at(&self, t: SimTime) -> Option<i64> {
        let seg = locate_segment(&self.segments, t)?;
        if !seg.awake {
            return None;
        }
        Some(seg.reading(self.fast.count_edges(t) as f64).round() as i64)
    }
}

/// Last segment starting at or before t.
pub fn locate_segment(segments: &[Segment], t: SimTime) -> Option<&Segment> {
    if segments.is_empty() || t < segments[0].from_t {
        return None;
    }
    let idx = segments.partition_point(|s| s.from_t <= t);
    Some(&segments[idx - 1])
}
