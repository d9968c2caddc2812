//! The original dual-timer VHT timestamping algorithm, its race condition,
//! and a census that separates race errors from jitter.

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive};
use thiserror::Error;

use crate::oscillator::Oscillator;
use crate::rng::{streams, CounterRng, RngKey};
use crate::stats::Summary;
use crate::time::SimTime;
use crate::timer::{edge_fed_capture_at, InterruptLatencyModel, TimerCounter};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VhtError {
    #[error("need f_h > f_l > 0, got f_h = {f_h}, f_l = {f_l}")]
    BadFrequencies { f_h: u64, f_l: u64 },
}

/// Fast/slow clock pair; the ratio phi0 = f_h / f_l is kept as the integer
/// pair and never as a rounded real.
#[derive(Debug, Clone, Copy)]
pub struct VhtConfig {
    f_h_hz: u64,
    f_l_hz: u64,
}

impl VhtConfig {
    pub fn new(f_h_hz: u64, f_l_hz: u64) -> Result<Self, VhtError> {
        if f_l_hz == 0 || f_h_hz <= f_l_hz {
            return Err(VhtError::BadFrequencies {
                f_h: f_h_hz,
                f_l: f_l_hz,
            });
        }
        Ok(VhtConfig { f_h_hz, f_l_hz })
    }

    pub fn f_h_hz(&self) -> u64 {
        self.f_h_hz
    }

    pub fn f_l_hz(&self) -> u64 {
        self.f_l_hz
    }

    /// phi0 = f_h / f_l, exact.
    pub fn phi0(&self) -> Ratio<i128> {
        Ratio::new(self.f_h_hz as i128, self.f_l_hz as i128)
    }

    pub fn phi0_f64(&self) -> f64 {
        self.f_h_hz as f64 / self.f_l_hz as f64
    }

    /// One fast tick, seconds.
    pub fn fast_tick_s(&self) -> f64 {
        1.0 / self.f_h_hz as f64
    }

    /// One slow tick, seconds.
    pub fn slow_tick_s(&self) -> f64 {
        1.0 / self.f_l_hz as f64
    }
}

/// The three captured values the ISR reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaptureReadings {
    /// slow-timer capture of the event
    pub l0: u64,
    /// fast-timer capture of the last slow edge, as seen by the ISR
    pub h0: u64,
    /// fast-timer capture of the event
    pub h1: u64,
}

fn euclid_mod(a: Ratio<i128>, m: Ratio<i128>) -> Ratio<i128> {
    let r = a - (a / m).floor() * m;
    debug_assert!(!r.is_negative() && r < m);
    r
}

/// timestamp = l0 * phi0 + ((h1 - h0) mod phi0), evaluated in exact rational
/// arithmetic and rounded to the nearest fast tick. The mod is Euclidean, so
/// captures reversed by a late ISR read still land in [0, phi0).
pub fn original_vht_timestamp(r: &CaptureReadings, cfg: &VhtConfig) -> i64 {
    let phi0 = cfg.phi0();
    let diff = Ratio::from_integer(r.h1 as i128 - r.h0 as i128);
    let ticks = Ratio::from_integer(r.l0 as i128) * phi0 + euclid_mod(diff, phi0);
    ticks
        .round()
        .to_integer()
        .to_i64()
        .expect("timestamp fits in i64")
}

/// One timestamped event with its ground truth.
#[derive(Debug, Clone, Copy)]
pub struct TimestampOutcome {
    pub t_event: SimTime,
    pub readings: CaptureReadings,
    pub vht_ticks: i64,
    /// slow-timeline time of the event in fast ticks (slow phase * phi0,
    /// rounded)
    pub truth_ticks: i64,
    pub error_s: f64,
    /// |vht - truth| exceeded phi0/2 ticks
    pub race: bool,
    /// a slow edge slipped in between the event and the ISR read, so h0
    /// belongs to a later edge than the event's
    pub h0_overwritten: bool,
}

/// Census over an event list: races counted and characterized, jitter
/// statistics over the clean population.
#[derive(Debug, Clone)]
pub struct RaceCensus {
    pub total: usize,
    pub races: usize,
    pub race_fraction: f64,
    /// events whose h0 capture was overwritten before the ISR read
    pub overwrites: usize,
    pub overwrite_fraction: f64,
    pub race_magnitude_mean_s: f64,
    pub race_magnitude_min_s: f64,
    pub race_magnitude_max_s: f64,
    /// error statistics of the non-race population, seconds
    pub non_race: Summary,
}

/// Two timers, three capture channels, one latency model: the full original
/// VHT timestamping setup on emulated hardware.
pub struct OriginalVhtSim<'a> {
    slow: &'a Oscillator,
    fast_timer: TimerCounter<'a>,
    slow_timer: TimerCounter<'a>,
    latency: InterruptLatencyModel,
    cfg: VhtConfig,
    rng: CounterRng,
    latency_stream: u64,
}

impl<'a> OriginalVhtSim<'a> {
    pub fn new(
        fast: &'a Oscillator,
        slow: &'a Oscillator,
        latency: InterruptLatencyModel,
        seed: u64,
    ) -> Result<Self, VhtError> {
        let cfg = VhtConfig::new(fast.f_nom_hz(), slow.f_nom_hz())?;
        Ok(OriginalVhtSim {
            slow,
            fast_timer: TimerCounter::new(fast),
            slow_timer: TimerCounter::new(slow),
            latency,
            cfg,
            rng: CounterRng::new(seed),
            latency_stream: streams::isr_latency(0),
        })
    }

    pub fn config(&self) -> &VhtConfig {
        &self.cfg
    }

    /// Timestamps an event: captures h1 and l0 at the event instant, lets the
    /// ISR read h0 after its latency (so an intervening slow edge overwrites
    /// it), applies the timestamp formula and compares against ground truth.
    pub fn timestamp_event(&self, t_event: SimTime, event_idx: u64) -> TimestampOutcome {
        let h1 = self.fast_timer.read(t_event).expect("fast timer running");
        let l0 = self.slow_timer.read(t_event).expect("slow timer running");

        let t_isr = self.latency.isr_read_time(
            t_event,
            &self.rng,
            RngKey::new(self.latency_stream, event_idx),
        );
        let h0 = edge_fed_capture_at(&self.fast_timer, self.slow, t_isr)
            .expect("fast timer running")
            .unwrap_or(0);
        let h0_overwritten = self.slow.count_edges(t_isr) > l0;

        let readings = CaptureReadings { l0, h0, h1 };
        let vht_ticks = original_vht_timestamp(&readings, &self.cfg);

        let truth_ticks = (self.slow.phase(t_event) * self.cfg.phi0_f64()).round() as i64;
        let error_ticks = vht_ticks - truth_ticks;
        let error_s = error_ticks as f64 * self.cfg.fast_tick_s();
        let race = (error_ticks.abs() as f64) > self.cfg.phi0_f64() / 2.0;

        TimestampOutcome {
            t_event,
            readings,
            vht_ticks,
            truth_ticks,
            error_s,
            race,
            h0_overwritten,
        }
    }

    pub fn timestamp_events(&self, events: &[SimTime]) -> Vec<TimestampOutcome> {
        events
            .iter()
            .enumerate()
            .map(|(i, &t)| self.timestamp_event(t, i as u64))
            .collect()
    }

    /// Separates race errors from the jitter population, the way the original
    /// measurements removed the 30.5 us peaks before quoting jitter.
    pub fn race_census(&self, events: &[SimTime]) -> RaceCensus {
        census(&self.timestamp_events(events))
    }
}

/// Census over already-computed outcomes.
pub fn census(outcomes: &[TimestampOutcome]) -> RaceCensus {
    let total = outcomes.len();
    let races: Vec<&TimestampOutcome> = outcomes.iter().filter(|o| o.race).collect();
    let overwrites = outcomes.iter().filter(|o| o.h0_overwritten).count();
    let mags: Vec<f64> = races.iter().map(|o| o.error_s.abs()).collect();
    let non_race = Summary::of(outcomes.iter().filter(|o| !o.race).map(|o| o.error_s));
    let mag_summary = Summary::of(mags.iter().copied());
    RaceCensus {
        total,
        races: races.len(),
        race_fraction: races.len() as f64 / total.max(1) as f64,
        overwrites,
        overwrite_fraction: overwrites as f64 / total.max(1) as f64,
        race_magnitude_mean_s: mag_summary.mean,
        race_magnitude_min_s: mag_summary.min,
        race_magnitude_max_s: mag_summary.max,
        non_race,
    }
}

/// Uniformly placed events over [0, horizon), sorted, deterministic per seed.
pub fn uniform_events(rng: &CounterRng, tag: u32, count: usize, horizon: f64) -> Vec<SimTime> {
    let stream = streams::event_placement(tag);
    let mut ts: Vec<f64> = (0..count)
        .map(|i| rng.uniform(RngKey::new(stream, i as u64)) * horizon)
        .collect();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.into_iter().map(SimTime::new).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oscillator::OscillatorSpec;

    fn cfg10() -> VhtConfig {
        VhtConfig::new(10, 1).unwrap()
    }

    #[test]
    fn race_zero_latency_variant() {
        // phi0 = 10, event at the coincidence tick: 10 mod 10 is 0 and the
        // wrong timestamp 10 comes out instead of 20.
        let r = CaptureReadings {
            l0: 1,
            h0: 1,
            h1: 11,
        };
        assert_eq!(original_vht_timestamp(&r, &cfg10()), 10);
    }

    #[test]
    fn race_overwritten_h0_variant() {
        // same event, but the ISR saw h0 already overwritten to 11
        let r = CaptureReadings {
            l0: 1,
            h0: 11,
            h1: 11,
        };
        assert_eq!(original_vht_timestamp(&r, &cfg10()), 10);
    }

    #[test]
    fn reversed_capture_rescued_by_mod() {
        // (19 - 20) mod 10 = 9, 10 + 9 = 19
        let r = CaptureReadings {
            l0: 1,
            h0: 20,
            h1: 19,
        };
        assert_eq!(original_vht_timestamp(&r, &cfg10()), 19);
    }

    #[test]
    fn non_integer_ratio_is_exact() {
        let cfg = VhtConfig::new(48_000_000, 32768).unwrap();
        // phi0 = 46875/32; l0 * phi0 must not lose precision
        let r = CaptureReadings {
            l0: 32,
            h0: 0,
            h1: 0,
        };
        assert_eq!(original_vht_timestamp(&r, &cfg), 46875);
    }

    fn ideal_pair(f_h: u64, f_l: u64) -> (Oscillator, Oscillator) {
        let fast = Oscillator::new(OscillatorSpec::ideal(0, f_h), 1, 100.0).unwrap();
        let slow = Oscillator::new(OscillatorSpec::ideal(1, f_l), 1, 100.0).unwrap();
        (fast, slow)
    }

    #[test]
    fn clean_case_matches_truth() {
        // integer ratio 10, zero latency, event 3.3 fast periods after slow
        // edge 1: vht = truth = 13
        let (fast, slow) = ideal_pair(10, 1);
        let sim = OriginalVhtSim::new(&fast, &slow, InterruptLatencyModel::zero(), 1).unwrap();
        let out = sim.timestamp_event(SimTime::new(1.33), 0);
        assert_eq!(out.vht_ticks, 13);
        assert_eq!(out.truth_ticks, 13);
        assert!(!out.race);
    }

    #[test]
    fn exact_when_no_noise_and_off_boundary() {
        // zero jitter, zero latency, integer phi0; events placed mid-tick and
        // away from the one-tick mod-boundary window are exact
        let (fast, slow) = ideal_pair(1000, 100);
        let sim = OriginalVhtSim::new(&fast, &slow, InterruptLatencyModel::zero(), 1).unwrap();
        for m in 1..200u64 {
            for k in [1u64, 4, 8] {
                // event in slow period m, k fast ticks after the edge, at 30%
                // of a fast tick (floor == round territory, not boundary)
                let t = SimTime::new(m as f64 / 100.0 + (k as f64 + 0.3) / 1000.0);
                let out = sim.timestamp_event(t, m * 10 + k);
                assert_eq!(out.vht_ticks, out.truth_ticks, "t = {t}");
            }
        }
    }

    #[test]
    fn race_census_zero_noise_mid_period_has_no_races() {
        let (fast, slow) = ideal_pair(1000, 100);
        let sim = OriginalVhtSim::new(&fast, &slow, InterruptLatencyModel::zero(), 1).unwrap();
        let events: Vec<SimTime> = (1..500u64)
            .map(|m| SimTime::new(m as f64 / 100.0 + 4.3 / 1000.0))
            .collect();
        let c = sim.race_census(&events);
        assert_eq!(c.races, 0);
    }

    #[test]
    fn overwrite_fraction_matches_latency_window() {
        // fixed 2 us latency: the slow edge overwrites h0 whenever the event
        // falls within the last 2 us of a slow period -> latency/period
        let fast = Oscillator::new(OscillatorSpec::ideal(0, 48_000_000), 3, 100.0).unwrap();
        let slow =
            Oscillator::new(OscillatorSpec::ideal(1, 32768).with_jitter(60e-9), 3, 100.0).unwrap();
        let lat = InterruptLatencyModel::new(2e-6, 0.0);
        let sim = OriginalVhtSim::new(&fast, &slow, lat, 3).unwrap();
        let rng = CounterRng::new(3);
        let events = uniform_events(&rng, 0, 20_000, 100.0);
        let c = sim.race_census(&events);
        let predicted = 2e-6 * 32768.0; // 6.55%
        assert!(
            (c.overwrite_fraction - predicted).abs() < 0.01,
            "overwrite fraction {} vs {}",
            c.overwrite_fraction,
            predicted
        );
        // corrupted timestamps are the same-tick coincidences: rare
        assert!(c.race_fraction < 0.01, "race fraction {}", c.race_fraction);
        // and their magnitude is one slow tick
        if c.races > 0 {
            let slow_tick = 1.0 / 32768.0;
            assert!(
                (c.race_magnitude_mean_s - slow_tick).abs() <= 1.0 / 48e6,
                "race magnitude mean {}",
                c.race_magnitude_mean_s
            );
        }
        // the central negative result: timestamping never attenuates the
        // slow clock's jitter (truncated-sample std is 59.2 ns)
        assert!(
            c.non_race.std >= 60e-9 * 0.986587 * 0.99,
            "non-race std {} fell below the slow-clock jitter",
            c.non_race.std
        );
    }

    #[test]
    fn quantization_floor_with_jitter_disabled() {
        // No jitter, no latency: what remains is pure quantization. With
        // phi0 = 46875/32 the timestamp comes out as (integer + frac(m*phi0))
        // and rounds to the nearest tick, a Bernoulli(1/2) half-tick; the
        // rounded ground truth contributes an independent second one:
        // var = 1/4 + 1/4 ticks^2, std = sqrt(1/2) * 20.83 ns = 14.73 ns.
        let fast = Oscillator::new(OscillatorSpec::ideal(0, 48_000_000), 11, 100.0).unwrap();
        let slow = Oscillator::new(OscillatorSpec::ideal(1, 32768), 11, 100.0).unwrap();
        let sim = OriginalVhtSim::new(&fast, &slow, InterruptLatencyModel::zero(), 11).unwrap();
        let rng = CounterRng::new(11);
        let events = uniform_events(&rng, 2, 40_000, 100.0);
        let c = sim.race_census(&events);
        let tick = 1.0 / 48e6;
        let oracle = 0.5f64.sqrt() * tick;
        assert!(
            (c.non_race.std - oracle).abs() < 0.03 * oracle,
            "quantization floor {} vs oracle {}",
            c.non_race.std,
            oracle
        );
    }

    #[test]
    fn timestamps_nondecreasing_for_clean_events() {
        let fast = Oscillator::new(OscillatorSpec::ideal(0, 48_000_000), 5, 100.0).unwrap();
        let slow =
            Oscillator::new(OscillatorSpec::ideal(1, 32768).with_jitter(60e-9), 5, 100.0).unwrap();
        let sim = OriginalVhtSim::new(&fast, &slow, InterruptLatencyModel::zero(), 5).unwrap();
        let rng = CounterRng::new(5);
        let events = uniform_events(&rng, 1, 5_000, 50.0);
        let outs = sim.timestamp_events(&events);
        let mut prev = i64::MIN;
        for o in outs.iter().filter(|o| !o.race) {
            assert!(o.vht_ticks >= prev);
            prev = o.vht_ticks;
        }
    }
}
