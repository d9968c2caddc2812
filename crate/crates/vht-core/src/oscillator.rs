//! Continuous-phase crystal oscillator model with skew, per-edge jitter and
//! wander. Answers "when is edge n" and "how many edges by time t" in O(1).

use thiserror::Error;

use crate::rng::{streams, CounterRng, RngKey};
use crate::time::{SimTime, MAX_HORIZON_S};

/// Sanity bound on the systematic skew profile; crystals are tens of ppm.
pub const MAX_SKEW_PPM: f64 = 500.0;
/// Hard cap on profile + wander combined, used by the edge-window argument.
const MAX_COMBINED_PPM: f64 = 600.0;

/// Deterministic frequency-error profile in parts per million.
#[derive(Debug, Clone, PartialEq)]
pub enum SkewProfile {
    Constant {
        ppm: f64,
    },
    Ramp {
        base_ppm: f64,
        slope_ppm_per_s: f64,
    },
    Sinusoid {
        base_ppm: f64,
        amplitude_ppm: f64,
        period_s: f64,
    },
    /// Linear interpolation between (time, ppm) breakpoints, held constant
    /// before the first and after the last.
    PiecewiseLinear {
        points: Vec<(f64, f64)>,
    },
}

impl SkewProfile {
    pub fn zero() -> Self {
        SkewProfile::Constant { ppm: 0.0 }
    }

    /// Instantaneous skew s(t) in ppm.
    pub fn value(&self, t: f64) -> f64 {
        match self {
            SkewProfile::Constant { ppm } => *ppm,
            SkewProfile::Ramp {
                base_ppm,
                slope_ppm_per_s,
            } => base_ppm + slope_ppm_per_s * t,
            SkewProfile::Sinusoid {
                base_ppm,
                amplitude_ppm,
                period_s,
            } => base_ppm + amplitude_ppm * (2.0 * std::f64::consts::PI * t / period_s).sin(),
            SkewProfile::PiecewiseLinear { points } => {
                if points.is_empty() {
                    return 0.0;
                }
                if t <= points[0].0 {
                    return points[0].1;
                }
                for w in points.windows(2) {
                    let (t0, s0) = w[0];
                    let (t1, s1) = w[1];
                    if t <= t1 {
                        return s0 + (s1 - s0) * (t - t0) / (t1 - t0);
                    }
                }
                points.last().unwrap().1
            }
        }
    }

    /// Closed-form integral of s over [0, t], in ppm*s.
    pub fn integral(&self, t: f64) -> f64 {
        match self {
            SkewProfile::Constant { ppm } => ppm * t,
            SkewProfile::Ramp {
                base_ppm,
                slope_ppm_per_s,
            } => base_ppm * t + 0.5 * slope_ppm_per_s * t * t,
            SkewProfile::Sinusoid {
                base_ppm,
                amplitude_ppm,
                period_s,
            } => {
                let w = 2.0 * std::f64::consts::PI / period_s;
                base_ppm * t + amplitude_ppm / w * (1.0 - (w * t).cos())
            }
            SkewProfile::PiecewiseLinear { points } => {
                if points.is_empty() {
                    return 0.0;
                }
                let mut acc = 0.0;
                let mut prev_t = 0.0;
                let mut prev_s = points[0].1;
                // flat section before the first breakpoint
                for &(ti, si) in points {
                    if ti <= prev_t {
                        prev_s = si;
                        continue;
                    }
                    let seg_end = ti.min(t);
                    if seg_end > prev_t {
                        let s_end = self.value(seg_end);
                        acc += 0.5 * (prev_s + s_end) * (seg_end - prev_t);
                        prev_t = seg_end;
                    }
                    prev_s = si;
                    if prev_t >= t {
                        return acc;
                    }
                }
                // flat tail after the last breakpoint
                if t > prev_t {
                    acc += prev_s * (t - prev_t);
                }
                acc
            }
        }
    }

    /// Upper bound on |s(t)| over [0, horizon].
    fn max_abs(&self, horizon: f64) -> f64 {
        match self {
            SkewProfile::Constant { ppm } => ppm.abs(),
            SkewProfile::Ramp {
                base_ppm,
                slope_ppm_per_s,
            } => base_ppm
                .abs()
                .max((base_ppm + slope_ppm_per_s * horizon).abs()),
            SkewProfile::Sinusoid {
                base_ppm,
                amplitude_ppm,
                ..
            } => base_ppm.abs() + amplitude_ppm.abs(),
            SkewProfile::PiecewiseLinear { points } => {
                points.iter().map(|&(_, s)| s.abs()).fold(0.0, f64::max)
            }
        }
    }
}

/// Static description of one oscillator, as read from a scenario.
#[derive(Debug, Clone)]
pub struct OscillatorSpec {
    pub id: u32,
    /// Nominal frequency in Hz, exact integer.
    pub f_nom_hz: u64,
    pub skew: SkewProfile,
    /// Per-edge Gaussian jitter (truncated at 3 sigma), seconds.
    pub jitter_std_s: f64,
    /// Random-walk skew step per wander grid interval, ppm.
    pub wander_std_ppm: f64,
    /// Wander grid spacing, seconds.
    pub wander_grid_s: f64,
}

impl OscillatorSpec {
    /// An ideal oscillator at `f_nom_hz` with no nonidealities.
    pub fn ideal(id: u32, f_nom_hz: u64) -> Self {
        OscillatorSpec {
            id,
            f_nom_hz,
            skew: SkewProfile::zero(),
            jitter_std_s: 0.0,
            wander_std_ppm: 0.0,
            wander_grid_s: 0.1,
        }
    }

    pub fn with_jitter(mut self, jitter_std_s: f64) -> Self {
        self.jitter_std_s = jitter_std_s;
        self
    }

    pub fn with_skew(mut self, skew: SkewProfile) -> Self {
        self.skew = skew;
        self
    }

    pub fn with_wander(mut self, std_ppm: f64, grid_s: f64) -> Self {
        self.wander_std_ppm = std_ppm;
        self.wander_grid_s = grid_s;
        self
    }
}

#[derive(Debug, Error)]
pub enum OscillatorError {
    #[error("invalid oscillator spec: {0}")]
    InvalidSpec(String),
}

/// Piecewise-linear random-walk skew on a coarse grid, precomputed over the
/// horizon so phase evaluation stays pure and O(1).
#[derive(Debug, Clone)]
struct WanderTable {
    grid_s: f64,
    /// skew value at grid point k, ppm
    values: Vec<f64>,
    /// integral of the walk over [0, k*grid], ppm*s
    integrals: Vec<f64>,
}

impl WanderTable {
    fn build(rng: &CounterRng, osc_id: u32, std_ppm: f64, grid_s: f64, horizon: f64) -> Self {
        // covers the tolerated query margin past the horizon
        let n = ((horizon + 2.0) / grid_s).ceil() as usize + 2;
        let stream = streams::wander(osc_id);
        let mut values = Vec::with_capacity(n + 1);
        let mut integrals = Vec::with_capacity(n + 1);
        values.push(0.0);
        integrals.push(0.0);
        for k in 1..=n {
            let step = rng.gaussian(RngKey::new(stream, k as u64), 0.0, std_ppm);
            let v = values[k - 1] + step;
            values.push(v);
            integrals.push(integrals[k - 1] + 0.5 * (values[k - 1] + v) * grid_s);
        }
        WanderTable {
            grid_s,
            values,
            integrals,
        }
    }

    fn value(&self, t: f64) -> f64 {
        let k = (t / self.grid_s) as usize;
        let k = k.min(self.values.len() - 2);
        let frac = (t - k as f64 * self.grid_s) / self.grid_s;
        self.values[k] + (self.values[k + 1] - self.values[k]) * frac
    }

    fn integral(&self, t: f64) -> f64 {
        let k = (t / self.grid_s) as usize;
        let k = k.min(self.values.len() - 2);
        let t0 = k as f64 * self.grid_s;
        self.integrals[k] + 0.5 * (self.values[k] + self.value(t)) * (t - t0)
    }

    fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Runtime oscillator: spec + seed + horizon, with wander realized.
#[derive(Debug, Clone)]
pub struct Oscillator {
    spec: OscillatorSpec,
    f_nom: f64,
    rng: CounterRng,
    jitter_stream: u64,
    horizon: f64,
    wander: Option<WanderTable>,
}

impl Oscillator {
    pub fn new(spec: OscillatorSpec, seed: u64, horizon: f64) -> Result<Self, OscillatorError> {
        if spec.f_nom_hz == 0 {
            return Err(OscillatorError::InvalidSpec(
                "f_nom must be positive".into(),
            ));
        }
        if !(0.0..MAX_HORIZON_S + 1.0).contains(&horizon) {
            return Err(OscillatorError::InvalidSpec(format!(
                "horizon {horizon} s exceeds the {MAX_HORIZON_S} s cap"
            )));
        }
        if spec.jitter_std_s < 0.0 {
            return Err(OscillatorError::InvalidSpec(
                "jitter_std must be >= 0".into(),
            ));
        }
        let period = 1.0 / spec.f_nom_hz as f64;
        if 3.0 * spec.jitter_std_s >= 0.45 * period {
            return Err(OscillatorError::InvalidSpec(format!(
                "3*jitter_std = {} must stay below 0.45 periods = {} to keep edges ordered",
                3.0 * spec.jitter_std_s,
                0.45 * period
            )));
        }
        if spec.skew.max_abs(horizon) > MAX_SKEW_PPM {
            return Err(OscillatorError::InvalidSpec(format!(
                "skew profile exceeds the {MAX_SKEW_PPM} ppm sanity bound"
            )));
        }
        if spec.wander_std_ppm < 0.0 || spec.wander_grid_s <= 0.0 {
            return Err(OscillatorError::InvalidSpec("bad wander parameters".into()));
        }
        let rng = CounterRng::new(seed);
        let wander = if spec.wander_std_ppm > 0.0 {
            let table = WanderTable::build(
                &rng,
                spec.id,
                spec.wander_std_ppm,
                spec.wander_grid_s,
                horizon,
            );
            if spec.skew.max_abs(horizon) + table.max_abs() > MAX_COMBINED_PPM {
                return Err(OscillatorError::InvalidSpec(format!(
                    "skew plus realized wander exceeds {MAX_COMBINED_PPM} ppm"
                )));
            }
            Some(table)
        } else {
            None
        };
        Ok(Oscillator {
            f_nom: spec.f_nom_hz as f64,
            jitter_stream: streams::edge_jitter(spec.id),
            rng,
            horizon,
            spec,
            wander,
        })
    }

    pub fn spec(&self) -> &OscillatorSpec {
        &self.spec
    }

    pub fn f_nom_hz(&self) -> u64 {
        self.spec.f_nom_hz
    }

    pub fn f_nom(&self) -> f64 {
        self.f_nom
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Effective skew (profile + wander) at t, ppm.
    pub fn skew_at(&self, t: f64) -> f64 {
        let mut s = self.spec.skew.value(t);
        if let Some(w) = &self.wander {
            s += w.value(t);
        }
        s
    }

    /// Oscillator phase in cycles: Theta(t) = f_nom * (t + 1e-6 * integral of
    /// the effective skew). Strictly increasing in t.
    ///
    /// # Panics
    /// Panics if `t` lies beyond the scenario horizon (contract violation).
    /// A bounded margin past the horizon is tolerated: counting edges at the
    /// horizon probes one edge beyond it, and schedulers park events slightly
    /// past the end of a run. The wander table extends over the margin.
    pub fn phase(&self, t: SimTime) -> f64 {
        let t = t.seconds();
        assert!(
            t <= self.horizon * 1.000001 + 1.0 + 2.0 / self.f_nom,
            "phase query at {t} beyond horizon {}",
            self.horizon
        );
        let mut integral = self.spec.skew.integral(t);
        if let Some(w) = &self.wander {
            integral += w.integral(t);
        }
        self.f_nom * (t + 1e-6 * integral)
    }

    fn phase_derivative(&self, t: f64) -> f64 {
        self.f_nom * (1.0 + 1e-6 * self.skew_at(t))
    }

    /// Inverse of `phase`: the time at which the (jitter-free) phase reaches
    /// `cycles`. Newton iteration; with skews of at most a few hundred ppm it
    /// converges to floating-point resolution in 2-4 steps.
    pub fn phase_inverse(&self, cycles: f64) -> f64 {
        let mut t = cycles / self.f_nom;
        for _ in 0..12 {
            let residual = self.phase(SimTime::new(t.max(0.0))) - cycles;
            let step = residual / self.phase_derivative(t.max(0.0));
            t -= step;
            if step.abs() <= t.abs() * 1e-16 + 1e-18 {
                break;
            }
        }
        t.max(0.0)
    }

    /// Jitter displacement of edge n, seconds. Deterministic per (seed, id, n).
    fn edge_jitter(&self, n: u64) -> f64 {
        self.rng.gaussian_truncated3(
            RngKey::new(self.jitter_stream, n),
            0.0,
            self.spec.jitter_std_s,
        )
    }

    /// Time of the n-th rising edge (n >= 1): unjittered position plus the
    /// per-edge displacement. Strictly increasing in n thanks to the
    /// 3*sigma < 0.45 period bound.
    pub fn edge_time(&self, n: u64) -> SimTime {
        assert!(n >= 1, "edges are numbered from 1");
        SimTime::new(self.phase_inverse(n as f64) + self.edge_jitter(n))
    }

    /// Jitter-free position of edge n (handy for jitter statistics).
    pub fn unjittered_edge_time(&self, n: u64) -> SimTime {
        assert!(n >= 1);
        SimTime::new(self.phase_inverse(n as f64))
    }

    /// Number of edges that occurred at or before t: max{n : E_n <= t}.
    ///
    /// The jitter bound guarantees the answer is within one of floor(phase),
    /// so only three candidates ever need checking.
    pub fn count_edges(&self, t: SimTime) -> u64 {
        let n0 = self.phase(t).floor() as i64;
        let mut cand = n0 + 1;
        while cand >= n0 - 1 {
            if cand >= 1 && self.edge_time(cand as u64) <= t {
                return cand as u64;
            }
            cand -= 1;
        }
        debug_assert!(n0 - 1 < 1, "window argument violated at t={t}");
        0
    }
}
