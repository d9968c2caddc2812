//! The naive jitter-compensated scheme: offset resynchronization on wakeup,
//! fast-clock-only timestamping, and the closed-form blended-skew error
//! predictor that motivates adding skew correction.

use num_rational::Ratio;
use num_traits::ToPrimitive;
use thiserror::Error;

use crate::original::VhtConfig;
use crate::oscillator::{Oscillator, SkewProfile};
use crate::time::SimTime;

#[derive(Debug, Error, PartialEq)]
pub enum NaiveVhtError {
    #[error("n_avg must be >= 1")]
    BadAveragingCount,
    #[error("averaging {n_avg} slow edges spans {span_us:.1} us, over the 500 us wakeup budget")]
    AveragingBudget { n_avg: u32, span_us: f64 },
    #[error("time queried while the node is asleep")]
    Asleep,
    #[error("query at {t} precedes the wakeup at {t_w}")]
    BeforeWakeup { t: SimTime, t_w: SimTime },
}

/// Wakeup-time averaging span must stay within the 500 us budget.
pub const OFFSET_BUDGET_S: f64 = 500e-6;

/// Checks the n_avg configuration against the budget for a given slow clock.
pub fn validate_n_avg(n_avg: u32, f_l_hz: u64) -> Result<(), NaiveVhtError> {
    if n_avg < 1 {
        return Err(NaiveVhtError::BadAveragingCount);
    }
    let span = n_avg as f64 / f_l_hz as f64;
    if span > OFFSET_BUDGET_S {
        return Err(NaiveVhtError::AveragingBudget {
            n_avg,
            span_us: span * 1e6,
        });
    }
    Ok(())
}

/// One offset sample: l0 * phi0 - h0, exact in fast ticks.
pub fn offset_term(l0: u64, h0: u64, cfg: &VhtConfig) -> Ratio<i128> {
    Ratio::from_integer(l0 as i128) * cfg.phi0() - Ratio::from_integer(h0 as i128)
}

/// Mean of (l0 * phi0 - h0) over `n_avg` consecutive slow edges starting with
/// the first edge after `t_w`, each h0 captured by the fast timer at the
/// jittered edge instant. Exact rational fast ticks.
///
/// The 500 us budget on the averaging span is a scenario-level constraint
/// (see [`validate_n_avg`]); the arithmetic itself only needs n_avg >= 1.
pub fn compute_offset(
    fast: &Oscillator,
    slow: &Oscillator,
    cfg: &VhtConfig,
    t_w: SimTime,
    n_avg: u32,
) -> Result<Ratio<i128>, NaiveVhtError> {
    if n_avg < 1 {
        return Err(NaiveVhtError::BadAveragingCount);
    }
    let first_edge = slow.count_edges(t_w) + 1;
    let mut acc = Ratio::from_integer(0);
    for j in 0..u64::from(n_avg) {
        let m = first_edge + j;
        let h0 = fast.count_edges(slow.edge_time(m));
        acc += offset_term(m, h0, cfg);
    }
    Ok(acc / Ratio::from_integer(i128::from(n_avg)))
}

/// Node state for the naive scheme.
#[derive(Debug, Clone)]
pub struct NaiveVht {
    cfg: VhtConfig,
    n_avg: u32,
    offset: Ratio<i128>,
    last_wakeup: SimTime,
    awake: bool,
}

impl NaiveVht {
    /// Brings the node up at `t_w`, measuring the offset over the next n_avg
    /// slow edges.
    pub fn wake_up(
        fast: &Oscillator,
        slow: &Oscillator,
        t_w: SimTime,
        n_avg: u32,
    ) -> Result<Self, NaiveVhtError> {
        let cfg = VhtConfig::new(fast.f_nom_hz(), slow.f_nom_hz())
            .expect("frequencies validated by oscillator construction");
        let offset = compute_offset(fast, slow, &cfg, t_w, n_avg)?;
        Ok(NaiveVht {
            cfg,
            n_avg,
            offset,
            last_wakeup: t_w,
            awake: true,
        })
    }

    pub fn offset_ticks(&self) -> Ratio<i128> {
        self.offset
    }

    pub fn offset_s(&self) -> f64 {
        self.offset.to_f64().unwrap() / self.cfg.f_h_hz() as f64
    }

    pub fn last_wakeup(&self) -> SimTime {
        self.last_wakeup
    }

    pub fn enter_sleep(&mut self) {
        self.awake = false;
    }

    /// Re-runs the offset measurement after a sleep.
    pub fn resync(
        &mut self,
        fast: &Oscillator,
        slow: &Oscillator,
        t_w: SimTime,
    ) -> Result<(), NaiveVhtError> {
        self.offset = compute_offset(fast, slow, &self.cfg, t_w, self.n_avg)?;
        self.last_wakeup = t_w;
        self.awake = true;
        Ok(())
    }

    /// Current time: fast counter plus the stored offset, rounded to integer
    /// ticks only here so repeated wakeups accumulate no rounding bias.
    pub fn get_time(&self, fast: &Oscillator, t: SimTime) -> Result<i64, NaiveVhtError> {
        if !self.awake {
            return Err(NaiveVhtError::Asleep);
        }
        let h = Ratio::from_integer(fast.count_edges(t) as i128);
        Ok((h + self.offset).round().to_integer().to_i64().unwrap())
    }
}

/// Expected naive-scheme error against the slow-clock timeline, seconds:
/// the fast clock's skew accumulates from the wakeup onward while the slow
/// clock's would have kept accumulating, so the error is the integral of the
/// skew difference over [t_w, t] (quantization excluded).
pub fn predict_naive_error(
    fast_skew: &SkewProfile,
    slow_skew: &SkewProfile,
    t_w: SimTime,
    t: SimTime,
) -> Result<f64, NaiveVhtError> {
    if t < t_w {
        return Err(NaiveVhtError::BeforeWakeup { t, t_w });
    }
    let accum_h = fast_skew.integral(t.seconds()) - fast_skew.integral(t_w.seconds());
    let accum_l = slow_skew.integral(t.seconds()) - slow_skew.integral(t_w.seconds());
    Ok(1e-6 * (accum_h - accum_l))
}
