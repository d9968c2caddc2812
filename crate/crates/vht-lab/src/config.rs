//! Scenario configuration: a flat sectioned key=value format (sections in
//! brackets, one assignment per line, `#` comments). Unknown sections or keys
//! are errors; a typo never silently falls back to a default.

use std::collections::BTreeMap;
use std::fmt;

use vht_core::controller::{ControllerDesign, DseCriterion, Rational};
use vht_core::naive::validate_n_avg;
use vht_core::oscillator::{OscillatorSpec, SkewProfile};
use vht_core::time::MAX_HORIZON_S;
use vht_core::timer::InterruptLatencyModel;

#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        message: message.into(),
    })
}

/// Clock under test in the interval-jitter experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockUnderTest {
    Slow,
    Fast,
    NaiveVht,
    CompleteVht,
    OriginalVht,
}

impl ClockUnderTest {
    pub fn label(self) -> &'static str {
        match self {
            ClockUnderTest::Slow => "slow",
            ClockUnderTest::Fast => "fast",
            ClockUnderTest::NaiveVht => "naive-vht",
            ClockUnderTest::CompleteVht => "complete-vht",
            ClockUnderTest::OriginalVht => "original-vht",
        }
    }

    fn parse(s: &str) -> Result<Self, ConfigError> {
        Ok(match s {
            "slow" => ClockUnderTest::Slow,
            "fast" => ClockUnderTest::Fast,
            "naive-vht" => ClockUnderTest::NaiveVht,
            "complete-vht" => ClockUnderTest::CompleteVht,
            "original-vht" => ClockUnderTest::OriginalVht,
            other => return err(format!("unknown clock under test '{other}'")),
        })
    }
}

/// Mode currents in microamps plus the per-cycle radio window.
#[derive(Debug, Clone, Copy)]
pub struct CurrentTable {
    pub deep_sleep_ua: f64,
    pub active_ua: f64,
    pub radio_ua: f64,
    pub radio_s: f64,
}

#[derive(Debug, Clone)]
pub struct IntervalSection {
    pub deltas_s: Vec<f64>,
    pub repetitions: usize,
    pub clocks: Vec<ClockUnderTest>,
}

#[derive(Debug, Clone)]
pub struct SettleSection {
    pub skew_ppm: f64,
    pub band_fraction: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone)]
pub struct DseSection {
    pub omega_c: Vec<Rational>,
    pub alpha: Vec<Rational>,
    pub beta: Vec<Rational>,
    pub sort_by: DseCriterion,
}

#[derive(Debug, Clone)]
pub struct DutySection {
    pub active_s: f64,
    pub periods_s: Vec<f64>,
    pub currents: CurrentTable,
}

/// One fully validated scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub horizon_s: f64,
    pub fast: OscillatorSpec,
    pub slow: OscillatorSpec,
    pub latency: InterruptLatencyModel,
    pub design: ControllerDesign,
    pub n_avg: u32,
    pub settle_hold_s: f64,
    pub min_active_periods: u32,
    pub mc_events: usize,
    pub race_events: usize,
    pub interval: IntervalSection,
    pub settle: SettleSection,
    pub dse: DseSection,
    pub duty: DutySection,
}

impl Default for ScenarioConfig {
    /// The canonical scenario: 48 MHz fast clock, 32768 Hz slow clock with
    /// 60 ns edge jitter, no skew, reference controller, 100 s horizon.
    fn default() -> Self {
        ScenarioConfig {
            seed: 42,
            horizon_s: 100.0,
            fast: OscillatorSpec::ideal(0, 48_000_000),
            slow: OscillatorSpec::ideal(1, 32768).with_jitter(60e-9),
            latency: InterruptLatencyModel::zero(),
            design: ControllerDesign::reference(),
            n_avg: 8,
            settle_hold_s: 14.0,
            min_active_periods: 1,
            mc_events: 100_000,
            race_events: 100_000,
            interval: IntervalSection {
                deltas_s: vec![0.001, 0.01, 0.1, 1.0, 10.0],
                repetitions: 10_000,
                clocks: vec![
                    ClockUnderTest::Slow,
                    ClockUnderTest::Fast,
                    ClockUnderTest::NaiveVht,
                    ClockUnderTest::CompleteVht,
                    ClockUnderTest::OriginalVht,
                ],
            },
            settle: SettleSection {
                skew_ppm: 30.0,
                band_fraction: 0.01,
                max_steps: 2000,
            },
            dse: DseSection {
                omega_c: vec![
                    Rational::new(5, 8),
                    Rational::new(5, 4),
                    Rational::new(5, 2),
                ],
                alpha: vec![
                    Rational::new(25, 8),
                    Rational::new(25, 4),
                    Rational::new(25, 2),
                ],
                beta: vec![
                    Rational::from_integer(8),
                    Rational::from_integer(16),
                    Rational::from_integer(32),
                ],
                sort_by: DseCriterion::Settling,
            },
            duty: DutySection {
                active_s: 0.2,
                periods_s: vec![10.0, 60.0],
                currents: CurrentTable {
                    deep_sleep_ua: 2.7,
                    active_ua: 8_500.0,
                    radio_ua: 24_000.0,
                    radio_s: 0.012,
                },
            },
        }
    }
}

type Section = BTreeMap<String, (String, usize)>;

fn parse_raw(text: &str) -> Result<BTreeMap<String, Section>, ConfigError> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match line.find('#') {
            Some(p) => &line[..p],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return err(format!("line {lineno}: malformed section header '{line}'"));
            };
            let name = name.trim().to_string();
            current = Some(name.clone());
            sections.entry(name).or_default();
            continue;
        }
        let Some(section) = &current else {
            return err(format!("line {lineno}: assignment before any [section]"));
        };
        let Some((key, value)) = line.split_once('=') else {
            return err(format!("line {lineno}: expected key = value, got '{line}'"));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let entries = sections.get_mut(section).unwrap();
        if entries.insert(key.clone(), (value, lineno)).is_some() {
            return err(format!(
                "line {lineno}: duplicate key '{key}' in [{section}]"
            ));
        }
    }
    Ok(sections)
}

/// Consumes keys from one section, erroring on leftovers at the end.
struct SectionReader {
    name: String,
    entries: Section,
}

impl SectionReader {
    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(v, _)| v)
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some((key, (_, lineno))) = self.entries.into_iter().next() {
            return err(format!(
                "line {lineno}: unknown key '{key}' in [{}]",
                self.name
            ));
        }
        Ok(())
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse::<f64>().map_err(|_| ConfigError {
                message: format!("[{}] {key}: bad number '{v}'", self.name),
            }),
        }
    }

    fn u64(&mut self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse::<u64>().map_err(|_| ConfigError {
                message: format!("[{}] {key}: bad integer '{v}'", self.name),
            }),
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.u64(key, default as u64)? as usize)
    }

    fn rational(&mut self, key: &str, default: Rational) -> Result<Rational, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => parse_rational(&v).ok_or_else(|| ConfigError {
                message: format!("[{}] {key}: bad rational '{v}'", self.name),
            }),
        }
    }

    fn f64_list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|_| ConfigError {
                    message: format!("[{}] {key}: bad number list '{v}'", self.name),
                }),
        }
    }

    fn rational_list(
        &mut self,
        key: &str,
        default: &[Rational],
    ) -> Result<Vec<Rational>, ConfigError> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|p| parse_rational(p.trim()))
                .collect::<Option<Vec<Rational>>>()
                .ok_or_else(|| ConfigError {
                    message: format!("[{}] {key}: bad rational list '{v}'", self.name),
                }),
        }
    }
}

/// Parses "a/b", an integer, or a decimal into an exact rational.
pub fn parse_rational(s: &str) -> Option<Rational> {
    if let Some((num, den)) = s.split_once('/') {
        let n: i128 = num.trim().parse().ok()?;
        let d: i128 = den.trim().parse().ok()?;
        if d == 0 {
            return None;
        }
        return Some(Rational::new(n, d));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        if frac_part.is_empty()
            || frac_part.len() > 18
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
        {
            return None;
        }
        let negative = int_part.trim_start().starts_with('-');
        let i: i128 = if int_part.is_empty() || int_part == "-" {
            0
        } else {
            int_part.parse().ok()?
        };
        let f: i128 = frac_part.parse().ok()?;
        let scale = 10_i128.pow(frac_part.len() as u32);
        let numer = i * scale + if negative { -f } else { f };
        return Some(Rational::new(numer, scale));
    }
    s.parse::<i128>().ok().map(Rational::from_integer)
}

fn parse_skew(s: &str) -> Result<SkewProfile, ConfigError> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    let bad = || ConfigError {
        message: format!("bad skew profile '{s}'"),
    };
    match parts.as_slice() {
        ["constant", ppm] => Ok(SkewProfile::Constant {
            ppm: ppm.parse().map_err(|_| bad())?,
        }),
        ["ramp", base, slope] => Ok(SkewProfile::Ramp {
            base_ppm: base.parse().map_err(|_| bad())?,
            slope_ppm_per_s: slope.parse().map_err(|_| bad())?,
        }),
        ["sinusoid", base, amp, period] => Ok(SkewProfile::Sinusoid {
            base_ppm: base.parse().map_err(|_| bad())?,
            amplitude_ppm: amp.parse().map_err(|_| bad())?,
            period_s: period.parse().map_err(|_| bad())?,
        }),
        ["piecewise", points] => {
            let mut pts = Vec::new();
            for pair in points.split(',') {
                let (t, v) = pair.split_once(':').ok_or_else(bad)?;
                pts.push((t.parse().map_err(|_| bad())?, v.parse().map_err(|_| bad())?));
            }
            Ok(SkewProfile::PiecewiseLinear { points: pts })
        }
        _ => Err(bad()),
    }
}

fn read_oscillator(
    reader: &mut SectionReader,
    default: &OscillatorSpec,
) -> Result<OscillatorSpec, ConfigError> {
    let f_nom = reader.u64("f_nom_hz", default.f_nom_hz)?;
    let skew = match reader.take("skew") {
        None => default.skew.clone(),
        Some(v) => parse_skew(&v)?,
    };
    let jitter = reader.f64("jitter_std_s", default.jitter_std_s)?;
    let wander_std = reader.f64("wander_std_ppm", default.wander_std_ppm)?;
    let wander_grid = reader.f64("wander_grid_s", default.wander_grid_s)?;
    Ok(OscillatorSpec {
        id: default.id,
        f_nom_hz: f_nom,
        skew,
        jitter_std_s: jitter,
        wander_std_ppm: wander_std,
        wander_grid_s: wander_grid,
    })
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = parse_raw(text)?;
        let mut cfg = ScenarioConfig::default();
        let mut reader_for = |name: &str| -> Option<SectionReader> {
            raw.remove(name).map(|entries| SectionReader {
                name: name.to_string(),
                entries,
            })
        };

        if let Some(mut r) = reader_for("scenario") {
            cfg.seed = r.u64("seed", cfg.seed)?;
            cfg.horizon_s = r.f64("horizon_s", cfg.horizon_s)?;
            r.finish()?;
        }
        if let Some(mut r) = reader_for("fast") {
            cfg.fast = read_oscillator(&mut r, &cfg.fast)?;
            r.finish()?;
        }
        if let Some(mut r) = reader_for("slow") {
            cfg.slow = read_oscillator(&mut r, &cfg.slow)?;
            r.finish()?;
        }
        if let Some(mut r) = reader_for("latency") {
            let fixed = r.f64("fixed_s", cfg.latency.fixed_s)?;
            let jmax = r.f64("jitter_max_s", cfg.latency.jitter_uniform_max_s)?;
            if fixed < 0.0 || jmax < 0.0 {
                return err("[latency]: latencies must be >= 0");
            }
            cfg.latency = InterruptLatencyModel::new(fixed, jmax);
            r.finish()?;
        }
        if let Some(mut r) = reader_for("controller") {
            let d = &cfg.design;
            let omega_c = r.rational("omega_c", d.omega_c)?;
            let alpha = r.rational("alpha", d.alpha)?;
            let beta = r.rational("beta", d.beta)?;
            let t_hl = r.rational("t_hl_s", d.t_hl)?;
            cfg.design =
                ControllerDesign::new(omega_c, alpha, beta, t_hl).map_err(|e| ConfigError {
                    message: format!("[controller]: {e}"),
                })?;
            r.finish()?;
        }
        if let Some(mut r) = reader_for("node") {
            cfg.n_avg = r.u64("n_avg", u64::from(cfg.n_avg))? as u32;
            cfg.settle_hold_s = r.f64("settle_hold_s", cfg.settle_hold_s)?;
            cfg.min_active_periods =
                r.u64("min_active_periods", u64::from(cfg.min_active_periods))? as u32;
            r.finish()?;
        }
        if let Some(mut r) = reader_for("mc-jitter") {
            cfg.mc_events = r.usize("events", cfg.mc_events)?;
            r.finish()?;
        }
        if let Some(mut r) = reader_for("race-census") {
            cfg.race_events = r.usize("events", cfg.race_events)?;
            r.finish()?;
        }
        if let Some(mut r) = reader_for("interval-jitter") {
            cfg.interval.deltas_s = r.f64_list("deltas_s", &cfg.interval.deltas_s)?;
            cfg.interval.repetitions = r.usize("repetitions", cfg.interval.repetitions)?;
            if let Some(v) = r.take("clocks") {
                cfg.interval.clocks = v
                    .split(',')
                    .map(|p| ClockUnderTest::parse(p.trim()))
                    .collect::<Result<Vec<_>, _>>()?;
            }
            r.finish()?;
        }
        if let Some(mut r) = reader_for("settle") {
            cfg.settle.skew_ppm = r.f64("skew_ppm", cfg.settle.skew_ppm)?;
            cfg.settle.band_fraction = r.f64("band_fraction", cfg.settle.band_fraction)?;
            cfg.settle.max_steps = r.usize("max_steps", cfg.settle.max_steps)?;
            r.finish()?;
        }
        if let Some(mut r) = reader_for("controller-dse") {
            cfg.dse.omega_c = r.rational_list("omega_c", &cfg.dse.omega_c)?;
            cfg.dse.alpha = r.rational_list("alpha", &cfg.dse.alpha)?;
            cfg.dse.beta = r.rational_list("beta", &cfg.dse.beta)?;
            if let Some(v) = r.take("sort_by") {
                cfg.dse.sort_by = match v.as_str() {
                    "settling" => DseCriterion::Settling,
                    "phase-margin" => DseCriterion::PhaseMargin,
                    "hf-gain" => DseCriterion::HighFrequencyGain,
                    other => {
                        return err(format!(
                            "[controller-dse] sort_by: unknown criterion '{other}'"
                        ))
                    }
                };
            }
            r.finish()?;
        }
        if let Some(mut r) = reader_for("duty") {
            cfg.duty.active_s = r.f64("active_s", cfg.duty.active_s)?;
            cfg.duty.periods_s = r.f64_list("period_s", &cfg.duty.periods_s)?;
            r.finish()?;
        }
        if let Some(mut r) = reader_for("currents") {
            let c = &mut cfg.duty.currents;
            c.deep_sleep_ua = r.f64("deep_sleep_ua", c.deep_sleep_ua)?;
            c.active_ua = r.f64("active_ua", c.active_ua)?;
            c.radio_ua = r.f64("radio_ua", c.radio_ua)?;
            c.radio_s = r.f64("radio_s", c.radio_s)?;
            r.finish()?;
        }

        if let Some((name, entries)) = raw.into_iter().next() {
            let line = entries.values().map(|(_, l)| *l).min().unwrap_or(0);
            return err(format!("unknown section [{name}] (line {line})"));
        }

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.horizon_s > 0.0 && self.horizon_s <= MAX_HORIZON_S) {
            return err(format!("horizon_s must be in (0, {MAX_HORIZON_S}]"));
        }
        if self.fast.f_nom_hz <= self.slow.f_nom_hz {
            return err("fast oscillator must be faster than the slow one");
        }
        validate_n_avg(self.n_avg, self.slow.f_nom_hz).map_err(|e| ConfigError {
            message: e.to_string(),
        })?;
        for period in &self.duty.periods_s {
            if self.duty.active_s > *period {
                return err(format!(
                    "duty: active_s {} exceeds period {}",
                    self.duty.active_s, period
                ));
            }
            if self.duty.currents.radio_s > self.duty.active_s {
                return err("duty: radio_s exceeds active_s");
            }
        }
        if self.duty.currents.deep_sleep_ua < 0.0
            || self.duty.currents.active_ua < 0.0
            || self.duty.currents.radio_ua < 0.0
        {
            return err("currents must be >= 0");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty() {
        let cfg = ScenarioConfig::parse("").unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.fast.f_nom_hz, 48_000_000);
        assert_eq!(cfg.slow.jitter_std_s, 60e-9);
    }

    #[test]
    fn sections_and_overrides() {
        let text = "
# a comment
[scenario]
seed = 7
horizon_s = 50.0

[slow]
jitter_std_s = 30e-9
skew = constant 12.5

[controller]
omega_c = 5/2
";
        let cfg = ScenarioConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.horizon_s, 50.0);
        assert_eq!(cfg.slow.jitter_std_s, 30e-9);
        assert_eq!(cfg.slow.skew, SkewProfile::Constant { ppm: 12.5 });
        assert_eq!(cfg.design.omega_c, Rational::new(5, 2));
    }

    #[test]
    fn unknown_key_is_an_error() {
        let e = ScenarioConfig::parse("[scenario]\nsede = 7\n").unwrap_err();
        assert!(e.message.contains("unknown key 'sede'"), "{e}");
    }

    #[test]
    fn unknown_section_is_an_error() {
        let e = ScenarioConfig::parse("[scenari]\nseed = 7\n").unwrap_err();
        assert!(e.message.contains("unknown section"), "{e}");
    }

    #[test]
    fn duplicate_key_is_an_error() {
        let e = ScenarioConfig::parse("[scenario]\nseed = 1\nseed = 2\n").unwrap_err();
        assert!(e.message.contains("duplicate"), "{e}");
    }

    #[test]
    fn rationals_parse_exactly() {
        assert_eq!(parse_rational("5/4"), Some(Rational::new(5, 4)));
        assert_eq!(parse_rational("16"), Some(Rational::from_integer(16)));
        assert_eq!(parse_rational("0.2"), Some(Rational::new(1, 5)));
        assert_eq!(parse_rational("1.25"), Some(Rational::new(5, 4)));
        assert_eq!(parse_rational("-0.5"), Some(Rational::new(-1, 2)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("abc"), None);
    }

    #[test]
    fn horizon_cap_enforced() {
        let e = ScenarioConfig::parse("[scenario]\nhorizon_s = 20000\n").unwrap_err();
        assert!(e.message.contains("horizon"), "{e}");
    }

    #[test]
    fn averaging_budget_enforced() {
        let e = ScenarioConfig::parse("[node]\nn_avg = 17\n").unwrap_err();
        assert!(e.message.contains("500"), "{e}");
    }

    #[test]
    fn duty_durations_checked() {
        let e = ScenarioConfig::parse("[duty]\nactive_s = 20\nperiod_s = 10\n").unwrap_err();
        assert!(e.message.contains("active_s"), "{e}");
    }

    #[test]
    fn piecewise_skew_parses() {
        let cfg = ScenarioConfig::parse("[fast]\nskew = piecewise 0:0,1:30,5:-20\n").unwrap();
        assert_eq!(
            cfg.fast.skew,
            SkewProfile::PiecewiseLinear {
                points: vec![(0.0, 0.0), (1.0, 30.0), (5.0, -20.0)]
            }
        );
    }
}
