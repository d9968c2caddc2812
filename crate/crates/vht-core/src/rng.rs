//! Counter-based deterministic random numbers.
//!
//! Every sample is a pure function of `(seed, stream, index)`, so per-edge
//! jitter can be evaluated lazily and out of order: asking for edge n's jitter
//! never requires generating edges 1..n-1. Identical inputs give identical
//! outputs across runs, which is what makes scenario replays bit-identical.

/// Identifies one sample within one logical stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngKey {
    /// Which stream (oscillator id + purpose tag, event placement, ...).
    pub stream: u64,
    /// Which sample within the stream (edge number, event number, ...).
    pub index: u64,
}

impl RngKey {
    pub fn new(stream: u64, index: u64) -> Self {
        RngKey { stream, index }
    }
}

/// Stream-id constructors. The purpose tag lives in the high 32 bits so that
/// per-oscillator streams never collide with experiment-level ones.
pub mod streams {
    const EDGE_JITTER: u64 = 1;
    const WANDER: u64 = 2;
    const EVENT_PLACEMENT: u64 = 3;
    const ISR_LATENCY: u64 = 4;
    const MEASUREMENT: u64 = 5;

    pub fn edge_jitter(osc_id: u32) -> u64 {
        (EDGE_JITTER << 32) | u64::from(osc_id)
    }
    pub fn wander(osc_id: u32) -> u64 {
        (WANDER << 32) | u64::from(osc_id)
    }
    pub fn event_placement(tag: u32) -> u64 {
        (EVENT_PLACEMENT << 32) | u64::from(tag)
    }
    pub fn isr_latency(tag: u32) -> u64 {
        (ISR_LATENCY << 32) | u64::from(tag)
    }
    pub fn measurement(tag: u32) -> u64 {
        (MEASUREMENT << 32) | u64::from(tag)
    }
}

/// A stateless generator: all state lives in the key.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Raw 64 pseudo-random bits for the key.
    #[inline]
    pub fn raw(&self, key: RngKey) -> u64 {
        let mut z = self.seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = mix64(z ^ mix64(key.stream.wrapping_add(0xD1B5_4A32_D192_ED03)));
        mix64(z ^ mix64(key.index.wrapping_add(0x8CB9_2BA7_2F3D_8DD7)))
    }

    /// Uniform deviate in the open interval (0, 1).
    #[inline]
    pub fn uniform(&self, key: RngKey) -> f64 {
        // 53 significant bits, offset by half an ulp so 0 and 1 are excluded.
        ((self.raw(key) >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform deviate in [lo, hi).
    #[inline]
    pub fn uniform_in(&self, key: RngKey, lo: f64, hi: f64) -> f64 {
        lo + self.uniform(key) * (hi - lo)
    }

    /// Deterministic Gaussian deviate with the given mean and standard
    /// deviation (std >= 0; std = 0 degenerates to the mean exactly).
    #[inline]
    pub fn gaussian(&self, key: RngKey, mean: f64, std: f64) -> f64 {
        debug_assert!(std >= 0.0);
        if std == 0.0 {
            return mean;
        }
        mean + std * normal_quantile(self.uniform(key))
    }

    /// Gaussian deviate truncated to +/- 3 sigma by sampling the renormalized
    /// truncated distribution (inverse-CDF on the restricted range), so the
    /// support is exactly [-3 sigma, 3 sigma] and no probability mass piles up
    /// at the boundary.
    #[inline]
    pub fn gaussian_truncated3(&self, key: RngKey, mean: f64, std: f64) -> f64 {
        debug_assert!(std >= 0.0);
        if std == 0.0 {
            return mean;
        }
        let p = PHI_MINUS_3 + self.uniform(key) * (PHI_PLUS_3 - PHI_MINUS_3);
        // The quantile approximation is good to ~1e-9; clamp so the ordering
        // bound 3*sigma < 0.45/f_nom can never be exceeded by approximation
        // error.
        let z = normal_quantile(p).clamp(-3.0, 3.0);
        mean + std * z
    }
}

/// Standard normal CDF at -3 and +3.
const PHI_MINUS_3: f64 = 1.349_898_031_630_094_5e-3;
const PHI_PLUS_3: f64 = 1.0 - PHI_MINUS_3;

/// Inverse of the standard normal CDF (Acklam's rational approximation,
/// relative error < 1.15e-9). Pure arithmetic plus sqrt/ln, so results are
/// reproducible run to run.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile domain is (0,1), got {p}");

    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}
