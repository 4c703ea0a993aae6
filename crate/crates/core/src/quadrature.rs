//! Adaptive Gauss–Kronrod integration.
//!
//! Globally adaptive 10/21-point Gauss–Kronrod scheme: the interval with the
//! largest error estimate is bisected until the summed error estimate drops
//! below `max(abs_tol, rel_tol * |I|)`. Semi-infinite ranges are mapped onto
//! `[0, 1)` by `u = a + L s / (1 - s)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_091_677_795,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Result of an integration: value and estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            max_intervals: 4096,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod_21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut res_k = f_center * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (f_center - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();

    // QUADPACK error rescaling.
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

impl Quadrature {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Quadrature {
            rel_tol,
            ..Default::default()
        }
    }

    /// Integrates `f` over the finite interval `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<Integral> {
        if a == b {
            return Ok(Integral {
                value: 0.0,
                abs_error: 0.0,
                intervals: 0,
            });
        }
        if b < a {
            let r = self.integrate(f, b, a)?;
            return Ok(Integral {
                value: -r.value,
                ..r
            });
        }

        let (value, error) = gauss_kronrod_21(&f, a, b);
        let mut heap = BinaryHeap::new();
        let mut done_value = 0.0;
        let mut done_error = 0.0;
        let mut total_value = value;
        let mut total_error = error;
        heap.push(Segment { a, b, value, error });
        let mut count = 1usize;

        loop {
            let requested = self.abs_tol.max(self.rel_tol * total_value.abs());
            if total_error <= requested || heap.is_empty() {
                break;
            }
            if count >= self.max_intervals {
                return Err(Error::Quadrature {
                    achieved: total_error,
                    requested,
                });
            }
            let seg = heap.pop().expect("heap is nonempty");
            let mid = 0.5 * (seg.a + seg.b);
            // Interval exhausted at machine resolution: freeze it.
            if mid <= seg.a || mid >= seg.b || (seg.b - seg.a) < 1e3 * f64::EPSILON * mid.abs() {
                done_value += seg.value;
                done_error += seg.error;
                continue;
            }
            let (v1, e1) = gauss_kronrod_21(&f, seg.a, mid);
            let (v2, e2) = gauss_kronrod_21(&f, mid, seg.b);
            total_value += v1 + v2 - seg.value;
            total_error += e1 + e2 - seg.error;
            heap.push(Segment {
                a: seg.a,
                b: mid,
                value: v1,
                error: e1,
            });
            heap.push(Segment {
                a: mid,
                b: seg.b,
                value: v2,
                error: e2,
            });
            count += 1;
        }

        // Resum to shed accumulated update rounding.
        let mut segs: Vec<Segment> = heap.into_vec();
        segs.sort_by(|x, y| x.a.total_cmp(&y.a));
        let value = done_value + segs.iter().map(|s| s.value).sum::<f64>();
        let abs_error = done_error + segs.iter().map(|s| s.error).sum::<f64>();
        if !value.is_finite() {
            return Err(Error::Quadrature {
                achieved: f64::INFINITY,
                requested: self.abs_tol.max(self.rel_tol),
            });
        }
        Ok(Integral {
            value,
            abs_error,
            intervals: count,
        })
    }

    /// Integrates `f` over `[a, ∞)` using `u = a + scale * s / (1 - s)`.
    pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
        &self,
        f: F,
        a: f64,
        scale: f64,
    ) -> Result<Integral> {
        let g = |s: f64| {
            let one_minus = 1.0 - s;
            let u = a + scale * s / one_minus;
            if !u.is_finite() {
                return 0.0;
            }
            let v = f(u) * scale / (one_minus * one_minus);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        self.integrate(g, 0.0, 1.0)
    }
}
