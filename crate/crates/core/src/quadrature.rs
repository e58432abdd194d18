//! Quadrature building blocks: Gauss–Legendre rules, an adaptive
//! Gauss–Kronrod integrator for small vector-valued integrands, a
//! principal-value integrator and order-stable summation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ordered by node.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(n.max(1)).unwrap();
    let mut pairs = GaussLegendre::new(n).as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Composite Gauss–Legendre nodes on `[a, b]`: `panels` equal panels with
/// `order` points each.
pub fn composite_gauss_legendre(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let rule = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let half = 0.5 * width;
        for &(x, w) in &rule {
            out.push((lo + half * (x + 1.0), half * w));
        }
    }
    out
}

/// Sum in a fixed binary-tree order. The result depends only on the order of
/// the input, never on how it was produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (lo, hi) = values.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

/// Component-wise [`pairwise_sum`] for fixed-size arrays.
pub fn pairwise_sum_array<const N: usize>(values: &[[f64; N]]) -> [f64; N] {
    match values.len() {
        0 => [0.0; N],
        1 => values[0],
        n if n <= 8 => values.iter().fold([0.0; N], |acc, v| add(acc, *v)),
        n => {
            let (lo, hi) = values.split_at(n / 2);
            add(pairwise_sum_array(lo), pairwise_sum_array(hi))
        }
    }
}

pub(crate) fn add<const N: usize>(mut a: [f64; N], b: [f64; N]) -> [f64; N] {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

pub(crate) fn scale<const N: usize>(mut a: [f64; N], s: f64) -> [f64; N] {
    for x in a.iter_mut() {
        *x *= s;
    }
    a
}

/// Maps the rest-frame emission cosine `u` to the laboratory cosine of a
/// source moving with speed `beta` along the polar axis (relativistic
/// aberration). Returns `(x, dx/du)`.
///
/// Radiation from a fast source is beamed into a narrow forward cone; on the
/// `u` variable the angular integrands stay smooth for any `beta < 1`.
pub fn aberration_map(u: f64, beta: f64) -> (f64, f64) {
    let den = 1.0 + beta * u;
    ((u + beta) / den, (1.0 - beta * beta) / (den * den))
}

// Gauss–Kronrod 10/21 abscissae and weights (QUADPACK qk21).
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
    0.123_491_976_262_065_851_077_208_024_161_760,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Returns the Kronrod estimate, the Kronrod–Gauss error, and the Kronrod
/// estimate of `∫|f|` summed over components.
fn gk21<const N: usize, F>(f: &mut F, a: f64, b: f64) -> ([f64; N], f64, f64)
where
    F: FnMut(f64) -> [f64; N],
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let l1 = |v: &[f64; N]| v.iter().map(|x| x.abs()).sum::<f64>();
    let mut kronrod = scale(fc, WGK[10]);
    let mut absolute = WGK[10] * l1(&fc);
    let mut gauss = [0.0; N];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        absolute += WGK[j] * (l1(&f1) + l1(&f2));
        let s = add(f1, f2);
        kronrod = add(kronrod, scale(s, WGK[j]));
        if j % 2 == 1 {
            gauss = add(gauss, scale(s, WG[j / 2]));
        }
    }
    let kronrod = scale(kronrod, half);
    let gauss = scale(gauss, half);
    let err = kronrod
        .iter()
        .zip(gauss.iter())
        .map(|(k, g)| (k - g).abs())
        .sum();
    (kronrod, err, absolute * half.abs())
}

/// Tolerances for [`integrate_adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveTolerance {
    pub relative: f64,
    pub absolute: f64,
    /// Largest accepted error relative to `∫|f|` when the subdivision
    /// budget runs out.
    pub give_up_relative: f64,
    pub max_intervals: usize,
}

impl Default for AdaptiveTolerance {
    fn default() -> Self {
        Self {
            relative: 1e-10,
            absolute: 1e-300,
            give_up_relative: 1e-5,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveResult<const N: usize> {
    pub value: [f64; N],
    /// Estimated absolute error, summed over components.
    pub error: f64,
    pub evaluations: usize,
}

struct Interval<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: f64,
    absolute: f64,
}

impl<const N: usize> PartialEq for Interval<N> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<const N: usize> Eq for Interval<N> {}
impl<const N: usize> PartialOrd for Interval<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Interval<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

/// Globally adaptive Gauss–Kronrod (10/21) integration of a vector-valued
/// integrand over `[points[0], points[last]]`, starting from the given sorted
/// breakpoints. The error of a subinterval is the L1 norm of the
/// Kronrod–Gauss difference.
pub fn integrate_adaptive<const N: usize, F>(
    mut f: F,
    points: &[f64],
    tol: AdaptiveTolerance,
) -> Result<AdaptiveResult<N>>
where
    F: FnMut(f64) -> [f64; N],
{
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            let (value, error, absolute) = gk21(&mut f, w[0], w[1]);
            evaluations += 21;
            heap.push(Interval {
                a: w[0],
                b: w[1],
                value,
                error,
                absolute,
            });
        }
    }
    loop {
        let (value, error, magnitude) = totals(&heap);
        let target = tol.absolute.max(tol.relative * magnitude);
        if error <= target {
            return Ok(AdaptiveResult {
                value,
                error,
                evaluations,
            });
        }
        let worst = match heap.peek() {
            Some(w) => w,
            None => {
                return Ok(AdaptiveResult {
                    value,
                    error,
                    evaluations,
                })
            }
        };
        let mid = 0.5 * (worst.a + worst.b);
        let exhausted = heap.len() >= tol.max_intervals || !(mid > worst.a && mid < worst.b);
        if exhausted {
            let limit = tol.absolute.max(tol.give_up_relative * magnitude);
            if error <= limit {
                return Ok(AdaptiveResult {
                    value,
                    error,
                    evaluations,
                });
            }
            return Err(Error::Convergence {
                message: format!(
                    "adaptive quadrature exhausted after {} intervals",
                    heap.len()
                ),
                error_estimate: error / magnitude.max(f64::MIN_POSITIVE),
                tolerance: tol.give_up_relative,
            });
        }
        let worst = heap.pop().unwrap();
        let (v1, e1, a1) = gk21(&mut f, worst.a, mid);
        let (v2, e2, a2) = gk21(&mut f, mid, worst.b);
        evaluations += 42;
        heap.push(Interval {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
            absolute: a1,
        });
        heap.push(Interval {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
            absolute: a2,
        });
    }
}

/// Value, error and `∫|f|` of all intervals.
fn totals<const N: usize>(heap: &BinaryHeap<Interval<N>>) -> ([f64; N], f64, f64) {
    // Sum in position order so the result does not depend on heap layout.
    let mut items: Vec<&Interval<N>> = heap.iter().collect();
    items.sort_by(|x, y| x.a.total_cmp(&y.a));
    let values: Vec<[f64; N]> = items.iter().map(|i| i.value).collect();
    let errors: Vec<f64> = items.iter().map(|i| i.error).collect();
    let absolute: Vec<f64> = items.iter().map(|i| i.absolute).collect();
    (
        pairwise_sum_array(&values),
        pairwise_sum(&errors),
        pairwise_sum(&absolute),
    )
}

/// Cauchy principal value `PV ∫_a^b f(x)/(x - pole) dx` by window
/// subtraction.
///
/// Inside `[pole - w_lo, pole + w_hi]` the integrand is replaced by
/// `(f(x) - f(pole))/(x - pole)`, which is regular; the subtracted part
/// contributes `f(pole)·ln(w_hi/w_lo)`, zero for a symmetric window. The
/// window is `half_width` on each side, clipped to `[a, b]`. Outside the
/// window the integrand is integrated as is. A pole outside `(a, b)` falls
/// back to an ordinary integral.
pub fn principal_value<const N: usize, F>(
    mut f: F,
    a: f64,
    b: f64,
    pole: f64,
    half_width: f64,
    tol: AdaptiveTolerance,
) -> Result<AdaptiveResult<N>>
where
    F: FnMut(f64) -> [f64; N],
{
    if !(pole > a && pole < b) {
        return integrate_adaptive(|x| scale(f(x), 1.0 / (x - pole)), &[a, b], tol);
    }
    let w_lo = half_width.min(pole - a);
    let w_hi = half_width.min(b - pole);
    let f0 = f(pole);
    let mut evaluations = 1;
    let mut value = scale(f0, (w_hi / w_lo).ln());
    let mut error = 0.0;

    let window = integrate_adaptive(
        |x| {
            let mut v = f(x);
            for (vi, f0i) in v.iter_mut().zip(f0) {
                *vi = (*vi - f0i) / (x - pole);
            }
            v
        },
        &[pole - w_lo, pole, pole + w_hi],
        tol,
    )?;
    value = add(value, window.value);
    error += window.error;
    evaluations += window.evaluations;

    let outer = |lo: f64, hi: f64, f: &mut F| -> Result<Option<AdaptiveResult<N>>> {
        if hi > lo {
            integrate_adaptive(|x| scale(f(x), 1.0 / (x - pole)), &[lo, hi], tol).map(Some)
        } else {
            Ok(None)
        }
    };
    for part in [
        outer(a, pole - w_lo, &mut f)?,
        outer(pole + w_hi, b, &mut f)?,
    ]
    .into_iter()
    .flatten()
    {
        value = add(value, part.value);
        error += part.error;
        evaluations += part.evaluations;
    }
    Ok(AdaptiveResult {
        value,
        error,
        evaluations,
    })
}
