//! Quadrature rules used throughout the crate.

use std::sync::OnceLock;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, computed by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Six-point rule cached for the per-interval integrals of Hermite data.
pub(crate) fn gl6() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(6))
}

/// Fixed-order Gauss-Legendre integral of `f` over `[a, b]`.
pub fn fixed<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    let (x, w) = gl6();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter().zip(w).map(|(xi, wi)| wi * f(mid + half * xi)).sum::<f64>() * half
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss-Kronrod (7-15) integral of `f` over `[a, b]`.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate drops below `tol * max(1, |I|)` or 2000 panels are in use.
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let mut panels = vec![{
        let (v, e) = gk15(&mut f, a, b);
        (a, b, v, e)
    }];
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= tol * total.abs().max(1.0) || panels.len() >= 2000 {
            return total;
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
}

/// Adaptive integral of `f` over `[a, ∞)` through `r = a + s / (1 - s)`.
pub fn adaptive_to_infinity<F: FnMut(f64) -> f64>(mut f: F, a: f64, tol: f64) -> f64 {
    adaptive(
        |s| {
            if s >= 1.0 {
                return 0.0;
            }
            let d = 1.0 - s;
            f(a + s / d) / (d * d)
        },
        0.0,
        1.0,
        tol,
    )
}

/// Fourth-order Gregory end-corrected trapezoid weights for `n` uniformly spaced samples.
///
/// Falls back to the plain trapezoid rule below eight samples.
pub fn gregory_weights(n: usize, h: f64) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    let mut w = vec![h; n];
    if n < 8 {
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
        return w;
    }
    let ends = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
    for (k, e) in ends.iter().enumerate() {
        w[k] = e * h;
        w[n - 1 - k] = e * h;
    }
    w
}

/// Running integral `∫_{x_0}^{x_i} g` of uniformly spaced samples, fourth order.
///
/// Each panel integrates the cubic through four neighbouring samples.
pub fn cumulative_uniform(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 4 {
        for i in 1..n {
            out[i] = out[i - 1] + 0.5 * h * (values[i - 1] + values[i]);
        }
        return out;
    }
    for i in 0..n - 1 {
        let panel = if i == 0 {
            (9.0 * values[0] + 19.0 * values[1] - 5.0 * values[2] + values[3]) / 24.0
        } else if i == n - 2 {
            (9.0 * values[n - 1] + 19.0 * values[n - 2] - 5.0 * values[n - 3] + values[n - 4]) / 24.0
        } else {
            (-values[i - 1] + 13.0 * values[i] + 13.0 * values[i + 1] - values[i + 2]) / 24.0
        };
        out[i + 1] = out[i] + h * panel;
    }
    out
}

/// Fourth-order central differences of uniformly spaced samples, one-sided at the ends.
pub fn derivative_uniform(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut d = vec![0.0; n];
    if n < 5 {
        for i in 0..n {
            d[i] = match i {
                0 if n > 1 => (values[1] - values[0]) / h,
                _ if i == n - 1 && n > 1 => (values[i] - values[i - 1]) / h,
                _ if n > 2 => (values[i + 1] - values[i - 1]) / (2.0 * h),
                _ => 0.0,
            };
        }
        return d;
    }
    let v = values;
    d[0] = (-25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]) / (12.0 * h);
    d[1] = (-3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]) / (12.0 * h);
    for i in 2..n - 2 {
        d[i] = (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * h);
    }
    let k = n - 1;
    d[k - 1] = (3.0 * v[k] + 10.0 * v[k - 1] - 18.0 * v[k - 2] + 6.0 * v[k - 3] - v[k - 4]) / (12.0 * h);
    d[k] = (25.0 * v[k] - 48.0 * v[k - 1] + 36.0 * v[k - 2] - 16.0 * v[k - 3] + 3.0 * v[k - 4]) / (12.0 * h);
    d
}
