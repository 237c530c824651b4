//! Numerical integration used by the test oracles: double-exponential
//! (tanh-sinh) quadrature over finite and infinite ranges, and
//! Gauss-Legendre nodes for tensor grids.

use std::f64::consts::FRAC_PI_2;

const MAX_LEVEL: usize = 12;
const T_MAX: f64 = 4.0;

/// Integral of `f` over `[a, b]`. Either bound may be infinite. Endpoint
/// singularities of integrable type are handled; NaN values of `f` (for
/// instance `0 * ln 0` in the far tails) count as zero.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    integrate_tol(f, a, b, 1e-14)
}

/// [`integrate`] with a relative tolerance on successive refinements.
/// Refinement also stops once the change between levels stops shrinking,
/// which is the rounding floor.
pub fn integrate_tol(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a > b {
        return -integrate_tol(f, b, a, tol);
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => {
            let half = 0.5 * (b - a);
            // u in (-1, 1); lo = 1 + u, hi = 1 - u computed without cancellation.
            tanh_sinh(tol, |u, lo, hi| {
                let x = if u < 0.0 { a + half * lo } else { b - half * hi };
                guarded(&f, x, half)
            })
        }
        (false, false) => tanh_sinh(tol, |u, lo, hi| {
            // t = u, x = t / (1 - t^2)
            let one_minus_t2 = lo * hi;
            let x = u / one_minus_t2;
            let jac = (1.0 + u * u) / (one_minus_t2 * one_minus_t2);
            guarded(&f, x, jac)
        }),
        (true, false) => tanh_sinh(tol, |_, lo, hi| {
            // t = (1 + u) / 2 in (0, 1), x = a + t / (1 - t)
            let t = 0.5 * lo;
            let s = 0.5 * hi;
            let x = a + t / s;
            guarded(&f, x, 0.5 / (s * s))
        }),
        (false, true) => tanh_sinh(tol, |_, lo, hi| {
            let t = 0.5 * hi;
            let s = 0.5 * lo;
            let x = b - t / s;
            guarded(&f, x, 0.5 / (s * s))
        }),
    }
}

fn guarded(f: &impl Fn(f64) -> f64, x: f64, jac: f64) -> f64 {
    if !x.is_finite() || !jac.is_finite() {
        return 0.0;
    }
    let v = f(x) * jac;
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

/// Tanh-sinh rule on (-1, 1) with step halving until two levels agree.
fn tanh_sinh(tol: f64, g: impl Fn(f64, f64, f64) -> f64) -> f64 {
    let eval = |t: f64| -> f64 {
        let s = FRAC_PI_2 * t.sinh();
        let c = s.cosh();
        let w = FRAC_PI_2 * t.cosh() / (c * c);
        if w == 0.0 {
            return 0.0;
        }
        let u = s.tanh();
        // 1 - |u| = 1 / (e^{|s|} cosh s)
        let comp = 1.0 / (s.abs().exp() * c);
        let (lo, hi) = if u < 0.0 { (comp, 2.0 - comp) } else { (2.0 - comp, comp) };
        if lo == 0.0 || hi == 0.0 {
            return 0.0;
        }
        let v = g(u, lo, hi);
        if v.is_nan() {
            0.0
        } else {
            w * v
        }
    };

    let mut h = 1.0;
    let mut sum = eval(0.0);
    let mut k = 1.0;
    while k * h <= T_MAX {
        sum += eval(k * h) + eval(-k * h);
        k += 1.0;
    }
    let mut estimate = h * sum;
    let mut last_delta = f64::INFINITY;
    for level in 0..MAX_LEVEL {
        h *= 0.5;
        // Only the odd multiples of the new step are new nodes.
        let mut j = 1.0;
        while j * h <= T_MAX {
            sum += eval(j * h) + eval(-j * h);
            j += 2.0;
        }
        let next = h * sum;
        let delta = (next - estimate).abs();
        estimate = next;
        if delta <= tol * estimate.abs().max(1e-300) || (level >= 4 && delta >= last_delta) {
            break;
        }
        last_delta = delta;
    }
    estimate
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
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

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|v| half * v).collect(),
    )
}
