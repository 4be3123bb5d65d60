//! One-dimensional quadrature rules and small numerical helpers.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of a fixed quadrature rule.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn cached(kind: u8, n: usize, build: fn(usize) -> Rule) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<(u8, usize), Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard.entry((kind, n)).or_insert_with(|| Arc::new(build(n))).clone()
}

/// Gauss-Hermite rule for `int exp(-t^2) f(t) dt` (physicists' weight), ascending nodes.
pub fn gauss_hermite(n: usize) -> Arc<Rule> {
    cached(0, n, build_hermite)
}

/// Gauss-Legendre rule on `[-1, 1]`, ascending nodes.
pub fn gauss_legendre(n: usize) -> Arc<Rule> {
    cached(1, n, build_legendre)
}

fn build_hermite(n: usize) -> Rule {
    assert!(n >= 1);
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    x.reverse();
    w.reverse();
    Rule { nodes: x, weights: w }
}

fn build_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let nf = n as f64;
    let m = n.div_ceil(2);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    Rule { nodes: x, weights: w }
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

/// Adaptive Simpson integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    adaptive_simpson_nodes(&f, a, b, tol)
        .into_iter()
        .map(|(x, w)| w * f(x))
        .sum()
}

/// Leaf panels of an adaptive Simpson pass over `f`, flattened into `(node, weight)` pairs
/// with `sum w f(x)` approximating the integral. Shared panel endpoints are merged.
pub fn adaptive_simpson_nodes<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Vec<(f64, f64)> {
    const MIN_DEPTH: u32 = 5;
    const MAX_DEPTH: u32 = 48;

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
        out: &mut Vec<(f64, f64)>,
    ) {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let err = (left + right - whole).abs();
        if depth >= MAX_DEPTH || (depth >= MIN_DEPTH && err <= 15.0 * tol) {
            let h = (b - a) / 12.0;
            push(out, a, h);
            push(out, lm, 4.0 * h);
            push(out, m, 2.0 * h);
            push(out, rm, 4.0 * h);
            push(out, b, h);
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, out);
            recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, out);
        }
    }

    fn push(out: &mut Vec<(f64, f64)>, x: f64, w: f64) {
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 += w,
            _ => out.push((x, w)),
        }
    }

    let mut out = Vec::new();
    if !(b > a) {
        return out;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, tol, 0, &mut out);
    out
}

/// Bisection root of a monotone-sign function on `[lo, hi]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol * mid.abs().max(1.0) {
            return mid;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        let r = gauss_hermite(40);
        let total: f64 = r.weights.iter().sum();
        assert!((total - PI.sqrt()).abs() < 1e-13);
        // E[Z^2] = 1 and E[Z^4] = 3 for Z = sqrt(2) t
        let m2: f64 = r.nodes.iter().zip(&r.weights).map(|(t, w)| w * 2.0 * t * t).sum::<f64>() / PI.sqrt();
        let m4: f64 = r.nodes.iter().zip(&r.weights).map(|(t, w)| w * 4.0 * t.powi(4)).sum::<f64>() / PI.sqrt();
        assert!((m2 - 1.0).abs() < 1e-12);
        assert!((m4 - 3.0).abs() < 1e-11);
        assert!(r.weights.iter().all(|w| *w > 0.0));
        assert!(r.nodes.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn legendre_exact_for_polynomials() {
        let r = gauss_legendre(10);
        let total: f64 = r.weights.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        let x18: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(18)).sum();
        assert!((x18 - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn simpson_integrates_smooth_functions() {
        let v = adaptive_simpson(|x| x.sin(), 0.0, PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-10);
        let nodes = adaptive_simpson_nodes(&|x: f64| (-x * x).exp(), -8.0, 8.0, 1e-10);
        assert!(nodes.iter().all(|(_, w)| *w > 0.0));
        assert!(nodes.windows(2).all(|p| p[0].0 < p[1].0));
        let v: f64 = nodes.iter().map(|(x, w)| w * (-x * x).exp()).sum();
        assert!((v - PI.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn bisection_finds_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }
}
