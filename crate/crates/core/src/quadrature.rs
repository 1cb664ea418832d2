//! One-dimensional quadrature rules.
//!
//! [`GaussHermite`] integrates smooth functions against the standard normal
//! density; it is the workhorse of the saddle-point integrands. [`integrate_adaptive`]
//! is a recursive Gauss–Kronrod (7/15) integrator used where integrands have
//! jumps at unknown locations (σ = sign, indicator readouts).

use std::f64::consts::PI;

/// Gauss–Hermite rule normalised for `E[f(ξ)]`, `ξ ~ N(0, 1)`.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds an `n`-point rule: Golub–Welsch eigenvalues of the Jacobi matrix
    /// as starting points, then Newton polishing on the normalised Hermite
    /// recurrence (physicists' convention, rescaled at the end).
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        if n == 1 {
            return Self {
                nodes: vec![0.0],
                weights: vec![1.0],
            };
        }
        const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
        let nf = n as f64;
        // Physicists' Jacobi matrix: zero diagonal, off-diagonal sqrt(k/2).
        let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
        guesses.sort_by(|a, b| a.total_cmp(b));
        let mut pairs = Vec::with_capacity(n);
        for &start in &guesses {
            let mut z = start;
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = PIM4;
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
            // Weights of the recurrence without the e^{-x²} factor; pp grows
            // like e^{x²/2}, so far-tail weights underflow harmlessly to zero.
            pairs.push((z, 2.0 / (pp * pp)));
        }
        if n % 2 == 1 {
            pairs[n / 2].0 = 0.0;
        }
        // Symmetrise against round-off.
        for i in 0..n / 2 {
            let x = 0.5 * (pairs[n - 1 - i].0 - pairs[i].0);
            let w = 0.5 * (pairs[n - 1 - i].1 + pairs[i].1);
            pairs[i] = (-x, w);
            pairs[n - 1 - i] = (x, w);
        }
        let sqrt2 = std::f64::consts::SQRT_2;
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Self {
            nodes: pairs.iter().map(|p| p.0 * sqrt2).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// `E[f(ξ)]` for standard normal `ξ`.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }
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
    0.209_482_141_084_727_8,
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

fn adapt<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gk15(f, a, b);
    if err <= tol || depth == 0 || (b - a) < 1e-14 * (a.abs() + b.abs()).max(1.0) {
        return value;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss–Kronrod integral of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    adapt(&mut f, a, b, tol, 40)
}

fn gk15_vec<const N: usize, E, F>(f: &mut F, a: f64, b: f64) -> std::result::Result<([f64; N], [f64; N]), E>
where
    F: FnMut(f64) -> std::result::Result<[f64; N], E>,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kronrod = [0.0; N];
    let mut gauss = [0.0; N];
    for i in 0..N {
        kronrod[i] = WGK[7] * fc[i];
        gauss[i] = WG[3] * fc[i];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let lo = f(c - dx)?;
        let hi = f(c + dx)?;
        for i in 0..N {
            let s = lo[i] + hi[i];
            kronrod[i] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[i] += WG[j / 2] * s;
            }
        }
    }
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = ((kronrod[i] - gauss[i]) * h).abs();
        kronrod[i] *= h;
    }
    Ok((kronrod, err))
}

/// Adaptive Gauss–Kronrod integral of a vector-valued `f` over `[a, b]`,
/// split at the given interior breakpoints.
///
/// A panel is accepted when every component's error estimate is below
/// `(abs_tol + rel_tol · |I_i|) · h / L`, where `I_i` is a first-pass
/// estimate of the whole integral, `h` the panel width and `L = b − a`.
/// The integrand may fail; the first error aborts the integration.
pub fn integrate_adaptive_vec<const N: usize, E, F>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> std::result::Result<[f64; N], E>
where
    F: FnMut(f64) -> std::result::Result<[f64; N], E>,
{
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(|x, y| x.total_cmp(y));
    cuts.dedup();
    let mut panels = Vec::with_capacity(cuts.len());
    let mut scale = [0.0; N];
    for w in cuts.windows(2) {
        let (v, e) = gk15_vec(&mut f, w[0], w[1])?;
        for i in 0..N {
            scale[i] += v[i].abs();
        }
        panels.push((w[0], w[1], v, e));
    }
    let mut tol = [0.0; N];
    for i in 0..N {
        tol[i] = (abs_tol + rel_tol * scale[i]) / (b - a);
    }
    let mut total = [0.0; N];
    let mut stack = panels;
    while let Some((lo, hi, v, e)) = stack.pop() {
        let h = hi - lo;
        let ok = (0..N).all(|i| e[i] <= tol[i] * h) || h < 1e-12 * (b - a);
        if ok {
            for i in 0..N {
                total[i] += v[i];
            }
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let (vl, el) = gk15_vec(&mut f, lo, mid)?;
        let (vr, er) = gk15_vec(&mut f, mid, hi)?;
        stack.push((lo, mid, vl, el));
        stack.push((mid, hi, vr, er));
    }
    Ok(total)
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `E[f(z)]`, `z ~ N(0, 1)`, by adaptive quadrature on `[-12, 12]`, split at 0.
///
/// Handles integrands with isolated discontinuities (e.g. `sign`).
pub fn gaussian_expect_adaptive<F: FnMut(f64) -> f64>(mut f: F, tol: f64) -> f64 {
    let mut g = |z: f64| normal_pdf(z) * f(z);
    integrate_adaptive(&mut g, -12.0, 0.0, 0.5 * tol) + integrate_adaptive(&mut g, 0.0, 12.0, 0.5 * tol)
}

/// As [`gaussian_expect_adaptive`], additionally splitting at `brk` (ignored
/// when outside `[-12, 12]`).
pub fn gaussian_expect_split<F: FnMut(f64) -> f64>(mut f: F, brk: f64, tol: f64) -> f64 {
    let mut g = |z: f64| normal_pdf(z) * f(z);
    if !(brk.abs() < 12.0) || brk == 0.0 {
        return integrate_adaptive(&mut g, -12.0, 0.0, 0.5 * tol) + integrate_adaptive(&mut g, 0.0, 12.0, 0.5 * tol);
    }
    let (lo, hi) = if brk < 0.0 { (brk, 0.0) } else { (0.0, brk) };
    integrate_adaptive(&mut g, -12.0, lo, tol / 3.0)
        + integrate_adaptive(&mut g, lo, hi, tol / 3.0)
        + integrate_adaptive(&mut g, hi, 12.0, tol / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        for n in [1usize, 2, 5, 20, 51, 101, 201] {
            let gh = GaussHermite::new(n);
            assert_eq!(gh.len(), n);
            let m0: f64 = gh.weights().iter().sum();
            assert!((m0 - 1.0).abs() < 1e-13, "n={n}");
            let m2 = gh.expect(|x| x * x);
            if n >= 2 {
                assert!((m2 - 1.0).abs() < 1e-12, "n={n} m2={m2}");
            }
            if n >= 3 {
                let m4 = gh.expect(|x| x.powi(4));
                assert!((m4 - 3.0).abs() < 1e-11, "n={n} m4={m4}");
            }
            let m1 = gh.expect(|x| x);
            assert!(m1.abs() < 1e-13);
        }
    }

    #[test]
    fn hermite_smooth_function() {
        // E[cos(z)] = exp(-1/2)
        let gh = GaussHermite::new(51);
        assert!((gh.expect(f64::cos) - (-0.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn vector_adaptive_components() {
        // Sharp feature of width 1e-3 at 0.2 plus a smooth component.
        let r: Result<[f64; 2], ()> = integrate_adaptive_vec(
            |x| Ok([normal_pdf(x), 1.0 / (1.0 + ((x - 0.2) / 1e-3).exp())]),
            -1.0,
            1.0,
            &[0.0],
            1e-12,
            1e-15,
        );
        let [g, s] = r.unwrap();
        let exact_g = libm::erf(1.0 / std::f64::consts::SQRT_2);
        assert!((g - exact_g).abs() < 1e-12);
        // ∫_{-1}^{1} logistic step = 1.2 up to e^{-800}.
        assert!((s - 1.2).abs() < 1e-11, "{s}");
        let err: Result<[f64; 1], &str> = integrate_adaptive_vec(|x| if x > 0.5 { Err("boom") } else { Ok([x]) }, 0.0, 1.0, &[], 1e-10, 0.0);
        assert_eq!(err, Err("boom"));
    }

    #[test]
    fn adaptive_handles_jump() {
        // E|z| = sqrt(2/pi)
        let v = gaussian_expect_adaptive(|z| z * z.signum(), 1e-13);
        assert!((v - (2.0 / PI).sqrt()).abs() < 1e-12);
        let half = gaussian_expect_adaptive(|z| if z > 0.3 { 1.0 } else { 0.0 }, 1e-13);
        let exact = 0.5 * libm::erfc(0.3 / std::f64::consts::SQRT_2);
        assert!((half - exact).abs() < 1e-11);
    }
}
