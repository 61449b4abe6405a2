//! Angles, arcs, samples on the circle and their Fourier moments.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for accepting recovered roots as lying on the unit circle.
const UNIT_CIRCLE_TOL: f64 = 1e-4;

/// Largest sample size accepted by [`data_from_moments`].
pub const MAX_MOMENT_ORDER: usize = 8;

/// An angle in radians, always in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle(f64);

impl Angle {
    pub fn new(raw: f64) -> Result<Self> {
        wrap_angle(raw)
    }

    pub const ZERO: Angle = Angle(0.0);

    pub fn value(self) -> f64 {
        self.0
    }

    /// Representative in `[-π, π)`.
    pub fn signed(self) -> f64 {
        if self.0 >= PI {
            self.0 - TAU
        } else {
            self.0
        }
    }

    pub fn add(self, delta: f64) -> Angle {
        Angle(wrap(self.0 + delta))
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> f64 {
        a.0
    }
}

/// Reduce a finite real modulo 2π into `[0, 2π)`.
pub fn wrap_angle(raw: f64) -> Result<Angle> {
    if !raw.is_finite() {
        return Err(Error::Domain(format!("angle must be finite, got {raw}")));
    }
    Ok(Angle(wrap(raw)))
}

/// Infallible wrap for values already known to be finite.
#[inline]
pub(crate) fn wrap(raw: f64) -> f64 {
    let r = raw.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed displacement `x - c` mapped into `[-π, π)`.
#[inline]
pub(crate) fn signed_diff(x: f64, c: f64) -> f64 {
    let d = wrap(x - c);
    if d >= PI {
        d - TAU
    } else {
        d
    }
}

/// Geodesic distance on the circle, in `[0, π]`.
pub fn circular_distance(a: Angle, b: Angle) -> f64 {
    let d = (a.0 - b.0).abs();
    d.min(TAU - d)
}

/// A counter-clockwise arc `[start, start + len)` with `0 < len <= 2π`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub start: f64,
    pub len: f64,
}

impl Arc {
    pub fn new(start: f64, len: f64) -> Result<Self> {
        if !start.is_finite() || !len.is_finite() || len <= 0.0 || len > TAU + 1e-12 {
            return Err(Error::Domain(format!(
                "arc needs finite start and length in (0, 2π], got start={start}, len={len}"
            )));
        }
        Ok(Arc {
            start: wrap(start),
            len: len.min(TAU),
        })
    }

    pub fn full() -> Self {
        Arc { start: 0.0, len: TAU }
    }

    /// Arc centred on `center` with half-width `half`.
    pub fn centered(center: f64, half: f64) -> Result<Self> {
        Arc::new(center - half, 2.0 * half)
    }

    pub fn end(&self) -> f64 {
        wrap(self.start + self.len)
    }

    pub fn midpoint(&self) -> f64 {
        wrap(self.start + 0.5 * self.len)
    }

    pub fn is_full(&self) -> bool {
        self.len >= TAU
    }

    /// Position of `x` measured counter-clockwise from the start, in `[0, 2π)`.
    pub fn offset(&self, x: f64) -> f64 {
        wrap(x - self.start)
    }

    /// Half-open membership.
    pub fn contains(&self, x: f64) -> bool {
        self.is_full() || self.offset(x) < self.len
    }

    /// Closed membership, with a little slack at the far end.
    pub fn contains_closed(&self, x: f64) -> bool {
        let t = self.offset(x);
        self.is_full() || t <= self.len + 1e-12 || TAU - t <= 1e-12
    }

    pub fn rotate(&self, delta: f64) -> Arc {
        Arc {
            start: wrap(self.start + delta),
            len: self.len,
        }
    }

    pub fn overlaps(&self, other: &Arc) -> bool {
        if self.is_full() || other.is_full() {
            return true;
        }
        self.offset(other.start) < self.len || other.offset(self.start) < other.len
    }
}

/// A finite multiset of angles, stored wrapped into `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularSample {
    angles: Vec<f64>,
}

impl AngularSample {
    /// Wrap and store raw radian values. Non-finite values are rejected.
    pub fn new<I: IntoIterator<Item = f64>>(raw: I) -> Result<Self> {
        let angles = raw
            .into_iter()
            .map(|r| wrap_angle(r).map(Angle::value))
            .collect::<Result<Vec<_>>>()?;
        Ok(AngularSample { angles })
    }

    pub fn from_angles(angles: &[Angle]) -> Self {
        AngularSample {
            angles: angles.iter().map(|a| a.0).collect(),
        }
    }

    pub(crate) fn from_wrapped(angles: Vec<f64>) -> Self {
        debug_assert!(angles.iter().all(|a| (0.0..TAU).contains(a)));
        AngularSample { angles }
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn rotate(&self, delta: f64) -> AngularSample {
        AngularSample {
            angles: self.angles.iter().map(|a| wrap(a + delta)).collect(),
        }
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.angles.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Points lying in `arc` (half-open).
    pub fn restrict(&self, arc: &Arc) -> AngularSample {
        AngularSample {
            angles: self.angles.iter().copied().filter(|&a| arc.contains(a)).collect(),
        }
    }

    pub(crate) fn require_nonempty(&self, what: &str) -> Result<()> {
        if self.is_empty() {
            Err(Error::Domain(format!("{what}: empty sample")))
        } else {
            Ok(())
        }
    }
}

/// Complex Fourier moments `u_k`, `|k| <= K`, with `u_{-k} = conj(u_k)`.
///
/// Only the non-negative orders are stored, so conjugate symmetry holds
/// by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierCoefficients {
    coeffs: Vec<Complex64>,
}

impl FourierCoefficients {
    /// Build from `u_0..=u_K`.
    pub fn from_nonnegative(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Domain("need at least the order-0 coefficient".into()));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Domain("coefficients must be finite".into()));
        }
        Ok(FourierCoefficients { coeffs })
    }

    pub fn max_order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `u_k` for any `|k| <= K`; zero beyond the stored range.
    pub fn get(&self, k: i64) -> Complex64 {
        let idx = k.unsigned_abs() as usize;
        match self.coeffs.get(idx) {
            Some(&c) if k >= 0 => c,
            Some(&c) => c.conj(),
            None => Complex64::new(0.0, 0.0),
        }
    }

    /// `(x_k, y_k)` with `u_k = x_k + i y_k`.
    pub fn real_pair(&self, k: usize) -> (f64, f64) {
        let c = self.get(k as i64);
        (c.re, c.im)
    }

    pub fn nonnegative(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Keep orders `0..=k` only.
    pub fn truncate(&self, k: usize) -> FourierCoefficients {
        FourierCoefficients {
            coeffs: self.coeffs[..=k.min(self.max_order())].to_vec(),
        }
    }
}

/// Sample means `(1/n) Σ e^{ikθ_j}` for `k = 0..=K`.
pub fn empirical_fourier(sample: &AngularSample, max_order: usize) -> Result<FourierCoefficients> {
    sample.require_nonempty("empirical_fourier")?;
    let n = sample.len() as f64;
    let mut sums = weighted_power_sums(sample.angles(), None, max_order);
    for s in sums.iter_mut() {
        *s /= n;
    }
    sums[0] = Complex64::new(1.0, 0.0);
    Ok(FourierCoefficients { coeffs: sums })
}

/// `Σ w_j e^{ikθ_j}` for `k = 0..=K`, by repeated multiplication.
pub(crate) fn weighted_power_sums(
    angles: &[f64],
    weights: Option<&[f64]>,
    max_order: usize,
) -> Vec<Complex64> {
    let mut sums = vec![Complex64::new(0.0, 0.0); max_order + 1];
    for (j, &theta) in angles.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[j]);
        if w == 0.0 {
            continue;
        }
        let z = Complex64::from_polar(1.0, theta);
        let mut p = Complex64::new(w, 0.0);
        sums[0] += p;
        for s in sums.iter_mut().skip(1) {
            p *= z;
            *s += p;
        }
    }
    sums
}

/// Power sums `Σ Z_j^k` for `k = 1..=m`.
pub fn power_sums(sample: &AngularSample, m: usize) -> Vec<Complex64> {
    weighted_power_sums(sample.angles(), None, m)[1..].to_vec()
}

/// Recover `n <= 8` points on the circle from the means `u_1..u_n` of their powers.
pub fn data_from_moments(moments: &FourierCoefficients, n: usize) -> Result<AngularSample> {
    if moments.max_order() < n {
        return Err(Error::Domain(format!(
            "need moments up to order {n}, have {}",
            moments.max_order()
        )));
    }
    let sums: Vec<Complex64> = (1..=n as i64).map(|k| moments.get(k) * n as f64).collect();
    data_from_power_sums(&sums)
}

/// Recover points from their power sums `p_k = Σ Z_j^k`, `k = 1..=n`.
///
/// Newton's identities give the elementary symmetric polynomials, and the
/// roots of `Π (z - Z_j)` come from the companion matrix, then get a few
/// Newton polishing steps.
pub fn data_from_power_sums(p: &[Complex64]) -> Result<AngularSample> {
    let n = p.len();
    if n == 0 {
        return Err(Error::Domain("need at least one power sum".into()));
    }
    if n > MAX_MOMENT_ORDER {
        return Err(Error::Domain(format!(
            "moment inversion limited to n <= {MAX_MOMENT_ORDER}, got {n}"
        )));
    }
    // e_k from k e_k = Σ_{i=1}^{k} (-1)^{i-1} e_{k-i} p_i
    let mut e = vec![Complex64::new(1.0, 0.0); n + 1];
    for k in 1..=n {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 1..=k {
            let term = e[k - i] * p[i - 1];
            if i % 2 == 1 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        e[k] = acc / k as f64;
    }
    // monic coefficients, a[j] multiplies z^j
    let mut a = vec![Complex64::new(0.0, 0.0); n + 1];
    for k in 0..=n {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        a[n - k] = e[k] * sign;
    }

    let roots: Vec<Complex64> = if n == 1 {
        vec![-a[0]]
    } else {
        let mut c = DMatrix::<Complex64>::zeros(n, n);
        for i in 1..n {
            c[(i, i - 1)] = Complex64::new(1.0, 0.0);
        }
        for i in 0..n {
            c[(i, n - 1)] = -a[i];
        }
        let ev = c
            .schur()
            .eigenvalues()
            .ok_or_else(|| Error::Inconsistent("companion eigenvalues did not converge".into()))?;
        ev.iter().map(|&r| polish_root(&a, r)).collect()
    };

    let mut angles = Vec::with_capacity(n);
    for r in roots {
        let modulus = r.norm();
        if (modulus - 1.0).abs() > UNIT_CIRCLE_TOL {
            return Err(Error::Inconsistent(format!(
                "root {r} has modulus {modulus}, not on the unit circle"
            )));
        }
        angles.push(wrap(r.arg()));
    }
    angles.sort_by(f64::total_cmp);
    Ok(AngularSample { angles })
}

fn polish_root(a: &[Complex64], mut z: Complex64) -> Complex64 {
    for _ in 0..4 {
        let (mut f, mut df) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for &c in a.iter().rev() {
            df = df * z + f;
            f = f * z + c;
        }
        if df.norm() < 1e-14 {
            break;
        }
        let step = f / df;
        z -= step;
        if step.norm() < 1e-15 {
            break;
        }
    }
    z
}
