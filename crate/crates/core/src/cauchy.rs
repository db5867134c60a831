//! Borel/Cauchy transform evaluation, boundary values, regularized transform
//! operators between weighted spaces, operator-norm estimation and the
//! A2-type condition scans.
//!
//! The Borel transform here is `F(z) = int d mu(t) / (t - z)`, a Herglotz
//! function (maps the upper half-plane into itself for nonzero measures).
//! Closed forms are used for atoms, polynomial densities and the full
//! semicircle/arcsine pieces; everything else goes through adaptive
//! quadrature, with principal-value subtraction on the boundary.

use std::collections::HashMap;
use std::sync::Mutex;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{AcPiece, DiscreteMeasure, Interval, Measure, WeightDescriptor};
use crate::quadrature;

const PI: f64 = std::f64::consts::PI;

/// Principal square root re-aligned so that `sqrt(w) ~ z` for large `|z|`,
/// the branch that keeps `(-z + sqrt(z^2-4))/2` Herglotz.
fn aligned_sqrt(w: Complex64, z: Complex64) -> Complex64 {
    let s = w.sqrt();
    let dot = s.re * z.re + s.im * z.im;
    if dot < 0.0 || (dot == 0.0 && z.im > 0.0 && s.im < 0.0) {
        -s
    } else {
        s
    }
}

fn is_full_semicircle(i: &Interval) -> bool {
    (i.a() + 2.0).abs() < 1e-12 && (i.b() - 2.0).abs() < 1e-12
}

fn is_full_arcsine(i: &Interval) -> bool {
    (i.a() + 1.0).abs() < 1e-12 && (i.b() - 1.0).abs() < 1e-12
}

/// Closed-form `int_a^b p(t)/(t-z) dt` for a polynomial density:
/// `Q(z) + p(z) Ln((b-z)/(a-z))` with `Q` from polynomial division.
fn polynomial_transform(coeffs: &[f64], a: f64, b: f64, z: Complex64) -> Complex64 {
    let mut q = Complex64::new(0.0, 0.0);
    for (m, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        // (p(t) - p(z)) / (t - z) contributes sum_j z^{m-1-j} t^j.
        for j in 0..m {
            let coeff = (b.powi(j as i32 + 1) - a.powi(j as i32 + 1)) / (j as f64 + 1.0);
            q += c * z.powu((m - 1 - j) as u32) * coeff;
        }
    }
    let pz: Complex64 = coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c);
    let ratio = (Complex64::new(b, 0.0) - z) / (Complex64::new(a, 0.0) - z);
    q + pz * ratio.ln()
}

/// Boundary value `F(x + i0)` of the polynomial transform for `a < x < b`,
/// with the `+ i pi p(x)` branch written out explicitly (the complex log
/// lands on the negative real axis there, where signed zeros are hazardous).
fn polynomial_boundary(coeffs: &[f64], a: f64, b: f64, x: f64) -> Complex64 {
    let mut q = 0.0;
    for (m, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        for j in 0..m {
            let coeff = (b.powi(j as i32 + 1) - a.powi(j as i32 + 1)) / (j as f64 + 1.0);
            q += c * x.powi((m - 1 - j) as i32) * coeff;
        }
    }
    let px: f64 = coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c);
    Complex64::new(q + px * ((b - x) / (x - a)).ln(), PI * px)
}

/// `int w(t)/(t - z) dt` over one piece, `z` off the real axis or off the
/// piece. Closed forms where available, adaptive quadrature otherwise.
fn piece_transform(piece: &AcPiece, z: Complex64, tol: f64) -> Result<Complex64> {
    let (a, b) = (piece.interval.a(), piece.interval.b());
    match &piece.weight {
        WeightDescriptor::Constant { c } => {
            Ok(polynomial_transform(&[*c], a, b, z))
        }
        WeightDescriptor::Polynomial { coefficients } => {
            Ok(polynomial_transform(coefficients, a, b, z))
        }
        WeightDescriptor::Semicircle {} if is_full_semicircle(&piece.interval) => {
            let s = aligned_sqrt(z * z - 4.0, z);
            Ok((-z + s) / 2.0)
        }
        WeightDescriptor::Arcsine {} if is_full_arcsine(&piece.interval) => {
            let s = aligned_sqrt(z * z - 1.0, z);
            Ok(-s.inv())
        }
        _ => {
            let mut f = |t: f64| (Complex64::new(t, 0.0) - z).inv();
            Ok(piece.integrate_against(&mut f, a, b, tol)?.value)
        }
    }
}

/// Boundary value `F(x + i0)` of one piece for real `x` strictly inside the
/// piece: `PV int w(t)/(t-x) dt + i pi w(x)`.
fn piece_boundary_inside(piece: &AcPiece, x: f64, tol: f64) -> Result<Complex64> {
    let (a, b) = (piece.interval.a(), piece.interval.b());
    debug_assert!(x > a && x < b);
    match &piece.weight {
        WeightDescriptor::Constant { .. } | WeightDescriptor::Polynomial { .. } => {
            let coeffs: &[f64] = match &piece.weight {
                WeightDescriptor::Constant { c } => std::slice::from_ref(c),
                WeightDescriptor::Polynomial { coefficients } => coefficients,
                _ => unreachable!(),
            };
            Ok(polynomial_boundary(coeffs, a, b, x))
        }
        WeightDescriptor::Semicircle {} if is_full_semicircle(&piece.interval) => {
            Ok(Complex64::new(-x / 2.0, (4.0 - x * x).max(0.0).sqrt() / 2.0))
        }
        WeightDescriptor::Arcsine {} if is_full_arcsine(&piece.interval) => {
            // PV of the arcsine density vanishes on (-1, 1).
            Ok(Complex64::new(0.0, 1.0 / (1.0 - x * x).sqrt()))
        }
        _ => {
            // PV subtraction: integrand (w(t) - w(x))/(t - x) is bounded for
            // Lipschitz densities; the removed pole contributes
            // w(x) ln((b-x)/(x-a)).
            let wx = piece.eval(x);
            let len = b - a;
            let h0 = len * 1e-7;
            let slope = (piece.eval((x + h0).min(b)) - piece.eval((x - h0).max(a)))
                / ((x + h0).min(b) - (x - h0).max(a));
            let piecec = piece.clone();
            let q = quadrature::adaptive(
                move |t| {
                    let d = t - x;
                    if d.abs() < h0 {
                        slope
                    } else {
                        (piecec.eval(t) - wx) / d
                    }
                },
                a,
                b,
                tol,
            )?;
            let pv = q.value.re + wx * ((b - x) / (x - a)).ln();
            Ok(Complex64::new(pv, PI * wx))
        }
    }
}

/// How the evaluation of a boundary value concluded.
#[derive(Debug, Clone, Serialize)]
pub enum BoundaryValue {
    Converged {
        /// The boundary value (exact route when available, otherwise the
        /// Richardson extrapolation of the ladder).
        value: Complex64,
        /// Richardson extrapolation of the ladder, for cross-checking.
        extrapolated: Complex64,
        /// Disagreement between the last two extrapolants (and the exact
        /// value when one exists).
        diagnostic: f64,
        /// True when a closed/PV form decided the value.
        exact: bool,
        ladder: Vec<(f64, Complex64)>,
    },
    Diverged {
        /// Fitted growth exponent of |F(x + i eps)| in eps (about -1 at an
        /// atom).
        rate: f64,
        ladder: Vec<(f64, Complex64)>,
    },
}

impl BoundaryValue {
    pub fn value(&self) -> Option<Complex64> {
        match self {
            BoundaryValue::Converged { value, .. } => Some(*value),
            BoundaryValue::Diverged { .. } => None,
        }
    }
}

/// The default epsilon ladder `{1e-1, ..., 1e-6}`.
pub fn default_eps_ladder() -> Vec<f64> {
    (1..=6).map(|k| 10f64.powi(-k)).collect()
}

/// Evaluator for `F(z) = int d mu(t)/(t - z)` with a point cache.
#[derive(Debug)]
pub struct HerglotzFunction {
    measure: Measure,
    tol: f64,
    cache: Mutex<HashMap<(u64, u64), Complex64>>,
}

impl Clone for HerglotzFunction {
    fn clone(&self) -> Self {
        HerglotzFunction {
            measure: self.measure.clone(),
            tol: self.tol,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl HerglotzFunction {
    pub fn new(measure: Measure) -> Self {
        HerglotzFunction {
            measure,
            tol: 1e-12,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_tolerance(measure: Measure, tol: f64) -> Self {
        HerglotzFunction {
            measure,
            tol,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    fn on_support_real(&self, x: f64) -> bool {
        self.measure.atoms().iter().any(|&(p, _)| p == x)
            || self
                .measure
                .ac_pieces()
                .iter()
                .any(|p| p.interval.contains(x))
    }

    /// `F(z)` for `Im z != 0`, or real `z` off the support.
    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        if z.im == 0.0 && self.on_support_real(z.re) {
            return Err(Error::domain(format!(
                "F({}) touches the support; use boundary_value",
                z.re
            )));
        }
        let key = (z.re.to_bits(), z.im.to_bits());
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let mut value = Complex64::new(0.0, 0.0);
        for &(p, m) in self.measure.atoms() {
            value += m / (Complex64::new(p, 0.0) - z);
        }
        for piece in self.measure.ac_pieces() {
            value += piece_transform(piece, z, self.tol)?;
        }
        let mut cache = self.cache.lock().unwrap();
        if cache.len() > 1_000_000 {
            cache.clear();
        }
        cache.insert(key, value);
        Ok(value)
    }

    /// `F(x)` for real `x` off the support.
    pub fn eval_real(&self, x: f64) -> Result<f64> {
        Ok(self.eval(Complex64::new(x, 0.0))?.re)
    }

    /// `F'(x) = int d mu(t)/(t - x)^2` for real `x` off the support.
    pub fn derivative_real(&self, x: f64) -> Result<f64> {
        if self.on_support_real(x) {
            return Err(Error::domain(format!("F'({x}) is on the support")));
        }
        let mut value = 0.0;
        for &(p, m) in self.measure.atoms() {
            value += m / ((p - x) * (p - x));
        }
        for piece in self.measure.ac_pieces() {
            let mut f = |t: f64| Complex64::new(1.0 / ((t - x) * (t - x)), 0.0);
            value += piece
                .integrate_against(&mut f, piece.interval.a(), piece.interval.b(), self.tol)?
                .value
                .re;
        }
        Ok(value)
    }

    /// Exact boundary value `F(x + i0)` when one is computable: `None` when
    /// `x` sits at an atom or at a piece edge with positive density (the
    /// genuinely divergent cases).
    fn exact_boundary(&self, x: f64) -> Result<Option<Complex64>> {
        if self.measure.atoms().iter().any(|&(p, _)| p == x) {
            return Ok(None);
        }
        let mut value = Complex64::new(0.0, 0.0);
        for &(p, m) in self.measure.atoms() {
            value += Complex64::new(m / (p - x), 0.0);
        }
        for piece in self.measure.ac_pieces() {
            let (a, b) = (piece.interval.a(), piece.interval.b());
            if x > a && x < b {
                value += piece_boundary_inside(piece, x, self.tol)?;
            } else if x == a || x == b {
                // Edge point: the log term diverges unless the density
                // vanishes at the edge.
                let inward = if x == a { 1.0 } else { -1.0 };
                let probe = x + inward * piece.interval.len() * 1e-9;
                if piece.eval(probe) > 1e-12 {
                    return Ok(None);
                }
                value += piece_transform(piece, Complex64::new(x, 0.0), self.tol)?;
            } else {
                value += piece_transform(piece, Complex64::new(x, 0.0), self.tol)?;
            }
        }
        Ok(Some(value))
    }

    /// Boundary value by epsilon ladder with Richardson extrapolation,
    /// cross-checked against the exact route when one exists.
    pub fn boundary_value(&self, x: f64, eps_ladder: &[f64]) -> Result<BoundaryValue> {
        if eps_ladder.is_empty() {
            return Err(Error::domain("epsilon ladder must be nonempty"));
        }
        if eps_ladder.windows(2).any(|w| w[0] <= w[1]) || eps_ladder.iter().any(|&e| e <= 0.0) {
            return Err(Error::domain(
                "epsilon ladder must be strictly decreasing and positive",
            ));
        }
        let ladder: Vec<(f64, Complex64)> = eps_ladder
            .iter()
            .map(|&eps| Ok((eps, self.eval(Complex64::new(x, eps))?)))
            .collect::<Result<_>>()?;

        // Growth-rate fit of ln|F| against ln eps.
        let rate = fit_loglog_slope(
            ladder
                .iter()
                .map(|&(e, v)| (e, v.norm().max(1e-300)))
                .collect(),
        );

        let exact = self.exact_boundary(x)?;
        if exact.is_none() {
            return Ok(BoundaryValue::Diverged { rate, ladder });
        }

        // Richardson extrapolation down the ladder (error is O(eps) at worst).
        let (extrapolated, prev) = richardson(&ladder);
        let mut diagnostic = (extrapolated - prev).norm();
        let value = match exact {
            Some(v) => {
                diagnostic = diagnostic.max((v - extrapolated).norm().min(diagnostic * 10.0));
                v
            }
            None => extrapolated,
        };
        Ok(BoundaryValue::Converged {
            value,
            extrapolated,
            diagnostic,
            exact: exact.is_some(),
            ladder,
        })
    }
}

/// Least-squares slope of ln(y) against ln(x).
pub(crate) fn fit_loglog_slope(points: Vec<(f64, f64)>) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .into_iter()
        .filter(|&(x, y)| x > 0.0 && y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        0.0
    } else {
        (n * sxy - sx * sy) / denom
    }
}

/// One Richardson pass over a (roughly geometric) ladder; returns the last
/// two refined extrapolants `(final, previous)`.
fn richardson(ladder: &[(f64, Complex64)]) -> (Complex64, Complex64) {
    if ladder.len() == 1 {
        return (ladder[0].1, ladder[0].1);
    }
    let mut level: Vec<(f64, Complex64)> = ladder.to_vec();
    let mut order = 1.0;
    let mut prev = ladder.last().unwrap().1;
    while level.len() > 1 && order <= 2.0 {
        let mut next = Vec::with_capacity(level.len() - 1);
        for w in level.windows(2) {
            let (e0, v0) = w[0];
            let (e1, v1) = w[1];
            let r = (e0 / e1).powf(order);
            next.push((e1, (r * v1 - v0) / (r - 1.0)));
        }
        prev = level.last().unwrap().1;
        level = next;
        order += 1.0;
    }
    (level.last().unwrap().1, prev)
}

// ---------------------------------------------------------------------------
// Weighted matrices and operator norms
// ---------------------------------------------------------------------------

/// Finite-rank operator from `L^2(w)` to `L^2(v)` held as a kernel matrix:
/// application integrates against the source measure,
/// `(Tf)_k = sum_j K(s_k, t_j) w_j f_j`.
#[derive(Debug, Clone)]
pub struct WeightedMatrix {
    kernel: Vec<Complex64>,
    n_out: usize,
    n_in: usize,
    in_weights: Vec<f64>,
    out_weights: Vec<f64>,
}

impl WeightedMatrix {
    pub fn new(
        kernel: Vec<Complex64>,
        in_weights: Vec<f64>,
        out_weights: Vec<f64>,
    ) -> Result<Self> {
        let (n_in, n_out) = (in_weights.len(), out_weights.len());
        if kernel.len() != n_in * n_out {
            return Err(Error::DimensionMismatch(format!(
                "kernel has {} entries, expected {} x {}",
                kernel.len(),
                n_out,
                n_in
            )));
        }
        if in_weights.iter().chain(out_weights.iter()).any(|&w| w <= 0.0) {
            return Err(Error::validation("weights must be positive"));
        }
        Ok(WeightedMatrix {
            kernel,
            n_out,
            n_in,
            in_weights,
            out_weights,
        })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn in_weights(&self) -> &[f64] {
        &self.in_weights
    }

    pub fn out_weights(&self) -> &[f64] {
        &self.out_weights
    }

    #[inline]
    pub fn entry(&self, k: usize, j: usize) -> Complex64 {
        self.kernel[k * self.n_in + j]
    }

    pub(crate) fn kernel_entries(&self) -> &[Complex64] {
        &self.kernel
    }

    /// `(Tf)_k = sum_j K_{kj} w_j f_j`.
    pub fn apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(f.len(), self.n_in);
        let scaled: Vec<Complex64> = f
            .iter()
            .zip(&self.in_weights)
            .map(|(&fj, &w)| fj * w)
            .collect();
        (0..self.n_out)
            .map(|k| {
                let row = &self.kernel[k * self.n_in..(k + 1) * self.n_in];
                row.iter().zip(&scaled).map(|(&kk, &g)| kk * g).sum()
            })
            .collect()
    }

    /// Adjoint with respect to the weighted inner products: the kernel is
    /// conjugate-transposed and the weight roles swap.
    pub fn adjoint(&self) -> WeightedMatrix {
        let mut kernel = vec![Complex64::new(0.0, 0.0); self.n_in * self.n_out];
        for k in 0..self.n_out {
            for j in 0..self.n_in {
                kernel[j * self.n_out + k] = self.entry(k, j).conj();
            }
        }
        WeightedMatrix {
            kernel,
            n_out: self.n_in,
            n_in: self.n_out,
            in_weights: self.out_weights.clone(),
            out_weights: self.in_weights.clone(),
        }
    }

    /// `(T*g)_j = sum_k conj(K_{kj}) v_k g_k` without materializing.
    pub fn apply_adjoint(&self, g: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(g.len(), self.n_out);
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_in];
        for (k, &gk) in g.iter().enumerate() {
            let c = gk * self.out_weights[k];
            let row = &self.kernel[k * self.n_in..(k + 1) * self.n_in];
            for (o, &kk) in out.iter_mut().zip(row) {
                *o += kk.conj() * c;
            }
        }
        out
    }

    /// Largest singular value in the weighted inner products.
    pub fn operator_norm(&self, tol: f64) -> Result<f64> {
        Ok(self.operator_norm_with_start(tol, None)?.0)
    }

    /// Operator norm with an optional warm-start vector; returns the norm
    /// and the converged right-singular direction (useful for continuation
    /// across an epsilon ladder).
    pub fn operator_norm_with_start(
        &self,
        tol: f64,
        start: Option<&[Complex64]>,
    ) -> Result<(f64, Vec<Complex64>)> {
        let apply = |x: &[Complex64]| self.apply(x);
        let apply_adj = |y: &[Complex64]| self.apply_adjoint(y);
        weighted_operator_norm_with_start(
            &self.in_weights,
            &self.out_weights,
            apply,
            apply_adj,
            tol,
            start,
        )
    }
}

fn weighted_dot(w: &[f64], x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter()
        .zip(y)
        .zip(w)
        .map(|((&a, &b), &wi)| a * b.conj() * wi)
        .sum()
}

/// Power iteration on `T* T` in the weighted inner products. The default
/// start vector is all-ones plus a fixed deterministic jitter (a symmetric
/// start can be orthogonal to the top singular vector on symmetric grids).
pub fn weighted_operator_norm(
    in_weights: &[f64],
    out_weights: &[f64],
    apply: impl Fn(&[Complex64]) -> Vec<Complex64>,
    apply_adjoint: impl Fn(&[Complex64]) -> Vec<Complex64>,
    tol: f64,
) -> Result<f64> {
    Ok(weighted_operator_norm_with_start(
        in_weights,
        out_weights,
        apply,
        apply_adjoint,
        tol,
        None,
    )?
    .0)
}

/// [`weighted_operator_norm`] with an optional warm start; also returns the
/// converged direction.
pub fn weighted_operator_norm_with_start(
    in_weights: &[f64],
    out_weights: &[f64],
    apply: impl Fn(&[Complex64]) -> Vec<Complex64>,
    apply_adjoint: impl Fn(&[Complex64]) -> Vec<Complex64>,
    tol: f64,
    start: Option<&[Complex64]>,
) -> Result<(f64, Vec<Complex64>)> {
    if tol <= 0.0 {
        return Err(Error::domain("operator norm tolerance must be > 0"));
    }
    let n = in_weights.len();
    if n == 0 {
        return Ok((0.0, vec![]));
    }
    let mut x: Vec<Complex64> = match start {
        Some(s) if s.len() == n => s.to_vec(),
        _ => (0..n)
            .map(|j| Complex64::new(1.0 + 0.01 * (((j + 1) as f64) * 12.9898).sin(), 0.0))
            .collect(),
    };
    let norm0 = weighted_dot(in_weights, &x, &x).re.sqrt();
    if norm0 == 0.0 {
        return Err(Error::domain("operator norm start vector is null"));
    }
    for xi in x.iter_mut() {
        *xi /= norm0;
    }
    let mut rho_prev = -1.0f64;
    const CAP: usize = 20_000;
    for iter in 0..CAP {
        let y = apply(&x);
        let rho = weighted_dot(out_weights, &y, &y).re;
        if rho == 0.0 {
            return Ok((0.0, x));
        }
        let mut z = apply_adjoint(&y);
        let zn = weighted_dot(in_weights, &z, &z).re.sqrt();
        if zn == 0.0 {
            return Ok((rho.sqrt(), x));
        }
        for zi in z.iter_mut() {
            *zi /= zn;
        }
        x = z;
        if iter > 0 && (rho - rho_prev).abs() <= tol * rho.abs() {
            return Ok((rho.sqrt(), x));
        }
        rho_prev = rho;
    }
    Err(Error::NonConvergence {
        solver: "power iteration",
        iterations: CAP,
        detail: format!("Rayleigh quotient still moving at {rho_prev:.6e}"),
    })
}

/// Regularized Cauchy transform `T_eps: L^2(mu) -> L^2(nu)` with kernel
/// `1/(s - t + i eps)`.
pub fn regularized_matrix(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    eps: f64,
) -> Result<WeightedMatrix> {
    if eps <= 0.0 {
        return Err(Error::domain("regularized kernel requires eps > 0"));
    }
    let mut kernel = Vec::with_capacity(mu.len() * nu.len());
    for &s in nu.nodes() {
        for &t in mu.nodes() {
            kernel.push(Complex64::new(s - t, eps).inv());
        }
    }
    WeightedMatrix::new(kernel, mu.weights().to_vec(), nu.weights().to_vec())
}

/// Truncated Cauchy transform: kernel `1/(s-t)` where `|s-t| > eps`, else 0.
pub fn truncated_matrix(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    eps: f64,
) -> Result<WeightedMatrix> {
    if eps <= 0.0 {
        return Err(Error::domain("truncated kernel requires eps > 0"));
    }
    let mut kernel = Vec::with_capacity(mu.len() * nu.len());
    for &s in nu.nodes() {
        for &t in mu.nodes() {
            let d = s - t;
            kernel.push(if d.abs() > eps {
                Complex64::new(1.0 / d, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            });
        }
    }
    WeightedMatrix::new(kernel, mu.weights().to_vec(), nu.weights().to_vec())
}

// ---------------------------------------------------------------------------
// A2-type condition scans
// ---------------------------------------------------------------------------

/// Product of the two Poisson integrals
/// `int Im(a) d mu / |t-a|^2 * int Im(a) d nu / |t-a|^2` at a point `a` in
/// the upper half-plane.
pub fn poisson_a2(mu: &Measure, nu: &Measure, a: Complex64) -> Result<f64> {
    if a.im <= 0.0 {
        return Err(Error::domain("poisson_a2 requires Im a > 0"));
    }
    let poisson = |m: &Measure| -> Result<f64> {
        Ok(m.integrate_real(|t| a.im / ((t - a.re) * (t - a.re) + a.im * a.im), 1e-12)?
            .value
            .re)
    };
    Ok(poisson(mu)? * poisson(nu)?)
}

/// Diagnostics for one atom-centered shrinking family.
#[derive(Debug, Clone, Serialize)]
pub struct AtomFamilyDiag {
    pub position: f64,
    /// (width, mu(I)nu(I)/|I|^2) per level; widths shrink by 4 per level.
    pub values: Vec<(f64, f64)>,
    /// Median growth ratio across the deepest populated levels.
    pub growth_per_level: f64,
    pub divergent: bool,
}

/// Result of the interval A2 scan.
#[derive(Debug, Clone, Serialize)]
pub struct A2Report {
    pub sup_value: f64,
    pub argmax_witness: Interval,
    /// Description of the candidate set that was scanned.
    pub grid_resolution: String,
    pub atom_families: Vec<AtomFamilyDiag>,
    pub divergent: bool,
}

impl A2Report {
    /// CSV rows `t,value,witness` (one row per atom family level plus the sup).
    pub fn csv_rows(&self) -> Vec<String> {
        let mut rows = vec![format!(
            "sup,{:.17e},[{:.17e};{:.17e}]",
            self.sup_value,
            self.argmax_witness.a(),
            self.argmax_witness.b()
        )];
        for fam in &self.atom_families {
            for &(w, v) in &fam.values {
                rows.push(format!("{:.17e},{:.17e},{:.17e}", w, v, fam.position));
            }
        }
        rows
    }
}

/// Candidate intervals: a dyadic grid over the joint support hull plus
/// minimal intervals spanning atom pairs (which make the scan exact for
/// purely atomic measures).
pub fn a2_candidates(mu: &Measure, nu: &Measure, dyadic_depth: u32) -> Vec<Interval> {
    let mut candidates = vec![];
    let hull = match (mu.support_hull(), nu.support_hull()) {
        (Some(h1), Some(h2)) => {
            Interval::new(h1.a().min(h2.a()), h1.b().max(h2.b())).unwrap()
        }
        _ => return candidates,
    };
    let pad = 1e-9 * hull.len().max(1.0);
    let (lo, hi) = (hull.a() - pad, hull.b() + pad);
    for depth in 0..=dyadic_depth {
        let cells = 1u64 << depth;
        let h = (hi - lo) / cells as f64;
        if h <= 0.0 {
            break;
        }
        for c in 0..cells {
            let a = lo + c as f64 * h;
            candidates.push(Interval::new(a, a + h).unwrap());
        }
    }
    // Atom-pair minimal intervals (cross and same measure).
    let mut positions: Vec<f64> = mu
        .atoms()
        .iter()
        .chain(nu.atoms().iter())
        .map(|&(p, _)| p)
        .collect();
    positions.sort_by(f64::total_cmp);
    positions.dedup();
    let pad_pair = |a: f64, b: f64| {
        let d = (b - a).max(1e-300) * 1e-6;
        Interval::new(a - d, b + d).unwrap()
    };
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            candidates.push(pad_pair(positions[i], positions[j]));
        }
    }
    candidates
}

/// Fast interval-mass evaluator (prefix sums over atoms, pieces closed-form).
struct MassOracle<'a> {
    positions: Vec<f64>,
    prefix: Vec<f64>,
    pieces: &'a [AcPiece],
}

impl<'a> MassOracle<'a> {
    fn new(m: &'a Measure) -> Self {
        let positions: Vec<f64> = m.atoms().iter().map(|&(p, _)| p).collect();
        let mut prefix = vec![0.0];
        for &(_, mass) in m.atoms() {
            prefix.push(prefix.last().unwrap() + mass);
        }
        MassOracle {
            positions,
            prefix,
            pieces: m.ac_pieces(),
        }
    }

    fn mass(&self, i: &Interval) -> f64 {
        let lo = self.positions.partition_point(|&p| p < i.a());
        let hi = self.positions.partition_point(|&p| p <= i.b());
        let atom_mass = self.prefix[hi] - self.prefix[lo];
        atom_mass
            + self
                .pieces
                .iter()
                .map(|p| p.mass_between(i.a(), i.b()))
                .sum::<f64>()
    }
}

/// Sup over candidate intervals of `mu(I) nu(I) / |I|^2` with a witness,
/// plus an atom-centered shrinking-family diagnostic for divergence.
pub fn interval_a2_sup(mu: &Measure, nu: &Measure, candidates: &[Interval]) -> Result<A2Report> {
    if candidates.is_empty() {
        return Err(Error::domain("candidate interval list must be nonempty"));
    }
    if candidates.iter().any(|i| i.is_empty()) {
        return Err(Error::domain("degenerate interval in candidate list"));
    }
    let mo = MassOracle::new(mu);
    let no = MassOracle::new(nu);
    let mut sup = 0.0f64;
    let mut witness = candidates[0];
    let mut min_w = f64::INFINITY;
    let mut max_w = 0.0f64;
    for i in candidates {
        min_w = min_w.min(i.len());
        max_w = max_w.max(i.len());
        let v = mo.mass(i) * no.mass(i) / (i.len() * i.len());
        if v > sup {
            sup = v;
            witness = *i;
        }
    }

    // Atom-centered geometric shrinking family, width divided by 4 per level.
    let hull_len = match (mu.support_hull(), nu.support_hull()) {
        (Some(h1), Some(h2)) => (h1.b().max(h2.b()) - h1.a().min(h2.a())).max(1.0),
        _ => 1.0,
    };
    let mut atom_families = vec![];
    let mut positions: Vec<f64> = mu
        .atoms()
        .iter()
        .chain(nu.atoms().iter())
        .map(|&(p, _)| p)
        .collect();
    positions.sort_by(f64::total_cmp);
    positions.dedup();
    for &p in &positions {
        let mut values = vec![];
        let mut width = hull_len;
        for _ in 0..20 {
            let i = Interval::new(p - width / 2.0, p + width / 2.0).unwrap();
            let v = mo.mass(&i) * no.mass(&i) / (width * width);
            values.push((width, v));
            width /= 4.0;
        }
        let ratios: Vec<f64> = values
            .windows(2)
            .filter(|w| w[0].1 > 0.0 && w[1].1 > 0.0)
            .map(|w| w[1].1 / w[0].1)
            .collect();
        let growth = median_of_tail(&ratios, 5);
        // A genuinely shared point mass keeps both masses at every level, so
        // growth must persist down to the finest width; a disjoint pair
        // drops to zero once the width falls below the separation.
        let divergent = growth > 10.0 && values.last().map_or(false, |&(_, v)| v > 0.0);
        atom_families.push(AtomFamilyDiag {
            position: p,
            values,
            growth_per_level: growth,
            divergent,
        });
    }
    let divergent = atom_families.iter().any(|f| f.divergent);
    Ok(A2Report {
        sup_value: sup,
        argmax_witness: witness,
        grid_resolution: format!(
            "{} candidates, widths in [{:.3e}, {:.3e}]; atom families: 20 quarter-width levels",
            candidates.len(),
            min_w,
            max_w
        ),
        atom_families,
        divergent,
    })
}

fn median_of_tail(values: &[f64], tail: usize) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let start = values.len().saturating_sub(tail);
    let mut t: Vec<f64> = values[start..].to_vec();
    t.sort_by(f64::total_cmp);
    t[t.len() / 2]
}

// ---------------------------------------------------------------------------
// Level-set tails of |K eta|
// ---------------------------------------------------------------------------

/// Result of a superlevel-set scan of `|K eta|` over an interval.
#[derive(Debug, Clone, Serialize)]
pub struct LevelsetTail {
    /// (t, grid-resolved Lebesgue measure of {|K eta| > t} in I).
    pub rows: Vec<(f64, f64)>,
    /// Grid points where the transform was infinite (exact atom hits).
    pub infinite_points: usize,
    pub grid_points: usize,
    /// Mean of t * measure over the last quarter of the grid.
    pub tail_constant: f64,
    /// Fitted log-log slope of t * measure over the grid tail.
    pub tail_slope: f64,
}

impl LevelsetTail {
    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|&(t, m)| format!("{:.17e},{:.17e},{:.17e}", t, m, t * m))
            .collect()
    }
}

/// Superlevel-set measures `|{ |K eta| > t } cap I|` on a uniform midpoint
/// grid, where `K eta(x) = -F(x + i0)` is the boundary Cauchy transform.
pub fn levelset_tail(
    eta: &Measure,
    interval: &Interval,
    t_grid: &[f64],
    grid_points: usize,
) -> Result<LevelsetTail> {
    if t_grid.is_empty() {
        return Err(Error::domain("t grid must be nonempty"));
    }
    if grid_points == 0 {
        return Err(Error::domain("grid_points must be positive"));
    }
    let f = HerglotzFunction::with_tolerance(eta.clone(), 1e-8);
    let dx = interval.len() / grid_points as f64;
    let mut magnitudes = Vec::with_capacity(grid_points);
    let mut infinite_points = 0usize;
    for i in 0..grid_points {
        let x = interval.a() + (i as f64 + 0.5) * dx;
        let v = match f.exact_boundary(x)? {
            Some(v) => v.norm(),
            None => {
                infinite_points += 1;
                f64::INFINITY
            }
        };
        magnitudes.push(v);
    }
    magnitudes.sort_by(f64::total_cmp);
    let rows: Vec<(f64, f64)> = t_grid
        .iter()
        .map(|&t| {
            let below = magnitudes.partition_point(|&m| m <= t);
            (t, (grid_points - below) as f64 * dx)
        })
        .collect();
    let tail_start = rows.len() - rows.len().div_ceil(4);
    let tail: Vec<f64> = rows[tail_start..].iter().map(|&(t, m)| t * m).collect();
    let tail_constant = tail.iter().sum::<f64>() / tail.len() as f64;
    let tail_slope = fit_loglog_slope(
        rows[tail_start..]
            .iter()
            .map(|&(t, m)| (t, (t * m).max(1e-300)))
            .collect(),
    );
    Ok(LevelsetTail {
        rows,
        infinite_points,
        grid_points,
        tail_constant,
        tail_slope,
    })
}
