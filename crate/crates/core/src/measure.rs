//! Borel measures on the line with explicit Lebesgue decomposition.
//!
//! A [`Measure`] is a finite list of atoms plus piecewise absolutely
//! continuous parts, each piece an interval carrying a [`WeightDescriptor`].
//! All supports are compact. The module provides integration against the
//! measure, discretization onto Gauss-Legendre nodes, and the distribution
//! function / increasing rearrangement calculus used by the divergence
//! criteria.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, Quadrature};

/// Closed interval `[a, b]` with `a <= b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct Interval {
    a: f64,
    b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::validation("interval endpoints must be finite"));
        }
        if a > b {
            return Err(Error::validation(format!(
                "interval requires a <= b, got [{a}, {b}]"
            )));
        }
        Ok(Interval { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn is_empty(&self) -> bool {
        self.a == self.b
    }

    pub fn contains(&self, x: f64) -> bool {
        self.a <= x && x <= self.b
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let a = self.a.max(other.a);
        let b = self.b.min(other.b);
        (a <= b).then_some(Interval { a, b })
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.a + self.b)
    }
}

impl TryFrom<(f64, f64)> for Interval {
    type Error = Error;
    fn try_from(v: (f64, f64)) -> Result<Self> {
        Interval::new(v.0, v.1)
    }
}

impl From<Interval> for (f64, f64) {
    fn from(i: Interval) -> (f64, f64) {
        (i.a, i.b)
    }
}

/// Density shape of one absolutely continuous piece.
///
/// `PowerLaw` and `PowerLog` are anchored at the left endpoint of their
/// piece: with `u = x - a`, `PowerLaw(c, p)` is `c u^p` and `PowerLog(c, p)`
/// is `c u ln^{-p}(1/u)`. `Semicircle` and `Arcsine` are the fixed densities
/// `sqrt(4-t^2)/(2 pi)` and `1/(pi sqrt(1-x^2))`; restricting their piece
/// interval restricts the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    content = "params",
    rename_all = "snake_case",
    deny_unknown_fields
)]
pub enum WeightDescriptor {
    Constant { c: f64 },
    Polynomial { coefficients: Vec<f64> },
    PowerLaw { c: f64, p: f64 },
    PowerLog { c: f64, p: f64 },
    Semicircle {},
    Arcsine {},
    Table { xs: Vec<f64>, ys: Vec<f64> },
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn poly_derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

fn effective_degree(coeffs: &[f64]) -> usize {
    let mut deg = 0;
    for (k, &c) in coeffs.iter().enumerate() {
        if c != 0.0 {
            deg = k;
        }
    }
    deg
}

/// Real roots of the polynomial inside `[a, b]`, found by recursively
/// isolating monotone segments between the derivative's roots.
fn poly_roots_in(coeffs: &[f64], a: f64, b: f64) -> Vec<f64> {
    let deg = effective_degree(coeffs);
    if deg == 0 {
        return vec![];
    }
    if deg == 1 {
        let root = -coeffs[0] / coeffs[1];
        return if root >= a && root <= b {
            vec![root]
        } else {
            vec![]
        };
    }
    let crit = poly_roots_in(&poly_derivative(coeffs), a, b);
    let mut breaks = vec![a];
    breaks.extend(crit);
    breaks.push(b);
    breaks.sort_by(f64::total_cmp);
    let mut roots = vec![];
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if lo >= hi {
            continue;
        }
        let (flo, fhi) = (poly_eval(coeffs, lo), poly_eval(coeffs, hi));
        if flo == 0.0 {
            push_distinct(&mut roots, lo, a, b);
        }
        if flo * fhi < 0.0 {
            let mut lo = lo;
            let mut hi = hi;
            let sign_lo = flo.signum();
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if poly_eval(coeffs, mid).signum() == sign_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            push_distinct(&mut roots, 0.5 * (lo + hi), a, b);
        }
        if fhi == 0.0 && hi == b {
            push_distinct(&mut roots, hi, a, b);
        }
    }
    roots
}

fn push_distinct(roots: &mut Vec<f64>, r: f64, a: f64, b: f64) {
    let tol = 1e-13 * (b - a).max(1.0);
    if roots.iter().all(|&x| (x - r).abs() > tol) {
        roots.push(r);
    }
}

impl WeightDescriptor {
    /// Density value at `x` for a piece on `interval`. Returns 0 outside the
    /// descriptor's natural support; clamps roundoff negatives to 0.
    pub fn eval(&self, x: f64, interval: &Interval) -> f64 {
        let v = match self {
            WeightDescriptor::Constant { c } => *c,
            WeightDescriptor::Polynomial { coefficients } => poly_eval(coefficients, x),
            WeightDescriptor::PowerLaw { c, p } => {
                let u = x - interval.a;
                if u <= 0.0 {
                    if *p > 0.0 {
                        0.0
                    } else if *p == 0.0 {
                        *c
                    } else {
                        f64::INFINITY
                    }
                } else {
                    c * u.powf(*p)
                }
            }
            WeightDescriptor::PowerLog { c, p } => {
                let u = x - interval.a;
                if u <= 0.0 {
                    0.0
                } else if u >= 1.0 {
                    f64::INFINITY
                } else {
                    c * u * (1.0 / u).ln().powf(-p)
                }
            }
            WeightDescriptor::Semicircle {} => {
                let s = 4.0 - x * x;
                if s <= 0.0 {
                    0.0
                } else {
                    s.sqrt() / (2.0 * std::f64::consts::PI)
                }
            }
            WeightDescriptor::Arcsine {} => {
                let s = 1.0 - x * x;
                if s <= 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / (std::f64::consts::PI * s.sqrt())
                }
            }
            WeightDescriptor::Table { xs, ys } => {
                let x = x.clamp(xs[0], *xs.last().unwrap());
                match xs.binary_search_by(|v| v.total_cmp(&x)) {
                    Ok(i) => ys[i],
                    Err(i) => {
                        let (x0, x1) = (xs[i - 1], xs[i]);
                        let (y0, y1) = (ys[i - 1], ys[i]);
                        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
                    }
                }
            }
        };
        if v < 0.0 && v > -1e-12 {
            0.0
        } else {
            v
        }
    }

    /// Structural checks tying the descriptor to its piece interval.
    pub fn validate(&self, interval: &Interval) -> Result<()> {
        if interval.len() <= 0.0 {
            return Err(Error::validation("ac piece requires a < b"));
        }
        match self {
            WeightDescriptor::Constant { c } => {
                if !c.is_finite() || *c < 0.0 {
                    return Err(Error::validation("constant weight requires c >= 0"));
                }
            }
            WeightDescriptor::Polynomial { coefficients } => {
                if coefficients.is_empty() {
                    return Err(Error::validation("polynomial weight needs coefficients"));
                }
                // Minimum over the piece must be nonnegative (weight >= 0).
                let mut breaks = poly_roots_in(&poly_derivative(coefficients), interval.a, interval.b);
                breaks.push(interval.a);
                breaks.push(interval.b);
                let scale = coefficients.iter().fold(0.0f64, |m, c| m.max(c.abs()));
                for x in breaks {
                    if poly_eval(coefficients, x) < -1e-12 * scale.max(1.0) {
                        return Err(Error::validation(format!(
                            "weight evaluates < 0 at x = {x} on its interval"
                        )));
                    }
                }
            }
            WeightDescriptor::PowerLaw { c, p } => {
                if !c.is_finite() || *c <= 0.0 {
                    return Err(Error::validation("power-law weight requires c > 0"));
                }
                if *p <= -1.0 {
                    return Err(Error::domain(format!(
                        "power-law exponent p = {p} is not integrable (requires p > -1)"
                    )));
                }
            }
            WeightDescriptor::PowerLog { c, p } => {
                if !c.is_finite() || *c <= 0.0 {
                    return Err(Error::validation("power-log weight requires c > 0"));
                }
                // Length cap keeps ln(1/u) > 0 and the density increasing.
                let cap = (-p.max(1.0)).exp();
                if interval.len() > cap {
                    return Err(Error::validation(format!(
                        "power-log piece of length {} exceeds the monotone range {cap:.6}",
                        interval.len()
                    )));
                }
            }
            WeightDescriptor::Semicircle {} => {
                if interval.a < -2.0 - 1e-12 || interval.b > 2.0 + 1e-12 {
                    return Err(Error::validation(
                        "semicircle piece must lie within [-2, 2]",
                    ));
                }
            }
            WeightDescriptor::Arcsine {} => {
                if interval.a < -1.0 - 1e-12 || interval.b > 1.0 + 1e-12 {
                    return Err(Error::validation("arcsine piece must lie within [-1, 1]"));
                }
            }
            WeightDescriptor::Table { xs, ys } => {
                if xs.len() != ys.len() || xs.len() < 2 {
                    return Err(Error::validation(
                        "table weight needs matching xs/ys with at least two samples",
                    ));
                }
                if xs.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::validation("table xs must be strictly increasing"));
                }
                if ys.iter().any(|y| !y.is_finite() || *y < 0.0) {
                    return Err(Error::validation("table ys must be finite and >= 0"));
                }
                let slack = 1e-9 * (1.0 + interval.len());
                if xs[0] > interval.a + slack || *xs.last().unwrap() < interval.b - slack {
                    return Err(Error::validation("table samples must cover the interval"));
                }
            }
        }
        Ok(())
    }

    /// Interior points where the density changes monotonicity direction.
    fn monotone_breakpoints(&self, interval: &Interval) -> Vec<f64> {
        match self {
            WeightDescriptor::Constant { .. }
            | WeightDescriptor::PowerLaw { .. }
            | WeightDescriptor::PowerLog { .. } => vec![],
            WeightDescriptor::Polynomial { coefficients } => {
                poly_roots_in(&poly_derivative(coefficients), interval.a, interval.b)
            }
            WeightDescriptor::Semicircle {} | WeightDescriptor::Arcsine {} => {
                if interval.a < 0.0 && interval.b > 0.0 {
                    vec![0.0]
                } else {
                    vec![]
                }
            }
            WeightDescriptor::Table { xs, .. } => xs
                .iter()
                .copied()
                .filter(|&x| x > interval.a && x < interval.b)
                .collect(),
        }
    }

    /// Sample-grid resolution of the descriptor, if it has one.
    pub fn resolution(&self) -> Option<f64> {
        match self {
            WeightDescriptor::Table { xs, .. } => xs
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d)))),
            _ => None,
        }
    }
}

/// One absolutely continuous piece of a measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcPiece {
    pub interval: Interval,
    pub weight: WeightDescriptor,
}

impl AcPiece {
    pub fn new(interval: Interval, weight: WeightDescriptor) -> Result<Self> {
        weight.validate(&interval)?;
        Ok(AcPiece { interval, weight })
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.interval.contains(x) {
            self.weight.eval(x, &self.interval)
        } else {
            0.0
        }
    }

    /// Integrate `f(x) w(x) dx` over `[lo, hi]` (clipped to the piece),
    /// routing endpoint-singular densities through smoothing substitutions.
    pub fn integrate_against(
        &self,
        f: &mut dyn FnMut(f64) -> Complex64,
        lo: f64,
        hi: f64,
        tol: f64,
    ) -> Result<Quadrature> {
        let lo = lo.max(self.interval.a);
        let hi = hi.min(self.interval.b);
        if lo >= hi {
            return Ok(Quadrature {
                value: Complex64::new(0.0, 0.0),
                error: 0.0,
                converged: true,
            });
        }
        match &self.weight {
            WeightDescriptor::Arcsine {} => {
                // x = -cos(pi u) absorbs the density exactly: w dx = du.
                let ua = (-lo).acos() / std::f64::consts::PI;
                let ub = (-hi).acos() / std::f64::consts::PI;
                quadrature::adaptive_complex(
                    |u| f(-(std::f64::consts::PI * u).cos()),
                    ua,
                    ub,
                    tol,
                )
            }
            WeightDescriptor::Semicircle {} => {
                // t = 2 sin(theta): sqrt(4-t^2) dt = 4 cos^2(theta) d theta.
                let ta = (lo / 2.0).clamp(-1.0, 1.0).asin();
                let tb = (hi / 2.0).clamp(-1.0, 1.0).asin();
                quadrature::adaptive_complex(
                    |th| {
                        let (s, c) = th.sin_cos();
                        f(2.0 * s) * (2.0 * c * c / std::f64::consts::PI)
                    },
                    ta,
                    tb,
                    tol,
                )
            }
            WeightDescriptor::PowerLaw { c, p } if p.fract() != 0.0 || *p < 0.0 => {
                // x = a + u^m turns c u^p dx into c m u^{m(1+p)-1} du with a
                // smooth exponent >= 2.
                let a = self.interval.a;
                let m = (3.0 / (1.0 + p)).ceil().max(1.0);
                let q = m * (1.0 + p) - 1.0;
                let ua = (lo - a).max(0.0).powf(1.0 / m);
                let ub = (hi - a).max(0.0).powf(1.0 / m);
                let c = *c;
                quadrature::adaptive_complex(
                    |u| f(a + u.powf(m)) * (c * m * u.powf(q)),
                    ua,
                    ub,
                    tol,
                )
            }
            _ => {
                let piece = self.clone();
                quadrature::adaptive_complex(|x| f(x) * piece.eval(x), lo, hi, tol)
            }
        }
    }

    /// Mass of the piece over `[lo, hi]`, closed form where one exists.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(self.interval.a);
        let hi = hi.min(self.interval.b);
        if lo >= hi {
            return 0.0;
        }
        match &self.weight {
            WeightDescriptor::Constant { c } => c * (hi - lo),
            WeightDescriptor::Polynomial { coefficients } => {
                let anti = |x: f64| {
                    coefficients
                        .iter()
                        .enumerate()
                        .map(|(k, &c)| c * x.powi(k as i32 + 1) / (k as f64 + 1.0))
                        .sum::<f64>()
                };
                anti(hi) - anti(lo)
            }
            WeightDescriptor::PowerLaw { c, p } => {
                let a = self.interval.a;
                c / (p + 1.0) * ((hi - a).powf(p + 1.0) - (lo - a).powf(p + 1.0))
            }
            WeightDescriptor::Semicircle {} => {
                let anti = |t: f64| {
                    let t = t.clamp(-2.0, 2.0);
                    (t * (4.0 - t * t).max(0.0).sqrt() / 2.0 + 2.0 * (t / 2.0).asin())
                        / (2.0 * std::f64::consts::PI)
                };
                anti(hi) - anti(lo)
            }
            WeightDescriptor::Arcsine {} => {
                let anti = |x: f64| (x.clamp(-1.0, 1.0)).asin() / std::f64::consts::PI;
                anti(hi) - anti(lo)
            }
            WeightDescriptor::Table { xs, .. } => {
                // Exact integral of the linear interpolant.
                let mut total = 0.0;
                for i in 0..xs.len() - 1 {
                    let (x0, x1) = (xs[i].max(lo), xs[i + 1].min(hi));
                    if x0 >= x1 {
                        continue;
                    }
                    let w = &self.weight;
                    total += 0.5 * (w.eval(x0, &self.interval) + w.eval(x1, &self.interval))
                        * (x1 - x0);
                }
                total
            }
            WeightDescriptor::PowerLog { .. } => {
                let mut f = |_x: f64| Complex64::new(1.0, 0.0);
                self.integrate_against(&mut f, lo, hi, 1e-12)
                    .map(|q| q.value.re)
                    .unwrap_or(f64::NAN)
            }
        }
    }

    pub fn mass(&self) -> f64 {
        self.mass_between(self.interval.a, self.interval.b)
    }

    /// The same piece with its density multiplied by `factor`. The fixed
    /// normalized shapes (semicircle, arcsine) rescale through a table.
    pub fn scaled(&self, factor: f64) -> Result<AcPiece> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::validation("scale factor must be positive"));
        }
        let weight = match &self.weight {
            WeightDescriptor::Constant { c } => WeightDescriptor::Constant { c: c * factor },
            WeightDescriptor::Polynomial { coefficients } => WeightDescriptor::Polynomial {
                coefficients: coefficients.iter().map(|c| c * factor).collect(),
            },
            WeightDescriptor::PowerLaw { c, p } => WeightDescriptor::PowerLaw {
                c: c * factor,
                p: *p,
            },
            WeightDescriptor::PowerLog { c, p } => WeightDescriptor::PowerLog {
                c: c * factor,
                p: *p,
            },
            WeightDescriptor::Table { xs, ys } => WeightDescriptor::Table {
                xs: xs.clone(),
                ys: ys.iter().map(|y| y * factor).collect(),
            },
            WeightDescriptor::Semicircle {} | WeightDescriptor::Arcsine {} => {
                let (a, b) = (self.interval.a, self.interval.b);
                let n = 1024;
                let xs: Vec<f64> = (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect();
                let ys: Vec<f64> = xs.iter().map(|&x| self.eval(x) * factor).collect();
                WeightDescriptor::Table { xs, ys }
            }
        };
        AcPiece::new(self.interval, weight)
    }

    /// Gauss-Legendre discretization points `(node, weight)` for this piece,
    /// in the same substituted variables as [`Self::integrate_against`].
    fn quad_points(&self, n: usize) -> Vec<(f64, f64)> {
        let rule = quadrature::gauss_legendre(n);
        let (a, b) = (self.interval.a, self.interval.b);
        let map_rule = |ua: f64, ub: f64| -> Vec<(f64, f64)> {
            let c = 0.5 * (ua + ub);
            let h = 0.5 * (ub - ua);
            rule.0
                .iter()
                .zip(rule.1.iter())
                .map(|(&x, &w)| (c + h * x, w * h))
                .collect()
        };
        match &self.weight {
            WeightDescriptor::Arcsine {} => {
                let ua = (-a).acos() / std::f64::consts::PI;
                let ub = (-b).acos() / std::f64::consts::PI;
                map_rule(ua, ub)
                    .into_iter()
                    .map(|(u, w)| (-(std::f64::consts::PI * u).cos(), w))
                    .collect()
            }
            WeightDescriptor::Semicircle {} => {
                let ta = (a / 2.0).clamp(-1.0, 1.0).asin();
                let tb = (b / 2.0).clamp(-1.0, 1.0).asin();
                map_rule(ta, tb)
                    .into_iter()
                    .map(|(th, w)| {
                        let (s, c) = th.sin_cos();
                        (2.0 * s, w * 2.0 * c * c / std::f64::consts::PI)
                    })
                    .collect()
            }
            WeightDescriptor::PowerLaw { c, p } if p.fract() != 0.0 || *p < 0.0 => {
                let m = (3.0 / (1.0 + p)).ceil().max(1.0);
                let q = m * (1.0 + p) - 1.0;
                let ub = (b - a).powf(1.0 / m);
                map_rule(0.0, ub)
                    .into_iter()
                    .map(|(u, w)| (a + u.powf(m), w * c * m * u.powf(q)))
                    .collect()
            }
            _ => map_rule(a, b)
                .into_iter()
                .map(|(x, w)| (x, w * self.eval(x)))
                .collect(),
        }
    }
}

/// An estimate with an error bar, as returned by [`Measure::integrate`].
#[derive(Debug, Clone, Copy)]
pub struct IntegralEstimate {
    pub value: Complex64,
    pub error: f64,
}

/// Compactly supported Borel measure: atoms plus a.c. pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct Measure {
    atoms: Vec<(f64, f64)>,
    ac: Vec<AcPiece>,
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    atoms: Vec<(f64, f64)>,
    ac: Vec<AcPiece>,
}

impl TryFrom<MeasureRepr> for Measure {
    type Error = Error;
    fn try_from(r: MeasureRepr) -> Result<Self> {
        Measure::new(r.atoms, r.ac)
    }
}

impl From<Measure> for MeasureRepr {
    fn from(m: Measure) -> MeasureRepr {
        MeasureRepr {
            atoms: m.atoms,
            ac: m.ac,
        }
    }
}

impl Measure {
    /// Validating constructor. Atoms are sorted by position; positions must
    /// be strictly distinct and masses > 0.
    pub fn new(mut atoms: Vec<(f64, f64)>, ac: Vec<AcPiece>) -> Result<Self> {
        for &(p, m) in &atoms {
            if !p.is_finite() {
                return Err(Error::validation("atom position must be finite"));
            }
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::validation(format!(
                    "atom at {p} violates mass > 0 (mass = {m})"
                )));
            }
        }
        atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
        if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::validation("atom positions must be strictly distinct"));
        }
        for piece in &ac {
            piece.weight.validate(&piece.interval)?;
        }
        Ok(Measure { atoms, ac })
    }

    /// Purely atomic measure.
    pub fn from_atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        Measure::new(atoms, vec![])
    }

    /// Single unit atom at `p`.
    pub fn dirac(p: f64) -> Self {
        Measure {
            atoms: vec![(p, 1.0)],
            ac: vec![],
        }
    }

    /// Lebesgue measure restricted to `[a, b]`.
    pub fn lebesgue(a: f64, b: f64) -> Result<Self> {
        Measure::new(
            vec![],
            vec![AcPiece::new(
                Interval::new(a, b)?,
                WeightDescriptor::Constant { c: 1.0 },
            )?],
        )
    }

    /// The semicircle distribution on [-2, 2] (unit mass).
    pub fn semicircle() -> Self {
        Measure {
            atoms: vec![],
            ac: vec![AcPiece {
                interval: Interval { a: -2.0, b: 2.0 },
                weight: WeightDescriptor::Semicircle {},
            }],
        }
    }

    /// The arcsine distribution on [-1, 1] (unit mass).
    pub fn arcsine() -> Self {
        Measure {
            atoms: vec![],
            ac: vec![AcPiece {
                interval: Interval { a: -1.0, b: 1.0 },
                weight: WeightDescriptor::Arcsine {},
            }],
        }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn ac_pieces(&self) -> &[AcPiece] {
        &self.ac
    }

    pub fn is_purely_atomic(&self) -> bool {
        self.ac.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.ac.is_empty()
    }

    /// Total mass (atoms plus piece masses; closed forms where available).
    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|&(_, m)| m).sum::<f64>()
            + self.ac.iter().map(|p| p.mass()).sum::<f64>()
    }

    /// Mass of `[lo, hi]` (closed endpoints; atoms on the boundary count).
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|&&(p, _)| p >= lo && p <= hi)
            .map(|&(_, m)| m)
            .sum::<f64>()
            + self
                .ac
                .iter()
                .map(|piece| piece.mass_between(lo, hi))
                .sum::<f64>()
    }

    /// Convex hull of the support, if the measure is nonzero.
    pub fn support_hull(&self) -> Option<Interval> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(p, _) in &self.atoms {
            lo = lo.min(p);
            hi = hi.max(p);
        }
        for piece in &self.ac {
            lo = lo.min(piece.interval.a);
            hi = hi.max(piece.interval.b);
        }
        (lo <= hi).then(|| Interval { a: lo, b: hi })
    }

    /// Merged connected components of the support, sorted.
    pub fn support_components(&self) -> Vec<Interval> {
        let mut parts: Vec<Interval> = self
            .atoms
            .iter()
            .map(|&(p, _)| Interval { a: p, b: p })
            .chain(self.ac.iter().map(|p| p.interval))
            .collect();
        parts.sort_by(|x, y| x.a.total_cmp(&y.a));
        let mut merged: Vec<Interval> = vec![];
        for part in parts {
            match merged.last_mut() {
                Some(last) if part.a <= last.b => last.b = last.b.max(part.b),
                _ => merged.push(part),
            }
        }
        merged
    }

    /// Density of the absolutely continuous part at `x` (sum over pieces).
    pub fn density(&self, x: f64) -> f64 {
        self.ac.iter().map(|p| p.eval(x)).sum()
    }

    /// Integrate a complex-valued function against the measure.
    pub fn integrate(
        &self,
        mut f: impl FnMut(f64) -> Complex64,
        tol: f64,
    ) -> Result<IntegralEstimate> {
        let mut value = Complex64::new(0.0, 0.0);
        let mut error = 0.0;
        for &(p, m) in &self.atoms {
            let fv = f(p);
            if !(fv.re.is_finite() && fv.im.is_finite()) {
                return Err(Error::NonIntegrable {
                    at: p,
                    what: "integrand not finite at an atom".into(),
                });
            }
            value += m * fv;
        }
        for piece in &self.ac {
            let q = piece.integrate_against(&mut f, piece.interval.a, piece.interval.b, tol)?;
            value += q.value;
            error += q.error;
        }
        Ok(IntegralEstimate { value, error })
    }

    /// Integrate a real-valued function against the measure.
    pub fn integrate_real(&self, mut f: impl FnMut(f64) -> f64, tol: f64) -> Result<IntegralEstimate> {
        self.integrate(|x| Complex64::new(f(x), 0.0), tol)
    }

    /// The integrability value `int (1+|t|)^{-1} d mu`: finite for every
    /// representable measure (compact support), reported as a norm surrogate.
    pub fn h_minus_one_check(&self) -> Result<f64> {
        Ok(self
            .integrate_real(|t| 1.0 / (1.0 + t.abs()), 1e-12)?
            .value
            .re)
    }

    /// k-th moment `int t^k d mu`.
    pub fn moment(&self, k: u32) -> Result<f64> {
        Ok(self
            .integrate_real(|t| t.powi(k as i32), 1e-12)?
            .value
            .re)
    }

    /// The measure scaled by a positive factor (atom masses and densities).
    pub fn scaled(&self, factor: f64) -> Result<Measure> {
        let atoms = self
            .atoms
            .iter()
            .map(|&(p, m)| (p, m * factor))
            .collect();
        let ac = self
            .ac
            .iter()
            .map(|piece| piece.scaled(factor))
            .collect::<Result<_>>()?;
        Measure::new(atoms, ac)
    }

    /// Discretize onto Gauss-Legendre nodes: atoms pass through untouched,
    /// each a.c. piece contributes `nodes_per_piece` nodes with weights
    /// `(quadrature weight) * w(node)` in the piece's natural variables.
    pub fn discretize(&self, nodes_per_piece: usize) -> Result<DiscreteMeasure> {
        if nodes_per_piece < 1 {
            return Err(Error::domain("discretize requires nodes_per_piece >= 1"));
        }
        let mut points: Vec<(f64, f64)> = self.atoms.clone();
        let mut quad_tol = 0.0;
        for piece in &self.ac {
            let pts = piece.quad_points(nodes_per_piece);
            let sum: f64 = pts.iter().map(|&(_, w)| w).sum();
            quad_tol += (sum - piece.mass()).abs();
            points.extend(pts.into_iter().filter(|&(_, w)| w > 0.0));
        }
        points.sort_by(|x, y| x.0.total_cmp(&y.0));
        // Tie-break coincident nodes by an ulp-scale shift of the later one.
        let mut shifted = 0usize;
        for i in 1..points.len() {
            if points[i].0 <= points[i - 1].0 {
                let base = points[i - 1].0;
                let eps = (base.abs().max(1.0)) * 1e-13;
                points[i].0 = base + eps;
                shifted += 1;
            }
        }
        if shifted > 0 {
            log::warn!("discretize: shifted {shifted} coincident node(s) by an ulp-scale epsilon");
        }
        DiscreteMeasure::new_with_tol(
            points.iter().map(|&(x, _)| x).collect(),
            points.iter().map(|&(_, w)| w).collect(),
            quad_tol,
        )
    }
}

/// True iff no atom position of `mu` lies within `tol` of one of `nu`.
pub fn atomic_parts_disjoint(mu: &Measure, nu: &Measure, tol: f64) -> bool {
    // Both atom lists are sorted; a linear merge scan suffices.
    let (a, b) = (mu.atoms(), nu.atoms());
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        let d = a[i].0 - b[j].0;
        if d.abs() <= tol {
            return false;
        }
        if d < 0.0 {
            i += 1;
        } else {
            j += 1;
        }
    }
    true
}

/// Lebesgue measure of the sublevel set `{x in I : w(x) < t}`.
pub fn distribution_function(weight: &WeightDescriptor, interval: &Interval, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain("distribution function requires t > 0"));
    }
    // Fast closed forms.
    match weight {
        WeightDescriptor::Constant { c } => {
            return Ok(if *c < t { interval.len() } else { 0.0 });
        }
        WeightDescriptor::PowerLaw { c, p } => {
            let len = interval.len();
            if *p == 0.0 {
                return Ok(if *c < t { len } else { 0.0 });
            }
            let cut = (t / c).powf(1.0 / p);
            return Ok(if *p > 0.0 {
                cut.min(len)
            } else {
                (len - cut.min(len)).max(0.0)
            });
        }
        _ => {}
    }
    // Piecewise-monotone path: split at breakpoints, bracket the crossing.
    let mut breaks = vec![interval.a];
    breaks.extend(weight.monotone_breakpoints(interval));
    breaks.push(interval.b);
    breaks.sort_by(f64::total_cmp);
    let mut measure = 0.0;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if lo >= hi {
            continue;
        }
        // Evaluate just inside to dodge endpoint infinities (arcsine).
        let h = (hi - lo) * 1e-12;
        let vlo = weight.eval(lo + h, interval);
        let vhi = weight.eval(hi - h, interval);
        if !vlo.is_finite() || !vhi.is_finite() {
            // Infinite endpoint value: the sublevel set stays away from it.
            // Fall through to the bisection with interior probes.
        }
        let (mut below, mut above, increasing) = if vlo < vhi {
            (lo, hi, true)
        } else {
            (hi, lo, false)
        };
        let vmin = vlo.min(vhi);
        let vmax = vlo.max(vhi);
        if vmax < t {
            measure += hi - lo;
            continue;
        }
        if vmin >= t {
            continue;
        }
        // Monotone crossing: bisect w(x) = t.
        for _ in 0..80 {
            let mid = 0.5 * (below + above);
            if weight.eval(mid, interval) < t {
                below = mid;
            } else {
                above = mid;
            }
        }
        let cross = 0.5 * (below + above);
        measure += if increasing { cross - lo } else { hi - cross };
    }
    Ok(measure)
}

/// Increasing rearrangement `w*(x)`: the right-continuous generalized inverse
/// of the distribution function, `w*(x) = inf { t > 0 : D_w(t) > x }`.
pub fn increasing_rearrangement(
    weight: &WeightDescriptor,
    interval: &Interval,
    x: f64,
) -> Result<f64> {
    let len = interval.len();
    if !(x > 0.0 && x < len) {
        return Err(Error::domain(format!(
            "rearrangement argument must lie in (0, |I|) = (0, {len}), got {x}"
        )));
    }
    match weight {
        WeightDescriptor::Constant { c } => return Ok(*c),
        WeightDescriptor::PowerLaw { c, p } => {
            return Ok(if *p >= 0.0 {
                c * x.powf(*p)
            } else {
                c * (len - x).powf(*p)
            });
        }
        _ => {}
    }
    // Bracket: D is nondecreasing with D(t) -> len > x as t -> infinity.
    let mut hi = 1.0f64;
    let mut doublings = 0;
    while distribution_function(weight, interval, hi)? <= x {
        hi *= 2.0;
        doublings += 1;
        if doublings > 600 {
            return Err(Error::NonConvergence {
                solver: "increasing rearrangement bracket",
                iterations: doublings,
                detail: format!("D({hi:e}) still <= {x}"),
            });
        }
    }
    let mut lo = 0.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if distribution_function(weight, interval, mid)? > x {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Finite node/weight list standing in for a measure at desk scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Recorded quadrature tolerance: |sum of weights - mass approximated|.
    quad_tol: f64,
}

impl DiscreteMeasure {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Self::new_with_tol(nodes, weights, 0.0)
    }

    pub fn new_with_tol(nodes: Vec<f64>, weights: Vec<f64>, quad_tol: f64) -> Result<Self> {
        if nodes.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} nodes vs {} weights",
                nodes.len(),
                weights.len()
            )));
        }
        if nodes.is_empty() {
            return Err(Error::validation("discrete measure needs at least one node"));
        }
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("nodes must be strictly increasing"));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::validation("weights must be positive and finite"));
        }
        Ok(DiscreteMeasure {
            nodes,
            weights,
            quad_tol,
        })
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

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// View as a purely atomic [`Measure`].
    pub fn to_measure(&self) -> Measure {
        Measure {
            atoms: self
                .nodes
                .iter()
                .copied()
                .zip(self.weights.iter().copied())
                .collect(),
            ac: vec![],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leb01() -> Measure {
        Measure::lebesgue(0.0, 1.0).unwrap()
    }

    #[test]
    fn integrate_two_symmetric_atoms() {
        let mu = Measure::from_atoms(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let v = mu.integrate_real(|t| t * t, 1e-12).unwrap();
        assert_eq!(v.value.re, 1.0);
    }

    #[test]
    fn integrate_semicircle_mass() {
        let mu = Measure::semicircle();
        let v = mu.integrate_real(|_| 1.0, 1e-12).unwrap();
        assert!((v.value.re - 1.0).abs() < 1e-10, "{}", v.value.re);
    }

    #[test]
    fn integrate_dirac() {
        let v = Measure::dirac(0.0).integrate_real(|_| 1.0, 1e-12).unwrap();
        assert_eq!(v.value.re, 1.0);
    }

    #[test]
    fn h_minus_one_values() {
        assert_eq!(Measure::dirac(0.0).h_minus_one_check().unwrap(), 1.0);
        assert_eq!(Measure::dirac(3.0).h_minus_one_check().unwrap(), 0.25);
        let leb = leb01().h_minus_one_check().unwrap();
        assert!((leb - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn moments_of_atoms_and_semicircle() {
        let mu = Measure::from_atoms(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        assert_eq!(mu.moment(0).unwrap(), 1.0);
        assert_eq!(mu.moment(1).unwrap(), 0.0);
        let m2 = Measure::semicircle().moment(2).unwrap();
        assert!((m2 - 1.0).abs() < 1e-9, "{m2}"); // Catalan number C_1
    }

    #[test]
    fn discretize_atoms_pass_through() {
        let mu = Measure::from_atoms(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let d = mu.discretize(16).unwrap();
        assert_eq!(d.nodes(), &[-1.0, 1.0]);
        assert_eq!(d.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn discretize_lebesgue_two_points() {
        let d = leb01().discretize(2).unwrap();
        let s3 = 1.0 / (2.0 * 3f64.sqrt());
        assert!((d.nodes()[0] - (0.5 - s3)).abs() < 1e-14);
        assert!((d.nodes()[1] - (0.5 + s3)).abs() < 1e-14);
        assert!((d.weights()[0] - 0.5).abs() < 1e-14);
        assert!((d.weights()[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn discretize_semicircle_mass() {
        let d = Measure::semicircle().discretize(64).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-12, "{}", d.mass());
        assert!(d.quad_tol() < 1e-12);
    }

    #[test]
    fn discretize_arcsine_mass_exact() {
        let d = Measure::arcsine().discretize(32).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-13, "{}", d.mass());
    }

    #[test]
    fn discretize_powerlaw_half_moments() {
        // w = sqrt(x-a) on [0,1]: moments have closed forms.
        let mu = Measure::new(
            vec![],
            vec![AcPiece::new(
                Interval::new(0.0, 1.0).unwrap(),
                WeightDescriptor::PowerLaw { c: 1.0, p: 0.5 },
            )
            .unwrap()],
        )
        .unwrap();
        let d = mu.discretize(48).unwrap();
        // mass = 2/3, first moment = 2/5.
        assert!((d.mass() - 2.0 / 3.0).abs() < 1e-12);
        let m1: f64 = d
            .nodes()
            .iter()
            .zip(d.weights())
            .map(|(&x, &w)| x * w)
            .sum();
        assert!((m1 - 0.4).abs() < 1e-12);
    }

    #[test]
    fn distribution_function_examples() {
        let i01 = Interval::new(0.0, 1.0).unwrap();
        let wx = WeightDescriptor::PowerLaw { c: 1.0, p: 1.0 };
        assert!((distribution_function(&wx, &i01, 0.3).unwrap() - 0.3).abs() < 1e-14);
        let w1 = WeightDescriptor::Constant { c: 1.0 };
        assert_eq!(distribution_function(&w1, &i01, 0.5).unwrap(), 0.0);
        let wx2 = WeightDescriptor::PowerLaw { c: 1.0, p: 2.0 };
        assert!((distribution_function(&wx2, &i01, 0.25).unwrap() - 0.5).abs() < 1e-14);
        // Polynomial route (monotone bisection): same weight as wx2.
        let poly = WeightDescriptor::Polynomial {
            coefficients: vec![0.0, 0.0, 1.0],
        };
        assert!((distribution_function(&poly, &i01, 0.25).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn rearrangement_examples() {
        let i01 = Interval::new(0.0, 1.0).unwrap();
        let wx = WeightDescriptor::PowerLaw { c: 1.0, p: 1.0 };
        assert!((increasing_rearrangement(&wx, &i01, 0.3).unwrap() - 0.3).abs() < 1e-13);
        let wx2 = WeightDescriptor::PowerLaw { c: 1.0, p: 2.0 };
        assert!((increasing_rearrangement(&wx2, &i01, 0.5).unwrap() - 0.25).abs() < 1e-13);
        let wc = WeightDescriptor::Constant { c: 0.7 };
        assert!((increasing_rearrangement(&wc, &i01, 0.4).unwrap() - 0.7).abs() < 1e-13);
        // Generic bisection path on a decreasing table.
        let table = WeightDescriptor::Table {
            xs: vec![0.0, 1.0],
            ys: vec![1.0, 0.0],
        };
        // w(x) = 1-x, D(t) = t, w*(x) = x.
        let v = increasing_rearrangement(&table, &i01, 0.25).unwrap();
        assert!((v - 0.25).abs() < 1e-9, "{v}");
    }

    #[test]
    fn rearrangement_inverts_distribution() {
        let i01 = Interval::new(0.0, 1.0).unwrap();
        let w = WeightDescriptor::Polynomial {
            coefficients: vec![0.1, 0.0, 1.0],
        };
        for &x in &[0.1, 0.35, 0.6, 0.9] {
            let t = increasing_rearrangement(&w, &i01, x).unwrap();
            let d = distribution_function(&w, &i01, t).unwrap();
            assert!(d >= x - 1e-9, "D(w*(x)) = {d} < x = {x}");
        }
    }

    #[test]
    fn atomic_disjointness() {
        let d0 = Measure::dirac(0.0);
        let d1 = Measure::dirac(1.0);
        assert!(atomic_parts_disjoint(&d0, &d1, 1e-9));
        assert!(!atomic_parts_disjoint(&d0, &d0, 1e-9));
        assert!(!atomic_parts_disjoint(&d0, &d0, 0.0));
    }

    #[test]
    fn validation_failures() {
        assert!(Measure::from_atoms(vec![(0.0, -1.0)]).is_err());
        assert!(Measure::from_atoms(vec![(0.0, 1.0), (0.0, 1.0)]).is_err());
        assert!(Interval::new(1.0, 0.0).is_err());
        let i01 = Interval::new(0.0, 1.0).unwrap();
        assert!(AcPiece::new(i01, WeightDescriptor::PowerLaw { c: 1.0, p: -1.0 }).is_err());
        assert!(AcPiece::new(
            i01,
            WeightDescriptor::Polynomial {
                coefficients: vec![-1.0]
            }
        )
        .is_err());
        // Semicircle outside [-2,2].
        let wide = Interval::new(-3.0, 0.0).unwrap();
        assert!(AcPiece::new(wide, WeightDescriptor::Semicircle {}).is_err());
    }

    #[test]
    fn serde_roundtrip_matches_schema() {
        let mu = Measure::new(
            vec![(-1.0, 0.5), (1.0, 0.5)],
            vec![AcPiece::new(
                Interval::new(0.0, 1.0).unwrap(),
                WeightDescriptor::PowerLaw { c: 1.0, p: 1.0 },
            )
            .unwrap()],
        )
        .unwrap();
        let json = serde_json::to_value(&mu).unwrap();
        assert_eq!(json["atoms"][0][0], -1.0);
        assert_eq!(json["ac"][0]["weight"]["kind"], "power_law");
        assert_eq!(json["ac"][0]["interval"][1], 1.0);
        let back: Measure = serde_json::from_value(json).unwrap();
        assert_eq!(back, mu);
        // Invalid payloads are rejected at parse time.
        let bad = serde_json::json!({"atoms": [[0.0, -1.0]], "ac": []});
        assert!(serde_json::from_value::<Measure>(bad).is_err());
    }

    #[test]
    fn powerlog_eval_and_distribution() {
        let i = Interval::new(0.0, 0.3).unwrap();
        let w = WeightDescriptor::PowerLog { c: 1.0, p: 0.5 };
        w.validate(&i).unwrap();
        // Increasing on the valid range.
        let vals: Vec<f64> = [0.05, 0.1, 0.2, 0.29]
            .iter()
            .map(|&x| w.eval(x, &i))
            .collect();
        assert!(vals.windows(2).all(|v| v[0] < v[1]));
        let d = distribution_function(&w, &i, w.eval(0.1, &i)).unwrap();
        assert!((d - 0.1).abs() < 1e-10, "{d}");
    }
}
