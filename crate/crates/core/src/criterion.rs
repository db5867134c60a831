//! Absence-of-singular-spectrum criteria.
//!
//! The certifying condition is divergence of `int_0 x^{-2} w*(x) dx` for the
//! increasing rearrangement `w*` of the density on an interval, equivalently
//! `int_0 dy / D_w(y) = infinity` for the distribution function. Divergence
//! of an improper integral cannot be decided by finite numerics, so verdicts
//! are either `Analytic` (closed-form descriptor families classified by
//! exponent) or `NumericFit` (dyadic-shell partial integrals with a fitted
//! geometric trend and an `Inconclusive` fallback). The companion
//! `o(1/t)` superlevel test is strictly stronger and is tracked separately.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{
    distribution_function, increasing_rearrangement, AcPiece, Interval, Measure,
    WeightDescriptor,
};
use crate::quadrature;
use crate::rank_one;

/// Three-valued divergence verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Diverges,
    Converges,
    Inconclusive,
}

/// How a verdict was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Analytic,
    NumericFit,
}

/// Divergence verdict with its evidence ladder.
#[derive(Debug, Clone, Serialize)]
pub struct DivergenceVerdict {
    pub verdict: Verdict,
    pub method: Method,
    /// Dyadic-shell partial integrals (outer scale first); empty for
    /// analytic classifications.
    pub shells: Vec<(f64, f64)>,
    /// Fitted geometric ratio of successive shells (NumericFit only).
    pub fitted_ratio: Option<f64>,
    /// Implied local exponent of the integrand scaling (NumericFit only).
    pub local_exponent: Option<f64>,
}

impl DivergenceVerdict {
    fn analytic(verdict: Verdict) -> Self {
        DivergenceVerdict {
            verdict,
            method: Method::Analytic,
            shells: vec![],
            fitted_ratio: None,
            local_exponent: None,
        }
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.shells
            .iter()
            .map(|&(scale, value)| format!("{scale:.17e},{value:.17e},shell"))
            .collect()
    }
}

const SHELLS: usize = 12;
const RATIO_CONVERGES: f64 = 0.9;
const RATIO_DIVERGES: f64 = 0.97;

/// Geometric-trend classification of shell partial sums.
fn classify_shells(shells: &[(f64, f64)]) -> (Verdict, Option<f64>, Option<f64>) {
    // An infinite shell is an immediate divergence witness.
    if shells.iter().any(|&(_, s)| s.is_infinite()) {
        return (Verdict::Diverges, None, None);
    }
    let tail: Vec<f64> = shells
        .iter()
        .rev()
        .take(6)
        .map(|&(_, s)| s)
        .collect();
    if tail.iter().all(|&s| s < 1e-280) {
        return (Verdict::Converges, Some(0.0), None);
    }
    if tail.iter().any(|&s| s <= 0.0) {
        return (Verdict::Inconclusive, None, None);
    }
    // Least squares on ln S_k against k (k increasing toward fine scales).
    let n = tail.len() as f64;
    let logs: Vec<f64> = tail.iter().rev().map(|&s| s.ln()).collect();
    let sk: f64 = (0..logs.len()).map(|k| k as f64).sum();
    let skk: f64 = (0..logs.len()).map(|k| (k * k) as f64).sum();
    let sl: f64 = logs.iter().sum();
    let skl: f64 = logs.iter().enumerate().map(|(k, &l)| k as f64 * l).sum();
    let slope = (n * skl - sk * sl) / (n * skk - sk * sk);
    let ratio = slope.exp();
    // Shell over [2^{-k-1} e, 2^{-k} e] of x^{p-2} scales like 2^{-k(p-1)}:
    // recover the local exponent from the ratio.
    let exponent = 1.0 - ratio.ln() / 2f64.ln();
    let verdict = if ratio < RATIO_CONVERGES {
        Verdict::Converges
    } else if ratio >= RATIO_DIVERGES {
        Verdict::Diverges
    } else {
        Verdict::Inconclusive
    };
    (verdict, Some(ratio), Some(exponent))
}

/// Analytic classification shared by both tests, `None` when the family
/// needs the numeric route. The flag says whether the weight is bounded
/// below on the interval (which forces divergence).
fn analytic_class(weight: &WeightDescriptor, interval: &Interval) -> Option<Verdict> {
    match weight {
        WeightDescriptor::Constant { c } if *c > 0.0 => Some(Verdict::Diverges),
        WeightDescriptor::Constant { .. } => Some(Verdict::Inconclusive),
        WeightDescriptor::PowerLaw { p, .. } => Some(if *p <= 1.0 {
            Verdict::Diverges
        } else {
            Verdict::Converges
        }),
        WeightDescriptor::PowerLog { p, .. } => Some(if *p <= 1.0 {
            Verdict::Diverges
        } else {
            Verdict::Converges
        }),
        // Fixed closed forms: vanish at worst like a square root (exponent
        // 1/2 <= 1) or are bounded below.
        WeightDescriptor::Semicircle {} | WeightDescriptor::Arcsine {} => {
            let _ = interval;
            Some(Verdict::Diverges)
        }
        WeightDescriptor::Polynomial { .. } | WeightDescriptor::Table { .. } => None,
    }
}

/// Divergence test on `int_0 x^{-2} w*(x) dx` (rearrangement form).
pub fn rearrangement_test(weight: &WeightDescriptor, interval: &Interval) -> Result<DivergenceVerdict> {
    if let Some(verdict) = analytic_class(weight, interval) {
        return Ok(DivergenceVerdict::analytic(verdict));
    }
    let eps = interval.len() / 2.0;
    // Sampled descriptors are only resolvable to grid scale: shells must not
    // descend into the interpolation regime.
    let n_shells = match weight.resolution() {
        Some(h) if h > 0.0 => SHELLS.min(((eps / h).log2().floor().max(2.0)) as usize),
        _ => SHELLS,
    };
    let mut shells = vec![];
    for k in 0..n_shells {
        let hi = eps * 0.5f64.powi(k as i32);
        let lo = hi / 2.0;
        let mut s = 0.0;
        let mut err = false;
        s += quadrature::gauss_legendre_sum(15, lo, hi, |x| {
            match increasing_rearrangement(weight, interval, x) {
                Ok(w) => w / (x * x),
                Err(_) => {
                    err = true;
                    0.0
                }
            }
        });
        if err {
            return Err(Error::domain(
                "rearrangement not evaluable inside a shell".to_string(),
            ));
        }
        shells.push((hi, s));
    }
    let (verdict, fitted_ratio, local_exponent) = classify_shells(&shells);
    Ok(DivergenceVerdict {
        verdict,
        method: Method::NumericFit,
        shells,
        fitted_ratio,
        local_exponent,
    })
}

/// Divergence test on `int_0 dy / D_w(y)` (distribution form). A vanishing
/// `D_w` on an initial segment (weight bounded below) is an immediate
/// divergence witness.
pub fn distribution_test(weight: &WeightDescriptor, interval: &Interval) -> Result<DivergenceVerdict> {
    if let Some(verdict) = analytic_class(weight, interval) {
        return Ok(DivergenceVerdict::analytic(verdict));
    }
    // Resolution cap in the y variable: values below the weight at one grid
    // spacing reflect the interpolant, not the data.
    let y_scale = weight_scale(weight, interval);
    let n_shells = match weight.resolution() {
        Some(h) if h > 0.0 => {
            let x_probe = h.min(interval.len() * 0.5);
            let y_res = increasing_rearrangement(weight, interval, x_probe)?.max(1e-300);
            SHELLS.min(((y_scale / y_res).log2().floor().max(2.0)) as usize)
        }
        _ => SHELLS,
    };
    distribution_test_numeric(
        |y| distribution_function(weight, interval, y),
        y_scale,
        n_shells,
    )
}

fn weight_scale(weight: &WeightDescriptor, interval: &Interval) -> f64 {
    // A y-scale from which the shells descend: the median-level value.
    increasing_rearrangement(weight, interval, interval.len() / 2.0).unwrap_or(1.0)
}

fn distribution_test_numeric(
    d: impl Fn(f64) -> Result<f64>,
    y_scale: f64,
    n_shells: usize,
) -> Result<DivergenceVerdict> {
    let delta = y_scale.max(1e-12);
    // Bounded-below detection: D vanishes on an initial segment.
    if d(delta * 0.5f64.powi(SHELLS as i32))? == 0.0 {
        return Ok(DivergenceVerdict {
            verdict: Verdict::Diverges,
            method: Method::NumericFit,
            shells: vec![(delta, f64::INFINITY)],
            fitted_ratio: None,
            local_exponent: None,
        });
    }
    let mut shells = vec![];
    for k in 0..n_shells {
        let hi = delta * 0.5f64.powi(k as i32);
        let lo = hi / 2.0;
        let mut bad = false;
        let s = quadrature::gauss_legendre_sum(15, lo, hi, |y| match d(y) {
            Ok(dy) if dy > 0.0 => 1.0 / dy,
            Ok(_) => {
                bad = true;
                0.0
            }
            Err(_) => {
                bad = true;
                0.0
            }
        });
        if bad {
            // D hit zero inside the shell: diverging contribution.
            shells.push((hi, f64::INFINITY));
            break;
        }
        shells.push((hi, s));
    }
    let (verdict, fitted_ratio, local_exponent) = classify_shells(&shells);
    Ok(DivergenceVerdict {
        verdict,
        method: Method::NumericFit,
        shells,
        fitted_ratio,
        local_exponent,
    })
}

/// True iff the rearrangement and distribution tests agree. Errors when
/// either is `Inconclusive` (precondition of the audit).
pub fn equivalence_audit(weight: &WeightDescriptor, interval: &Interval) -> Result<bool> {
    let r = rearrangement_test(weight, interval)?;
    let d = distribution_test(weight, interval)?;
    if r.verdict == Verdict::Inconclusive || d.verdict == Verdict::Inconclusive {
        return Err(Error::domain(
            "equivalence audit needs two conclusive verdicts",
        ));
    }
    Ok(r.verdict == d.verdict)
}

/// Verdict of the superlevel test `|{1/w > t}| = o(1/t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OLittleVerdict {
    IsLittleO,
    NotLittleO,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct OLittleReport {
    pub verdict: OLittleVerdict,
    /// `(t, t * |{1/w > t}|)` along the grid.
    pub products: Vec<(f64, f64)>,
    /// Fitted log-log slope of the product.
    pub slope: f64,
}

/// Test whether `|{x in I: 1/w(x) > t}| = o(1/t)` along the given t-grid:
/// the superlevel measure is `D_w(1/t)`, and `o(1/t)` means the product
/// `t * D_w(1/t)` trends to zero. This is strictly stronger than the
/// distribution-function divergence test where both are computed.
pub fn olittle_test(
    weight: &WeightDescriptor,
    interval: &Interval,
    t_grid: &[f64],
) -> Result<OLittleReport> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("t grid must be nonempty and increasing"));
    }
    let products: Vec<(f64, f64)> = t_grid
        .iter()
        .map(|&t| Ok((t, t * distribution_function(weight, interval, 1.0 / t)?)))
        .collect::<Result<_>>()?;
    let tail: Vec<(f64, f64)> = products
        .iter()
        .rev()
        .take(products.len().div_ceil(2))
        .rev()
        .copied()
        .collect();
    // All-zero tail: the superlevel sets are empty (weight bounded below).
    if tail.iter().all(|&(_, p)| p == 0.0) {
        return Ok(OLittleReport {
            verdict: OLittleVerdict::IsLittleO,
            products,
            slope: f64::NEG_INFINITY,
        });
    }
    let slope = crate::cauchy::fit_loglog_slope(
        tail.iter().map(|&(t, p)| (t, p.max(1e-300))).collect(),
    );
    let last = tail.last().unwrap().1;
    let first_sig = tail.iter().map(|&(_, p)| p).fold(0.0f64, f64::max);
    let verdict = if slope < -0.15 && last < 0.5 * first_sig {
        OLittleVerdict::IsLittleO
    } else if slope > -0.05 {
        OLittleVerdict::NotLittleO
    } else {
        OLittleVerdict::Inconclusive
    };
    Ok(OLittleReport {
        verdict,
        products,
        slope,
    })
}

/// Final spectral verdict for an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpectralVerdict {
    NoSingularSpectrumOnI,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictReport {
    pub verdict: SpectralVerdict,
    pub reason: String,
    pub distribution: Option<DivergenceVerdict>,
    /// For the averaged variant: the value of `int d sigma / |alpha - b|^2`.
    pub e_probe_value: Option<f64>,
}

/// Distribution function of the full density of `mu` restricted to `I`,
/// summing per-piece sublevel measures (with the pieces' own anchors) plus
/// the uncovered part of `I` where the density vanishes.
fn restricted_distribution(mu: &Measure, i: &Interval, y: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut covered = 0.0;
    for piece in mu.ac_pieces() {
        if let Some(overlap) = piece.interval.intersect(i) {
            if overlap.len() == 0.0 {
                continue;
            }
            covered += overlap.len();
            total += distribution_on_subinterval(piece, &overlap, y)?;
        }
    }
    // Uncovered length counts fully (density 0 < y there).
    total += i.len() - covered;
    Ok(total)
}

/// Shell budget for a composite density: capped by the coarsest sampled
/// resolution among the pieces.
fn composite_shells(mu: &Measure) -> usize {
    mu.ac_pieces()
        .iter()
        .filter_map(|p| {
            p.weight.resolution().map(|h| {
                let eps = p.interval.len() / 2.0;
                SHELLS.min(((eps / h.max(1e-300)).log2().floor().max(2.0)) as usize)
            })
        })
        .min()
        .unwrap_or(SHELLS)
}

/// `|{x in sub : w(x) < y}|` for a piece, keeping the piece's own anchor.
fn distribution_on_subinterval(piece: &AcPiece, sub: &Interval, y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::domain("distribution function requires t > 0"));
    }
    // Bisect each monotone span of the piece clipped to `sub`.
    let full = distribution_function(&piece.weight, &piece.interval, y)?;
    if sub == &piece.interval {
        return Ok(full);
    }
    // Generic path: sample-free monotone scan over the sub-interval using
    // the weight with its original anchor.
    let w = |x: f64| piece.eval(x);
    let n = 256;
    let mut measure = 0.0;
    let mut prev_x = sub.a();
    let mut prev_v = w(prev_x + sub.len() * 1e-12);
    for k in 1..=n {
        let x = sub.a() + sub.len() * k as f64 / n as f64;
        let v = w((x).min(sub.b() - sub.len() * 1e-12));
        let lo_v = prev_v.min(v);
        let hi_v = prev_v.max(v);
        if hi_v < y {
            measure += x - prev_x;
        } else if lo_v < y {
            // Crossing inside the cell: bisect on the (locally monotone) cell.
            let (mut below, mut above) = if prev_v < v { (prev_x, x) } else { (x, prev_x) };
            for _ in 0..60 {
                let mid = 0.5 * (below + above);
                if w(mid) < y {
                    below = mid;
                } else {
                    above = mid;
                }
            }
            let cross = 0.5 * (below + above);
            measure += if prev_v < v { cross - prev_x } else { x - cross };
        }
        prev_x = x;
        prev_v = v;
    }
    Ok(measure.min(full))
}

/// Evaluate the sufficient criterion on `I` for `A_alpha`, `alpha != 0`:
/// `NoSingularSpectrumOnI` iff the distribution-form divergence test on the
/// density restricted to `I` diverges. The criterion is sufficient, never
/// necessary, so everything else is `Inconclusive`.
pub fn verdict(mu: &Measure, i: &Interval, alpha: f64) -> Result<VerdictReport> {
    if alpha == 0.0 {
        return Err(Error::domain(
            "the criterion requires alpha != 0 (the unperturbed operator may carry the singular part)",
        ));
    }
    verdict_on_density(mu, i, None)
}

fn verdict_on_density(
    mu: &Measure,
    i: &Interval,
    e_probe_value: Option<f64>,
) -> Result<VerdictReport> {
    let overlapping: Vec<&AcPiece> = mu
        .ac_pieces()
        .iter()
        .filter(|p| {
            p.interval
                .intersect(i)
                .map(|o| o.len() > 0.0)
                .unwrap_or(false)
        })
        .collect();
    if overlapping.is_empty() {
        return Ok(VerdictReport {
            verdict: SpectralVerdict::Inconclusive,
            reason: "interval intersects no absolutely continuous piece".into(),
            distribution: None,
            e_probe_value,
        });
    }
    // Coverage gap inside I forces convergence of the distribution integral.
    let covered: f64 = {
        let mut segs: Vec<(f64, f64)> = overlapping
            .iter()
            .filter_map(|p| p.interval.intersect(i).map(|o| (o.a(), o.b())))
            .collect();
        segs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut reach = i.a();
        let mut total = 0.0;
        for (a, b) in segs {
            let a = a.max(reach);
            if b > a {
                total += b - a;
                reach = b;
            }
        }
        total
    };
    if i.len() - covered > 1e-12 * i.len().max(1.0) {
        return Ok(VerdictReport {
            verdict: SpectralVerdict::Inconclusive,
            reason: format!(
                "density vanishes on {:.3e} of the interval: distribution integral converges",
                i.len() - covered
            ),
            distribution: Some(DivergenceVerdict::analytic(Verdict::Converges)),
            e_probe_value,
        });
    }

    // Single fully covering piece: reuse the per-descriptor tests, minding
    // the anchor of the power families.
    let dv = if overlapping.len() == 1
        && overlapping[0].interval.a() <= i.a()
        && overlapping[0].interval.b() >= i.b()
    {
        let piece = overlapping[0];
        let starts_at_anchor = (i.a() - piece.interval.a()).abs() < 1e-12 * i.len().max(1.0);
        match &piece.weight {
            WeightDescriptor::PowerLaw { .. } | WeightDescriptor::PowerLog { .. }
                if !starts_at_anchor =>
            {
                // Away from its anchor the power family is bounded below.
                DivergenceVerdict::analytic(Verdict::Diverges)
            }
            _ => {
                let shifted = Interval::new(piece.interval.a(), i.b())?;
                // Same anchor: classify on [anchor, i.b] (the sublevel mass
                // near zero is unaffected by trimming the right end).
                let _ = shifted;
                distribution_test(&piece.weight, &piece.interval)?
            }
        }
    } else {
        // Composite density: numeric shells on the restricted distribution.
        let y_scale = {
            // A representative positive density value inside I.
            let probe = mu.density(i.midpoint());
            if probe > 0.0 {
                probe
            } else {
                1.0
            }
        };
        distribution_test_numeric(|y| restricted_distribution(mu, i, y), y_scale, composite_shells(mu))?
    };

    let (verdict, reason) = match dv.verdict {
        Verdict::Diverges => (
            SpectralVerdict::NoSingularSpectrumOnI,
            "distribution-form divergence criterion holds on I".to_string(),
        ),
        Verdict::Converges => (
            SpectralVerdict::Inconclusive,
            "criterion integral converges (the condition is sufficient, not necessary)"
                .to_string(),
        ),
        Verdict::Inconclusive => (
            SpectralVerdict::Inconclusive,
            "numeric shell trend is ambiguous".to_string(),
        ),
    };
    Ok(VerdictReport {
        verdict,
        reason,
        distribution: Some(dv),
        e_probe_value,
    })
}

/// The averaged-condition setup: averaging measure `sigma`, average spectral
/// measure `tau = int mu_beta d sigma(beta)` and the `E`-membership probe.
#[derive(Debug, Clone, Serialize)]
pub struct AveragedSetup {
    pub sigma: Measure,
    pub tau: Measure,
    /// Quadrature nodes used for the a.c. part of sigma.
    pub beta_nodes: usize,
}

/// Assemble the average spectral measure by perturbing `mu` across the atoms
/// and quadrature nodes of `sigma`.
pub fn averaged_setup(mu: &Measure, sigma: &Measure) -> Result<AveragedSetup> {
    const BETA_NODES: usize = 48;
    let mut betas: Vec<(f64, f64)> = sigma.atoms().to_vec();
    for piece in sigma.ac_pieces() {
        let single = Measure::new(vec![], vec![piece.clone()])?;
        let d = single.discretize(BETA_NODES)?;
        betas.extend(d.nodes().iter().copied().zip(d.weights().iter().copied()));
    }
    if betas.is_empty() {
        return Err(Error::validation("sigma must carry mass"));
    }

    let mut atom_pool: Vec<(f64, f64)> = vec![];
    let mut pieces = vec![];
    for &(beta, sw) in &betas {
        let scaled: Measure = if beta == 0.0 {
            mu.clone()
        } else {
            rank_one::perturb(mu, beta)?.perturbed
        };
        for &(p, m) in scaled.atoms() {
            atom_pool.push((p, m * sw));
        }
        for piece in scaled.ac_pieces() {
            pieces.push(piece.scaled(sw)?);
        }
    }
    // Merge numerically coincident atoms.
    atom_pool.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut atoms: Vec<(f64, f64)> = vec![];
    for (p, m) in atom_pool {
        match atoms.last_mut() {
            Some(last) if (p - last.0).abs() <= 1e-12 * p.abs().max(1.0) => last.1 += m,
            _ => atoms.push((p, m)),
        }
    }
    let tau = Measure::new(atoms, pieces)?;
    Ok(AveragedSetup {
        sigma: sigma.clone(),
        tau,
        beta_nodes: BETA_NODES,
    })
}

impl AveragedSetup {
    /// `int d sigma(beta) / |alpha - beta|^2`: finite iff `alpha` is in the
    /// admissible set `E`. Returns `f64::INFINITY` on divergence.
    pub fn e_probe(&self, alpha: f64) -> Result<f64> {
        let mut total = 0.0;
        for &(p, m) in self.sigma.atoms() {
            let d = alpha - p;
            if d == 0.0 {
                return Ok(f64::INFINITY);
            }
            total += m / (d * d);
        }
        for piece in self.sigma.ac_pieces() {
            let (a, b) = (piece.interval.a(), piece.interval.b());
            if alpha >= a && alpha <= b {
                let probe = piece.eval(alpha.clamp(
                    a + piece.interval.len() * 1e-12,
                    b - piece.interval.len() * 1e-12,
                ));
                if probe > 1e-300 {
                    return Ok(f64::INFINITY);
                }
            }
            let mut f = |t: f64| {
                let d = alpha - t;
                num_complex::Complex64::new(1.0 / (d * d), 0.0)
            };
            let q = piece.integrate_against(&mut f, a, b, 1e-12)?;
            if !q.value.re.is_finite() {
                return Ok(f64::INFINITY);
            }
            total += q.value.re;
        }
        Ok(total)
    }

    /// Averaged verdict: the distribution criterion on the density of `tau`
    /// over `I`, gated on `alpha` belonging to `E`.
    pub fn averaged_verdict(&self, i: &Interval, alpha: f64) -> Result<VerdictReport> {
        let e = self.e_probe(alpha)?;
        if !e.is_finite() {
            return Ok(VerdictReport {
                verdict: SpectralVerdict::Inconclusive,
                reason: format!("alpha = {alpha} is outside the admissible set E"),
                distribution: None,
                e_probe_value: Some(e),
            });
        }
        verdict_on_density(&self.tau, i, Some(e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn i01() -> Interval {
        Interval::new(0.0, 1.0).unwrap()
    }

    fn wx() -> WeightDescriptor {
        WeightDescriptor::PowerLaw { c: 1.0, p: 1.0 }
    }

    fn wx2() -> WeightDescriptor {
        WeightDescriptor::PowerLaw { c: 1.0, p: 2.0 }
    }

    #[test]
    fn rearrangement_corpus() {
        assert_eq!(
            rearrangement_test(&wx(), &i01()).unwrap().verdict,
            Verdict::Diverges
        );
        assert_eq!(
            rearrangement_test(&wx2(), &i01()).unwrap().verdict,
            Verdict::Converges
        );
        let short = Interval::new(0.0, 0.3).unwrap();
        let p_half = WeightDescriptor::PowerLog { c: 1.0, p: 0.5 };
        let p_two = WeightDescriptor::PowerLog { c: 1.0, p: 2.0 };
        assert_eq!(
            rearrangement_test(&p_half, &short).unwrap().verdict,
            Verdict::Diverges
        );
        assert_eq!(
            rearrangement_test(&p_two, &short).unwrap().verdict,
            Verdict::Converges
        );
        assert_eq!(
            rearrangement_test(&WeightDescriptor::Constant { c: 1.0 }, &i01())
                .unwrap()
                .verdict,
            Verdict::Diverges
        );
    }

    #[test]
    fn distribution_corpus() {
        assert_eq!(
            distribution_test(&WeightDescriptor::Constant { c: 1.0 }, &i01())
                .unwrap()
                .verdict,
            Verdict::Diverges
        );
        assert_eq!(
            distribution_test(&wx(), &i01()).unwrap().verdict,
            Verdict::Diverges
        );
        assert_eq!(
            distribution_test(&wx2(), &i01()).unwrap().verdict,
            Verdict::Converges
        );
    }

    #[test]
    fn numeric_route_matches_analytic_on_tables() {
        // Table encoding of w = x: numeric shells must diverge.
        let xs: Vec<f64> = (0..=256).map(|k| k as f64 / 256.0).collect();
        let table_x = WeightDescriptor::Table {
            xs: xs.clone(),
            ys: xs.clone(),
        };
        let dv = distribution_test(&table_x, &i01()).unwrap();
        assert_eq!(dv.method, Method::NumericFit);
        assert_eq!(dv.verdict, Verdict::Diverges);
        let rv = rearrangement_test(&table_x, &i01()).unwrap();
        assert_eq!(rv.verdict, Verdict::Diverges);

        // Table encoding of w = x^2 converges on both routes.
        let table_x2 = WeightDescriptor::Table {
            xs: xs.clone(),
            ys: xs.iter().map(|x| x * x).collect(),
        };
        assert_eq!(
            distribution_test(&table_x2, &i01()).unwrap().verdict,
            Verdict::Converges
        );
        assert_eq!(
            rearrangement_test(&table_x2, &i01()).unwrap().verdict,
            Verdict::Converges
        );
    }

    #[test]
    fn equivalence_audit_corpus() {
        assert!(equivalence_audit(&wx(), &i01()).unwrap());
        assert!(equivalence_audit(&wx2(), &i01()).unwrap());
        let short = Interval::new(0.0, 0.3).unwrap();
        for p in [0.5, 1.5] {
            let w = WeightDescriptor::PowerLog { c: 1.0, p };
            assert!(equivalence_audit(&w, &short).unwrap(), "p = {p}");
        }
        assert!(equivalence_audit(&WeightDescriptor::Constant { c: 2.0 }, &i01()).unwrap());
    }

    fn default_t_grid() -> Vec<f64> {
        (0..25).map(|k| 10f64.powf(1.0 + k as f64 * 0.2)).collect()
    }

    #[test]
    fn olittle_corpus() {
        // w = x^2: product t^(1/2) grows: not o(1/t).
        let r = olittle_test(&wx2(), &i01(), &default_t_grid()).unwrap();
        assert_eq!(r.verdict, OLittleVerdict::NotLittleO);
        assert!(r.slope > 0.4, "slope {}", r.slope);
        // w = x: product == 1 identically: not o(1/t), though the
        // distribution test diverges (the documented gap).
        let r = olittle_test(&wx(), &i01(), &default_t_grid()).unwrap();
        assert_eq!(r.verdict, OLittleVerdict::NotLittleO);
        assert!(r.slope.abs() < 0.02);
        for &(t, p) in &r.products {
            assert!((p - 1.0).abs() < 1e-9, "t={t}: {p}");
        }
        // Bounded-below weight: superlevel empty for large t.
        let r = olittle_test(
            &WeightDescriptor::Constant { c: 0.5 },
            &i01(),
            &default_t_grid(),
        )
        .unwrap();
        assert_eq!(r.verdict, OLittleVerdict::IsLittleO);
    }

    #[test]
    fn olittle_implies_distribution_divergence() {
        // On the corpus, o(1/t) always comes with a divergent distribution
        // test (Proposition inside Theorem ordering).
        let grid = default_t_grid();
        let corpus: Vec<(WeightDescriptor, Interval)> = vec![
            (WeightDescriptor::Constant { c: 1.0 }, i01()),
            (wx(), i01()),
            (wx2(), i01()),
            (
                WeightDescriptor::PowerLog { c: 1.0, p: 0.5 },
                Interval::new(0.0, 0.3).unwrap(),
            ),
            (
                WeightDescriptor::PowerLog { c: 1.0, p: 2.0 },
                Interval::new(0.0, 0.3).unwrap(),
            ),
        ];
        for (w, i) in corpus {
            let o = olittle_test(&w, &i, &grid).unwrap();
            if o.verdict == OLittleVerdict::IsLittleO {
                assert_eq!(
                    distribution_test(&w, &i).unwrap().verdict,
                    Verdict::Diverges
                );
            }
        }
    }

    #[test]
    fn verdict_friedrichs_and_failures() {
        // Friedrichs-style: density x on [0,1] with embedded atoms.
        let mu = Measure::new(
            vec![(0.3, 0.1), (0.6, 0.1)],
            vec![AcPiece::new(i01(), wx()).unwrap()],
        )
        .unwrap();
        let report = verdict(&mu, &i01(), 1.0).unwrap();
        assert_eq!(report.verdict, SpectralVerdict::NoSingularSpectrumOnI);

        // w = x^2: inconclusive.
        let mu2 = Measure::new(vec![], vec![AcPiece::new(i01(), wx2()).unwrap()]).unwrap();
        let report = verdict(&mu2, &i01(), 1.0).unwrap();
        assert_eq!(report.verdict, SpectralVerdict::Inconclusive);

        // alpha = 0 violates the precondition.
        assert!(verdict(&mu, &i01(), 0.0).is_err());

        // Interval off the a.c. support.
        let far = Interval::new(5.0, 6.0).unwrap();
        let report = verdict(&mu, &far, 1.0).unwrap();
        assert_eq!(report.verdict, SpectralVerdict::Inconclusive);
        assert!(report.reason.contains("no absolutely continuous piece"));
    }

    #[test]
    fn verdict_monotone_in_weight() {
        // w1 <= w2 pointwise and w1 certifies: w2 must certify.
        let pairs = vec![
            (wx(), WeightDescriptor::Constant { c: 1.0 }),
            (wx(), WeightDescriptor::PowerLaw { c: 1.0, p: 0.5 }),
        ];
        for (w1, w2) in pairs {
            let v1 = distribution_test(&w1, &i01()).unwrap().verdict;
            let v2 = distribution_test(&w2, &i01()).unwrap().verdict;
            if v1 == Verdict::Diverges {
                assert_eq!(v2, Verdict::Diverges);
            }
        }
    }

    #[test]
    fn verdict_gap_in_coverage_is_inconclusive() {
        let mu = Measure::new(
            vec![],
            vec![
                AcPiece::new(
                    Interval::new(0.0, 0.4).unwrap(),
                    WeightDescriptor::Constant { c: 1.0 },
                )
                .unwrap(),
                AcPiece::new(
                    Interval::new(0.6, 1.0).unwrap(),
                    WeightDescriptor::Constant { c: 1.0 },
                )
                .unwrap(),
            ],
        )
        .unwrap();
        let report = verdict(&mu, &i01(), 1.0).unwrap();
        assert_eq!(report.verdict, SpectralVerdict::Inconclusive);
        assert!(report.reason.contains("vanishes"));
    }

    #[test]
    fn averaged_setup_dirac_sigma() {
        let mu = Measure::from_atoms(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let sigma = Measure::dirac(1.0);
        let setup = averaged_setup(&mu, &sigma).unwrap();
        // tau = mu_1: the golden-ratio atoms.
        let expected = rank_one::perturb(&mu, 1.0).unwrap().perturbed;
        assert_eq!(setup.tau.atoms().len(), expected.atoms().len());
        for (a, b) in setup.tau.atoms().iter().zip(expected.atoms()) {
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
        // E = R minus {1}.
        assert!(setup.e_probe(1.0).unwrap().is_infinite());
        assert!(setup.e_probe(2.0).unwrap().is_finite());
    }

    #[test]
    fn averaged_e_probe_uniform() {
        let mu = Measure::lebesgue(-1.0, 1.0).unwrap();
        let sigma = Measure::lebesgue(0.0, 1.0).unwrap();
        let setup = averaged_setup(&mu, &sigma).unwrap();
        // int_0^1 d beta/(2-beta)^2 = 1/2.
        let v = setup.e_probe(2.0).unwrap();
        assert!((v - 0.5).abs() < 1e-10, "{v}");
        // Probe inside the support diverges.
        assert!(setup.e_probe(0.5).unwrap().is_infinite());
        // Mass bookkeeping: tau mass = sigma mass * mu mass.
        let expect = sigma.mass() * mu.mass();
        assert!((setup.tau.mass() - expect).abs() < 2e-2, "{}", setup.tau.mass());
    }

    #[test]
    fn averaged_verdict_gating() {
        let mu = Measure::lebesgue(-1.0, 1.0).unwrap();
        let sigma = Measure::lebesgue(0.0, 1.0).unwrap();
        let setup = averaged_setup(&mu, &sigma).unwrap();
        let inner = Interval::new(-0.5, 0.5).unwrap();
        let ok = setup.averaged_verdict(&inner, 2.0).unwrap();
        assert_eq!(ok.verdict, SpectralVerdict::NoSingularSpectrumOnI);
        let gated = setup.averaged_verdict(&inner, 0.5).unwrap();
        assert_eq!(gated.verdict, SpectralVerdict::Inconclusive);
        assert!(gated.reason.contains("outside the admissible set"));
    }

    #[test]
    fn secular_roots_avoid_certified_interval() {
        // Cross-validation with the perturbation engine: where the verdict
        // certifies no singular spectrum on I, the perturbed measure places
        // no atoms in the interior of I.
        let mu = Measure::new(
            vec![(-2.0, 0.3)],
            vec![AcPiece::new(i01(), wx()).unwrap()],
        )
        .unwrap();
        let i = i01();
        for &alpha in &[1.0, -1.0, 0.5] {
            let report = verdict(&mu, &i, alpha).unwrap();
            assert_eq!(report.verdict, SpectralVerdict::NoSingularSpectrumOnI);
            let r = rank_one::perturb(&mu, alpha).unwrap();
            for &(p, _) in r.perturbed.atoms() {
                assert!(
                    p <= i.a() + 1e-12 || p >= i.b() - 1e-12,
                    "alpha={alpha}: atom at {p} inside the certified interval"
                );
            }
        }
    }
}
