//! Jacobi matrices and their spectral measures.
//!
//! A bounded Jacobi operator (semi-infinite tridiagonal with positive
//! off-diagonals `a_n` and real diagonal `b_n`) corresponds one-to-one with
//! a compactly supported unit-mass measure, its spectral measure with
//! respect to the first basis vector. Truncations realize the
//! correspondence at desk scale: eigenvalues are the nodes, squared first
//! eigenvector components the weights, and the Stieltjes/Lanczos procedure
//! with full reorthogonalization recovers recurrence coefficients from a
//! discretized measure. Replacing `b_1` by `b_1 + alpha` is exactly the
//! rank-one perturbation in the cyclic vector `e_1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measure::{DiscreteMeasure, Interval, Measure};
use crate::quadrature;

/// Recurrence coefficients of a (truncated) Jacobi matrix:
/// `|b| = N` diagonal entries, `|a| = N - 1` positive off-diagonals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JacobiRepr", into = "JacobiRepr")]
pub struct JacobiParams {
    a: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct JacobiRepr {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl TryFrom<JacobiRepr> for JacobiParams {
    type Error = Error;
    fn try_from(r: JacobiRepr) -> Result<Self> {
        JacobiParams::new(r.a, r.b)
    }
}

impl From<JacobiParams> for JacobiRepr {
    fn from(j: JacobiParams) -> JacobiRepr {
        JacobiRepr { a: j.a, b: j.b }
    }
}

impl JacobiParams {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::validation("Jacobi parameters need at least one b"));
        }
        if a.len() + 1 != b.len() {
            return Err(Error::validation(format!(
                "Jacobi parameters need |a| = |b| - 1, got |a| = {}, |b| = {}",
                a.len(),
                b.len()
            )));
        }
        if a.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::validation("off-diagonals a_n must be positive"));
        }
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("diagonals b_n must be finite"));
        }
        Ok(JacobiParams { a, b })
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }
}

/// The free Jacobi truncation: `a = 1`, `b = 0`.
pub fn free_jacobi(n: usize) -> JacobiParams {
    assert!(n >= 1, "free Jacobi matrix needs n >= 1");
    JacobiParams {
        a: vec![1.0; n - 1],
        b: vec![0.0; n],
    }
}

/// Rank-one perturbation in the `e_1` coordinate: `b_1 += alpha`.
pub fn perturb_b1(j: &JacobiParams, alpha: f64) -> JacobiParams {
    let mut out = j.clone();
    out.b[0] += alpha;
    out
}

/// Hilbert-Schmidt distance from the free matrix:
/// `sum (a_n - 1)^2 + sum b_n^2` over the available coefficients.
pub fn hilbert_schmidt_defect(j: &JacobiParams) -> f64 {
    j.a.iter().map(|&a| (a - 1.0) * (a - 1.0)).sum::<f64>()
        + j.b.iter().map(|&b| b * b).sum::<f64>()
}

/// Spectral measure of the truncation with respect to `e_1`: eigenvalues as
/// nodes, squared first eigenvector components as weights (total mass 1).
pub fn measure_from_jacobi(j: &JacobiParams) -> Result<DiscreteMeasure> {
    let (values, first) = linalg::tridiag_eigen_first_components(&j.b, &j.a)?;
    let weights: Vec<f64> = first.iter().map(|z| z * z).collect();
    if weights.iter().any(|&w| w <= 0.0) {
        return Err(Error::NonConvergence {
            solver: "tridiagonal eigensolve",
            iterations: 0,
            detail: "vanishing first eigenvector component on a positive Jacobi matrix".into(),
        });
    }
    DiscreteMeasure::new(values, weights)
}

/// Result of the Stieltjes procedure, with the breakdown index when the
/// measure had fewer support points than requested coefficients
/// (`breakdown = Some(n)` means `a_n` fell below tolerance).
#[derive(Debug, Clone, Serialize)]
pub struct JacobiFromMeasure {
    pub params: JacobiParams,
    pub breakdown: Option<usize>,
}

/// First `n` recurrence coefficients of the (unit-mass) measure via Lanczos
/// tridiagonalization of `diag(nodes)` against the start vector `sqrt(w)`,
/// with full reorthogonalization.
pub fn jacobi_from_measure(mu: &Measure, n: usize) -> Result<JacobiFromMeasure> {
    if n < 1 {
        return Err(Error::domain("jacobi_from_measure requires n >= 1"));
    }
    let mass = mu.mass();
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::validation(format!(
            "measure has mass {mass}; normalize to 1 first"
        )));
    }
    // Discretization fine enough that quadrature error sits well below the
    // coefficient tolerances for moderate n.
    let nodes_per_piece = (8 * n).max(200);
    let d = mu.discretize(nodes_per_piece)?;
    stieltjes(&d, n)
}

/// Lanczos with full reorthogonalization on a discrete measure.
pub fn stieltjes(d: &DiscreteMeasure, n: usize) -> Result<JacobiFromMeasure> {
    let m = d.len();
    let nodes = d.nodes();
    let scale = nodes.iter().fold(1.0f64, |s, &t| s.max(t.abs()));
    let break_tol = 1e-10 * scale;

    let mut q_prev: Vec<f64> = vec![0.0; m];
    let mut q: Vec<f64> = d.weights().iter().map(|&w| w.sqrt()).collect();
    let norm0 = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in q.iter_mut() {
        *x /= norm0;
    }
    let mut basis: Vec<Vec<f64>> = vec![q.clone()];

    let mut b = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n.saturating_sub(1));
    let mut breakdown = None;

    for step in 0..n {
        // r = T q - a_{step-1} q_prev, T = diag(nodes).
        let mut r: Vec<f64> = nodes.iter().zip(&q).map(|(&t, &x)| t * x).collect();
        let bk: f64 = r.iter().zip(&q).map(|(x, y)| x * y).sum();
        b.push(bk);
        if step + 1 == n {
            break;
        }
        for (ri, (&qi, &pi)) in r.iter_mut().zip(q.iter().zip(&q_prev)) {
            *ri -= bk * qi;
            if step > 0 {
                *ri -= a[step - 1] * pi;
            }
        }
        // Full reorthogonalization, twice for good measure.
        for _ in 0..2 {
            for base in &basis {
                let dot: f64 = r.iter().zip(base).map(|(x, y)| x * y).sum();
                for (ri, &bi) in r.iter_mut().zip(base) {
                    *ri -= dot * bi;
                }
            }
        }
        let ak = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if ak <= break_tol {
            breakdown = Some(step + 1);
            break;
        }
        a.push(ak);
        for x in r.iter_mut() {
            *x /= ak;
        }
        q_prev = std::mem::replace(&mut q, r);
        basis.push(q.clone());
    }

    Ok(JacobiFromMeasure {
        params: JacobiParams::new(a, b)?,
        breakdown,
    })
}

/// One sub-condition of the Killip-Simon characterization.
#[derive(Debug, Clone, Serialize)]
pub struct BlumenthalWeyl {
    pub pass: bool,
    /// Eigenvalues above 2, sorted decreasing toward 2.
    pub lambda_plus: Vec<f64>,
    /// Eigenvalues below -2, sorted increasing toward -2.
    pub lambda_minus: Vec<f64>,
    /// Uncovered length of [-2, 2] under the a.c. pieces.
    pub coverage_gap: f64,
    /// Total a.c. support length outside [-2, 2].
    pub outside_ac: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LiebThirring {
    pub value: f64,
    pub finite: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasiSzego {
    /// `int_{-2}^{2} sqrt(4 - t^2) log w(t) dt`; `None` when it is -infinity.
    pub value: Option<f64>,
    pub minus_infinity: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Normalization {
    pub mass: f64,
    pub pass: bool,
}

/// The four-condition report; `verdict` is the conjunction.
#[derive(Debug, Clone, Serialize)]
pub struct KillipSimonReport {
    pub blumenthal_weyl: BlumenthalWeyl,
    pub lieb_thirring: LiebThirring,
    pub quasi_szego: QuasiSzego,
    pub normalization: Normalization,
    pub verdict: bool,
}

const QS_UNDERFLOW: f64 = 1e-300;
const QS_GAP: f64 = 1e-6;

/// Check the four spectral-measure conditions characterizing Hilbert-Schmidt
/// perturbations of the free Jacobi matrix.
pub fn killip_simon_check(mu: &Measure) -> Result<KillipSimonReport> {
    // (1) Blumenthal-Weyl, checked structurally on the representation:
    // a.c. pieces must tile [-2,2] and stay inside it; atoms outside are the
    // eigenvalue sequences (finite lists sort toward +-2 vacuously).
    let band = Interval::new(-2.0, 2.0).unwrap();
    let mut covered = 0.0;
    let mut outside_ac = 0.0;
    let mut segments: Vec<(f64, f64)> = vec![];
    for piece in mu.ac_pieces() {
        let (a, b) = (piece.interval.a(), piece.interval.b());
        outside_ac += (band.a() - a).max(0.0) + (b - band.b()).max(0.0);
        if let Some(overlap) = piece.interval.intersect(&band) {
            segments.push((overlap.a(), overlap.b()));
        }
    }
    segments.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut reach = band.a();
    for &(a, b) in &segments {
        let a = a.max(reach);
        if b > a {
            covered += b - a;
            reach = b;
        }
    }
    let coverage_gap = band.len() - covered;
    let mut lambda_plus: Vec<f64> = mu
        .atoms()
        .iter()
        .map(|&(p, _)| p)
        .filter(|&p| p > 2.0)
        .collect();
    lambda_plus.sort_by(|x, y| y.total_cmp(x));
    let mut lambda_minus: Vec<f64> = mu
        .atoms()
        .iter()
        .map(|&(p, _)| p)
        .filter(|&p| p < -2.0)
        .collect();
    lambda_minus.sort_by(f64::total_cmp);
    let bw_pass = coverage_gap <= 1e-9 && outside_ac <= 1e-12;
    let blumenthal_weyl = BlumenthalWeyl {
        pass: bw_pass,
        lambda_plus: lambda_plus.clone(),
        lambda_minus: lambda_minus.clone(),
        coverage_gap,
        outside_ac,
    };

    // (2) Lieb-Thirring: 3/2-moments of the eigenvalue distances to the band.
    let lt_value: f64 = lambda_plus.iter().map(|&l| (l - 2.0).powf(1.5)).sum::<f64>()
        + lambda_minus.iter().map(|&l| (-2.0 - l).powf(1.5)).sum::<f64>();
    let lieb_thirring = LiebThirring {
        value: lt_value,
        finite: lt_value.is_finite(),
    };

    // (3) Quasi-Szego: -infinity as soon as the density underflows on a
    // subinterval of length > 1e-6 (including coverage gaps); otherwise the
    // integral with the density clamped above underflow (isolated zeros
    // carry integrable log singularities).
    let minus_infinity = coverage_gap > QS_GAP || density_underflow_span(mu, &band) > QS_GAP;
    let quasi_szego = if minus_infinity {
        QuasiSzego {
            value: None,
            minus_infinity: true,
            pass: false,
        }
    } else {
        let q = quadrature::adaptive(
            |t| {
                let w = mu.density(t).max(QS_UNDERFLOW);
                (4.0 - t * t).max(0.0).sqrt() * w.ln()
            },
            -2.0,
            2.0,
            1e-9,
        )?;
        QuasiSzego {
            value: Some(q.value.re),
            minus_infinity: false,
            pass: q.value.re.is_finite(),
        }
    };

    // (4) Normalization.
    let mass = mu.mass();
    let normalization = Normalization {
        mass,
        pass: (mass - 1.0).abs() <= 1e-8,
    };

    let verdict = blumenthal_weyl.pass
        && lieb_thirring.finite
        && quasi_szego.pass
        && normalization.pass;
    Ok(KillipSimonReport {
        blumenthal_weyl,
        lieb_thirring,
        quasi_szego,
        normalization,
        verdict,
    })
}

/// Longest run of `density < underflow` inside the band, grid-resolved.
fn density_underflow_span(mu: &Measure, band: &Interval) -> f64 {
    const GRID: usize = 1 << 14;
    let dx = band.len() / GRID as f64;
    let mut longest = 0.0f64;
    let mut run = 0usize;
    for i in 0..GRID {
        let x = band.a() + (i as f64 + 0.5) * dx;
        if mu.density(x) < QS_UNDERFLOW {
            run += 1;
            longest = longest.max(run as f64 * dx);
        } else {
            run = 0;
        }
    }
    longest
}
