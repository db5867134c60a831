//! Gauss-Legendre rules (Golub-Welsch) and adaptive Gauss-Kronrod integration.

use std::collections::BinaryHeap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;

/// Gauss-Legendre nodes and weights on [-1, 1].
///
/// Computed by Golub-Welsch: eigenvalues of the Legendre recurrence matrix
/// are the nodes, squared first eigenvector components (times the total mass
/// 2) are the weights. Rules are cached per order.
pub fn gauss_legendre(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    assert!(n >= 1, "Gauss-Legendre order must be >= 1");
    static CACHE: OnceLock<Mutex<std::collections::HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(std::collections::HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&n) {
        return rule.clone();
    }
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    let (nodes, first) = linalg::tridiag_eigen_first_components(&diag, &off)
        .expect("Legendre recurrence matrix is well-formed");
    let weights: Vec<f64> = first.iter().map(|z| 2.0 * z * z).collect();
    let rule = Arc::new((nodes, weights));
    cache.lock().unwrap().insert(n, rule.clone());
    rule
}

/// Map a [-1,1] rule onto [a,b] and evaluate `sum w_i * f(x_i)`.
pub fn gauss_legendre_sum(n: usize, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let rule = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    rule.0
        .iter()
        .zip(rule.1.iter())
        .map(|(&x, &w)| w * h * f(c + h * x))
        .sum()
}

// 15-point Kronrod extension of 7-point Gauss (standard QUADPACK abscissae).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: Complex64,
    pub error: f64,
    /// False when the subdivision cap was reached before the tolerance.
    pub converged: bool,
}

fn gk15<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> Result<(Complex64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = Complex64::new(0.0, 0.0);
    let mut gauss = Complex64::new(0.0, 0.0);
    for (j, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let contrib = if x == 0.0 {
            let v = checked(f, c)?;
            gauss += WG[3] * v;
            v
        } else {
            let v1 = checked(f, c - h * x)?;
            let v2 = checked(f, c + h * x)?;
            if j % 2 == 1 {
                gauss += WG[j / 2] * (v1 + v2);
            }
            v1 + v2
        };
        kronrod += wk * contrib;
    }
    kronrod *= h;
    gauss *= h;
    // |K - G| estimates the error of the embedded Gauss rule, which bounds
    // the Kronrod error conservatively.
    let err = (kronrod - gauss).norm();
    Ok((kronrod, err))
}

fn checked<F: FnMut(f64) -> Complex64>(f: &mut F, x: f64) -> Result<Complex64> {
    let v = f(x);
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonIntegrable {
            at: x,
            what: "integrand is not finite".into(),
        })
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

const MAX_SEGMENTS: usize = 8192;

/// Adaptive Gauss-Kronrod integration of a complex-valued integrand.
/// Splits the segment with the worst error estimate until the summed
/// estimate drops below `tol` (absolute, with a relative floor).
pub fn adaptive_complex<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
            converged: true,
        });
    }
    let (value, error) = gk15(&mut f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total_value = value;
    let mut total_error = error;
    // Error stuck at floating-point-resolution segments; not improvable.
    let mut floor_error = 0.0;
    let mut segments = 1usize;

    while total_error > tol.max(1e-15 * total_value.norm()) && segments < MAX_SEGMENTS {
        let worst = heap.pop().expect("heap cannot be empty here");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            total_error -= worst.error;
            floor_error += worst.error;
            continue;
        }
        let (lv, le) = gk15(&mut f, worst.a, mid)?;
        let (rv, re) = gk15(&mut f, mid, worst.b)?;
        total_value += lv + rv - worst.value;
        total_error += le + re - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: lv,
            error: le,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: rv,
            error: re,
        });
        segments += 1;
    }

    let reported = total_error + floor_error;
    Ok(Quadrature {
        value: total_value,
        error: reported,
        converged: reported <= tol.max(1e-12 * total_value.norm().max(1.0)),
    })
}

/// Real-valued adaptive integration (wrapper over the complex driver).
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<Quadrature> {
    adaptive_complex(|x| Complex64::new(f(x), 0.0), a, b, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_5_matches_reference() {
        // Classical five-point rule values.
        let rule = gauss_legendre(5);
        let nodes = &rule.0;
        let weights = &rule.1;
        let ref_nodes = [
            -0.906179845938664,
            -0.538469310105683,
            0.0,
            0.538469310105683,
            0.906179845938664,
        ];
        let ref_weights = [
            0.236926885056189,
            0.478628670499366,
            0.568888888888889,
            0.478628670499366,
            0.236926885056189,
        ];
        for i in 0..5 {
            assert!((nodes[i] - ref_nodes[i]).abs() < 1e-13);
            assert!((weights[i] - ref_weights[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn gauss_exactness_on_polynomials() {
        // n-point rule integrates degree 2n-1 exactly.
        for n in 1..=8 {
            let deg = 2 * n - 1;
            let value = gauss_legendre_sum(n, 0.0, 1.0, |x| x.powi(deg as i32));
            let exact = 1.0 / (deg as f64 + 1.0);
            assert!(
                (value - exact).abs() < 1e-14,
                "n={n} deg={deg}: {value} vs {exact}"
            );
        }
    }

    #[test]
    fn adaptive_smooth_integral() {
        let q = adaptive(|x| x.exp(), 0.0, 1.0, 1e-12).unwrap();
        assert!(q.converged);
        assert!((q.value.re - (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn adaptive_sqrt_endpoint_singularity() {
        // Integrable derivative singularity at both endpoints.
        let q = adaptive(|x| (4.0 - x * x).sqrt(), -2.0, 2.0, 1e-11).unwrap();
        assert!((q.value.re - 2.0 * std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn adaptive_complex_pole_offset() {
        // Integral of 1/(x - i) over [-1, 1] = ln((1-i)/(-1-i)) = i*pi/2.
        let q = adaptive_complex(
            |x| (Complex64::new(x, -1.0)).inv(),
            -1.0,
            1.0,
            1e-12,
        )
        .unwrap();
        assert!((q.value - Complex64::new(0.0, std::f64::consts::FRAC_PI_2)).norm() < 1e-11);
    }

    #[test]
    fn non_finite_integrand_is_domain_error() {
        let r = adaptive(|x| 1.0 / x, 0.0, 1.0, 1e-10);
        // 1/x hits the endpoint node eventually or produces inf; either a
        // NonIntegrable error or a wildly unconverged estimate is acceptable,
        // but a silent wrong answer is not.
        match r {
            Err(Error::NonIntegrable { .. }) => {}
            Ok(q) => assert!(!q.converged || q.value.re > 1e6),
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
