//! Property tests for the structural invariants of the measure calculus and
//! the perturbation engine.

use num_complex::Complex64;
use proptest::prelude::*;

use krein_core::cauchy::HerglotzFunction;
use krein_core::measure::{
    atomic_parts_disjoint, distribution_function, increasing_rearrangement, AcPiece,
    DiscreteMeasure, Interval, Measure, WeightDescriptor,
};
use krein_core::rank_one::{direct_discrete_perturbation, perturb, secular_roots};

/// Sorted, well-separated atom list with positive masses.
fn atoms_strategy(max_n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    proptest::collection::vec(((-5.0f64..5.0), (0.05f64..1.0)), 1..max_n).prop_map(|mut v| {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = vec![];
        for (p, m) in v {
            if out.last().map_or(true, |l| p - l.0 > 1e-3) {
                out.push((p, m));
            }
        }
        out
    })
}

fn discrete_strategy(max_n: usize) -> impl Strategy<Value = DiscreteMeasure> {
    atoms_strategy(max_n).prop_map(|atoms| {
        DiscreteMeasure::new(
            atoms.iter().map(|&(p, _)| p).collect(),
            atoms.iter().map(|&(_, m)| m).collect(),
        )
        .unwrap()
    })
}

/// Nonnegative polynomial weight c0 + c2 x^2 on a random interval.
fn piece_strategy() -> impl Strategy<Value = AcPiece> {
    ((0.1f64..2.0), (0.0f64..1.0), (-3.0f64..1.0), (0.2f64..2.0)).prop_map(|(c0, c2, a, len)| {
        AcPiece::new(
            Interval::new(a, a + len).unwrap(),
            WeightDescriptor::Polynomial {
                coefficients: vec![c0, 0.0, c2],
            },
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, .. ProptestConfig::default() })]

    /// integrate is linear in the integrand and additive over measure parts.
    #[test]
    fn integrate_linear_and_additive(
        atoms in atoms_strategy(6),
        piece in piece_strategy(),
        (ca, cb) in ((-2.0f64..2.0), (-2.0f64..2.0)),
    ) {
        let mu_atoms = Measure::from_atoms(atoms.clone()).unwrap();
        let mu_piece = Measure::new(vec![], vec![piece.clone()]).unwrap();
        let mu_both = Measure::new(atoms, vec![piece]).unwrap();
        let f = |t: f64| t * t - 0.5 * t;
        let g = |t: f64| 1.0 / (1.0 + t * t);
        let tol = 1e-10;

        // Linearity in the integrand.
        let lhs = mu_both.integrate_real(|t| ca * f(t) + cb * g(t), tol).unwrap().value.re;
        let rhs = ca * mu_both.integrate_real(f, tol).unwrap().value.re
            + cb * mu_both.integrate_real(g, tol).unwrap().value.re;
        prop_assert!((lhs - rhs).abs() < 1e-8 * (1.0 + lhs.abs()));

        // Additivity over components.
        let parts = mu_atoms.integrate_real(f, tol).unwrap().value.re
            + mu_piece.integrate_real(f, tol).unwrap().value.re;
        let whole = mu_both.integrate_real(f, tol).unwrap().value.re;
        prop_assert!((parts - whole).abs() < 1e-8 * (1.0 + whole.abs()));
    }

    /// Gauss exactness: an n-point discretization of a polynomial weight
    /// reproduces moments up to degree 2n - 1 - deg(w).
    #[test]
    fn discretize_preserves_moments(piece in piece_strategy(), n in 4usize..10) {
        let mu = Measure::new(vec![], vec![piece]).unwrap();
        let d = mu.discretize(n).unwrap();
        let max_deg = (2 * n - 1).saturating_sub(2);
        for k in 0..=max_deg.min(8) {
            let exact = mu.moment(k as u32).unwrap();
            let disc: f64 = d.nodes().iter().zip(d.weights())
                .map(|(&t, &w)| t.powi(k as i32) * w)
                .sum();
            let scale = exact.abs().max(1.0);
            prop_assert!((exact - disc).abs() < 1e-9 * scale,
                "moment {k}: {exact} vs {disc}");
        }
    }

    /// Discretized mass approaches the true mass as the rule grows.
    #[test]
    fn discretize_mass_converges(piece in piece_strategy()) {
        let mu = Measure::new(vec![], vec![piece]).unwrap();
        let mass = mu.mass();
        let coarse = (mu.discretize(4).unwrap().mass() - mass).abs();
        let fine = (mu.discretize(32).unwrap().mass() - mass).abs();
        prop_assert!(fine <= coarse + 1e-12);
        prop_assert!(fine < 1e-10 * mass.max(1.0));
    }

    /// The distribution function is nondecreasing and the rearrangement is
    /// its (right-continuous) inverse from above.
    #[test]
    fn distribution_monotone_and_inverse(
        piece in piece_strategy(),
        t_lo in 0.01f64..1.0,
        factor in 1.0f64..4.0,
        x_frac in 0.05f64..0.95,
    ) {
        let (w, i) = (&piece.weight, &piece.interval);
        let d1 = distribution_function(w, i, t_lo).unwrap();
        let d2 = distribution_function(w, i, t_lo * factor).unwrap();
        prop_assert!(d2 >= d1 - 1e-12);

        let x = i.len() * x_frac;
        let wstar = increasing_rearrangement(w, i, x).unwrap();
        // D(w*(x) + eps) > x within tolerance of the bisection.
        let d_above = distribution_function(w, i, wstar * (1.0 + 1e-9) + 1e-300).unwrap();
        prop_assert!(d_above >= x - 1e-6 * i.len());
    }

    /// Herglotz property and conjugate symmetry of the Borel transform.
    #[test]
    fn herglotz_and_symmetry(
        atoms in atoms_strategy(6),
        re in -6.0f64..6.0,
        im in 0.01f64..4.0,
    ) {
        let mu = Measure::from_atoms(atoms).unwrap();
        let f = HerglotzFunction::new(mu);
        let z = Complex64::new(re, im);
        let fz = f.eval(z).unwrap();
        prop_assert!(fz.im > 0.0, "Im F({z}) = {}", fz.im);
        let fbar = f.eval(z.conj()).unwrap();
        prop_assert!((fbar - fz.conj()).norm() < 1e-12 * (1.0 + fz.norm()));
    }

    /// F is strictly increasing between consecutive atoms.
    #[test]
    fn monotone_on_gaps(d in discrete_strategy(6)) {
        let f = HerglotzFunction::new(d.to_measure());
        for pair in d.nodes().windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let x1 = lo + (hi - lo) * 0.3;
            let x2 = lo + (hi - lo) * 0.7;
            let f1 = f.eval_real(x1).unwrap();
            let f2 = f.eval_real(x2).unwrap();
            prop_assert!(f2 > f1);
            prop_assert!(f.derivative_real(x1).unwrap() > 0.0);
        }
    }

    /// Interlacing: a positive rank-one update pushes eigenvalues up into
    /// the next gap; negative pushes down.
    #[test]
    fn interlacing(d in discrete_strategy(8), alpha in 0.1f64..3.0) {
        let up = direct_discrete_perturbation(&d, alpha).unwrap();
        let t = d.nodes();
        for (k, &s) in up.eigenvalues.iter().enumerate() {
            prop_assert!(s > t[k]);
            if k + 1 < t.len() {
                prop_assert!(s < t[k + 1]);
            }
        }
        let down = direct_discrete_perturbation(&d, -alpha).unwrap();
        for (k, &s) in down.eigenvalues.iter().enumerate() {
            prop_assert!(s < t[k]);
            if k > 0 {
                prop_assert!(s > t[k - 1]);
            }
        }
    }

    /// Secular route equals the eigensolve oracle, and mass is conserved.
    #[test]
    fn perturb_oracle_and_mass(d in discrete_strategy(8), alpha in -3.0f64..3.0) {
        prop_assume!(alpha.abs() > 0.05);
        let r = perturb(&d.to_measure(), alpha).unwrap();
        let o = direct_discrete_perturbation(&d, alpha).unwrap();
        prop_assert_eq!(r.perturbed.atoms().len(), o.eigenvalues.len());
        for ((pos, mass), (ev, w)) in r.perturbed.atoms().iter()
            .zip(o.eigenvalues.iter().zip(&o.spectral_weights)) {
            prop_assert!((pos - ev).abs() < 1e-10, "{} vs {}", pos, ev);
            prop_assert!((mass - w).abs() < 1e-10);
        }
        prop_assert!(r.mass_defect < 1e-10 * d.mass().max(1.0));
    }

    /// Aronszajn-Donoghue surrogate: secular root sets for different alphas
    /// are disjoint.
    #[test]
    fn disjoint_roots_across_alphas(
        d in discrete_strategy(6),
        a1 in 0.2f64..2.0,
        delta in 0.3f64..2.0,
    ) {
        let mu = d.to_measure();
        let r1 = perturb(&mu, a1).unwrap().perturbed;
        let r2 = perturb(&mu, a1 + delta).unwrap().perturbed;
        prop_assert!(atomic_parts_disjoint(&r1, &r2, 1e-9));
    }

    /// Each secular root moves strictly monotonically in alpha.
    #[test]
    fn roots_monotone_in_alpha(d in discrete_strategy(5), a in 0.2f64..1.5) {
        let mu = d.to_measure();
        let r1: Vec<f64> = secular_roots(&mu, a).unwrap().roots.iter().map(|r| r.root).collect();
        let r2: Vec<f64> = secular_roots(&mu, a * 1.3).unwrap().roots.iter().map(|r| r.root).collect();
        prop_assert_eq!(r1.len(), r2.len());
        for (x, y) in r1.iter().zip(&r2) {
            prop_assert!(y > x, "root must increase with alpha: {} -> {}", x, y);
        }
    }
}
