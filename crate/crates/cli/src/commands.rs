//! Per-command pipelines over the core library.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use krein_core::cauchy::{a2_candidates, interval_a2_sup, poisson_a2, regularized_matrix};
use krein_core::criterion::{
    distribution_test, equivalence_audit, olittle_test, rearrangement_test, verdict,
    DivergenceVerdict, OLittleReport, SpectralVerdict, Verdict,
};
use krein_core::jacobi::{
    hilbert_schmidt_defect, jacobi_from_measure, killip_simon_check, measure_from_jacobi,
    perturb_b1, stieltjes, KillipSimonReport,
};
use krein_core::measure::DiscreteMeasure;
use krein_core::rank_one::{
    direct_discrete_perturbation, perturb, representation_matrix, rigidity_normalizer,
    t_eps_one_limit, unitarity_defect,
};

use crate::scenario::{Command, Scenario};

pub type CmdResult<T> = Result<T, String>;

fn ctx<'a, E: std::fmt::Display>(scenario: &'a str, stage: &'a str) -> impl Fn(E) -> String + 'a {
    move |e| format!("[{scenario}/{stage}] {e}")
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandResults {
    Perturb(Vec<PerturbAlpha>),
    Vmatrix(Vec<VmatrixAlpha>),
    Teps(Vec<TepsAlpha>),
    A2(Vec<A2Alpha>),
    Jacobi(JacobiResults),
    Criterion(CriterionResults),
    All(Box<AllResults>),
}

#[derive(Debug, Serialize)]
pub struct PerturbAlpha {
    pub alpha: f64,
    pub roots: Vec<RootRow>,
    pub mass_defect: f64,
    pub max_residual: f64,
    pub excluded_edges: usize,
    /// Eigensolve-oracle deltas (purely atomic measures only).
    pub oracle_max_root_delta: Option<f64>,
    pub oracle_max_mass_delta: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct RootRow {
    pub root: f64,
    pub mass: f64,
    pub f_prime: f64,
    pub residual: f64,
}

#[derive(Debug, Serialize)]
pub struct VmatrixAlpha {
    pub alpha: f64,
    pub n: usize,
    pub max_diagonal: f64,
    pub defect_v_star_v: f64,
    pub defect_vv_star: f64,
    pub max_h_deviation: f64,
    pub off_diagonal_residual: f64,
    pub rescale: Option<RescaleCheck>,
}

#[derive(Debug, Serialize)]
pub struct RescaleCheck {
    pub c: f64,
    pub max_h_deviation_from_inv_c: f64,
}

#[derive(Debug, Serialize)]
pub struct TepsAlpha {
    pub alpha: f64,
    pub bound: f64,
    pub ladder: Vec<TepsNormRow>,
    pub t_eps_one: Vec<TepsOneSummary>,
}

#[derive(Debug, Serialize)]
pub struct TepsNormRow {
    pub eps: f64,
    pub norm: f64,
    pub bound: f64,
}

#[derive(Debug, Serialize)]
pub struct TepsOneSummary {
    pub s: f64,
    pub target: f64,
    pub final_residual: f64,
    pub rate: f64,
}

#[derive(Debug, Serialize)]
pub struct A2Alpha {
    pub alpha: f64,
    pub sup_value: f64,
    pub witness: (f64, f64),
    pub divergent: bool,
    pub grid_resolution: String,
    pub poisson: Vec<PoissonRow>,
}

#[derive(Debug, Serialize)]
pub struct PoissonRow {
    pub height: f64,
    pub product: f64,
}

#[derive(Debug, Serialize)]
pub struct JacobiResults {
    /// Set when the measure was normalized to unit mass for the recurrence.
    pub normalized_from_mass: Option<f64>,
    pub params: krein_core::jacobi::JacobiParams,
    pub breakdown: Option<usize>,
    pub roundtrip_max_delta: Option<f64>,
    pub hilbert_schmidt_defect: f64,
    pub b1_consistency: Vec<B1Row>,
    pub killip_simon: KillipSimonReport,
}

#[derive(Debug, Serialize)]
pub struct B1Row {
    pub alpha: f64,
    pub max_node_delta: f64,
    pub max_weight_delta: f64,
}

#[derive(Debug, Serialize)]
pub struct CriterionResults {
    pub interval: (f64, f64),
    pub pieces: Vec<PieceTests>,
    pub verdicts: Vec<VerdictRow>,
}

#[derive(Debug, Serialize)]
pub struct PieceTests {
    pub interval: (f64, f64),
    pub rearrangement: DivergenceVerdict,
    pub distribution: DivergenceVerdict,
    /// None when either side is inconclusive.
    pub equivalence: Option<bool>,
    pub olittle: OLittleReport,
}

#[derive(Debug, Serialize)]
pub struct VerdictRow {
    pub alpha: f64,
    pub verdict: SpectralVerdict,
    pub reason: String,
}

#[derive(Debug, Serialize)]
pub struct AllResults {
    pub perturb: Vec<PerturbAlpha>,
    pub vmatrix: Vec<VmatrixAlpha>,
    pub teps: Vec<TepsAlpha>,
    pub a2: Vec<A2Alpha>,
    pub jacobi: JacobiResults,
    /// Absent when the scenario has neither an interval nor an a.c. piece.
    pub criterion: Option<CriterionResults>,
}

/// Dispatch a validated scenario.
pub fn run(scenario: &Scenario, command: Command) -> CmdResult<CommandResults> {
    match command {
        Command::Perturb => Ok(CommandResults::Perturb(run_perturb(scenario)?)),
        Command::Vmatrix => Ok(CommandResults::Vmatrix(run_vmatrix(scenario)?)),
        Command::Teps => Ok(CommandResults::Teps(run_teps(scenario)?)),
        Command::A2 => Ok(CommandResults::A2(run_a2(scenario)?)),
        Command::Jacobi => Ok(CommandResults::Jacobi(run_jacobi(scenario)?)),
        Command::Criterion => Ok(CommandResults::Criterion(run_criterion(scenario)?)),
        Command::All => {
            let has_criterion_input =
                scenario.interval.is_some() || !scenario.measure.ac_pieces().is_empty();
            let all = AllResults {
                perturb: run_perturb(scenario)?,
                vmatrix: run_vmatrix(scenario)?,
                teps: run_teps(scenario)?,
                a2: run_a2(scenario)?,
                jacobi: run_jacobi(scenario)?,
                criterion: if has_criterion_input {
                    Some(run_criterion(scenario)?)
                } else {
                    None
                },
            };
            Ok(CommandResults::All(Box::new(all)))
        }
    }
}

/// The discrete realization all matrix pipelines act on: atoms pass through,
/// a.c. pieces contribute `discretization` Gauss nodes.
fn discrete_base(scenario: &Scenario) -> CmdResult<DiscreteMeasure> {
    scenario
        .measure
        .discretize(scenario.discretization)
        .map_err(ctx(&scenario.name, "discretize"))
}

fn run_perturb(scenario: &Scenario) -> CmdResult<Vec<PerturbAlpha>> {
    let atomic = scenario.measure.is_purely_atomic();
    scenario
        .alphas
        .par_iter()
        .map(|&alpha| {
            let r = perturb(&scenario.measure, alpha).map_err(ctx(&scenario.name, "perturb"))?;
            let (mut oracle_root, mut oracle_mass) = (None, None);
            if atomic && alpha != 0.0 {
                let d = discrete_base(scenario)?;
                let o = direct_discrete_perturbation(&d, alpha)
                    .map_err(ctx(&scenario.name, "oracle"))?;
                let mut dr = 0.0f64;
                let mut dm = 0.0f64;
                for ((pos, mass), (ev, w)) in r
                    .perturbed
                    .atoms()
                    .iter()
                    .zip(o.eigenvalues.iter().zip(&o.spectral_weights))
                {
                    dr = dr.max((pos - ev).abs());
                    dm = dm.max((mass - w).abs());
                }
                oracle_root = Some(dr);
                oracle_mass = Some(dm);
            }
            Ok(PerturbAlpha {
                alpha,
                roots: r
                    .roots
                    .iter()
                    .zip(&r.masses)
                    .map(|(root, &mass)| RootRow {
                        root: root.root,
                        mass,
                        f_prime: root.f_prime,
                        residual: root.residual,
                    })
                    .collect(),
                mass_defect: r.mass_defect,
                max_residual: r.max_residual,
                excluded_edges: r.excluded_edges.len(),
                oracle_max_root_delta: oracle_root,
                oracle_max_mass_delta: oracle_mass,
            })
        })
        .collect()
}

fn spectral_pair(
    scenario: &Scenario,
    alpha: f64,
) -> CmdResult<(DiscreteMeasure, DiscreteMeasure)> {
    let base = discrete_base(scenario)?;
    let pert = perturb(&base.to_measure(), alpha).map_err(ctx(&scenario.name, "perturb"))?;
    let atoms = pert.perturbed.atoms();
    let target = DiscreteMeasure::new(
        atoms.iter().map(|&(p, _)| p).collect(),
        atoms.iter().map(|&(_, m)| m).collect(),
    )
    .map_err(ctx(&scenario.name, "spectral pair"))?;
    Ok((base, target))
}

fn run_vmatrix(scenario: &Scenario) -> CmdResult<Vec<VmatrixAlpha>> {
    scenario
        .alphas
        .par_iter()
        .map(|&alpha| {
            let (base, target) = if alpha == 0.0 {
                let d = discrete_base(scenario)?;
                (d.clone(), d)
            } else {
                spectral_pair(scenario, alpha)?
            };
            let v = representation_matrix(&base, &target, alpha)
                .map_err(ctx(&scenario.name, "vmatrix"))?;
            let (left, right) = unitarity_defect(&v).map_err(ctx(&scenario.name, "vmatrix"))?;
            let rig = rigidity_normalizer(&v, 1e-6).map_err(ctx(&scenario.name, "rigidity"))?;
            let max_h = rig.h.iter().fold(0.0f64, |m, &h| m.max((h - 1.0).abs()));
            let rescale = match scenario.rigidity_rescale {
                Some(c) if alpha != 0.0 => {
                    let scaled = DiscreteMeasure::new(
                        target.nodes().to_vec(),
                        target.weights().iter().map(|w| c * c * w).collect(),
                    )
                    .map_err(ctx(&scenario.name, "rescale"))?;
                    let vs = representation_matrix(&base, &scaled, alpha)
                        .map_err(ctx(&scenario.name, "rescale"))?;
                    let rs = rigidity_normalizer(&vs, 1e-6)
                        .map_err(ctx(&scenario.name, "rescale"))?;
                    let dev = rs
                        .h
                        .iter()
                        .fold(0.0f64, |m, &h| m.max((h - 1.0 / c).abs()));
                    Some(RescaleCheck {
                        c,
                        max_h_deviation_from_inv_c: dev,
                    })
                }
                _ => None,
            };
            Ok(VmatrixAlpha {
                alpha,
                n: base.len(),
                max_diagonal: v.max_diagonal(),
                defect_v_star_v: left,
                defect_vv_star: right,
                max_h_deviation: max_h,
                off_diagonal_residual: rig.off_diagonal_residual,
                rescale,
            })
        })
        .collect()
}

fn run_teps(scenario: &Scenario) -> CmdResult<Vec<TepsAlpha>> {
    scenario
        .alphas
        .par_iter()
        .map(|&alpha| {
            if alpha == 0.0 {
                return Err(format!(
                    "[{}/teps] the uniform bound 2/|alpha| needs alpha != 0",
                    scenario.name
                ));
            }
            let (base, target) = spectral_pair(scenario, alpha)?;
            let bound = 2.0 / alpha.abs();
            let mut ladder = vec![];
            let mut warm: Option<Vec<Complex64>> = None;
            for &eps in &scenario.epsilon_ladder {
                let t = regularized_matrix(&base, &target, eps)
                    .map_err(ctx(&scenario.name, "teps"))?;
                let (norm, direction) = t
                    .operator_norm_with_start(1e-8, warm.as_deref())
                    .map_err(ctx(&scenario.name, "teps norm"))?;
                warm = Some(direction);
                ladder.push(TepsNormRow { eps, norm, bound });
            }
            let rows = t_eps_one_limit(&base, &target, alpha, &scenario.epsilon_ladder)
                .map_err(ctx(&scenario.name, "teps one"))?;
            Ok(TepsAlpha {
                alpha,
                bound,
                ladder,
                t_eps_one: rows
                    .iter()
                    .map(|r| TepsOneSummary {
                        s: r.s,
                        target: r.target,
                        final_residual: r.final_residual,
                        rate: r.rate,
                    })
                    .collect(),
            })
        })
        .collect()
}

fn run_a2(scenario: &Scenario) -> CmdResult<Vec<A2Alpha>> {
    scenario
        .alphas
        .par_iter()
        .map(|&alpha| {
            let mu = scenario.measure.clone();
            let pert = perturb(&mu, alpha).map_err(ctx(&scenario.name, "a2 perturb"))?;
            let nu = pert.perturbed;
            let candidates = a2_candidates(&mu, &nu, scenario.dyadic_depth);
            let report =
                interval_a2_sup(&mu, &nu, &candidates).map_err(ctx(&scenario.name, "a2"))?;
            // Poisson products at the joint support midpoint, descending the
            // epsilon ladder as heights.
            let mid = mu
                .support_hull()
                .map(|h| h.midpoint())
                .unwrap_or_default();
            let poisson = scenario
                .epsilon_ladder
                .iter()
                .map(|&h| {
                    Ok(PoissonRow {
                        height: h,
                        product: poisson_a2(&mu, &nu, Complex64::new(mid, h))
                            .map_err(ctx(&scenario.name, "poisson"))?,
                    })
                })
                .collect::<CmdResult<Vec<_>>>()?;
            Ok(A2Alpha {
                alpha,
                sup_value: report.sup_value,
                witness: (report.argmax_witness.a(), report.argmax_witness.b()),
                divergent: report.divergent,
                grid_resolution: report.grid_resolution,
                poisson,
            })
        })
        .collect()
}

fn run_jacobi(scenario: &Scenario) -> CmdResult<JacobiResults> {
    let mass = scenario.measure.mass();
    let (mu, normalized_from_mass) = if (mass - 1.0).abs() > 1e-8 {
        (
            scenario
                .measure
                .scaled(1.0 / mass)
                .map_err(ctx(&scenario.name, "normalize"))?,
            Some(mass),
        )
    } else {
        (scenario.measure.clone(), None)
    };
    let out =
        jacobi_from_measure(&mu, scenario.jacobi_n).map_err(ctx(&scenario.name, "jacobi"))?;

    // Roundtrip: spectral measure of the recovered coefficients feeds the
    // Stieltjes procedure again.
    let roundtrip_max_delta = if out.breakdown.is_none() && out.params.n() >= 2 {
        let d = measure_from_jacobi(&out.params).map_err(ctx(&scenario.name, "roundtrip"))?;
        let back = stieltjes(&d, out.params.n()).map_err(ctx(&scenario.name, "roundtrip"))?;
        let mut worst = 0.0f64;
        for (x, y) in back.params.a().iter().zip(out.params.a()) {
            worst = worst.max((x - y).abs());
        }
        for (x, y) in back.params.b().iter().zip(out.params.b()) {
            worst = worst.max((x - y).abs());
        }
        Some(worst)
    } else {
        None
    };

    // b_1 perturbation against the measure-level pipeline.
    let b1_consistency = scenario
        .alphas
        .iter()
        .filter(|&&a| a != 0.0)
        .map(|&alpha| {
            let via_matrix = measure_from_jacobi(&perturb_b1(&out.params, alpha))
                .map_err(ctx(&scenario.name, "b1"))?;
            let base = measure_from_jacobi(&out.params).map_err(ctx(&scenario.name, "b1"))?;
            let via_measure =
                perturb(&base.to_measure(), alpha).map_err(ctx(&scenario.name, "b1"))?;
            let atoms = via_measure.perturbed.atoms();
            let mut dn = 0.0f64;
            let mut dw = 0.0f64;
            if atoms.len() == via_matrix.len() {
                for ((pos, m), (&ev, &w)) in atoms
                    .iter()
                    .zip(via_matrix.nodes().iter().zip(via_matrix.weights()))
                {
                    dn = dn.max((pos - ev).abs());
                    dw = dw.max((m - w).abs());
                }
            } else {
                dn = f64::INFINITY;
                dw = f64::INFINITY;
            }
            Ok(B1Row {
                alpha,
                max_node_delta: dn,
                max_weight_delta: dw,
            })
        })
        .collect::<CmdResult<Vec<_>>>()?;

    let killip_simon =
        killip_simon_check(&scenario.measure).map_err(ctx(&scenario.name, "killip-simon"))?;
    Ok(JacobiResults {
        normalized_from_mass,
        hilbert_schmidt_defect: hilbert_schmidt_defect(&out.params),
        params: out.params,
        breakdown: out.breakdown,
        roundtrip_max_delta,
        b1_consistency,
        killip_simon,
    })
}

fn run_criterion(scenario: &Scenario) -> CmdResult<CriterionResults> {
    let interval = scenario.interval.or_else(|| {
        scenario
            .measure
            .ac_pieces()
            .first()
            .map(|p| p.interval)
    });
    let interval = interval.ok_or_else(|| {
        format!(
            "[{}/criterion] scenario has no interval and no a.c. piece",
            scenario.name
        )
    })?;
    let t_grid = scenario.t_grid_or_default();
    let pieces = scenario
        .measure
        .ac_pieces()
        .iter()
        .filter(|p| {
            p.interval
                .intersect(&interval)
                .map(|o| o.len() > 0.0)
                .unwrap_or(false)
        })
        .map(|piece| {
            let (w, i) = (&piece.weight, &piece.interval);
            let rearrangement =
                rearrangement_test(w, i).map_err(ctx(&scenario.name, "rearrangement"))?;
            let distribution =
                distribution_test(w, i).map_err(ctx(&scenario.name, "distribution"))?;
            let equivalence = if rearrangement.verdict == Verdict::Inconclusive
                || distribution.verdict == Verdict::Inconclusive
            {
                None
            } else {
                Some(equivalence_audit(w, i).map_err(ctx(&scenario.name, "audit"))?)
            };
            let olittle = olittle_test(w, i, &t_grid).map_err(ctx(&scenario.name, "olittle"))?;
            Ok(PieceTests {
                interval: (i.a(), i.b()),
                rearrangement,
                distribution,
                equivalence,
                olittle,
            })
        })
        .collect::<CmdResult<Vec<_>>>()?;

    let verdicts = scenario
        .alphas
        .par_iter()
        .map(|&alpha| {
            let report = verdict(&scenario.measure, &interval, alpha)
                .map_err(ctx(&scenario.name, "verdict"))?;
            Ok(VerdictRow {
                alpha,
                verdict: report.verdict,
                reason: report.reason,
            })
        })
        .collect::<CmdResult<Vec<_>>>()?;
    Ok(CriterionResults {
        interval: (interval.a(), interval.b()),
        pieces,
        verdicts,
    })
}

// ---------------------------------------------------------------------------
// csv / plotdata projections
// ---------------------------------------------------------------------------

fn fmt(section: &str, alpha: Option<f64>, quantity: &str, value: f64, tol: &str) -> String {
    let alpha = alpha.map_or(String::new(), |a| format!("{a}"));
    format!("{section},{alpha},{quantity},{value:.17e},{tol}")
}

fn csv_perturb(list: &[PerturbAlpha]) -> Vec<String> {
    let mut rows = vec![];
    for p in list {
        for (k, r) in p.roots.iter().enumerate() {
            rows.push(fmt("perturb", Some(p.alpha), &format!("root[{k}]"), r.root, "root_rel_tol"));
            rows.push(fmt("perturb", Some(p.alpha), &format!("mass[{k}]"), r.mass, "root_rel_tol"));
        }
        rows.push(fmt("perturb", Some(p.alpha), "mass_defect", p.mass_defect, "mass_tol"));
        rows.push(fmt("perturb", Some(p.alpha), "max_residual", p.max_residual, "root_rel_tol"));
        if let Some(d) = p.oracle_max_root_delta {
            rows.push(fmt("perturb", Some(p.alpha), "oracle_max_root_delta", d, "root_rel_tol"));
        }
        if let Some(d) = p.oracle_max_mass_delta {
            rows.push(fmt("perturb", Some(p.alpha), "oracle_max_mass_delta", d, "root_rel_tol"));
        }
    }
    rows
}

fn csv_vmatrix(list: &[VmatrixAlpha]) -> Vec<String> {
    let mut rows = vec![];
    for v in list {
        rows.push(fmt("vmatrix", Some(v.alpha), "defect_v_star_v", v.defect_v_star_v, "norm_rel_tol"));
        rows.push(fmt("vmatrix", Some(v.alpha), "defect_vv_star", v.defect_vv_star, "norm_rel_tol"));
        rows.push(fmt("vmatrix", Some(v.alpha), "max_diagonal", v.max_diagonal, "root_rel_tol"));
        rows.push(fmt("vmatrix", Some(v.alpha), "max_h_deviation", v.max_h_deviation, "rigidity_diag_tol"));
        rows.push(fmt("vmatrix", Some(v.alpha), "off_diagonal_residual", v.off_diagonal_residual, "rigidity_diag_tol"));
        if let Some(r) = &v.rescale {
            rows.push(fmt("vmatrix", Some(v.alpha), "max_h_deviation_from_inv_c", r.max_h_deviation_from_inv_c, "rigidity_diag_tol"));
        }
    }
    rows
}

fn csv_teps(list: &[TepsAlpha]) -> Vec<String> {
    let mut rows = vec![];
    for t in list {
        for row in &t.ladder {
            // eps,norm,bound triplet per ladder rung.
            rows.push(format!(
                "teps,{},norm[eps={:e}],{:.17e},norm_rel_tol;bound={:.17e}",
                t.alpha, row.eps, row.norm, row.bound
            ));
        }
        for one in &t.t_eps_one {
            rows.push(fmt(
                "teps",
                Some(t.alpha),
                &format!("t_eps_one_residual[s={:.9}]", one.s),
                one.final_residual,
                "norm_rel_tol",
            ));
        }
    }
    rows
}

fn csv_a2(list: &[A2Alpha]) -> Vec<String> {
    let mut rows = vec![];
    for a in list {
        rows.push(fmt("a2", Some(a.alpha), "sup_value", a.sup_value, "quad_tol"));
        rows.push(fmt("a2", Some(a.alpha), "witness_lo", a.witness.0, "quad_tol"));
        rows.push(fmt("a2", Some(a.alpha), "witness_hi", a.witness.1, "quad_tol"));
        rows.push(format!("a2,{},divergent,{},", a.alpha, a.divergent));
        for p in &a.poisson {
            rows.push(fmt("a2", Some(a.alpha), &format!("poisson[h={:e}]", p.height), p.product, "quad_tol"));
        }
    }
    rows
}

fn csv_jacobi(j: &JacobiResults) -> Vec<String> {
    let mut rows = vec![];
    for (k, &a) in j.params.a().iter().enumerate() {
        rows.push(fmt("jacobi", None, &format!("a[{}]", k + 1), a, "quad_tol"));
    }
    for (k, &b) in j.params.b().iter().enumerate() {
        rows.push(fmt("jacobi", None, &format!("b[{}]", k + 1), b, "quad_tol"));
    }
    rows.push(fmt("jacobi", None, "hilbert_schmidt_defect", j.hilbert_schmidt_defect, "quad_tol"));
    if let Some(r) = j.roundtrip_max_delta {
        rows.push(fmt("jacobi", None, "roundtrip_max_delta", r, "quad_tol"));
    }
    for row in &j.b1_consistency {
        rows.push(fmt("jacobi", Some(row.alpha), "b1_max_node_delta", row.max_node_delta, "root_rel_tol"));
        rows.push(fmt("jacobi", Some(row.alpha), "b1_max_weight_delta", row.max_weight_delta, "root_rel_tol"));
    }
    rows.push(format!("jacobi,,blumenthal_weyl,{},", j.killip_simon.blumenthal_weyl.pass));
    rows.push(fmt("jacobi", None, "lieb_thirring", j.killip_simon.lieb_thirring.value, "quad_tol"));
    rows.push(fmt(
        "jacobi",
        None,
        "quasi_szego",
        j.killip_simon.quasi_szego.value.unwrap_or(f64::NEG_INFINITY),
        "quad_tol",
    ));
    rows.push(fmt("jacobi", None, "normalization_mass", j.killip_simon.normalization.mass, "mass_tol"));
    rows.push(format!("jacobi,,verdict,{},", j.killip_simon.verdict));
    rows
}

fn csv_criterion(c: &CriterionResults) -> Vec<String> {
    let mut rows = vec![];
    for (idx, p) in c.pieces.iter().enumerate() {
        rows.push(format!(
            "criterion,,piece[{idx}].rearrangement,{:?}({:?}),",
            p.rearrangement.verdict, p.rearrangement.method
        ));
        rows.push(format!(
            "criterion,,piece[{idx}].distribution,{:?}({:?}),",
            p.distribution.verdict, p.distribution.method
        ));
        if let Some(eq) = p.equivalence {
            rows.push(format!("criterion,,piece[{idx}].equivalence,{eq},"));
        }
        rows.push(format!(
            "criterion,,piece[{idx}].olittle,{:?},",
            p.olittle.verdict
        ));
        for &(scale, value) in &p.distribution.shells {
            rows.push(fmt("criterion", None, &format!("piece[{idx}].shell[{scale:e}]"), value, "quad_tol"));
        }
        for &(t, prod) in &p.olittle.products {
            rows.push(fmt("criterion", None, &format!("piece[{idx}].olittle[t={t:e}]"), prod, "quad_tol"));
        }
    }
    for v in &c.verdicts {
        rows.push(format!("criterion,{},verdict,{:?},", v.alpha, v.verdict));
    }
    rows
}

/// (file suffix, header comment, two-column series).
type Plot = (String, String, Vec<(f64, f64)>);

fn plots_perturb(list: &[PerturbAlpha]) -> Vec<Plot> {
    list.iter()
        .enumerate()
        .map(|(i, p)| {
            (
                format!("spectrum_{i:02}"),
                format!("perturbed atoms (s_k, v_k) at alpha = {}", p.alpha),
                p.roots.iter().map(|r| (r.root, r.mass)).collect(),
            )
        })
        .collect()
}

fn plots_teps(list: &[TepsAlpha]) -> Vec<Plot> {
    list.iter()
        .enumerate()
        .map(|(i, t)| {
            (
                format!("norms_{i:02}"),
                format!("(eps, ||T_eps||) at alpha = {}; bound 2/|alpha| = {}", t.alpha, t.bound),
                t.ladder.iter().map(|r| (r.eps, r.norm)).collect(),
            )
        })
        .collect()
}

fn plots_a2(list: &[A2Alpha]) -> Vec<Plot> {
    list.iter()
        .enumerate()
        .map(|(i, a)| {
            (
                format!("poisson_{i:02}"),
                format!("(height, Poisson product) at alpha = {}", a.alpha),
                a.poisson.iter().map(|p| (p.height, p.product)).collect(),
            )
        })
        .collect()
}

fn plots_criterion(c: &CriterionResults) -> Vec<Plot> {
    let mut plots = vec![];
    for (i, p) in c.pieces.iter().enumerate() {
        if !p.distribution.shells.is_empty() {
            plots.push((
                format!("shells_{i:02}"),
                "(scale, shell integral) of the distribution test".to_string(),
                p.distribution.shells.clone(),
            ));
        }
        plots.push((
            format!("olittle_{i:02}"),
            "(t, t * superlevel measure)".to_string(),
            p.olittle.products.clone(),
        ));
    }
    plots
}

impl CommandResults {
    pub fn csv_rows(&self) -> Vec<String> {
        match self {
            CommandResults::Perturb(list) => csv_perturb(list),
            CommandResults::Vmatrix(list) => csv_vmatrix(list),
            CommandResults::Teps(list) => csv_teps(list),
            CommandResults::A2(list) => csv_a2(list),
            CommandResults::Jacobi(j) => csv_jacobi(j),
            CommandResults::Criterion(c) => csv_criterion(c),
            CommandResults::All(all) => {
                let mut rows = csv_perturb(&all.perturb);
                rows.extend(csv_vmatrix(&all.vmatrix));
                rows.extend(csv_teps(&all.teps));
                rows.extend(csv_a2(&all.a2));
                rows.extend(csv_jacobi(&all.jacobi));
                if let Some(c) = &all.criterion {
                    rows.extend(csv_criterion(c));
                }
                rows
            }
        }
    }

    pub fn plots(&self) -> Vec<Plot> {
        match self {
            CommandResults::Perturb(list) => plots_perturb(list),
            CommandResults::Teps(list) => plots_teps(list),
            CommandResults::A2(list) => plots_a2(list),
            CommandResults::Criterion(c) => plots_criterion(c),
            CommandResults::Vmatrix(_) | CommandResults::Jacobi(_) => vec![],
            CommandResults::All(all) => {
                let mut plots = plots_perturb(&all.perturb);
                plots.extend(plots_teps(&all.teps));
                plots.extend(plots_a2(&all.a2));
                if let Some(c) = &all.criterion {
                    plots.extend(plots_criterion(c));
                }
                plots
            }
        }
    }
}

fn flags_perturb(list: &[PerturbAlpha], tol: f64) -> Vec<String> {
    let mut flags = vec![];
    for p in list {
        if p.mass_defect > tol {
            flags.push(format!(
                "perturb alpha={}: mass defect {:.3e} exceeds tol",
                p.alpha, p.mass_defect
            ));
        }
        if p.max_residual > tol {
            flags.push(format!(
                "perturb alpha={}: secular residual {:.3e} exceeds tol",
                p.alpha, p.max_residual
            ));
        }
        if let Some(d) = p.oracle_max_root_delta {
            if d > tol {
                flags.push(format!(
                    "perturb alpha={}: oracle root delta {d:.3e} exceeds tol",
                    p.alpha
                ));
            }
        }
    }
    flags
}

fn flags_vmatrix(list: &[VmatrixAlpha], tol: f64) -> Vec<String> {
    let mut flags = vec![];
    for v in list {
        if v.defect_v_star_v.max(v.defect_vv_star) > tol {
            flags.push(format!(
                "vmatrix alpha={}: unitarity defect ({:.3e}, {:.3e}) exceeds tol",
                v.alpha, v.defect_v_star_v, v.defect_vv_star
            ));
        }
    }
    flags
}

fn flags_teps(list: &[TepsAlpha], tol: f64) -> Vec<String> {
    let mut flags = vec![];
    for t in list {
        for row in &t.ladder {
            if row.norm > row.bound * (1.0 + tol) {
                flags.push(format!(
                    "teps alpha={}: ||T_eps|| = {:.6} exceeds 2/|alpha| at eps={:e}",
                    t.alpha, row.norm, row.eps
                ));
            }
        }
    }
    flags
}

fn flags_a2(list: &[A2Alpha]) -> Vec<String> {
    list.iter()
        .filter(|a| a.divergent)
        .map(|a| format!("a2 alpha={}: atom-centered family diverges", a.alpha))
        .collect()
}

fn flags_jacobi(j: &JacobiResults, tol: f64) -> Vec<String> {
    let mut flags = vec![];
    if let Some(r) = j.roundtrip_max_delta {
        if r > tol.max(1e-8) {
            flags.push(format!("jacobi: roundtrip delta {r:.3e} exceeds tol"));
        }
    }
    for row in &j.b1_consistency {
        let worst = row.max_node_delta.max(row.max_weight_delta);
        if worst > tol.max(1e-9) {
            flags.push(format!(
                "jacobi alpha={}: b1 pipelines disagree by {worst:.3e}",
                row.alpha
            ));
        }
    }
    flags
}

fn flags_criterion(c: &CriterionResults) -> Vec<String> {
    c.pieces
        .iter()
        .enumerate()
        .filter(|(_, p)| p.equivalence == Some(false))
        .map(|(idx, _)| {
            format!("criterion piece[{idx}]: rearrangement and distribution tests disagree")
        })
        .collect()
}

impl CommandResults {
    /// Diagnostics exceeding the report tolerance `tol` (plus structural
    /// warnings), in deterministic order.
    pub fn tolerance_flags(&self, tol: f64) -> Vec<String> {
        match self {
            CommandResults::Perturb(list) => flags_perturb(list, tol),
            CommandResults::Vmatrix(list) => flags_vmatrix(list, tol),
            CommandResults::Teps(list) => flags_teps(list, tol),
            CommandResults::A2(list) => flags_a2(list),
            CommandResults::Jacobi(j) => flags_jacobi(j, tol),
            CommandResults::Criterion(c) => flags_criterion(c),
            CommandResults::All(all) => {
                let mut flags = flags_perturb(&all.perturb, tol);
                flags.extend(flags_vmatrix(&all.vmatrix, tol));
                flags.extend(flags_teps(&all.teps, tol));
                flags.extend(flags_a2(&all.a2));
                flags.extend(flags_jacobi(&all.jacobi, tol));
                if let Some(c) = &all.criterion {
                    flags.extend(flags_criterion(c));
                }
                flags
            }
        }
    }
}
