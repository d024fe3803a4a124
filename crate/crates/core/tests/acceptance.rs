//! Acceptance criteria, one line each. Set `ACCEPTANCE_STRICT=1` to turn failures into a nonzero exit.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qsde_cert::adiabatic::{atom_cavity_ae, d_j, limit_coefficients};
use qsde_cert::operator::c;
use qsde_cert::scenarios::{published_kerr_state, AeSetup, KerrSetup, AE_SCALES, KERR_LEVELS};
use qsde_cert::semigroup::CONTRACTION_TOL;
use qsde_cert::truncation::{c_sequence, z_bound, BoundConstants};
use qsde_cert::verification::{
    ae_structure_defects, contraction_excess, dominance_check, matexp_vs_ode, residual_oracle_gap, sample_oscillator,
    semigroup_law_defect, DominanceGrid,
};

const TABLE1: [f64; 9] = [0.2366, 0.2115, 0.1970, 0.1872, 0.1799, 0.1742, 0.1696, 0.1658, 0.1625];
const TABLE1_ABS_TOL: f64 = 0.005;
const TABLE1_REL_TOL: f64 = 0.10;
const TABLE1_SECONDS: f64 = 120.0;
const J_PUBLISHED: f64 = 0.0096;
const J_TOL: f64 = 0.0015;
const J_SPREAD: f64 = 0.001;
const AE_COST_MAX: f64 = 0.01;
const AE_BOUND_MAX: f64 = 0.02;
const AE_RATE_TOL: f64 = 0.01;
const DOMINANCE_SECONDS: f64 = 300.0;
const MATEXP_TOL: f64 = 1e-8;
const SEMIGROUP_TOL: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-10;
const STRUCTURE_TOL: f64 = 1e-12;
const LIMIT_TOL: f64 = 1e-10;
const Z_SETS: usize = 10_000;

struct Outcome {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn report(o: &Outcome) {
    println!("{} criterion {}: {} | {}", if o.passed { "PASS" } else { "FAIL" }, o.id, o.name, o.detail);
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn table1() -> Outcome {
    let start = Instant::now();
    let setup = KerrSetup::default();
    let bounds: Result<Vec<f64>, _> = KERR_LEVELS
        .iter()
        .map(|&k| published_kerr_state(k).and_then(|s| setup.certificate(k, &s)).map(|c| c.bound))
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let name = "Kerr truncation table at the reference minimizer";
    let bounds = match bounds {
        Ok(b) => b,
        Err(e) => return Outcome { id: 1, name, passed: false, detail: format!("error: {e}") },
    };
    let abs = bounds.iter().zip(TABLE1).map(|(b, p)| (b - p).abs()).fold(0.0, f64::max);
    let rel = bounds.iter().zip(TABLE1).map(|(b, p)| ((b - p) / p).abs()).fold(0.0, f64::max);
    let primary = abs <= TABLE1_ABS_TOL;
    let fallback = rel <= TABLE1_REL_TOL && strictly_decreasing(&bounds);
    Outcome {
        id: 1,
        name,
        passed: (primary || fallback) && secs <= TABLE1_SECONDS,
        detail: format!(
            "bounds [{}] vs [{}]; max abs dev {abs:.4} (tol {TABLE1_ABS_TOL}), max rel dev {:.1}% (tol {:.0}%), decreasing {}, {secs:.1}s",
            fmt_list(&bounds),
            fmt_list(&TABLE1),
            100.0 * rel,
            100.0 * TABLE1_REL_TOL,
            strictly_decreasing(&bounds)
        ),
    }
}

fn published_cost() -> Outcome {
    let setup = KerrSetup::default();
    let name = "cost at the reference minimizer";
    let js: Result<Vec<f64>, _> =
        [59, 79, 99].iter().map(|&k| published_kerr_state(k).and_then(|s| setup.cost(k, &s))).collect();
    let js = match js {
        Ok(j) => j,
        Err(e) => return Outcome { id: 2, name, passed: false, detail: format!("error: {e}") },
    };
    let spread = js.iter().cloned().fold(f64::MIN, f64::max) - js.iter().cloned().fold(f64::MAX, f64::min);
    Outcome {
        id: 2,
        name,
        passed: (js[2] - J_PUBLISHED).abs() <= J_TOL && spread < J_SPREAD,
        detail: format!("J(k=59,79,99) = {:.6} {:.6} {:.6}; target {J_PUBLISHED}±{J_TOL}, spread {spread:.2e} < {J_SPREAD}", js[0], js[1], js[2]),
    }
}

fn elimination_table() -> Outcome {
    let name = "elimination table trend";
    let start = Instant::now();
    let setup = AeSetup::default();
    let run = || -> qsde_cert::Result<(f64, Vec<f64>, Vec<f64>)> {
        let out = setup.optimize(&setup.schedule(0))?;
        let mut bounds = Vec::new();
        let mut rates = Vec::new();
        for k in AE_SCALES {
            let cert = setup.certificate(k, &out.state)?;
            bounds.push(cert.bound);
            rates.push(cert.rate_term());
        }
        Ok((out.cost, bounds, rates))
    };
    let (j, bounds, rates) = match run() {
        Ok(v) => v,
        Err(e) => return Outcome { id: 3, name, passed: false, detail: format!("error: {e}") },
    };
    let n = rates.len();
    let ratio = rates[n - 2] / rates[n - 1];
    let rate_ok = (ratio / 10.0 - 1.0).abs() <= AE_RATE_TOL;
    let last = bounds[n - 1];
    Outcome {
        id: 3,
        name,
        passed: j <= AE_COST_MAX && strictly_decreasing(&bounds) && last <= AE_BOUND_MAX && rate_ok,
        detail: format!(
            "J = {j:.3e} (≤ {AE_COST_MAX}); bounds [{}] decreasing {}; k=1e8 bound {last:.4} (≤ {AE_BOUND_MAX}); rate ratio 1e7/1e8 = {ratio:.4} (10 ± 1%); {:.0}s",
            fmt_list(&bounds),
            strictly_decreasing(&bounds),
            start.elapsed().as_secs_f64()
        ),
    }
}

fn dominance() -> Outcome {
    let name = "bound dominance on the Kerr grid";
    let start = Instant::now();
    let out = match dominance_check(&DominanceGrid::default(), None) {
        Ok(o) => o,
        Err(e) => return Outcome { id: 4, name, passed: false, detail: format!("error: {e}") },
    };
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        id: 4,
        name,
        passed: out.violations == 0 && out.unconverged == 0 && secs <= DOMINANCE_SECONDS,
        detail: format!(
            "{} cases, {} violations, {} unconverged, worst error/bound {:.3e} at (k, t, n) = {:?}; {secs:.1}s",
            out.cases, out.violations, out.unconverged, out.worst_ratio, out.worst_case
        ),
    }
}

fn numerical_core() -> Outcome {
    let name = "numerical core oracles";
    let run = || -> qsde_cert::Result<(f64, f64, f64, f64)> {
        Ok((matexp_vs_ode(20, 60, 0)?, contraction_excess(0, false, None)?, semigroup_law_defect(0)?, residual_oracle_gap(0)?))
    };
    match run() {
        Ok((m, c, s, r)) => Outcome {
            id: 5,
            name,
            passed: m <= MATEXP_TOL && c <= CONTRACTION_TOL && s <= SEMIGROUP_TOL && r <= ORACLE_TOL,
            detail: format!(
                "matexp vs ODE {m:.2e} (≤ {MATEXP_TOL:.0e}); ‖e^tG‖−1 {c:.2e} (≤ {CONTRACTION_TOL:.0e}); semigroup law {s:.2e} (≤ {SEMIGROUP_TOL:.0e}); residual vs field expansion {r:.2e} (≤ {ORACLE_TOL:.0e})"
            ),
        },
        Err(e) => Outcome { id: 5, name, passed: false, detail: format!("error: {e}") },
    }
}

fn elimination_structure() -> Outcome {
    let name = "elimination structure";
    let run = || -> qsde_cert::Result<(f64, f64, f64, f64, f64)> {
        let (structure, closed) = ae_structure_defects()?;
        let mut unit: f64 = 0.0;
        let mut herm: f64 = 0.0;
        for j_max in [4, 6] {
            for model in [atom_cavity_ae(25.0, 5.0, c(0.1, 0.0), j_max)?, sample_oscillator(j_max)?] {
                let lim = limit_coefficients(&model)?;
                unit = unit.max(lim.unitarity_defect());
                herm = herm.max(lim.h().hermiticity_defect());
            }
        }
        let dj = (d_j(25.0, 5.0, 1) - 25.0).abs().max((d_j(25.0, 5.0, 2) - 362.5).abs());
        Ok((structure, closed, unit, herm, dj))
    };
    match run() {
        Ok((st, cl, u, h, dj)) => Outcome {
            id: 6,
            name,
            passed: st <= STRUCTURE_TOL && cl <= STRUCTURE_TOL && u <= LIMIT_TOL && h <= LIMIT_TOL && dj <= 1e-12,
            detail: format!(
                "ỸY − P⊥ {st:.2e}; closed-form limit gap {cl:.2e} (≤ {STRUCTURE_TOL:.0e}); S unitarity {u:.2e}, H hermiticity {h:.2e} (≤ {LIMIT_TOL:.0e}); d₁, d₂ error {dj:.1e}"
            ),
        },
        Err(e) => Outcome { id: 6, name, passed: false, detail: format!("error: {e}") },
    }
}

fn formula_sanity() -> Outcome {
    let name = "truncation functional sanity";
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let times: Vec<f64> = (0..=60).map(|i| 0.05 * i as f64).collect();
    let mut zero_fail = 0;
    let mut negative = 0;
    let mut nonmonotone = 0;
    let mut worst_drop: f64 = 0.0;
    for _ in 0..Z_SETS {
        let gamma = 10f64.powf(rng.random_range(-2.0..3.0));
        let scale = |rng: &mut ChaCha8Rng| gamma * 10f64.powf(rng.random_range(-3.0..1.0));
        let cs = BoundConstants { q_l: scale(&mut rng), q_a: scale(&mut rng), q_e: scale(&mut rng), ..BoundConstants::new(gamma, 0.0, 0.0, 0.0).unwrap() };
        let r = rng.random_range(1..=4);
        let s = rng.random_range(1..=4);
        let zs: Vec<f64> = times.iter().map(|&t| z_bound(&cs, r, s, t).unwrap()).collect();
        if zs[0] != 0.0 {
            zero_fail += 1;
        }
        if zs.iter().any(|z| *z < 0.0) {
            negative += 1;
        }
        let drop = zs.windows(2).map(|w| (w[0] - w[1]) / w[0].abs().max(1e-300)).fold(0.0, f64::max);
        if drop > 1e-12 {
            nonmonotone += 1;
            worst_drop = worst_drop.max(drop);
        }
    }
    let cs = c_sequence(8);
    let recursion = cs[0] == 1.0
        && (cs[1] - 2f64.sqrt()).abs() < 1e-15
        && (1..8).all(|j| {
            let p = 2f64.powi(j as i32);
            (cs[j] * cs[j] - cs[j - 1] * p / (p - 1.0)).abs() < 1e-13
        });
    Outcome {
        id: 7,
        name,
        passed: zero_fail == 0 && negative == 0 && nonmonotone == 0 && recursion,
        detail: format!(
            "{Z_SETS} random sets: z(0) ≠ 0 in {zero_fail}, negative in {negative}, decreasing somewhere in t in {nonmonotone} (worst relative drop {worst_drop:.2e}); c-sequence recursion {recursion}"
        ),
    }
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored.
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let start = Instant::now();
    let outcomes = [table1(), published_cost(), elimination_table(), dominance(), numerical_core(), elimination_structure(), formula_sanity()];
    for o in &outcomes {
        report(o);
    }
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("acceptance: {passed}/{} criteria passed in {:.0}s", outcomes.len(), start.elapsed().as_secs_f64());
    if strict && passed < outcomes.len() {
        std::process::exit(1);
    }
}
