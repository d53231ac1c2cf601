//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use common::*;
use fddlm_core::bench::{self, run_level, CaseKind, ResultRow, RunConfig};
use fddlm_core::linalg::condition::sparse_matrix_condition;
use fddlm_core::linalg::{
    estimate_condition_number, gmres, lu_factor, CondEstimate, CondMode, CondOptions,
    materialize, Composed, GmresSettings, LinearOperator,
};
use fddlm_core::mesh::build_square_hierarchy;
use fddlm_core::multigrid::{build_a1_hierarchy, MgConfig};
use fddlm_core::precond::{build_preconditioner, PrecondSpec, Shape, Variant};
use nalgebra::{DMatrix, SymmetricEigen};

const MIN_LEVEL: usize = 2;
const MAX_LEVEL: usize = 5;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn spec(shape: Shape, variant: &str) -> PrecondSpec {
    PrecondSpec::new(shape, variant.parse::<Variant>().unwrap())
}

/// Memoized benchmark rows shared by the trend criteria.
struct Lab {
    rows: HashMap<(CaseKind, PrecondSpec, usize, bool), ResultRow>,
    initial: HashMap<(CaseKind, usize), CondEstimate>,
}

impl Lab {
    fn new() -> Self {
        Self {
            rows: HashMap::new(),
            initial: HashMap::new(),
        }
    }

    fn row(&mut self, kind: CaseKind, spec: PrecondSpec, level: usize, cond: bool) -> ResultRow {
        if let Some(r) = self.rows.get(&(kind, spec, level, true)) {
            return r.clone();
        }
        if let Some(r) = self.rows.get(&(kind, spec, level, cond)) {
            return r.clone();
        }
        let config = RunConfig {
            compute_condition: cond,
            ..RunConfig::default()
        };
        let cached = self.initial.get(&(kind, level)).copied();
        let (row, _, initial) = run_level(kind, spec, (level, level), &config, cached).unwrap();
        if let Some(c) = initial {
            self.initial.insert((kind, level), c);
        }
        self.rows.insert((kind, spec, level, cond), row.clone());
        row
    }

    fn series(&mut self, kind: CaseKind, spec: PrecondSpec, levels: std::ops::RangeInclusive<usize>, cond: bool) -> Vec<ResultRow> {
        levels.map(|l| self.row(kind, spec, l, cond)).collect()
    }
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().cloned().fold(f64::MIN, f64::max);
    let min = v.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}

fn assembly_oracle(_: &mut Lab) -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_constraint = 0.0f64;
    for kind in CaseKind::ALL {
        for level in 2..=3 {
            let sys = system(kind, level);
            let x = lu_solve(&sys.full_matrix(), &sys.full_rhs());
            let (u, u2, lam) = sys.split(&x);
            let mut r1 = sys.a1.apply(u);
            let c1t = sys.c1.transpose().apply(lam);
            r1 = sub(&add(&r1, &c1t), &sys.f1);
            let r2 = sub(&sub(&sys.a2.apply(u2), &sys.c2.transpose().apply(lam)), &sys.f2);
            let r3 = sub(&sys.c1.apply(u), &sys.c2.apply(u2));
            worst = worst.max(norm(&r1)).max(norm(&r2)).max(norm(&r3));
            worst_constraint = worst_constraint.max(norm(&r3));
        }
    }
    Outcome::new(
        worst < 1e-10 && worst_constraint < 1e-10,
        format!("max block residual {worst:.2e}, max |C1 u - C2 u2| {worst_constraint:.2e} (limit 1e-10)"),
    )
}

fn solvability(_: &mut Lab) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for kind in CaseKind::ALL {
        for level in 2..=3 {
            let sys = system(kind, level);
            let c2 = dense(&sys.c2);
            let a2 = dense(&sys.a2);
            let sv = c2.clone().svd(false, false).singular_values;
            let (smin, smax) = (sv.min(), sv.max());
            let c2_ok = smin > 1e-10 * smax;

            let gram = SymmetricEigen::new(c2.transpose() * &c2);
            let gmax = gram.eigenvalues.max();
            let null: Vec<usize> = (0..gram.eigenvalues.len())
                .filter(|&i| gram.eigenvalues[i] <= 1e-12 * gmax)
                .collect();
            let a2_norm = SymmetricEigen::new(a2.clone()).eigenvalues.amax();
            let kernel_min = if null.is_empty() {
                f64::INFINITY
            } else {
                let z = DMatrix::from_fn(a2.nrows(), null.len(), |i, k| gram.eigenvectors[(i, null[k])]);
                SymmetricEigen::new(z.transpose() * &a2 * &z).eigenvalues.min()
            };
            let kernel_ok = kernel_min > 1e-10 * a2_norm;

            let b = sys.b_matrix();
            let b_ok = lu_factor(&b).is_ok()
                && sparse_matrix_condition(&b, &CondOptions::default())
                    .map(|c| c.value.is_finite())
                    .unwrap_or(false);
            pass &= c2_ok && kernel_ok && b_ok;
            notes.push(format!(
                "{kind}/L{level}: smin(C2)={smin:.1e} dim null={} min eig={} B ok={b_ok}",
                null.len(),
                if null.is_empty() { "n/a".to_string() } else { format!("{kernel_min:.1e}") }
            ));
        }
    }
    Outcome::new(pass, notes.join("; "))
}

fn preconditioner_correctness(_: &mut Lab) -> Outcome {
    let mut worst = 0.0f64;
    let mut mult_ok = true;
    let mut notes = Vec::new();
    for kind in CaseKind::ALL {
        for level in 2..=3 {
            let sys = system(kind, level);
            let (nv, n) = (sys.n_v(), sys.n_total());
            let n2 = sys.n_v2();
            let b = sys.b_matrix();
            let c1t = sys.c1.transpose();
            for shape in [Shape::P1, Shape::P2] {
                let p = build_preconditioner(&sys, spec(shape, "dd"), &MgConfig::default()).unwrap();
                for seed in 0..10 {
                    let r = random_vec(n, 100 + seed);
                    let z = p.apply(&r);
                    let (zu, zb) = z.split_at(nv);
                    let mut top = sys.a1.apply(zu);
                    let mut bottom = b.apply(zb);
                    match shape {
                        Shape::P1 => top = add(&top, &c1t.apply(&zb[n2..])),
                        _ => {
                            let g = sys.c1.apply(zu);
                            for (i, v) in g.into_iter().enumerate() {
                                bottom[n2 + i] += v;
                            }
                        }
                    }
                    top.extend(bottom);
                    worst = worst.max(diff_norm(&top, &r) / norm(&r));
                }
                if level == 2 {
                    let a = sys.full_matrix();
                    let m = materialize(&Composed { outer: &p, inner: &a });
                    let ones = m
                        .eigenvalues()
                        .unwrap()
                        .iter()
                        .filter(|z| (z.re - 1.0).hypot(z.im) < 1e-6)
                        .count();
                    let need = sys.n_v2() + sys.n_lambda();
                    mult_ok &= ones >= need;
                    notes.push(format!("{kind} {shape}: {ones}/{need}"));
                }
            }
        }
    }
    Outcome::new(
        worst < 1e-10 && mult_ok,
        format!("max relative |Pz - r| {worst:.2e} (limit 1e-10); eigenvalue 1 count vs n_V2+n_L: {}", notes.join(", ")),
    )
}

fn multigrid_quality(_: &mut Lab) -> Outcome {
    let mut rates = Vec::new();
    for level in 3..=5 {
        let cfg = problem(CaseKind::E1H1);
        let sq = Arc::new(build_square_hierarchy(cfg.square_half_width, level).unwrap());
        let mg = build_a1_hierarchy(&cfg, &sq, level, &MgConfig::default()).unwrap();
        let n = mg.finest_operator().n_rows();
        let zero = vec![0.0; n];
        let mut x = random_vec(n, 7);
        let e0 = norm(&x);
        for _ in 0..10 {
            mg.v_cycle(&mut x, &zero);
        }
        rates.push((norm(&x) / e0).powf(0.1));
    }
    let max = rates.iter().cloned().fold(f64::MIN, f64::max);
    let min = rates.iter().cloned().fold(f64::MAX, f64::min);
    Outcome::new(
        max <= 0.25 && max - min < 0.15,
        format!("contraction per cycle at levels 3-5: {rates:.3?} (limit 0.25, spread {:.3} < 0.15)", max - min),
    )
}

fn trend_e1_h1(lab: &mut Lab) -> Outcome {
    let kind = CaseKind::E1H1;
    let base = lab.series(kind, spec(Shape::P1, "dd"), MIN_LEVEL..=MAX_LEVEL, true);
    let h: Vec<f64> = base.iter().map(|r| r.h).collect();
    let c0: Vec<f64> = base.iter().map(|r| r.cond_initial).collect();
    let slope = loglog_slope(&h, &c0);
    let mut pass = (slope + 2.0).abs() <= 0.5;
    let mut notes = vec![format!("initial cond slope {slope:.2} (target -2 +/- 0.5)")];
    for shape in [Shape::P1, Shape::P2] {
        for variant in Variant::ALL {
            let s = PrecondSpec::new(shape, variant);
            let rows = lab.series(kind, s, MIN_LEVEL..=MAX_LEVEL, true);
            let ratio = spread(rows.iter().map(|r| r.cond_precond));
            pass &= ratio < 10.0;
            notes.push(format!("{s} x{ratio:.1}"));
        }
    }
    Outcome::new(pass, format!("{} (preconditioned spread limit x10)", notes.join(", ")))
}

fn trend_e1_l2(lab: &mut Lab) -> Outcome {
    let kind = CaseKind::E1L2;
    let mut pass = true;
    let mut notes = Vec::new();
    for variant in Variant::ALL {
        let r = lab.row(kind, PrecondSpec::new(Shape::P1, variant), MAX_LEVEL, true);
        let red = r.cond_initial / r.cond_precond;
        pass &= red >= 10.0;
        notes.push(format!("P1({}) /{red:.1e}", variant.label()));
    }
    let r = lab.row(kind, spec(Shape::P3, "dd"), MAX_LEVEL, true);
    let red = r.cond_initial / r.cond_precond;
    pass &= red < 10.0;
    notes.push(format!("P3(dd) /{red:.1e}"));
    Outcome::new(
        pass,
        format!("reduction at level {MAX_LEVEL}: {} (P1 needs >= 10, P3(dd) needs < 10)", notes.join(", ")),
    )
}

fn iteration_trend(lab: &mut Lab) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for kind in CaseKind::ALL {
        for shape in Shape::ALL {
            let rows = lab.series(kind, spec(shape, "md"), MIN_LEVEL..=MAX_LEVEL, false);
            let all_conv = rows.iter().all(|r| r.converged);
            pass &= all_conv;
            if !all_conv {
                notes.push(format!("{kind} {shape}(md) did not converge"));
            }
            if kind != CaseKind::E2L2 && shape != Shape::P3 {
                let it3 = rows.iter().find(|r| r.level == 3).unwrap().iterations as f64;
                let it5 = rows.iter().find(|r| r.level == 5).unwrap().iterations as f64;
                let growth = it5 / it3 - 1.0;
                pass &= growth <= 0.5;
                notes.push(format!("{kind} {shape}(md) {it3}->{it5} (+{:.0}%)", 100.0 * growth));
            }
        }
    }
    Outcome::new(pass, format!("{}; md converged in all nine cases unless noted (growth limit +50%)", notes.join(", ")))
}

fn vanka_element2(lab: &mut Lab) -> Outcome {
    let kind = CaseKind::E2L2;
    let mut pass = true;
    let mut notes = Vec::new();
    for shape in Shape::ALL {
        for level in 3..=MAX_LEVEL {
            let md = lab.row(kind, spec(shape, "md"), level, false);
            for v in ["mm", "dm"] {
                let r = lab.row(kind, spec(shape, v), level, false);
                let ratio = r.iterations as f64 / md.iterations.max(1) as f64;
                let ok = !r.converged || ratio >= 5.0;
                pass &= ok;
                notes.push(format!("{shape}({v}) L{level} x{ratio:.1}"));
            }
        }
    }
    let mut cond_notes = Vec::new();
    for shape in [Shape::P1, Shape::P2] {
        for v in ["dd", "md"] {
            let rows = lab.series(kind, spec(shape, v), MIN_LEVEL..=MAX_LEVEL, true);
            let ratio = spread(rows.iter().map(|r| r.cond_precond));
            pass &= ratio < 10.0;
            cond_notes.push(format!("{shape}({v}) x{ratio:.1}"));
        }
    }
    Outcome::new(
        pass,
        format!(
            "iterations vs md (need >= x5 or divergence): {}; preconditioned cond spread (limit x10): {}",
            notes.join(", "),
            cond_notes.join(", ")
        ),
    )
}

fn solver_oracles(_: &mut Lab) -> Outcome {
    let mut worst_sol = 0.0f64;
    let mut all_conv = true;
    let mut worst_cond = 0.0f64;
    let opts = CondOptions::default();
    for kind in CaseKind::ALL {
        for level in 2..=4 {
            let sys = system(kind, level);
            let a = sys.full_matrix();
            if level <= 3 {
                let b = sys.full_rhs();
                let exact = lu_solve(&a, &b);
                for shape in Shape::ALL {
                    for variant in Variant::ALL {
                        let p = build_preconditioner(&sys, PrecondSpec::new(shape, variant), &MgConfig::default())
                            .unwrap();
                        let (x, rep) = gmres(&a, &b, &p, &GmresSettings::default()).unwrap();
                        all_conv &= rep.converged;
                        worst_sol = worst_sol.max(diff_norm(&x, &exact) / norm(&exact));
                    }
                }
            }
            let gap = |o: &dyn LinearOperator| {
                let d = estimate_condition_number(o, CondMode::DenseSvd, &opts).unwrap();
                let it = estimate_condition_number(o, CondMode::Iterative, &opts).unwrap();
                (it.value - d.value).abs() / d.value
            };
            worst_cond = worst_cond.max(gap(&a));
            for (shape, v) in [(Shape::P1, "dd"), (Shape::P2, "mm"), (Shape::P3, "md")] {
                let p = build_preconditioner(&sys, spec(shape, v), &MgConfig::default()).unwrap();
                worst_cond = worst_cond.max(gap(&Composed { outer: &p, inner: &a }));
            }
        }
    }
    Outcome::new(
        all_conv && worst_sol < 1e-8 && worst_cond < 0.05,
        format!(
            "GMRES vs LU max relative error {worst_sol:.2e} (limit 1e-8, all converged={all_conv}); iterative vs dense condition max relative gap {worst_cond:.2e} (limit 5%)"
        ),
    )
}

fn strip_timing(csv: &[u8]) -> Vec<String> {
    String::from_utf8(csv.to_vec())
        .unwrap()
        .lines()
        .map(|l| {
            l.split(',')
                .enumerate()
                .filter(|(i, _)| *i != 12 && *i != 13)
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect()
}

fn determinism(_: &mut Lab) -> Outcome {
    let config = RunConfig {
        max_level: 3,
        ..RunConfig::default()
    };
    let mut outputs = Vec::new();
    let mut count = 0;
    for _ in 0..2 {
        let outcome = bench::run_matrix(&config).unwrap();
        count = outcome.rows.len();
        let mut buf = Vec::new();
        bench::write_csv(&outcome.rows, &mut buf).unwrap();
        outputs.push(strip_timing(&buf));
    }
    let same = outputs[0] == outputs[1];
    Outcome::new(
        same && count == 36 * 2,
        format!("{count} rows per run, identical apart from timing columns: {same}"),
    )
}

type Criterion = (&'static str, fn(&mut Lab) -> Outcome);

fn main() {
    faer::set_global_parallelism(faer::Par::Seq);
    let criteria: [Criterion; 10] = [
        ("assembly oracle", assembly_oracle),
        ("solvability", solvability),
        ("preconditioner correctness", preconditioner_correctness),
        ("multigrid quality", multigrid_quality),
        ("condition trend e1h1", trend_e1_h1),
        ("condition trend e1l2", trend_e1_l2),
        ("iteration trend", iteration_trend),
        ("element 2 vanka", vanka_element2),
        ("solver oracles", solver_oracles),
        ("determinism", determinism),
    ];
    let mut lab = Lab::new();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = check(&mut lab);
        if !out.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<28} {} ({:.1}s): {}",
            i + 1,
            name,
            if out.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            out.detail
        );
    }
    println!("acceptance: {} passed, {} failed", criteria.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
