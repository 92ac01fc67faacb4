mod support;

use lmmk::lp::{self, Certificate, LpStatus, SolverOptions};
use support::{random_lp, rng, vertex_oracle, Oracle};

#[test]
fn random_lps_match_vertex_enumeration() {
    let mut r = rng(2024);
    let mut counts = [0usize; 3];
    for case in 0..300 {
        let p = random_lp(&mut r);
        let s = lp::solve_with(&p, &SolverOptions::default());
        match vertex_oracle(&p) {
            Oracle::Optimal { objective, .. } => {
                counts[0] += 1;
                assert_eq!(
                    s.status,
                    LpStatus::Optimal,
                    "case {case}: {}",
                    p.to_standard_form()
                );
                assert!(
                    (s.objective - objective).abs() < 1e-6,
                    "case {case}: solver {} vs oracle {objective}\n{}",
                    s.objective,
                    p.to_standard_form()
                );
                let report = lp::verify(&p, &s, 1e-6);
                assert!(report.passed, "case {case}: {report:?}");
            }
            Oracle::Unbounded => {
                counts[1] += 1;
                assert_eq!(
                    s.status,
                    LpStatus::Unbounded,
                    "case {case}: {}",
                    p.to_standard_form()
                );
                if let Some(Certificate::Ray(ray)) = &s.certificate {
                    assert!(ray.iter().all(|x| *x >= -1e-9));
                    assert!(p.activity(ray).iter().all(|x| *x >= -1e-9));
                    assert!(p.objective(ray) < 0.0);
                } else {
                    panic!("case {case}: missing ray");
                }
            }
            Oracle::Infeasible => {
                counts[2] += 1;
                assert_eq!(
                    s.status,
                    LpStatus::Infeasible,
                    "case {case}: {}",
                    p.to_standard_form()
                );
                if let Some(Certificate::Farkas(y)) = &s.certificate {
                    assert!(y.iter().all(|x| *x >= -1e-9));
                    let by: f64 = p.rhs().iter().zip(y).map(|(b, y)| b * y).sum();
                    assert!(by > 0.0);
                    for j in 0..p.n_variables() {
                        let aty: f64 = p.matrix().column(j).iter().zip(y).map(|(a, y)| a * y).sum();
                        assert!(aty <= 1e-9, "case {case}");
                    }
                } else {
                    panic!("case {case}: missing Farkas witness");
                }
            }
        }
    }
    // The generator should exercise all three outcomes.
    assert!(counts.iter().all(|&c| c > 10), "{counts:?}");
}

#[test]
fn positive_cost_scaling_keeps_unique_support() {
    let mut r = rng(77);
    let mut checked = 0;
    for _ in 0..300 {
        let p = random_lp(&mut r);
        let Oracle::Optimal {
            optimal_vertices, ..
        } = vertex_oracle(&p)
        else {
            continue;
        };
        if optimal_vertices.len() != 1 {
            continue;
        }
        let scaled = lmmk::lp::LpProblem::new(
            p.cost().iter().map(|c| c * 3.5).collect(),
            p.matrix().clone(),
            p.rhs().to_vec(),
        )
        .unwrap();
        let a = lp::solve_with(&p, &SolverOptions::default());
        let b = lp::solve_with(&scaled, &SolverOptions::default());
        assert_eq!(a.status, b.status);
        let support = |v: &[f64]| -> Vec<usize> {
            v.iter()
                .enumerate()
                .filter(|(_, x)| **x > 1e-6)
                .map(|(j, _)| j)
                .collect()
        };
        assert_eq!(support(&a.values), support(&b.values));
        checked += 1;
    }
    assert!(checked > 50);
}

#[test]
fn every_random_lp_terminates_within_budget() {
    let mut r = rng(5);
    for _ in 0..300 {
        let p = random_lp(&mut r);
        let s = lp::solve(&p, 50 * (p.n_variables() + p.n_constraints()), 1e-8);
        assert_ne!(s.status, LpStatus::IterationLimit);
    }
}
