use super::*;

fn lp(cost: Vec<f64>, rows: &[Vec<f64>], rhs: Vec<f64>) -> LpProblem {
    LpProblem::from_rows(cost, rows, rhs).unwrap()
}

fn default_solve(p: &LpProblem) -> LpSolution {
    solve_with(p, &SolverOptions::default())
}

#[test]
fn single_active_constraint() {
    let p = lp(vec![1.0], &[vec![1.0]], vec![3.0]);
    let s = default_solve(&p);
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.values[0] - 3.0).abs() < 1e-12);
    assert!((s.objective - 3.0).abs() < 1e-12);
    let report = verify(&p, &s, 1e-6);
    assert!(report.passed);
    assert_eq!(report.primal_violation, 0.0);
    assert_eq!(report.bound_violation, 0.0);
    assert!(report.duality_residual < 1e-12);
}

#[test]
fn perturbed_solution_reports_violation() {
    let p = lp(vec![1.0], &[vec![1.0]], vec![3.0]);
    let mut s = default_solve(&p);
    s.values[0] = 2.9;
    let report = verify(&p, &s, 1e-6);
    assert!((report.primal_violation - 0.1).abs() < 1e-12);
    assert!(!report.passed);
}

#[test]
fn unbounded_with_ray() {
    let p = LpProblem::new(vec![-1.0], Array2::zeros((0, 1)), vec![]).unwrap();
    let s = default_solve(&p);
    assert_eq!(s.status, LpStatus::Unbounded);
    let Some(Certificate::Ray(r)) = s.certificate else {
        panic!("expected a ray, got {:?}", s.certificate);
    };
    assert!(r[0] > 0.0);

    // min -x1 - x2 s.t. x1 - x2 >= -1, x2 >= 0: unbounded along (1, 1).
    let p = lp(vec![-1.0, -1.0], &[vec![1.0, -1.0]], vec![-1.0]);
    let s = default_solve(&p);
    assert_eq!(s.status, LpStatus::Unbounded);
    let Some(Certificate::Ray(r)) = s.certificate else {
        panic!("expected a ray");
    };
    assert!(r.iter().all(|x| *x >= -1e-9));
    assert!(p.activity(&r).iter().all(|x| *x >= -1e-9));
    assert!(p.objective(&r) < 0.0);
}

#[test]
fn infeasible_with_farkas_witness() {
    // x >= 2 and -x >= -1.
    let p = lp(vec![1.0], &[vec![1.0], vec![-1.0]], vec![2.0, -1.0]);
    let s = default_solve(&p);
    assert_eq!(s.status, LpStatus::Infeasible);
    let Some(Certificate::Farkas(y)) = s.certificate else {
        panic!("expected a Farkas witness, got {:?}", s.certificate);
    };
    assert!(y.iter().all(|v| *v >= 0.0));
    let aty: f64 = y[0] - y[1];
    assert!(aty <= 1e-9);
    assert!(2.0 * y[0] - y[1] > 0.0);

    // Infeasible with a negative cost: the dual is infeasible too.
    let p = lp(vec![-1.0], &[vec![1.0], vec![-1.0]], vec![2.0, -1.0]);
    assert_eq!(default_solve(&p).status, LpStatus::Infeasible);
}

#[test]
fn no_constraints_and_nonnegative_cost() {
    let p = LpProblem::new(vec![2.0, 0.0], Array2::zeros((0, 2)), vec![]).unwrap();
    let s = default_solve(&p);
    assert_eq!(s.status, LpStatus::Optimal);
    assert_eq!(s.values, vec![0.0, 0.0]);
}

#[test]
fn textbook_problem() {
    // min 2x + 3y s.t. x + y >= 4, x + 3y >= 6 -> (3, 1), objective 9.
    let p = lp(
        vec![2.0, 3.0],
        &[vec![1.0, 1.0], vec![1.0, 3.0]],
        vec![4.0, 6.0],
    );
    let s = default_solve(&p);
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.values[0] - 3.0).abs() < 1e-9);
    assert!((s.values[1] - 1.0).abs() < 1e-9);
    assert!((s.objective - 9.0).abs() < 1e-9);
    assert!(verify(&p, &s, 1e-9).passed);
}

#[test]
fn slack_columns_become_bounds() {
    // Two weights and one slack per row, like a margin LP.
    let rows = vec![
        vec![1.0, 0.2, 1.0, 0.0, 0.0],
        vec![0.5, -0.3, 0.0, 1.0, 0.0],
        vec![-0.2, 0.1, 0.0, 0.0, 1.0],
    ];
    let p = lp(vec![0.4, 0.6, 0.5, 0.5, 0.5], &rows, vec![1.0; 3]);
    let s = default_solve(&p);
    assert_eq!(s.status, LpStatus::Optimal);
    let report = verify(&p, &s, 1e-9);
    assert!(report.passed, "{report:?}");
    // A slack column with zero cost, and two slack columns on the same row.
    let rows = vec![vec![1.0, 1.0, 2.0], vec![1.0, 0.0, 0.0]];
    let p = lp(vec![1.0, 0.0, 3.0], &rows, vec![1.0, 0.5]);
    let s = default_solve(&p);
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.objective - 0.5).abs() < 1e-12);
    assert!(verify(&p, &s, 1e-9).passed);
}

#[test]
fn iteration_limit_is_reported() {
    let p = lp(
        vec![2.0, 3.0],
        &[vec![1.0, 1.0], vec![1.0, 3.0]],
        vec![4.0, 6.0],
    );
    let s = solve(&p, 0, 1e-8);
    assert_eq!(s.status, LpStatus::IterationLimit);
    assert!(!verify(&p, &s, 1e-6).passed);
}

#[test]
fn invalid_problems_are_rejected() {
    assert_eq!(
        LpProblem::new(vec![], Array2::zeros((0, 0)), vec![]),
        Err(LpError::NoVariables)
    );
    assert!(LpProblem::from_rows(vec![1.0], &[vec![1.0, 2.0]], vec![1.0]).is_err());
    assert!(LpProblem::from_rows(vec![f64::NAN], &[vec![1.0]], vec![1.0]).is_err());
    assert!(LpProblem::from_rows(vec![1.0], &[vec![1.0]], vec![]).is_err());
}

#[test]
fn standard_form_listing() {
    let p = lp(
        vec![1.0, -0.5],
        &[vec![1.0, 2.0], vec![0.0, 1.0]],
        vec![3.0, 0.25],
    );
    let text = p.to_standard_form();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[1], "variables 2");
    assert_eq!(lines[2], "constraints 2");
    assert_eq!(lines[3], "minimize 1.0 -0.5");
    assert_eq!(lines[4], "1.0 2.0 >= 3.0");
    assert_eq!(lines[5], "0.0 1.0 >= 0.25");
    let mut buf = Vec::new();
    p.write_standard_form(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), text);
}

#[test]
fn solving_is_deterministic() {
    let rows = vec![
        vec![1.0, -2.0, 1.0],
        vec![3.0, 1.0, -1.0],
        vec![-1.0, 1.0, 2.0],
    ];
    let p = lp(vec![1.0, 2.0, -0.5], &rows, vec![1.0, 2.0, 0.5]);
    assert_eq!(default_solve(&p), default_solve(&p));
}
