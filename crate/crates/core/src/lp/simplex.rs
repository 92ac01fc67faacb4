//! Dense bounded-variable primal simplex.
//!
//! Solves `min f.x` subject to `G x <= h` and `0 <= x <= upper` (upper may be
//! infinite). Rows with a negative right-hand side get an artificial variable
//! and a first phase; all other rows start from their slack.

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tolerances {
    pub pivot: f64,
    pub feasibility: f64,
    pub optimality: f64,
}

#[derive(Debug, Clone)]
pub(crate) enum Outcome {
    /// Optimal point plus the multiplier of each `G` row, in the sign
    /// convention `row_price[r] >= 0` for a binding `<=` row of a minimization.
    Optimal {
        x: Vec<f64>,
        row_price: Vec<f64>,
    },
    /// The objective decreases without bound along `ray` (structural part).
    Unbounded {
        ray: Vec<f64>,
    },
    Infeasible,
    IterationLimit {
        x: Vec<f64>,
        row_price: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Structural,
    Slack,
    Artificial,
}

pub(crate) struct BoundedSimplex {
    rows: usize,
    cols: usize,
    n_struct: usize,
    // Row-major tableau B^-1 [G | +-I | art].
    tableau: Vec<f64>,
    kinds: Vec<Kind>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
    basis: Vec<usize>,
    basic_value: Vec<f64>,
    at_upper: Vec<bool>,
    slack_col: Vec<usize>,
    tol: Tolerances,
    iterations: usize,
    bland_after: usize,
}

enum Step {
    Optimal,
    Unbounded(Vec<f64>),
    Continue,
}

impl BoundedSimplex {
    /// `g` is row-major `rows x n_struct`.
    pub fn new(
        g: &[f64],
        h: &[f64],
        f: &[f64],
        upper: &[f64],
        tol: Tolerances,
        bland_after: usize,
    ) -> Self {
        let rows = h.len();
        let n_struct = f.len();
        debug_assert_eq!(g.len(), rows * n_struct);
        let negated: Vec<bool> = h.iter().map(|&v| v < 0.0).collect();
        let n_art = negated.iter().filter(|&&n| n).count();
        let cols = n_struct + rows + n_art;

        let mut kinds = vec![Kind::Structural; n_struct];
        kinds.extend(std::iter::repeat_n(Kind::Slack, rows));
        kinds.extend(std::iter::repeat_n(Kind::Artificial, n_art));

        let mut tableau = vec![0.0; rows * cols];
        let mut basis = vec![0; rows];
        let mut basic_value = vec![0.0; rows];
        let slack_col: Vec<usize> = (0..rows).map(|r| n_struct + r).collect();
        let mut next_art = n_struct + rows;
        for r in 0..rows {
            let sign = if negated[r] { -1.0 } else { 1.0 };
            let row = &mut tableau[r * cols..(r + 1) * cols];
            for j in 0..n_struct {
                row[j] = sign * g[r * n_struct + j];
            }
            row[n_struct + r] = sign;
            basic_value[r] = sign * h[r];
            if negated[r] {
                row[next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            } else {
                basis[r] = n_struct + r;
            }
        }

        let mut full_upper = upper.to_vec();
        full_upper.extend(std::iter::repeat_n(f64::INFINITY, rows + n_art));
        let mut cost = f.to_vec();
        cost.extend(std::iter::repeat_n(0.0, rows + n_art));

        Self {
            rows,
            cols,
            n_struct,
            tableau,
            kinds,
            upper: full_upper,
            cost,
            reduced: vec![0.0; cols],
            basis,
            basic_value,
            at_upper: vec![false; cols],
            slack_col,
            tol,
            iterations: 0,
            bland_after,
        }
    }

    fn entry(&self, r: usize, j: usize) -> f64 {
        self.tableau[r * self.cols + j]
    }

    fn is_basic(&self) -> Vec<bool> {
        let mut basic = vec![false; self.cols];
        for &b in &self.basis {
            basic[b] = true;
        }
        basic
    }

    fn price(&mut self, cost: &[f64]) {
        self.reduced.copy_from_slice(cost);
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                let row = &self.tableau[r * self.cols..(r + 1) * self.cols];
                for (d, t) in self.reduced.iter_mut().zip(row) {
                    *d -= cb * t;
                }
            }
        }
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        let mut total: f64 = self
            .basis
            .iter()
            .zip(&self.basic_value)
            .map(|(&b, v)| cost[b] * v)
            .sum();
        for j in 0..self.cols {
            if self.at_upper[j] {
                total += cost[j] * self.upper[j];
            }
        }
        total
    }

    fn choose_entering(&self, basic: &[bool]) -> Option<usize> {
        let bland = self.iterations >= self.bland_after;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.cols {
            if basic[j] || self.upper[j] <= 0.0 {
                continue;
            }
            let d = self.reduced[j];
            let gain = if self.at_upper[j] { d } else { -d };
            if gain > self.tol.optimality {
                if bland {
                    return Some(j);
                }
                if best.is_none_or(|(_, g)| gain > g) {
                    best = Some((j, gain));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    fn step(&mut self, basic: &[bool]) -> Step {
        let Some(enter) = self.choose_entering(basic) else {
            return Step::Optimal;
        };
        let bland = self.iterations >= self.bland_after;
        let dir = if self.at_upper[enter] { -1.0 } else { 1.0 };

        // Largest step before some basic variable hits a bound; the entering
        // variable's own range is the bound-flip limit.
        let mut limit = self.upper[enter];
        let mut leave: Option<(usize, bool)> = None;
        let mut leave_alpha = 0.0f64;
        for r in 0..self.rows {
            let alpha = dir * self.entry(r, enter);
            let b = self.basis[r];
            let (ratio, to_upper) = if alpha > self.tol.pivot {
                (self.basic_value[r].max(0.0) / alpha, false)
            } else if alpha < -self.tol.pivot && self.upper[b].is_finite() {
                (
                    (self.upper[b] - self.basic_value[r]).max(0.0) / -alpha,
                    true,
                )
            } else {
                continue;
            };
            let slack = 1e-12 * ratio.max(1.0);
            let take = match leave {
                None => ratio <= limit,
                Some((lr, _)) => {
                    ratio < limit - slack
                        || (ratio <= limit + slack
                            && if bland {
                                b < self.basis[lr]
                            } else {
                                alpha.abs() > leave_alpha
                            })
                }
            };
            if take {
                limit = limit.min(ratio);
                leave = Some((r, to_upper));
                leave_alpha = alpha.abs();
            }
        }

        if limit.is_infinite() {
            let mut ray = vec![0.0; self.n_struct];
            if enter < self.n_struct {
                ray[enter] = dir;
            }
            for r in 0..self.rows {
                let b = self.basis[r];
                if b < self.n_struct {
                    ray[b] = -dir * self.entry(r, enter);
                }
            }
            return Step::Unbounded(ray);
        }

        for r in 0..self.rows {
            let t = self.entry(r, enter);
            if t != 0.0 {
                self.basic_value[r] -= dir * limit * t;
            }
        }

        match leave {
            None => {
                // Bound flip of the entering variable.
                self.at_upper[enter] = !self.at_upper[enter];
            }
            Some((r, to_upper)) => {
                let leaving = self.basis[r];
                let entering_value = if self.at_upper[enter] {
                    self.upper[enter] - limit
                } else {
                    limit
                };
                self.at_upper[enter] = false;
                self.at_upper[leaving] = to_upper;
                self.pivot(r, enter);
                self.basic_value[r] = entering_value;
            }
        }
        self.iterations += 1;
        Step::Continue
    }

    fn pivot(&mut self, r: usize, enter: usize) {
        let cols = self.cols;
        let p = self.tableau[r * cols + enter];
        {
            let row = &mut self.tableau[r * cols..(r + 1) * cols];
            for v in row.iter_mut() {
                *v /= p;
            }
        }
        let pivot_row: Vec<f64> = self.tableau[r * cols..(r + 1) * cols].to_vec();
        for s in 0..self.rows {
            if s == r {
                continue;
            }
            let factor = self.tableau[s * cols + enter];
            if factor != 0.0 {
                let row = &mut self.tableau[s * cols..(s + 1) * cols];
                for (v, pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * pr;
                }
                row[enter] = 0.0;
            }
        }
        let factor = self.reduced[enter];
        if factor != 0.0 {
            for (d, pr) in self.reduced.iter_mut().zip(&pivot_row) {
                *d -= factor * pr;
            }
            self.reduced[enter] = 0.0;
        }
        self.basis[r] = enter;
    }

    /// Runs simplex iterations until optimal, unbounded, or out of budget.
    fn run(&mut self, max_iters: usize) -> Result<Step, ()> {
        loop {
            if self.iterations >= max_iters {
                return Err(());
            }
            let basic = self.is_basic();
            match self.step(&basic) {
                Step::Continue => {}
                done => return Ok(done),
            }
        }
    }

    fn structural_values(&self) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.n_struct)
            .map(|j| if self.at_upper[j] { self.upper[j] } else { 0.0 })
            .collect();
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.n_struct {
                x[b] = self.basic_value[r];
            }
        }
        x
    }

    /// Multiplier of each original row. For the slack column `s_r` the reduced
    /// cost is `-pi_r` in the row's own orientation, which is the price of the
    /// `<=` row regardless of whether the row was negated.
    fn row_prices(&self) -> Vec<f64> {
        self.slack_col.iter().map(|&j| self.reduced[j]).collect()
    }

    /// Returns the outcome and the number of simplex iterations used.
    pub fn solve(mut self, max_iters: usize) -> (Outcome, usize) {
        let outcome = self.solve_phases(max_iters);
        (outcome, self.iterations)
    }

    fn solve_phases(&mut self, max_iters: usize) -> Outcome {
        let has_art = self.kinds.contains(&Kind::Artificial);
        if has_art {
            let phase1: Vec<f64> = self
                .kinds
                .iter()
                .map(|k| if *k == Kind::Artificial { 1.0 } else { 0.0 })
                .collect();
            self.price(&phase1);
            match self.run(max_iters) {
                Err(()) => {
                    return Outcome::IterationLimit {
                        x: self.structural_values(),
                        row_price: vec![0.0; self.rows],
                    }
                }
                Ok(Step::Unbounded(_)) => unreachable!("phase one is bounded below by zero"),
                Ok(_) => {}
            }
            if self.objective(&phase1) > self.tol.feasibility {
                return Outcome::Infeasible;
            }
            // Artificials may stay basic at zero; pin them there.
            for j in 0..self.cols {
                if self.kinds[j] == Kind::Artificial {
                    self.upper[j] = 0.0;
                }
            }
        }
        let cost = self.cost.clone();
        self.price(&cost);
        match self.run(max_iters) {
            Err(()) => Outcome::IterationLimit {
                x: self.structural_values(),
                row_price: self.row_prices(),
            },
            Ok(Step::Unbounded(ray)) => Outcome::Unbounded { ray },
            Ok(_) => Outcome::Optimal {
                x: self.structural_values(),
                row_price: self.row_prices(),
            },
        }
    }
}
