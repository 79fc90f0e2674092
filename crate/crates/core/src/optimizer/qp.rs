//! Primal active-set solver for small convex quadratic programs
//!
//!   min ½ xᵀGx + cᵀx   s.t.   a_e·x = b_e,   a_i·x ≥ b_i.
//!
//! Each iteration solves the equality-constrained subproblem on the current
//! working set through its KKT system; blocking constraints are added one at a
//! time and constraints with negative multipliers dropped (lowest index first
//! on ties), so iterates stay feasible and the KKT matrix stays nonsingular
//! whenever G is positive definite on the working-set null space.

use nalgebra::{DMatrix, DVector};

/// Constraint `a·x = b` or `a·x ≥ b`.
#[derive(Debug, Clone)]
pub(crate) struct Constraint {
    pub a: DVector<f64>,
    pub b: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Qp {
    pub g: DMatrix<f64>,
    pub c: DVector<f64>,
    pub eq: Vec<Constraint>,
    pub ineq: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub(crate) struct QpSolution {
    pub x: DVector<f64>,
    /// Indices of inequality constraints in the final working set.
    pub active: Vec<usize>,
    /// ‖Gx + c − Σ ν a‖∞ using the final multipliers.
    pub kkt_residual: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct QpFailure {
    pub best: DVector<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

const STEP_TOL: f64 = 1e-13;
const MULTIPLIER_TOL: f64 = 1e-12;

/// Solve the equality QP on `rows` for its minimiser and multipliers.
fn solve_kkt(g: &DMatrix<f64>, c: &DVector<f64>, rows: &[&Constraint]) -> (DVector<f64>, DVector<f64>) {
    let n = g.nrows();
    let m = rows.len();
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(g);
    let mut rhs = DVector::zeros(n + m);
    for i in 0..n {
        rhs[i] = -c[i];
    }
    for (r, con) in rows.iter().enumerate() {
        for i in 0..n {
            k[(n + r, i)] = con.a[i];
            k[(i, n + r)] = -con.a[i];
        }
        rhs[n + r] = con.b;
    }
    // Rows of K: G x − Aᵀν = −c and A x = b, so ν are the usual multipliers.
    let sol = k
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()) && (&k * s - &rhs).amax() <= 1e-9 * (1.0 + rhs.amax()))
        .unwrap_or_else(|| {
            k.clone()
                .svd(true, true)
                .solve(&rhs, 1e-14)
                .unwrap_or_else(|_| DVector::zeros(n + m))
        });
    (sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned())
}

fn residual(qp: &Qp, x: &DVector<f64>, rows: &[&Constraint], nu: &DVector<f64>) -> f64 {
    let mut r = &qp.g * x + &qp.c;
    for (con, v) in rows.iter().zip(nu.iter()) {
        r -= &con.a * *v;
    }
    r.amax()
}

/// Run the active-set iteration from a feasible `x0`.
pub(crate) fn solve(qp: &Qp, x0: DVector<f64>, max_iter: usize) -> Result<QpSolution, QpFailure> {
    let mut x = x0;
    let mut working: Vec<usize> = Vec::new();
    let mut last_residual = f64::INFINITY;
    for _ in 0..max_iter {
        let rows: Vec<&Constraint> = qp.eq.iter().chain(working.iter().map(|&i| &qp.ineq[i])).collect();
        let (target, nu) = solve_kkt(&qp.g, &qp.c, &rows);
        let p = &target - &x;
        if p.amax() <= STEP_TOL * (1.0 + x.amax()) {
            last_residual = residual(qp, &target, &rows, &nu);
            let ne = qp.eq.len();
            let worst = working
                .iter()
                .enumerate()
                .map(|(pos, &idx)| (pos, idx, nu[ne + pos]))
                .filter(|&(_, _, l)| l < -MULTIPLIER_TOL)
                .min_by(|a, b| a.2.total_cmp(&b.2).then(a.1.cmp(&b.1)));
            match worst {
                None => {
                    working.sort_unstable();
                    return Ok(QpSolution {
                        x: target,
                        active: working,
                        kkt_residual: last_residual,
                    });
                }
                Some((pos, _, _)) => {
                    working.remove(pos);
                }
            }
        } else {
            let mut alpha = 1.0;
            let mut blocking = None;
            for (i, con) in qp.ineq.iter().enumerate() {
                if working.contains(&i) {
                    continue;
                }
                let ap = con.a.dot(&p);
                if ap < 0.0 {
                    let t = ((con.b - con.a.dot(&x)) / ap).max(0.0);
                    if t < alpha {
                        alpha = t;
                        blocking = Some(i);
                    }
                }
            }
            match blocking {
                None => x = target,
                Some(i) => {
                    x += &p * alpha;
                    working.push(i);
                }
            }
        }
    }
    Err(QpFailure {
        best: x,
        iterations: max_iter,
        kkt_residual: last_residual,
    })
}
