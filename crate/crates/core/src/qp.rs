//! Minimum-norm safety filter over the stacked input `[u_x, u_y, eta]`.
//!
//! Solves
//!
//! ```text
//!   min ||u - u_nom||^2   s.t.  a_k . u >= b_k
//! ```
//!
//! for at most three rows by enumerating active sets. Each candidate set is
//! the orthogonal projection of `u_nom` onto the affine set where its rows
//! hold with equality; it is accepted when every row is satisfied and every
//! multiplier is non-negative. With three unknowns and a handful of rows the
//! enumeration is exact and allocation-free.

use log::warn;
use nalgebra::Matrix3;

use crate::error::Error;
use crate::msg::ConstraintRow;

pub const MAX_ROWS: usize = 3;

/// Primal feasibility tolerance, relative to the row scale.
const FEAS_TOL: f64 = 1e-10;
/// Rows with squared norm below this are treated as all-zero.
const ZERO_ROW: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub u_nom: [f64; 3],
    pub rows: Vec<ConstraintRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u_star: [f64; 3],
    /// Indices (into the problem's rows) held with equality.
    pub active_set: Vec<usize>,
    /// Multipliers matching `active_set`.
    pub multipliers: Vec<f64>,
    pub objective: f64,
}

struct Candidate {
    u: [f64; 3],
    lambda: [f64; MAX_ROWS],
    size: usize,
    members: [usize; MAX_ROWS],
    objective: f64,
}

fn row_scale(row: &ConstraintRow, u: &[f64; 3]) -> f64 {
    let n = row.norm_sq().sqrt();
    1.0 + row.b.abs() + n * (u[0].abs() + u[1].abs() + u[2].abs())
}

/// Projects `u_nom` onto `{a_k . u = b_k, k in members}`; `None` when the
/// rows are linearly dependent.
fn project(u_nom: &[f64; 3], rows: &[ConstraintRow], members: &[usize]) -> Option<([f64; 3], [f64; MAX_ROWS])> {
    let r = |k: usize| rows[members[k]].b - rows[members[k]].dot(u_nom);
    let g = |i: usize, j: usize| {
        let (a, b) = (&rows[members[i]].a, &rows[members[j]].a);
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    };
    let mut lambda = [0.0; MAX_ROWS];
    match members.len() {
        0 => {}
        1 => lambda[0] = r(0) / g(0, 0),
        2 => {
            let (g00, g01, g11) = (g(0, 0), g(0, 1), g(1, 1));
            let det = g00 * g11 - g01 * g01;
            if det <= 1e-12 * g00 * g11 {
                return None;
            }
            let (r0, r1) = (r(0), r(1));
            lambda[0] = (g11 * r0 - g01 * r1) / det;
            lambda[1] = (g00 * r1 - g01 * r0) / det;
        }
        3 => {
            let m = Matrix3::from_fn(g);
            let scale = m[(0, 0)] * m[(1, 1)] * m[(2, 2)];
            if m.determinant().abs() <= 1e-12 * scale {
                return None;
            }
            let inv = m.try_inverse()?;
            let rv = nalgebra::Vector3::new(r(0), r(1), r(2));
            let l = inv * rv;
            lambda = [l[0], l[1], l[2]];
        }
        _ => unreachable!("at most {MAX_ROWS} rows"),
    }
    let mut u = *u_nom;
    for (k, &m) in members.iter().enumerate() {
        for (uc, ac) in u.iter_mut().zip(rows[m].a) {
            *uc += lambda[k] * ac;
        }
    }
    Some((u, lambda))
}

/// Solves the filter problem exactly. All-zero rows are dropped with a
/// warning; rows are otherwise kept in the caller's order.
pub fn solve(problem: &QpProblem) -> Result<QpSolution, Error> {
    let rows = &problem.rows;
    if rows.len() > MAX_ROWS {
        return Err(Error::TooManyRows(rows.len()));
    }
    if !problem.u_nom.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinite(format!("nominal input {:?}", problem.u_nom)));
    }
    let mut live = [0usize; MAX_ROWS];
    let mut n_live = 0;
    for (k, row) in rows.iter().enumerate() {
        if !row.is_finite() {
            return Err(Error::NonFinite(format!("constraint row {k}: {row:?}")));
        }
        if row.norm_sq() < ZERO_ROW {
            warn!("dropping all-zero constraint row {k} (b = {})", row.b);
            continue;
        }
        live[n_live] = k;
        n_live += 1;
    }
    let live = &live[..n_live];

    let mut best: Option<Candidate> = None;
    let mut worst_residual = f64::INFINITY;
    // Subsets visited in order of size so that ties keep the smaller set.
    let mut masks: Vec<u32> = (0..(1u32 << n_live)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    for mask in masks {
        let mut members = [0usize; MAX_ROWS];
        let mut size = 0;
        for (bit, &k) in live.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                members[size] = k;
                size += 1;
            }
        }
        let Some((u, lambda)) = project(&problem.u_nom, rows, &members[..size]) else {
            continue;
        };
        let primal = live.iter().map(|&k| rows[k].slack(&u) / row_scale(&rows[k], &u)).fold(f64::INFINITY, f64::min);
        let dual_ok = lambda[..size].iter().all(|&l| l >= -1e-12);
        if primal < -FEAS_TOL || !dual_ok {
            if primal.is_finite() {
                worst_residual = worst_residual.min(-primal.min(0.0));
            }
            continue;
        }
        let objective = (0..3).map(|c| (u[c] - problem.u_nom[c]).powi(2)).sum::<f64>();
        let better = match &best {
            None => true,
            Some(b) => objective < b.objective * (1.0 - 1e-12) - 1e-300,
        };
        if better {
            best = Some(Candidate { u, lambda, size, members, objective });
        }
    }

    match best {
        Some(c) => Ok(QpSolution {
            u_star: c.u,
            active_set: c.members[..c.size].to_vec(),
            multipliers: c.lambda[..c.size].to_vec(),
            objective: c.objective,
        }),
        None => Err(Error::Infeasible {
            rows: live.to_vec(),
            residual: if worst_residual.is_finite() { worst_residual } else { f64::NAN },
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn row(a: [f64; 3], b: f64) -> ConstraintRow {
        ConstraintRow::new(a, b)
    }

    #[test]
    fn feasible_nominal_is_returned() {
        let p =
            QpProblem { u_nom: [0.3, -0.1, 0.0], rows: vec![row([1.0, 0.0, 0.0], 0.0), row([0.0, 0.0, 1.0], -1.0)] };
        let s = solve(&p).unwrap();
        assert_eq!(s.u_star, p.u_nom);
        assert!(s.active_set.is_empty());
        assert_eq!(s.objective, 0.0);
    }

    #[test]
    fn single_row_projection() {
        let p = QpProblem { u_nom: [0.0; 3], rows: vec![row([1.0, 0.0, 0.0], 1.0)] };
        let s = solve(&p).unwrap();
        assert_relative_eq!(s.u_star[0], 1.0);
        assert_eq!(s.u_star[1], 0.0);
        assert_eq!(s.u_star[2], 0.0);
        assert_eq!(s.active_set, vec![0]);
        assert_relative_eq!(s.multipliers[0], 1.0);
    }

    #[test]
    fn two_disjoint_rows_both_active() {
        let p = QpProblem { u_nom: [0.0; 3], rows: vec![row([3.0, 4.0, 0.0], 5.0), row([0.0, 0.0, -2.0], 1.0)] };
        let s = solve(&p).unwrap();
        assert_relative_eq!(s.u_star[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(s.u_star[1], 0.8, epsilon = 1e-15);
        assert_relative_eq!(s.u_star[2], -0.5, epsilon = 1e-15);
        assert_eq!(s.active_set, vec![0, 1]);
    }

    #[test]
    fn coupled_rows_where_only_one_binds() {
        // Projecting onto the first row alone also satisfies the second.
        let p = QpProblem { u_nom: [0.0; 3], rows: vec![row([1.0, 0.0, 0.0], 1.0), row([1.0, 1.0, 0.0], 0.5)] };
        let s = solve(&p).unwrap();
        assert_eq!(s.active_set, vec![0]);
        assert_relative_eq!(s.u_star[0], 1.0);
    }

    #[test]
    fn zero_rows_are_dropped() {
        let p = QpProblem { u_nom: [1.0, 2.0, 3.0], rows: vec![row([0.0; 3], 5.0), row([0.0, 1.0, 0.0], 3.0)] };
        let s = solve(&p).unwrap();
        assert_eq!(s.active_set, vec![1]);
        assert_relative_eq!(s.u_star[1], 3.0);
    }

    #[test]
    fn contradictory_rows_report_infeasible() {
        let p = QpProblem { u_nom: [0.0; 3], rows: vec![row([1.0, 0.0, 0.0], 1.0), row([-1.0, 0.0, 0.0], 0.0)] };
        match solve(&p) {
            Err(Error::Infeasible { rows, .. }) => assert_eq!(rows, vec![0, 1]),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn too_many_rows() {
        let p = QpProblem { u_nom: [0.0; 3], rows: vec![row([1.0, 0.0, 0.0], 0.0); 4] };
        assert!(matches!(solve(&p), Err(Error::TooManyRows(4))));
    }

    #[test]
    fn row_scaling_does_not_move_solution() {
        let rows = vec![row([0.4, -1.3, 0.0], 0.7), row([0.0, 0.0, 2.5], 0.2)];
        let p = QpProblem { u_nom: [0.1, 0.2, -0.3], rows: rows.clone() };
        let q = QpProblem { u_nom: p.u_nom, rows: vec![rows[0].scaled(1e4), rows[1].scaled(3e-3)] };
        let (a, b) = (solve(&p).unwrap(), solve(&q).unwrap());
        for c in 0..3 {
            assert_relative_eq!(a.u_star[c], b.u_star[c], epsilon = 1e-9);
        }
    }
}
