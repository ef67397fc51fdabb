use proptest::prelude::*;

use chargeshare::cbf::{self, FiniteTimeAlpha};
use chargeshare::qp::{self, QpProblem};
use chargeshare::state::VelocityHistory;
use chargeshare::ConstraintRow;

fn coeff() -> impl Strategy<Value = f64> {
    -2.0..2.0f64
}

/// Energy-style row over all three inputs plus an `eta`-only row.
fn sparse_problem() -> impl Strategy<Value = QpProblem> {
    ([coeff(), coeff(), coeff()], (coeff(), coeff(), -10.0..0.0f64), coeff(), 0.1..3.0f64, coeff(), 0usize..3)
        .prop_filter("energy row needs a u component", |(_, a, ..)| a.0.abs() + a.1.abs() > 1e-3)
        .prop_map(|(u_nom, a, b, k, b2, pick)| {
            let energy = ConstraintRow::new([a.0, a.1, a.2], b);
            let eta = ConstraintRow::new([0.0, 0.0, if pick == 1 { -k } else { k }], b2);
            let rows = match pick {
                0 => vec![energy],
                _ => vec![energy, eta],
            };
            QpProblem { u_nom, rows }
        })
}

fn objective(u: &[f64; 3], u_nom: &[f64; 3]) -> f64 {
    (0..3).map(|i| (u[i] - u_nom[i]).powi(2)).sum()
}

proptest! {
    #[test]
    fn solution_is_feasible_and_no_worse_than_nearby_feasible_points(
        p in sparse_problem(),
        dirs in prop::collection::vec([coeff(), coeff(), coeff()], 20),
    ) {
        let sol = qp::solve(&p).unwrap();
        for r in &p.rows {
            prop_assert!(r.dot(&sol.u_star) >= r.b - 1e-9 * (1.0 + r.b.abs()));
        }
        for d in &dirs {
            let q = [sol.u_star[0] + 0.1 * d[0], sol.u_star[1] + 0.1 * d[1], sol.u_star[2] + 0.1 * d[2]];
            if p.rows.iter().all(|r| r.dot(&q) >= r.b) {
                prop_assert!(objective(&q, &p.u_nom) >= sol.objective - 1e-12);
            }
        }
        prop_assert!(sol.multipliers.iter().all(|&m| m >= -1e-12));
    }

    #[test]
    fn feasible_nominal_passes_through(p in sparse_problem()) {
        let feasible = p.rows.iter().all(|r| r.dot(&p.u_nom) >= r.b);
        let sol = qp::solve(&p).unwrap();
        if feasible {
            prop_assert_eq!(sol.u_star, p.u_nom);
            prop_assert!(sol.active_set.is_empty());
        } else {
            prop_assert!(!sol.active_set.is_empty());
        }
    }

    #[test]
    fn row_scaling_leaves_solution_unchanged(p in sparse_problem(), c in 0.01..100.0f64) {
        let a = qp::solve(&p).unwrap();
        let scaled = QpProblem { u_nom: p.u_nom, rows: p.rows.iter().map(|r| r.scaled(c)).collect() };
        let b = qp::solve(&scaled).unwrap();
        for i in 0..3 {
            prop_assert!((a.u_star[i] - b.u_star[i]).abs() <= 1e-9 * (1.0 + a.u_star[i].abs()));
        }
    }

    #[test]
    fn finite_time_alpha_is_odd_and_increasing(gamma in 0.01..5.0f64, rho in 0.0..0.99f64, h in 1e-6..10.0f64, dh in 1e-6..1.0f64) {
        let a = FiniteTimeAlpha { gamma, rho, dt: None };
        prop_assert_eq!(a.eval(-h), -a.eval(h));
        prop_assert!(a.eval(h + dh) > a.eval(h));
        prop_assert_eq!(a.eval(0.0), 0.0);
    }

    #[test]
    fn capped_alpha_never_overshoots(gamma in 0.01..5.0f64, rho in 0.0..0.99f64, h in -10.0..10.0f64, dt in 1e-3..0.1f64) {
        let a = FiniteTimeAlpha { gamma, rho, dt: Some(dt) };
        let next = h - dt * a.eval(h);
        prop_assert!(next * h >= -1e-15 && next.abs() <= h.abs());
    }

    #[test]
    fn moving_average_matches_direct_mean(speeds in prop::collection::vec(0.0..1.0f64, 1..600), w in 0.5..4.0f64) {
        let dt = 0.01;
        let mut hist = VelocityHistory::new(w, dt);
        for (k, &s) in speeds.iter().enumerate() {
            hist.push(k as f64 * dt, s).unwrap();
        }
        let now = (speeds.len() - 1) as f64 * dt;
        let got = cbf::moving_average(&hist, w, now).unwrap();
        let window: Vec<f64> = speeds
            .iter()
            .enumerate()
            .filter(|(k, _)| *k as f64 * dt > now - w + 1e-9)
            .map(|(_, &s)| s)
            .collect();
        let want = window.iter().sum::<f64>() / window.len() as f64;
        prop_assert!((got - want).abs() <= 1e-9);
    }

    #[test]
    fn arrival_time_is_nonnegative_and_monotone(e in 12.0..14.8f64, de in 0.0..1.0f64, v in 0.0..0.5f64) {
        let energy = chargeshare::EnergyParams::default();
        let t = cbf::arrival_time(e, 12.0, v, &energy);
        prop_assert!(t >= 0.0);
        prop_assert!(cbf::arrival_time(e + de, 12.0, v, &energy) >= t);
        prop_assert_eq!(cbf::arrival_time(11.0, 12.0, v, &energy), 0.0);
    }
}
