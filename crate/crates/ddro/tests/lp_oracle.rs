use ddro::lp::{resolve_with_cut, solve_lp, Constraint, LinearProgram, LpStatus, Relation, Sense};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn q(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Solves the square system `m x = b` exactly; None when singular.
fn solve_exact(mut m: Vec<Vec<BigRational>>, mut b: Vec<BigRational>) -> Option<Vec<BigRational>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = &m[r][col] / &m[col][col];
                for c in col..n {
                    let v = &f * &m[col][c];
                    m[r][c] -= v;
                }
                let v = &f * &b[col];
                b[r] -= v;
            }
        }
    }
    Some((0..n).map(|i| &b[i] / &m[i][i]).collect())
}

/// max cᵀx over {A x ≤ b, x ≥ 0} by enumerating every basis exactly.
fn vertex_max(c: &[i64], a: &[Vec<i64>], b: &[i64]) -> Option<BigRational> {
    let n = c.len();
    let m = a.len();
    // constraint k < m is row k, k >= m is x_{k-m} >= 0; all written g·x <= h
    let g = |k: usize| -> (Vec<BigRational>, BigRational) {
        if k < m {
            (a[k].iter().map(|&v| q(v)).collect(), q(b[k]))
        } else {
            let mut e = vec![q(0); n];
            e[k - m] = q(-1);
            (e, q(0))
        }
    };
    let total = m + n;
    let mut best: Option<BigRational> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let (mm, bb): (Vec<_>, Vec<_>) = idx.iter().map(|&k| g(k)).unzip();
        if let Some(x) = solve_exact(mm, bb) {
            let feasible = (0..total).all(|k| {
                let (row, h) = g(k);
                let lhs: BigRational = row.iter().zip(&x).map(|(r, v)| r * v).sum();
                lhs <= h
            });
            if feasible {
                let val: BigRational = c.iter().zip(&x).map(|(&ci, v)| q(ci) * v).sum();
                if best.as_ref().map_or(true, |b| val > *b) {
                    best = Some(val);
                }
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < total - (n - i) {
                idx[i] += 1;
                for j in i + 1..n {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn random_bounded(rng: &mut ChaCha8Rng, m: usize, n: usize) -> (Vec<i64>, Vec<Vec<i64>>, Vec<i64>) {
    let c: Vec<i64> = (0..n).map(|_| rng.gen_range(-3..=6)).collect();
    let mut a = Vec::with_capacity(m);
    // First row has strictly positive coefficients, which keeps the polytope bounded.
    a.push((0..n).map(|_| rng.gen_range(1..=4)).collect::<Vec<i64>>());
    for _ in 1..m {
        a.push((0..n).map(|_| rng.gen_range(-3..=5)).collect());
    }
    let b: Vec<i64> = (0..m).map(|_| rng.gen_range(1..=12)).collect();
    (c, a, b)
}

fn to_lp(c: &[i64], a: &[Vec<i64>], b: &[i64]) -> LinearProgram {
    let mut lp = LinearProgram::new(Sense::Max, c.iter().map(|&v| v as f64).collect());
    for (row, &rhs) in a.iter().zip(b) {
        lp.push(Constraint::le(row.iter().map(|&v| v as f64).collect(), rhs as f64));
    }
    lp
}

fn check_certificate(lp: &LinearProgram, s: &ddro::lp::LpSolution) {
    let scale = 1.0 + s.objective.abs();
    assert!(lp.max_violation(&s.x) <= 1e-9 * scale, "primal infeasible");
    let by: f64 = lp.rows.iter().zip(&s.y).map(|(r, y)| r.rhs * y).sum();
    assert!((by - s.objective).abs() <= 1e-7 * scale, "gap {by} vs {}", s.objective);
    for (r, &y) in lp.rows.iter().zip(&s.y) {
        let lhs: f64 = r.coeffs.iter().zip(&s.x).map(|(a, x)| a * x).sum();
        assert!((y * (lhs - r.rhs)).abs() <= 1e-7 * scale, "row slackness");
        let sign_ok = match (lp.sense, r.relation) {
            (Sense::Max, Relation::Le) | (Sense::Min, Relation::Ge) => y >= -1e-9,
            (Sense::Max, Relation::Ge) | (Sense::Min, Relation::Le) => y <= 1e-9,
            _ => true,
        };
        assert!(sign_ok, "dual sign");
    }
    for (j, &z) in s.reduced_costs.iter().enumerate() {
        assert!((z * (s.x[j] - lp.lower[j])).abs() <= 1e-7 * scale, "bound slackness");
        match lp.sense {
            Sense::Max => assert!(z <= 1e-9 * scale),
            Sense::Min => assert!(z >= -1e-9 * scale),
        }
    }
}

#[test]
fn matches_exact_vertex_enumeration_on_small_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..12 {
        let (c, a, b) = random_bounded(&mut rng, 6, 8);
        let exact = vertex_max(&c, &a, &b).expect("origin is feasible");
        let lp = to_lp(&c, &a, &b);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        let e = exact.to_f64().unwrap();
        assert!((s.objective - e).abs() <= 1e-8 * (1.0 + e.abs()), "{} vs {e}", s.objective);
        assert!(!exact.is_negative());
        check_certificate(&lp, &s);
    }
}

#[test]
fn random_20x30_programs_satisfy_optimality_certificate() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..40 {
        let n = 30;
        let mut lp = LinearProgram::new(
            if trial % 2 == 0 { Sense::Max } else { Sense::Min },
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        for j in 0..n {
            lp.set_bounds(j, 0.0, f64::INFINITY);
        }
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        for i in 0..20 {
            let row: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs: f64 = row.iter().zip(&x0).map(|(a, b)| a * b).sum();
            let rel = [Relation::Le, Relation::Ge, Relation::Eq][i % 3];
            let rhs = match rel {
                Relation::Le => lhs + rng.gen_range(0.0..1.0),
                Relation::Ge => lhs - rng.gen_range(0.0..1.0),
                Relation::Eq => lhs,
            };
            lp.push(Constraint { coeffs: row, relation: rel, rhs });
        }
        // a box row keeps things bounded
        lp.push(Constraint::le(vec![1.0; n], 40.0));
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal, "trial {trial}");
        check_certificate(&lp, &s);
        let again = solve_lp(&lp).unwrap();
        assert_eq!(s.x, again.x);
        assert_eq!(s.y, again.y);
    }
}

#[test]
fn fifty_warm_cuts_match_one_cold_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 6;
    let mut lp = LinearProgram::new(Sense::Max, (0..n).map(|_| rng.gen_range(0.5..1.5)).collect());
    for j in 0..n {
        lp.set_bounds(j, -2.0, 2.0);
    }
    let mut s = solve_lp(&lp).unwrap();
    for _ in 0..50 {
        // random half-spaces tangent-ish to the unit ball cut the box down
        let mut a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        a.iter_mut().for_each(|v| *v /= norm);
        let before = s.objective;
        s = resolve_with_cut(&mut lp, &s, Constraint::le(a, 1.0)).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(s.objective <= before + 1e-9);
    }
    let cold = solve_lp(&lp).unwrap();
    assert!((s.objective - cold.objective).abs() <= 1e-7 * (1.0 + cold.objective.abs()));
    check_certificate(&lp, &s);
}
