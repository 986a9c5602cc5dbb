//! Per-triple power subproblem at a fixed dual point:
//!
//! ```text
//! max  log2(1 + pu*a_ub) + log2(1 + pd*a_bn / (pu*a_mn + 1)) - lm*pu - lb*pd
//! s.t. pu >= 0, pd >= 0
//! ```
//!
//! For fixed `pu` the problem is concave in `pd` and the optimum is a
//! water-filling level. Substituting it leaves a C^1 function of `pu` with two
//! pieces: where the downlink is active its stationarity condition is a
//! quadratic, where it is off it is single-link water-filling. Beyond
//! `1/(lm ln 2)` the function strictly decreases, so the global maximum is
//! among `{0, quadratic roots, regime boundary, uplink water level}`.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::model::{downlink_rate_unchecked, uplink_rate_unchecked, EquivalentGains};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolution {
    pub p_up: f64,
    pub p_down: f64,
    /// Rate minus priced power for this triple.
    pub objective: f64,
}

fn check_price(name: &str, price: f64) -> Result<()> {
    if price.is_finite() && price > 0.0 {
        Ok(())
    } else {
        Err(Error::Unbounded(format!("{name} must be finite and > 0, got {price}")))
    }
}

/// Priced rate of one triple: `pair_rate - lm*pu - lb*pd`.
pub fn lagrangian_payoff(p_up: f64, p_down: f64, gains: &EquivalentGains, lambda_m: f64, lambda_b: f64) -> f64 {
    uplink_rate_unchecked(p_up, gains.a_ub) + downlink_rate_unchecked(p_down, p_up, gains.a_bn, gains.a_mn)
        - lambda_m * p_up
        - lambda_b * p_down
}

/// Optimal downlink power for a fixed uplink power:
/// `max(0, 1/(lb ln 2) - (pu*a_mn + 1)/a_bn)`.
pub fn best_response_down(p_up: f64, a_bn: f64, a_mn: f64, lambda_b: f64) -> Result<f64> {
    check_price("lambda_b", lambda_b)?;
    Ok(water_level_down(p_up, a_bn, a_mn, lambda_b))
}

#[inline]
fn water_level_down(p_up: f64, a_bn: f64, a_mn: f64, lambda_b: f64) -> f64 {
    if a_bn <= 0.0 {
        return 0.0;
    }
    (1.0 / (lambda_b * LN_2) - (p_up * a_mn + 1.0) / a_bn).max(0.0)
}

/// Global maximiser of the priced rate over the nonnegative quadrant.
pub fn solve_inner(gains: &EquivalentGains, lambda_m: f64, lambda_b: f64) -> Result<InnerSolution> {
    check_price("lambda_m", lambda_m)?;
    check_price("lambda_b", lambda_b)?;
    let EquivalentGains { a_ub, a_bn, a_mn } = *gains;
    for (name, v) in [("a_ub", a_ub), ("a_bn", a_bn), ("a_mn", a_mn)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")));
        }
    }

    let p_cap = 1.0 / (lambda_m * LN_2);
    let down_level = a_bn / (lambda_b * LN_2);
    // downlink active for pu < boundary
    let boundary = if down_level <= 1.0 {
        0.0
    } else if a_mn > 0.0 {
        (down_level - 1.0) / a_mn
    } else {
        f64::INFINITY
    };

    let mut candidates = Vec::with_capacity(6);
    candidates.push(0.0);
    if boundary > 0.0 && boundary < p_cap {
        candidates.push(boundary);
    }
    if boundary > 0.0 {
        let hi = boundary.min(p_cap);
        let c = LN_2 * (lambda_m - lambda_b * a_mn / a_bn);
        for root in stationary_points_active(a_ub, a_mn, c) {
            if root > 0.0 && root < hi {
                candidates.push(polish(root, a_ub, a_mn, c).clamp(0.0, hi));
            }
        }
    }
    if a_ub > 0.0 {
        let level = p_cap - 1.0 / a_ub;
        if level > boundary && level > 0.0 {
            candidates.push(level);
        }
    }

    let mut best: Option<InnerSolution> = None;
    for p_up in candidates {
        let p_down = water_level_down(p_up, a_bn, a_mn, lambda_b);
        let objective = lagrangian_payoff(p_up, p_down, gains, lambda_m, lambda_b);
        if best.is_none_or(|b| objective > b.objective) {
            best = Some(InnerSolution {
                p_up,
                p_down,
                objective,
            });
        }
    }
    Ok(best.expect("origin is always a candidate"))
}

/// Roots of `a_ub/(1+x a_ub) - a_mn/(1+x a_mn) = c`, i.e. of
/// `c a_ub a_mn x^2 + c (a_ub + a_mn) x + c - (a_ub - a_mn) = 0`.
fn stationary_points_active(a_ub: f64, a_mn: f64, c: f64) -> Vec<f64> {
    let qa = c * a_ub * a_mn;
    let qb = c * (a_ub + a_mn);
    let qc = c - (a_ub - a_mn);
    let scale = qb.abs().max(qc.abs());
    if qa.abs() <= 1e-14 * scale || qa == 0.0 {
        if qb == 0.0 {
            return Vec::new();
        }
        return vec![-qc / qb];
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (qb + qb.signum() * disc.sqrt());
    let mut roots = vec![q / qa];
    if q != 0.0 {
        roots.push(qc / q);
    }
    roots
}

/// Two Newton steps on the active-regime stationarity residual.
fn polish(mut x: f64, a_ub: f64, a_mn: f64, c: f64) -> f64 {
    for _ in 0..2 {
        let du = 1.0 + x * a_ub;
        let dm = 1.0 + x * a_mn;
        let f = a_ub / du - a_mn / dm - c;
        let df = -a_ub * a_ub / (du * du) + a_mn * a_mn / (dm * dm);
        if df == 0.0 || !df.is_finite() {
            break;
        }
        let next = x - f / df;
        if !next.is_finite() {
            break;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::pair_rate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn payoff(pu: f64, pd: f64, g: &EquivalentGains, lm: f64, lb: f64) -> f64 {
        (1.0 + pu * g.a_ub).log2() + (1.0 + pd * g.a_bn / (pu * g.a_mn + 1.0)).log2() - lm * pu - lb * pd
    }

    fn random_case(rng: &mut ChaCha8Rng) -> (EquivalentGains, f64, f64) {
        let mut lu = |lo: f64, hi: f64| 10f64.powf(rng.random_range(lo..hi));
        let g = EquivalentGains {
            a_ub: lu(-1.0, 2.0),
            a_bn: lu(-1.0, 2.0),
            a_mn: lu(-2.0, 2.0),
        };
        (g, lu(-1.5, 0.5), lu(-1.5, 0.5))
    }

    #[test]
    fn best_response_examples() {
        assert_eq!(best_response_down(0.0, 1.0, 1.0, 1e6).unwrap(), 0.0);
        assert_eq!(best_response_down(0.0, 1.0, 0.0, 1.0 / LN_2).unwrap(), 0.0);
        assert!(matches!(
            best_response_down(0.0, 1.0, 1.0, 0.0),
            Err(Error::Unbounded(_))
        ));
        assert!(matches!(
            best_response_down(0.0, 1.0, 1.0, -1.0),
            Err(Error::Unbounded(_))
        ));
    }

    #[test]
    fn best_response_matches_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (g, lm, lb) = random_case(&mut rng);
            let pu: f64 = rng.random_range(0.0..2.0);
            let pd = best_response_down(pu, g.a_bn, g.a_mn, lb).unwrap();
            let hi = 10.0 / lb;
            let steps = 100_000;
            let (mut grid_best, mut grid_arg) = (f64::NEG_INFINITY, 0.0);
            for i in 0..=steps {
                let x = hi * i as f64 / steps as f64;
                let v = payoff(pu, x, &g, lm, lb);
                if v > grid_best {
                    grid_best = v;
                    grid_arg = x;
                }
            }
            assert!(
                (pd - grid_arg).abs() <= 2.0 * hi / steps as f64,
                "pd {pd} vs grid {grid_arg}"
            );
            assert!(payoff(pu, pd, &g, lm, lb) >= grid_best - 1e-12);
        }
    }

    #[test]
    fn dead_uplink_channel() {
        let g = EquivalentGains {
            a_ub: 0.0,
            a_bn: 1.0,
            a_mn: 0.3,
        };
        let s = solve_inner(&g, 0.2, 0.1).unwrap();
        assert_eq!(s.p_up, 0.0);
        assert_eq!(s.p_down, best_response_down(0.0, 1.0, 0.3, 0.1).unwrap());
    }

    #[test]
    fn dead_downlink_channel() {
        let g = EquivalentGains {
            a_ub: 4.0,
            a_bn: 0.0,
            a_mn: 0.3,
        };
        let lm = 0.2;
        let s = solve_inner(&g, lm, 0.1).unwrap();
        assert_eq!(s.p_down, 0.0);
        let expected = (1.0 / (lm * LN_2) - 1.0 / 4.0f64).max(0.0);
        assert!((s.p_up - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn rejects_nonpositive_prices() {
        let g = EquivalentGains {
            a_ub: 1.0,
            a_bn: 1.0,
            a_mn: 1.0,
        };
        assert!(matches!(solve_inner(&g, 0.0, 1.0), Err(Error::Unbounded(_))));
        assert!(matches!(solve_inner(&g, 1.0, -1.0), Err(Error::Unbounded(_))));
        assert!(matches!(solve_inner(&g, 1.0, f64::NAN), Err(Error::Unbounded(_))));
    }

    #[test]
    fn all_zero_gains_stay_at_origin() {
        let g = EquivalentGains {
            a_ub: 0.0,
            a_bn: 0.0,
            a_mn: 0.0,
        };
        let s = solve_inner(&g, 1.0, 1.0).unwrap();
        assert_eq!((s.p_up, s.p_down, s.objective), (0.0, 0.0, 0.0));
    }

    #[test]
    fn beats_coarse_grid_and_is_self_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (g, lm, lb) = random_case(&mut rng);
            let s = solve_inner(&g, lm, lb).unwrap();
            assert!(s.objective >= 0.0);
            let direct = pair_rate(s.p_up, s.p_down, &g).unwrap() - lm * s.p_up - lb * s.p_down;
            assert!((direct - s.objective).abs() <= 1e-12 * s.objective.abs().max(1e-300));
            let steps = 200;
            for i in 0..=steps {
                for j in 0..=steps {
                    let pu = 10.0 / lm * i as f64 / steps as f64;
                    let pd = 10.0 / lb * j as f64 / steps as f64;
                    let v = payoff(pu, pd, &g, lm, lb);
                    assert!(
                        s.objective >= v - 1e-9 * v.abs().max(1.0),
                        "{g:?} {lm} {lb}: {} < {v}",
                        s.objective
                    );
                }
            }
        }
    }

    #[test]
    fn objective_nonincreasing_in_prices() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let (g, lm, lb) = random_case(&mut rng);
            let base = solve_inner(&g, lm, lb).unwrap().objective;
            let up = solve_inner(&g, lm * 1.3, lb).unwrap().objective;
            let down = solve_inner(&g, lm, lb * 1.3).unwrap().objective;
            assert!(up <= base + 1e-12 * base.max(1.0));
            assert!(down <= base + 1e-12 * base.max(1.0));
        }
    }
}
