//! Exact reference allocations for toy instances.
//!
//! Path choices are enumerated exhaustively and each choice is solved as a
//! linear program, independently of the progressive-filling code path. For
//! the max-min objective the LP is solved lexicographically: maximize the
//! smallest rate, freeze every flow that cannot exceed it, repeat.

use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};

use super::{assemble, link_usage, route_apps, Allocation, AllocationError, RoutedApp};
use crate::fidelity::OperationQuality;
use crate::topology::Network;
use crate::traffic::App;

pub const MAX_DEMANDS: usize = 8;
pub const MAX_LINKS: usize = 12;
pub const MAX_CANDIDATES: usize = 4;

const LP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Lexicographically maximal sorted vector of per-demand rates.
    MaxMinRate,
    /// Largest sum of per-demand rates.
    TotalRate,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error("LP solver failed: {0}")]
    Solver(String),
}

/// Exact optimum over every combination of candidate paths.
pub fn brute_force_optimal(
    net: &Network,
    apps: &[App],
    objective: Objective,
    ops: &OperationQuality,
    k: usize,
) -> Result<Allocation, OracleError> {
    solve(net, apps, objective, ops, k, false)
}

/// Exact optimum with every demand pinned to its first feasible path, the
/// path the production policies use.
pub fn brute_force_fixed_paths(
    net: &Network,
    apps: &[App],
    objective: Objective,
    ops: &OperationQuality,
    k: usize,
) -> Result<Allocation, OracleError> {
    solve(net, apps, objective, ops, k, true)
}

fn solve(
    net: &Network,
    apps: &[App],
    objective: Objective,
    ops: &OperationQuality,
    k: usize,
    fixed: bool,
) -> Result<Allocation, OracleError> {
    let routed = route_apps(net, apps, ops, k)?;
    let n_demands: usize = routed.iter().map(|r| r.demands.len()).sum();
    if n_demands > MAX_DEMANDS {
        return Err(OracleError::TooLarge(format!(
            "{n_demands} demands > {MAX_DEMANDS}"
        )));
    }
    if net.link_count() > MAX_LINKS {
        return Err(OracleError::TooLarge(format!(
            "{} links > {MAX_LINKS}",
            net.link_count()
        )));
    }
    if let Some(c) = routed
        .iter()
        .flat_map(|r| &r.candidates)
        .find(|c| c.len() > MAX_CANDIDATES)
    {
        return Err(OracleError::TooLarge(format!(
            "{} candidate paths > {MAX_CANDIDATES}",
            c.len()
        )));
    }

    // Odometer over (app, demand) candidate indices; unroutable apps and
    // fixed mode contribute a single choice.
    let radix: Vec<Vec<usize>> = routed
        .iter()
        .map(|r| {
            r.candidates
                .iter()
                .map(|c| if fixed || !r.routable() { 1 } else { c.len() })
                .collect()
        })
        .collect();
    let mut choice: Vec<Vec<usize>> = routed.iter().map(|r| vec![0; r.demands.len()]).collect();
    let mut best: Option<(Vec<Vec<usize>>, Vec<f64>, Score)> = None;
    loop {
        let rates = solve_choice(net, &routed, &choice, objective)?;
        let score = Score::of(&routed, &rates, objective);
        if best.as_ref().is_none_or(|(_, _, s)| score.beats(s)) {
            best = Some((choice.clone(), rates, score));
        }
        if !advance(&mut choice, &radix) {
            break;
        }
    }
    let (choice, rates, _) = best.expect("at least one path choice");
    Ok(assemble(net, *ops, &routed, &choice, &rates))
}

fn advance(choice: &mut [Vec<usize>], radix: &[Vec<usize>]) -> bool {
    for (a, digits) in choice.iter_mut().enumerate() {
        for (d, digit) in digits.iter_mut().enumerate() {
            *digit += 1;
            if *digit < radix[a][d] {
                return true;
            }
            *digit = 0;
        }
    }
    false
}

enum Score {
    /// Ascending per-demand rates.
    Sorted(Vec<f64>),
    Total(f64),
}

impl Score {
    fn of(routed: &[RoutedApp], rates: &[f64], objective: Objective) -> Self {
        let per_demand = routed
            .iter()
            .zip(rates)
            .filter(|(r, _)| r.routable())
            .flat_map(|(r, &x)| std::iter::repeat_n(x, r.demands.len()));
        match objective {
            Objective::MaxMinRate => {
                let mut v: Vec<f64> = per_demand.collect();
                v.sort_by(f64::total_cmp);
                Score::Sorted(v)
            }
            Objective::TotalRate => Score::Total(per_demand.sum()),
        }
    }

    fn beats(&self, other: &Score) -> bool {
        match (self, other) {
            (Score::Sorted(a), Score::Sorted(b)) => {
                for (x, y) in a.iter().zip(b) {
                    if x > &(y + LP_TOLERANCE) {
                        return true;
                    }
                    if y > &(x + LP_TOLERANCE) {
                        return false;
                    }
                }
                false
            }
            (Score::Total(a), Score::Total(b)) => *a > b + LP_TOLERANCE,
            _ => unreachable!("scores of one objective"),
        }
    }
}

/// LP skeleton shared by every solve of one path choice: one rate variable
/// per routable app, bounded by its cap, plus link capacity rows.
struct Skeleton<'a> {
    net: &'a Network,
    routed: &'a [RoutedApp],
    usage: Vec<Vec<(usize, f64)>>,
}

impl<'a> Skeleton<'a> {
    fn new(net: &'a Network, routed: &'a [RoutedApp], choice: &[Vec<usize>]) -> Self {
        let usage = routed
            .iter()
            .zip(choice)
            .map(|(r, c)| {
                if !r.routable() {
                    return vec![];
                }
                let paths: Vec<_> = r
                    .candidates
                    .iter()
                    .zip(c)
                    .map(|(cands, &i)| &cands[i].path)
                    .collect();
                link_usage(&paths).into_iter().collect()
            })
            .collect();
        Self { net, routed, usage }
    }

    /// Builds the problem; `bounds[a]` overrides the default `[0, cap]`
    /// range of app `a`, `coeff[a]` is its objective coefficient.
    fn problem(
        &self,
        direction: OptimizationDirection,
        coeff: impl Fn(usize) -> f64,
        bounds: impl Fn(usize) -> Option<(f64, f64)>,
    ) -> (Problem, Vec<Option<Variable>>) {
        let mut p = Problem::new(direction);
        let vars: Vec<Option<Variable>> = (0..self.routed.len())
            .map(|a| {
                if !self.routed[a].routable() {
                    return None;
                }
                let (lo, hi) =
                    bounds(a).unwrap_or((0.0, self.routed[a].cap.unwrap_or(f64::INFINITY)));
                Some(p.add_var(coeff(a), (lo, hi)))
            })
            .collect();
        for (l, link) in self.net.links().iter().enumerate() {
            let row: Vec<(Variable, f64)> = self
                .usage
                .iter()
                .zip(&vars)
                .filter_map(|(u, v)| {
                    let v = (*v)?;
                    u.iter().find(|(x, _)| *x == l).map(|&(_, n)| (v, n))
                })
                .collect();
            if !row.is_empty() {
                p.add_constraint(row.as_slice(), ComparisonOp::Le, link.capacity);
            }
        }
        (p, vars)
    }
}

fn solver_err(e: minilp::Error) -> OracleError {
    OracleError::Solver(e.to_string())
}

fn solve_choice(
    net: &Network,
    routed: &[RoutedApp],
    choice: &[Vec<usize>],
    objective: Objective,
) -> Result<Vec<f64>, OracleError> {
    let sk = Skeleton::new(net, routed, choice);
    let mut rates = vec![0.0; routed.len()];
    match objective {
        Objective::TotalRate => {
            let (p, vars) = sk.problem(
                OptimizationDirection::Maximize,
                |a| routed[a].demands.len() as f64,
                |_| None,
            );
            let sol = p.solve().map_err(solver_err)?;
            for (a, v) in vars.iter().enumerate() {
                if let Some(v) = v {
                    rates[a] = sol[*v].max(0.0);
                }
            }
        }
        Objective::MaxMinRate => {
            let mut frozen: Vec<Option<f64>> = vec![None; routed.len()];
            for (a, r) in routed.iter().enumerate() {
                if !r.routable() {
                    frozen[a] = Some(0.0);
                }
            }
            while frozen.iter().any(Option::is_none) {
                let level = max_min_level(&sk, &frozen)?;
                let mut progressed = false;
                let mut headroom: Vec<(usize, f64)> = vec![];
                for a in 0..routed.len() {
                    if frozen[a].is_some() {
                        continue;
                    }
                    let best = max_single(&sk, &frozen, level, a)?;
                    if best <= level + LP_TOLERANCE * (1.0 + level) {
                        frozen[a] = Some(level);
                        progressed = true;
                    } else {
                        headroom.push((a, best));
                    }
                }
                if !progressed {
                    let &(a, _) = headroom
                        .iter()
                        .min_by(|x, y| x.1.total_cmp(&y.1))
                        .expect("an unfrozen app");
                    frozen[a] = Some(level);
                }
            }
            for (a, f) in frozen.iter().enumerate() {
                rates[a] = f.unwrap_or(0.0);
            }
        }
    }
    Ok(rates)
}

/// Frozen apps keep their rate; `slack` relaxes the lower bound against
/// round-off.
fn frozen_bounds(frozen: &[Option<f64>], a: usize, slack: f64) -> Option<(f64, f64)> {
    frozen[a].map(|x| ((x - slack * (1.0 + x)).max(0.0), x))
}

/// Solves with exact bounds first, then with a little slack if round-off
/// made the exact problem infeasible.
fn with_slack<T>(solve: impl Fn(f64) -> Result<T, minilp::Error>) -> Result<T, OracleError> {
    solve(0.0)
        .or_else(|_| solve(LP_TOLERANCE))
        .map_err(solver_err)
}

/// Largest `t` such that every unfrozen app can get at least `t`.
fn max_min_level(sk: &Skeleton, frozen: &[Option<f64>]) -> Result<f64, OracleError> {
    with_slack(|slack| {
        let (mut p, vars) = sk.problem(
            OptimizationDirection::Maximize,
            |_| 0.0,
            |a| frozen_bounds(frozen, a, slack),
        );
        let t = p.add_var(1.0, (0.0, f64::INFINITY));
        for (a, v) in vars.iter().enumerate() {
            if let (Some(v), None) = (v, frozen[a]) {
                p.add_constraint([(*v, 1.0), (t, -1.0)], ComparisonOp::Ge, 0.0);
            }
        }
        p.solve().map(|sol| sol[t])
    })
}

/// Largest rate app `target` can reach while every other unfrozen app keeps
/// at least `level`.
fn max_single(
    sk: &Skeleton,
    frozen: &[Option<f64>],
    level: f64,
    target: usize,
) -> Result<f64, OracleError> {
    with_slack(|slack| {
        let floor = (level - slack * (1.0 + level)).max(0.0);
        let (p, vars) = sk.problem(
            OptimizationDirection::Maximize,
            |a| if a == target { 1.0 } else { 0.0 },
            |a| {
                frozen_bounds(frozen, a, slack)
                    .or_else(|| Some((floor, sk.routed[a].cap.unwrap_or(f64::INFINITY))))
            },
        );
        p.solve()
            .map(|sol| sol[vars[target].expect("target is routable")])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::NetworkBuilder;
    use crate::traffic::DqcPattern;
    use approx::assert_abs_diff_eq;

    const OPS: OperationQuality = OperationQuality::PERFECT;

    fn abc() -> Network {
        NetworkBuilder::new()
            .endpoint(0)
            .endpoint(1)
            .endpoint(2)
            .link(0, 1, 10.0, 0.95)
            .link(1, 2, 6.0, 0.95)
            .build()
            .unwrap()
    }

    #[test]
    fn abc_max_min() {
        let apps = [
            App::point_to_point(0, 0, 2, 0.8),
            App::point_to_point(1, 1, 2, 0.8),
        ];
        let alloc = brute_force_optimal(&abc(), &apps, Objective::MaxMinRate, &OPS, 4).unwrap();
        let rates: Vec<f64> = alloc.assignments.iter().map(|a| a.rate).collect();
        assert_eq!(rates.len(), 2);
        for r in rates {
            assert_abs_diff_eq!(r, 3.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn single_demand_total_rate_is_bottleneck() {
        let apps = [App::point_to_point(0, 0, 2, 0.8)];
        let alloc = brute_force_optimal(&abc(), &apps, Objective::TotalRate, &OPS, 4).unwrap();
        assert_abs_diff_eq!(alloc.assignments[0].rate, 6.0, epsilon = 1e-9);
    }

    #[test]
    fn empty_workload() {
        let net = abc();
        let alloc = brute_force_optimal(&net, &[], Objective::MaxMinRate, &OPS, 4).unwrap();
        assert!(alloc.assignments.is_empty() && alloc.rejected.is_empty());
        assert_eq!(alloc.residual, vec![10.0, 6.0]);
    }

    #[test]
    fn dqc_star() {
        let net = NetworkBuilder::new()
            .repeater(0)
            .endpoint(1)
            .endpoint(2)
            .endpoint(3)
            .link(0, 1, 6.0, 0.95)
            .link(0, 2, 6.0, 0.95)
            .link(0, 3, 6.0, 0.95)
            .build()
            .unwrap();
        let apps = [App::dqc(0, &[1, 2, 3], DqcPattern::AllPairs, 0.8)];
        let alloc = brute_force_optimal(&net, &apps, Objective::MaxMinRate, &OPS, 4).unwrap();
        for a in &alloc.assignments {
            assert_abs_diff_eq!(a.rate, 3.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn path_choice_beats_first_path() {
        // Square 0-1-3 / 0-2-3: both flows' first path is 0-1-3, the oracle
        // spreads them over the two sides.
        let net = NetworkBuilder::new()
            .endpoint(0)
            .endpoint(1)
            .endpoint(2)
            .endpoint(3)
            .link(0, 1, 4.0, 0.99)
            .link(1, 3, 4.0, 0.99)
            .link(0, 2, 4.0, 0.99)
            .link(2, 3, 4.0, 0.99)
            .build()
            .unwrap();
        let apps = [
            App::point_to_point(0, 0, 3, 0.9),
            App::point_to_point(1, 0, 3, 0.9),
        ];
        let fixed = brute_force_fixed_paths(&net, &apps, Objective::MaxMinRate, &OPS, 2).unwrap();
        let free = brute_force_optimal(&net, &apps, Objective::MaxMinRate, &OPS, 2).unwrap();
        for a in &fixed.assignments {
            assert_abs_diff_eq!(a.rate, 2.0, epsilon = 1e-9);
        }
        for a in &free.assignments {
            assert_abs_diff_eq!(a.rate, 4.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn refuses_large_instances() {
        let net = abc();
        let apps: Vec<App> = (0..9).map(|i| App::point_to_point(i, 0, 2, 0.8)).collect();
        assert!(matches!(
            brute_force_optimal(&net, &apps, Objective::TotalRate, &OPS, 4),
            Err(OracleError::TooLarge(_))
        ));
    }
}
