//! Training-free planner: greedy feasible construction plus local search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kinematics::{build_distance_matrix, validate_all, DistanceMatrix, TrajectorySet};
use crate::planner::feasibility::PlanState;
use crate::planner::instance::Instance;
use crate::planner::state::{feasibility_mask, DecoderState};

/// Randomized constructions tried besides the deterministic ones.
const RANDOM_STARTS: usize = 8;
const MAX_PASSES: usize = 10_000;

#[derive(Clone, Copy, Debug)]
enum Rule {
    /// Shortest next segment over all UAVs.
    Increment,
    /// Earliest arrival time over all UAVs.
    Arrival,
}

/// Builds a plan that passes the independent validator, or reports the
/// partial assignment of the construction that got furthest.
pub fn heuristic_plan(instance: &Instance, seed: u64) -> Result<TrajectorySet> {
    let sc = &instance.scenario;
    let dist = build_distance_matrix(&sc.nodes());

    let mut builds: Vec<std::result::Result<Vec<Vec<usize>>, Vec<Vec<usize>>>> = vec![sequential(instance)];
    let variants: Vec<(Rule, Option<u64>)> = [Rule::Increment, Rule::Arrival]
        .into_iter()
        .map(|r| (r, None))
        .chain((0..RANDOM_STARTS).map(|k| (if k % 2 == 0 { Rule::Increment } else { Rule::Arrival }, Some(seed.wrapping_add(k as u64)))))
        .collect();
    builds.extend(variants.par_iter().map(|&(rule, s)| parallel(instance, rule, s)).collect::<Vec<_>>());

    let starts: Vec<Vec<Vec<usize>>> = builds.iter().filter_map(|b| b.as_ref().ok().cloned()).collect();
    if starts.is_empty() {
        let partial = builds
            .into_iter()
            .filter_map(|b| b.err())
            .max_by_key(|r| r.iter().map(Vec::len).sum::<usize>())
            .unwrap_or_default();
        let placed: usize = partial.iter().map(|r| r.len().saturating_sub(1)).sum();
        return Err(Error::DeadEnd { step: placed, remaining: instance.num_waypoints() - placed, partial });
    }

    let improved: Vec<(f64, Vec<Vec<usize>>)> = starts
        .into_par_iter()
        .map(|routes| {
            let routes = improve(instance, &dist, routes);
            (TrajectorySet::new(routes.clone()).total_length(&dist), routes)
        })
        .collect();
    let (_, best) = improved.into_iter().fold((f64::INFINITY, Vec::new()), |acc, x| if x.0 < acc.0 { x } else { acc });
    let plan = TrajectorySet::new(best);
    let report = validate_all(&plan, sc)?;
    if !report.is_feasible() {
        return Err(Error::NoFeasiblePlan(format!("heuristic plan has {} violations", report.violations.len())));
    }
    Ok(plan)
}

/// Decoder-order construction: each UAV in turn takes its nearest feasible
/// waypoint until none is left, then hands over to the next UAV.
fn sequential(instance: &Instance) -> std::result::Result<Vec<Vec<usize>>, Vec<Vec<usize>>> {
    let mut st = DecoderState::new(instance);
    while !st.is_done() {
        let mask = feasibility_mask(&st);
        let here = instance.token_point(st.last_token());
        let pick = (instance.num_uavs()..mask.len())
            .filter(|&t| mask[t])
            .min_by(|&x, &y| here.dist(&instance.token_point(x)).total_cmp(&here.dist(&instance.token_point(y))).then(x.cmp(&y)))
            .or_else(|| (0..instance.num_uavs()).find(|&t| mask[t]));
        match pick {
            Some(t) => st.apply(t),
            None => return Err(st.plan.routes().to_vec()),
        }
    }
    Ok(st.plan.routes().to_vec())
}

/// All UAVs extend their routes together; `seed` adds randomness by
/// picking among the three best moves.
fn parallel(instance: &Instance, rule: Rule, seed: Option<u64>) -> std::result::Result<Vec<Vec<usize>>, Vec<Vec<usize>>> {
    let sc = &instance.scenario;
    let mut st = PlanState::new(sc);
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let s = sc.start_points.len();
    let mut open: Vec<usize> = (s..sc.num_nodes()).collect();
    while !open.is_empty() {
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for a in 0..sc.num_uavs() {
            let here = sc.node(st.last_node(a));
            for &w in &open {
                let d = here.dist(&sc.node(w));
                let key = match rule {
                    Rule::Increment => d,
                    Rule::Arrival => st.elapsed(a) + d / sc.uavs[a].speed_mps,
                };
                cands.push((key, a, w));
            }
        }
        cands.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
        let feasible: Vec<(f64, usize, usize)> = match &mut rng {
            None => cands.into_iter().find(|&(_, a, w)| st.can_append(a, w)).into_iter().collect(),
            Some(_) => cands.into_iter().filter(|&(_, a, w)| st.can_append(a, w)).take(3).collect(),
        };
        if feasible.is_empty() {
            return Err(st.routes().to_vec());
        }
        let k = rng.as_mut().map_or(0, |r| r.random_range(0..feasible.len()));
        let (_, a, w) = feasible[k];
        st.append(a, w);
        open.retain(|&x| x != w);
    }
    Ok(st.routes().to_vec())
}

fn routes_length(routes: &[Vec<usize>], dist: &DistanceMatrix) -> f64 {
    routes.iter().map(|r| r.windows(2).map(|w| dist.get(w[0], w[1])).sum::<f64>()).sum()
}

/// Best-improvement local search (2-opt, relocate, swap). A move is taken
/// only if the resulting plan passes the validator.
fn improve(instance: &Instance, dist: &DistanceMatrix, mut routes: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    let sc = &instance.scenario;
    let feasible = |r: &Vec<Vec<usize>>| validate_all(&TrajectorySet::new(r.clone()), sc).map(|v| v.is_feasible()).unwrap_or(false);
    let mut current = routes_length(&routes, dist);
    for _ in 0..MAX_PASSES {
        let mut cands: Vec<(f64, Vec<Vec<usize>>)> = neighbours(&routes)
            .into_iter()
            .map(|r| (routes_length(&r, dist), r))
            .filter(|(l, _)| *l < current - 1e-9 * current.max(1.0))
            .collect();
        if cands.is_empty() {
            break;
        }
        cands.sort_by(|x, y| x.0.total_cmp(&y.0));
        match cands.into_iter().find(|(_, r)| feasible(r)) {
            Some((l, r)) => {
                routes = r;
                current = l;
            }
            None => break,
        }
    }
    routes
}

fn neighbours(routes: &[Vec<usize>]) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    for (a, r) in routes.iter().enumerate() {
        for i in 1..r.len() {
            for j in (i + 1)..r.len() {
                let mut n = routes.to_vec();
                n[a][i..=j].reverse();
                out.push(n);
            }
        }
    }
    for a in 0..routes.len() {
        for i in 1..routes[a].len() {
            let node = routes[a][i];
            for b in 0..routes.len() {
                let mut base = routes.to_vec();
                base[a].remove(i);
                for j in 1..=base[b].len() {
                    if a == b && (j == i) {
                        continue;
                    }
                    let mut n = base.clone();
                    n[b].insert(j, node);
                    out.push(n);
                }
            }
            for b in a + 1..routes.len() {
                for j in 1..routes[b].len() {
                    let mut n = routes.to_vec();
                    let tmp = n[a][i];
                    n[a][i] = n[b][j];
                    n[b][j] = tmp;
                    out.push(n);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use crate::planner::instance::{random_instance, InstanceConfig};
    use crate::planner::oracle::exhaustive_oracle;
    use crate::scenario::{RadioParams, Scenario, UavSpec};

    #[test]
    fn collinear_matches_oracle() {
        let radio = RadioParams::default_fanet();
        let inst = Instance::new(Scenario {
            uavs: vec![UavSpec { id: 0, start_point: 0, speed_mps: 1.0, t_max_s: 100.0, p_max_w: 1.0, e_max_j: 1.0 }],
            start_points: vec![Point3::new(0.0, 0.0, 0.0)],
            waypoints: vec![Point3::new(3.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)],
            radio,
            k_min: 0,
            delta: 1,
            l_max_m: 1e9,
            d_min_m: 0.0,
            n_slots: 10,
            subsamples_per_slot: 4,
            seed: 0,
        });
        let h = heuristic_plan(&inst, 0).unwrap();
        assert_eq!(h, exhaustive_oracle(&inst).unwrap().plan);
    }

    #[test]
    fn random_pairs_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..3 {
            let inst = random_instance(&InstanceConfig::pair(6), &mut rng);
            if let Ok(plan) = heuristic_plan(&inst, 1) {
                assert!(validate_all(&plan, &inst.scenario).unwrap().is_feasible());
            }
        }
    }
}
