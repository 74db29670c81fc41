//! Collection tours over a set of bins, starting and ending at a depot.
//!
//! Tours are built greedily ([`nearest_neighbor`]), improved with
//! first-improvement 2-opt ([`two_opt`]), and checked at desk scale against
//! exhaustive search ([`brute_force_optimum`]).

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_m, GeoCoordinate};

pub const BRUTE_FORCE_MAX_STOPS: usize = 10;
pub const DEFAULT_MAX_PASSES: usize = 50;
const IMPROVE_EPS_M: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoutingError {
    #[error("EMPTY_PROBLEM: no stops to route")]
    EmptyProblem,
    #[error("TOO_LARGE: {stops} stops exceeds the brute-force limit of {max}")]
    TooLarge { stops: usize, max: usize },
    #[error("duplicate stop id {0:?}")]
    DuplicateStop(String),
    #[error("distance matrix invalid: {0}")]
    BadMatrix(String),
    #[error("tour is not a permutation of the problem's stops")]
    BadTour,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub bin_id: String,
    pub position: GeoCoordinate,
}

/// A depot plus stops with a symmetric pairwise metric. Node 0 is the depot;
/// node `i + 1` is `stop_ids[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingProblem {
    stop_ids: Vec<String>,
    dist: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    /// Visit order; the depot is implicit at both ends.
    pub stops: Vec<String>,
    pub length_m: f64,
}

impl RoutingProblem {
    /// Great-circle metric over real coordinates.
    pub fn haversine(depot: GeoCoordinate, stops: &[Stop]) -> Result<Self, RoutingError> {
        let mut points = Vec::with_capacity(stops.len() + 1);
        points.push(depot);
        points.extend(stops.iter().map(|s| s.position));
        let dist = points.iter().map(|&a| points.iter().map(|&b| haversine_m(a, b)).collect()).collect();
        Self::from_matrix(stops.iter().map(|s| s.bin_id.clone()).collect(), dist)
    }

    /// `matrix` is `(n+1) x (n+1)` with the depot at index 0.
    pub fn from_matrix(stop_ids: Vec<String>, matrix: Vec<Vec<f64>>) -> Result<Self, RoutingError> {
        if stop_ids.is_empty() {
            return Err(RoutingError::EmptyProblem);
        }
        let mut seen = BTreeSet::new();
        for id in &stop_ids {
            if !seen.insert(id.as_str()) {
                return Err(RoutingError::DuplicateStop(id.clone()));
            }
        }
        let n = stop_ids.len() + 1;
        if matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
            return Err(RoutingError::BadMatrix(format!("expected {n}x{n}")));
        }
        #[allow(clippy::needless_range_loop)] // symmetry check reads both (i,j) and (j,i)
        for i in 0..n {
            if matrix[i][i] != 0.0 {
                return Err(RoutingError::BadMatrix(format!("diagonal entry {i} is {}", matrix[i][i])));
            }
            for j in 0..n {
                let d = matrix[i][j];
                if !d.is_finite() || d < 0.0 {
                    return Err(RoutingError::BadMatrix(format!("entry ({i},{j}) = {d}")));
                }
                if d != matrix[j][i] {
                    return Err(RoutingError::BadMatrix(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(RoutingProblem { stop_ids, dist: matrix })
    }

    pub fn len(&self) -> usize {
        self.stop_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stop_ids.is_empty()
    }

    pub fn stop_ids(&self) -> &[String] {
        &self.stop_ids
    }

    fn d(&self, a: usize, b: usize) -> f64 {
        self.dist[a][b]
    }

    fn id(&self, node: usize) -> &str {
        &self.stop_ids[node - 1]
    }

    /// Length of visiting `nodes` (1-based stop nodes) from and back to the
    /// depot.
    fn closed_length(&self, nodes: &[usize]) -> f64 {
        let mut total = 0.0;
        let mut prev = 0;
        for &n in nodes {
            total += self.d(prev, n);
            prev = n;
        }
        total + self.d(prev, 0)
    }

    fn tour_from_nodes(&self, nodes: &[usize]) -> Tour {
        Tour { stops: nodes.iter().map(|&n| self.id(n).to_owned()).collect(), length_m: self.closed_length(nodes) }
    }

    fn nodes_of(&self, tour: &Tour) -> Result<Vec<usize>, RoutingError> {
        if tour.stops.len() != self.len() {
            return Err(RoutingError::BadTour);
        }
        let mut used = vec![false; self.len() + 1];
        let mut nodes = Vec::with_capacity(tour.stops.len());
        for id in &tour.stops {
            let idx = self.stop_ids.iter().position(|s| s == id).ok_or(RoutingError::BadTour)? + 1;
            if std::mem::replace(&mut used[idx], true) {
                return Err(RoutingError::BadTour);
            }
            nodes.push(idx);
        }
        Ok(nodes)
    }

    /// Recomputes the length of an arbitrary visit order.
    pub fn tour_length(&self, tour: &Tour) -> Result<f64, RoutingError> {
        Ok(self.closed_length(&self.nodes_of(tour)?))
    }
}

/// Greedy construction: from the depot, always go to the closest unvisited
/// stop. Equal distances go to the lexicographically smaller bin id.
pub fn nearest_neighbor(problem: &RoutingProblem) -> Result<Tour, RoutingError> {
    if problem.is_empty() {
        return Err(RoutingError::EmptyProblem);
    }
    let mut unvisited: Vec<usize> = (1..=problem.len()).collect();
    let mut order = Vec::with_capacity(problem.len());
    let mut current = 0;
    while !unvisited.is_empty() {
        let (pos, _) = unvisited
            .iter()
            .enumerate()
            .min_by(|(_, &a), (_, &b)| {
                problem
                    .d(current, a)
                    .partial_cmp(&problem.d(current, b))
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| problem.id(a).cmp(problem.id(b)))
            })
            .expect("non-empty");
        current = unvisited.swap_remove(pos);
        order.push(current);
    }
    Ok(problem.tour_from_nodes(&order))
}

/// First-improvement 2-opt with the depot fixed at both ends.
///
/// Each pass scans every pair of non-adjacent edges and immediately applies
/// any reversal that shortens the tour by more than 1e-9 m. Stops after a
/// pass with no improvement or after `max_passes` passes.
pub fn two_opt(tour: &Tour, problem: &RoutingProblem, max_passes: usize) -> Result<Tour, RoutingError> {
    let nodes = problem.nodes_of(tour)?;
    // closed sequence: depot, stops..., depot
    let mut seq = Vec::with_capacity(nodes.len() + 2);
    seq.push(0);
    seq.extend(nodes);
    seq.push(0);
    let last = seq.len() - 1;

    for _ in 0..max_passes {
        let mut improved = false;
        for i in 0..last.saturating_sub(2) {
            for j in (i + 2)..last {
                let (a, b) = (seq[i], seq[i + 1]);
                let (c, d) = (seq[j], seq[j + 1]);
                let delta = problem.d(a, c) + problem.d(b, d) - problem.d(a, b) - problem.d(c, d);
                if delta < -IMPROVE_EPS_M {
                    seq[i + 1..=j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(problem.tour_from_nodes(&seq[1..last]))
}

/// The tour the planner hands out: nearest neighbor then 2-opt.
pub fn plan_route(problem: &RoutingProblem) -> Result<Tour, RoutingError> {
    let nn = nearest_neighbor(problem)?;
    two_opt(&nn, problem, DEFAULT_MAX_PASSES)
}

/// Exhaustive search for at most [`BRUTE_FORCE_MAX_STOPS`] stops.
///
/// Orders are enumerated lexicographically by bin id and a candidate only
/// replaces the incumbent when shorter by more than 1e-9 m, so among equal
/// optima the lexicographically smallest wins.
pub fn brute_force_optimum(problem: &RoutingProblem) -> Result<Tour, RoutingError> {
    if problem.is_empty() {
        return Err(RoutingError::EmptyProblem);
    }
    if problem.len() > BRUTE_FORCE_MAX_STOPS {
        return Err(RoutingError::TooLarge { stops: problem.len(), max: BRUTE_FORCE_MAX_STOPS });
    }
    let mut by_id: Vec<usize> = (1..=problem.len()).collect();
    by_id.sort_by(|&a, &b| problem.id(a).cmp(problem.id(b)));

    struct Search<'a> {
        problem: &'a RoutingProblem,
        candidates: Vec<usize>,
        used: Vec<bool>,
        path: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }

    impl Search<'_> {
        fn bound(&self) -> f64 {
            self.best.as_ref().map_or(f64::INFINITY, |(l, _)| *l - IMPROVE_EPS_M)
        }

        fn go(&mut self, at: usize, partial: f64) {
            if partial >= self.bound() {
                return;
            }
            if self.path.len() == self.candidates.len() {
                let total = partial + self.problem.d(at, 0);
                if total < self.bound() {
                    self.best = Some((total, self.path.clone()));
                }
                return;
            }
            for k in 0..self.candidates.len() {
                if self.used[k] {
                    continue;
                }
                let next = self.candidates[k];
                self.used[k] = true;
                self.path.push(next);
                self.go(next, partial + self.problem.d(at, next));
                self.path.pop();
                self.used[k] = false;
            }
        }
    }

    let mut search =
        Search { problem, used: vec![false; by_id.len()], candidates: by_id, path: Vec::new(), best: None };
    search.go(0, 0.0);
    let (_, nodes) = search.best.expect("at least one permutation");
    Ok(problem.tour_from_nodes(&nodes))
}

/// A route-planning input file, either over coordinates
///
/// ```json
/// {"depot": {"lat": -26.2, "lon": 28.0}, "stops": [{"bin_id": "B1", "position": {"lat": -26.21, "lon": 28.01}}]}
/// ```
///
/// or over an explicit matrix whose row 0 is the depot:
///
/// ```json
/// {"stop_ids": ["a", "b"], "matrix": [[0, 1, 2], [1, 0, 1], [2, 1, 0]]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum PlanProblem {
    Geo { depot: GeoCoordinate, stops: Vec<Stop> },
    Matrix { stop_ids: Vec<String>, matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Error)]
pub enum PlanProblemError {
    #[error("not a problem file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

impl PlanProblem {
    pub fn from_json(bytes: &[u8]) -> Result<RoutingProblem, PlanProblemError> {
        let p: PlanProblem = serde_json::from_slice(bytes)?;
        Ok(p.into_problem()?)
    }

    pub fn into_problem(self) -> Result<RoutingProblem, RoutingError> {
        match self {
            PlanProblem::Geo { depot, stops } => RoutingProblem::haversine(depot, &stops),
            PlanProblem::Matrix { stop_ids, matrix } => RoutingProblem::from_matrix(stop_ids, matrix),
        }
    }
}
