//! Attacker interaction graph: overlap, proximity or empty edge sets, the
//! weighted Laplacian and three centralities.

use crate::error::{Error, Result};
use crate::geometry::{dist, EnvConfig, Vec3};
use crate::sensing::{DetectionReport, Mat3};
use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    Overlap,
    Proximity,
    None,
}

impl FromStr for GraphMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overlap" => Ok(GraphMode::Overlap),
            "proximity" => Ok(GraphMode::Proximity),
            "none" => Ok(GraphMode::None),
            o => Err(Error::Config(format!("unknown graph mode `{o}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub mode: GraphMode,
    pub alpha_go: f64,
    pub grid_res: usize,
    pub alpha: [f64; 3],
    pub k_eig: usize,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams { mode: GraphMode::Overlap, alpha_go: 0.04, grid_res: 41, alpha: [1.0 / 3.0; 3], k_eig: 100 }
    }
}

impl GraphParams {
    pub fn validate(&self) -> Result<()> {
        let s: f64 = self.alpha.iter().sum();
        if self.alpha.iter().any(|&a| a < 0.0) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::Validation("graph: centrality weights must be >= 0 and sum to 1".into()));
        }
        if self.grid_res < 8 || !(self.alpha_go > 0.0 && self.alpha_go <= 1.0) {
            return Err(Error::Validation("graph: need grid_res >= 8 and alpha_go in (0,1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbGraph {
    pub vertices: Vec<usize>,
    pub adjacency: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub t: f64,
    pub vertices: Vec<usize>,
    pub edges: Vec<(usize, usize, f64)>,
}

impl ProbGraph {
    pub fn empty(vertices: Vec<usize>) -> Self {
        let n = vertices.len();
        ProbGraph { vertices, adjacency: DMatrix::zeros(n, n) }
    }

    pub fn from_adjacency(vertices: Vec<usize>, adjacency: DMatrix<f64>) -> Self {
        ProbGraph { vertices, adjacency }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Edges as (local i, local j, w) with i < j.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.len();
        let mut e = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let w = self.adjacency[(i, j)];
                if w > 0.0 {
                    e.push((i, j, w));
                }
            }
        }
        e
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        laplacian(&self.adjacency)
    }

    pub fn snapshot(&self, t: f64) -> GraphSnapshot {
        let edges = self.edges().into_iter().map(|(i, j, w)| (self.vertices[i], self.vertices[j], w)).collect();
        GraphSnapshot { t, vertices: self.vertices.clone(), edges }
    }
}

pub fn laplacian(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut l = -a.clone();
    for i in 0..n {
        l[(i, i)] = a.row(i).sum() - a[(i, i)];
    }
    l
}

/// Second-smallest Laplacian eigenvalue and its eigenvector, plus the third
/// eigenvalue (for multiplicity checks).
pub fn fiedler(l: &DMatrix<f64>) -> (f64, Vec<f64>, f64) {
    let n = l.nrows();
    if n < 2 {
        return (0.0, vec![0.0; n], f64::INFINITY);
    }
    let eig = SymmetricEigen::new(l.clone());
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lam2 = eig.eigenvalues[idx[1]];
    let v = eig.eigenvectors.column(idx[1]).iter().copied().collect();
    let lam3 = if n > 2 { eig.eigenvalues[idx[2]] } else { f64::INFINITY };
    (lam2.max(0.0), v, lam3)
}

pub fn algebraic_connectivity(g: &ProbGraph) -> f64 {
    fiedler(&g.laplacian()).0
}

struct Gauss {
    mu: Vector3<f64>,
    inv: Matrix3<f64>,
    norm: f64,
}

impl Gauss {
    fn pdf(&self, x: &Vector3<f64>) -> f64 {
        let d = x - self.mu;
        self.norm * (-0.5 * d.dot(&(self.inv * d))).exp()
    }
}

fn mat(s: &Mat3) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| s[i][j])
}

const DET_EPS: f64 = 1e-12;
/// Pairs whose Bhattacharyya coefficient (an upper bound on the overlap) is
/// below this are treated as disjoint without quadrature.
const BC_CUTOFF: f64 = 1e-12;

/// Overlap coefficient ∫ min(f1, f2) by midpoint voxel quadrature on a
/// `g`-per-axis grid spanning both means ± 6 max-std.
pub fn overlap_coefficient(mu1: &Vec3, s1: &Mat3, mu2: &Vec3, s2: &Mat3, g: usize) -> f64 {
    let (m1, m2) = (mat(s1), mat(s2));
    let (d1, d2) = (m1.determinant(), m2.determinant());
    if d1 <= DET_EPS || d2 <= DET_EPS {
        return if mu1 == mu2 { 1.0 } else { 0.0 };
    }
    let (v1, v2) = (Vector3::from(*mu1), Vector3::from(*mu2));
    let avg = (m1 + m2) * 0.5;
    let Some(avg_inv) = avg.try_inverse() else { return 0.0 };
    let dm = v1 - v2;
    let db = 0.125 * dm.dot(&(avg_inv * dm)) + 0.5 * (avg.determinant() / (d1 * d2).sqrt()).ln();
    if (-db).exp() < BC_CUTOFF {
        return 0.0;
    }
    let mk = |mu: Vector3<f64>, m: Matrix3<f64>, det: f64| Gauss {
        mu,
        inv: m.try_inverse().unwrap_or_else(Matrix3::zeros),
        norm: 1.0 / ((2.0 * std::f64::consts::PI).powi(3) * det).sqrt(),
    };
    let (f1, f2) = (mk(v1, m1, d1), mk(v2, m2, d2));
    let max_std = SymmetricEigen::new(m1)
        .eigenvalues
        .iter()
        .chain(SymmetricEigen::new(m2).eigenvalues.iter())
        .fold(0.0f64, |a, &b| a.max(b))
        .sqrt();
    let mut lo = [0.0; 3];
    let mut step = [0.0; 3];
    for a in 0..3 {
        let l = mu1[a].min(mu2[a]) - 6.0 * max_std;
        let h = mu1[a].max(mu2[a]) + 6.0 * max_std;
        lo[a] = l;
        step[a] = (h - l) / g as f64;
    }
    let mut acc = 0.0;
    for i in 0..g {
        let x = lo[0] + (i as f64 + 0.5) * step[0];
        for j in 0..g {
            let y = lo[1] + (j as f64 + 0.5) * step[1];
            for k in 0..g {
                let p = Vector3::new(x, y, lo[2] + (k as f64 + 0.5) * step[2]);
                acc += f1.pdf(&p).min(f2.pdf(&p));
            }
        }
    }
    (acc * step[0] * step[1] * step[2]).clamp(0.0, 1.0)
}

/// Build the window graph over detected reports.
pub fn build_graph(reports: &[DetectionReport], gp: &GraphParams, env: &EnvConfig) -> ProbGraph {
    let vertices: Vec<usize> = reports.iter().map(|r| r.id).collect();
    let n = reports.len();
    let mut a = DMatrix::zeros(n, n);
    match gp.mode {
        GraphMode::None => {}
        GraphMode::Proximity => {
            for i in 0..n {
                for j in i + 1..n {
                    if dist(&reports[i].mu, &reports[j].mu) <= env.r_comm {
                        a[(i, j)] = 1.0;
                        a[(j, i)] = 1.0;
                    }
                }
            }
        }
        GraphMode::Overlap => {
            let mut raw = DMatrix::zeros(n, n);
            let mut vmax = 0.0f64;
            for i in 0..n {
                for j in i + 1..n {
                    let (ri, rj) = (&reports[i], &reports[j]);
                    let v = overlap_coefficient(&ri.mu, &ri.sigma, &rj.mu, &rj.sigma, gp.grid_res);
                    raw[(i, j)] = v;
                    vmax = vmax.max(v);
                }
            }
            if vmax > 0.0 {
                for i in 0..n {
                    for j in i + 1..n {
                        let w = raw[(i, j)] / vmax;
                        if w >= gp.alpha_go && w > 0.0 {
                            a[(i, j)] = w;
                            a[(j, i)] = w;
                        }
                    }
                }
            }
        }
    }
    ProbGraph { vertices, adjacency: a }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Centralities {
    pub degree: Vec<f64>,
    pub eigenvector: Vec<f64>,
    pub betweenness: Vec<f64>,
    /// Normalized composite.
    pub composite: Vec<f64>,
}

pub fn min_max(x: &[f64]) -> Vec<f64> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if x.is_empty() || !(hi - lo > 1e-12 * (1.0 + hi.abs())) {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

pub fn degree_centrality(a: &DMatrix<f64>) -> Vec<f64> {
    (0..a.nrows()).map(|i| a.row(i).sum()).collect()
}

/// Power iteration on A + I (the shift keeps bipartite graphs from
/// oscillating without changing eigenvectors), L2-normalized.
pub fn eigenvector_centrality(a: &DMatrix<f64>, iters: usize) -> Vec<f64> {
    let n = a.nrows();
    if n == 0 || a.iter().all(|&w| w == 0.0) {
        return vec![0.0; n];
    }
    let shifted = a + DMatrix::identity(n, n);
    let mut x = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    for _ in 0..iters.max(1) {
        let y = &shifted * &x;
        let nrm = y.norm();
        if nrm == 0.0 {
            return vec![0.0; n];
        }
        x = y / nrm;
    }
    x.iter().copied().collect()
}

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

/// Brandes betweenness on the weighted graph with edge length 1/w; undirected
/// (each unordered pair counted once).
pub fn betweenness_centrality(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut cb = vec![0.0; n];
    let nbrs: Vec<Vec<(usize, f64)>> =
        (0..n).map(|i| (0..n).filter(|&j| j != i && a[(i, j)] > 0.0).map(|j| (j, 1.0 / a[(i, j)])).collect()).collect();
    for s in 0..n {
        let mut order = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut d = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        sigma[s] = 1.0;
        d[s] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Item(0.0, s));
        while let Some(Item(dv, v)) = heap.pop() {
            if done[v] || dv > d[v] {
                continue;
            }
            done[v] = true;
            order.push(v);
            for &(w, len) in &nbrs[v] {
                let alt = d[v] + len;
                let tol = 1e-12 * alt.max(1.0);
                if alt < d[w] - tol {
                    d[w] = alt;
                    sigma[w] = sigma[v];
                    preds[w] = vec![v];
                    heap.push(Item(alt, w));
                } else if (alt - d[w]).abs() <= tol && !done[w] {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        let mut delta = vec![0.0; n];
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    cb.iter().map(|c| c / 2.0).collect()
}

pub fn centralities(g: &ProbGraph, gp: &GraphParams) -> Centralities {
    let a = &g.adjacency;
    let degree = degree_centrality(a);
    let eigenvector = eigenvector_centrality(a, gp.k_eig);
    let betweenness = betweenness_centrality(a);
    let (nd, ne, nb) = (min_max(&degree), min_max(&eigenvector), min_max(&betweenness));
    let composite = (0..g.len()).map(|i| gp.alpha[0] * nd[i] + gp.alpha[1] * ne[i] + gp.alpha[2] * nb[i]).collect();
    Centralities { degree, eigenvector, betweenness, composite }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::isotropic;

    fn unit_graph(n: usize, edges: &[(usize, usize)]) -> ProbGraph {
        let mut a = DMatrix::zeros(n, n);
        for &(i, j) in edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        ProbGraph::from_adjacency((0..n).collect(), a)
    }

    fn rep(id: usize, mu: Vec3, var: f64) -> DetectionReport {
        DetectionReport { id, mu, sigma: isotropic(var), p_d: 1.0, detected: true, s_conf: 1.0 }
    }

    fn phi(x: f64) -> f64 {
        0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
    }

    #[test]
    fn overlap_identical_and_far() {
        let s = isotropic(1.0);
        let v = overlap_coefficient(&[0.0; 3], &s, &[0.0; 3], &s, 41);
        assert!((v - 1.0).abs() < 0.02);
        assert!(overlap_coefficient(&[0.0; 3], &s, &[50.0, 0.0, 0.0], &s, 41) < 1e-6);
    }

    #[test]
    fn overlap_matches_closed_form() {
        let sig = 1.7;
        let s = isotropic(sig * sig);
        for k in [0.0, 1.0, 2.0, 3.0, 4.0] {
            let v = overlap_coefficient(&[1.0, 2.0, 3.0], &s, &[1.0 + k * sig, 2.0, 3.0], &s, 41);
            let exact = 2.0 * phi(-k / 2.0);
            assert!((v - exact).abs() < 0.02, "d/sigma={k}: {v} vs {exact}");
        }
        let exact = 2.0 * phi(-1.0);
        assert!((exact - 0.3173).abs() < 1e-4);
    }

    #[test]
    fn overlap_degenerate_point_mass() {
        let z = [[0.0; 3]; 3];
        assert_eq!(overlap_coefficient(&[1.0; 3], &z, &[1.0; 3], &z, 41), 1.0);
        assert_eq!(overlap_coefficient(&[1.0; 3], &z, &[2.0; 3], &isotropic(1.0), 41), 0.0);
    }

    #[test]
    fn overlap_symmetric() {
        let a = [[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 0.5]];
        let b = isotropic(1.3);
        let x = overlap_coefficient(&[0.0; 3], &a, &[1.0, 0.5, -0.3], &b, 21);
        let y = overlap_coefficient(&[1.0, 0.5, -0.3], &b, &[0.0; 3], &a, 21);
        assert_eq!(x, y);
    }

    #[test]
    fn build_modes() {
        let env = EnvConfig::default();
        let reps = vec![rep(0, [0.0; 3], 1.0), rep(4, [25.0, 0.0, 0.0], 1.0)];
        let none = GraphParams { mode: GraphMode::None, ..Default::default() };
        assert_eq!(build_graph(&reps, &none, &env).edge_count(), 0);
        let prox = GraphParams { mode: GraphMode::Proximity, ..Default::default() };
        let g = build_graph(&reps, &prox, &env);
        assert_eq!(g.edges(), vec![(0, 1, 1.0)]);
        assert_eq!(g.vertices, vec![0, 4]);
        let same = vec![rep(0, [1.0; 3], 1.0), rep(1, [1.0; 3], 1.0), rep(2, [1.0; 3], 1.0)];
        let g = build_graph(&same, &GraphParams::default(), &env);
        assert_eq!(g.edges().len(), 3);
        assert!(g.edges().iter().all(|e| e.2 == 1.0));
    }

    #[test]
    fn max_normalized_weight_is_one() {
        let env = EnvConfig::default();
        let reps = vec![rep(0, [0.0; 3], 1.0), rep(1, [1.5, 0.0, 0.0], 1.0), rep(2, [0.0, 2.5, 0.0], 1.0)];
        let g = build_graph(&reps, &GraphParams { alpha_go: 0.001, ..Default::default() }, &env);
        let ones = g.edges().iter().filter(|e| e.2 == 1.0).count();
        assert_eq!(ones, 1);
    }

    #[test]
    fn connectivity_examples() {
        assert_eq!(algebraic_connectivity(&unit_graph(3, &[])), 0.0);
        assert!((algebraic_connectivity(&unit_graph(3, &[(0, 1), (1, 2), (0, 2)])) - 3.0).abs() < 1e-12);
        assert!((algebraic_connectivity(&unit_graph(3, &[(0, 1), (1, 2)])) - 1.0).abs() < 1e-12);
        assert_eq!(algebraic_connectivity(&unit_graph(1, &[])), 0.0);
    }

    /// Enumerate all shortest paths by BFS layering (unit weights) and count
    /// pass-throughs.
    fn brute_betweenness(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
        let adj = |i: usize, j: usize| edges.iter().any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i));
        let mut all_paths: Vec<Vec<usize>> = Vec::new();
        fn dfs(p: &mut Vec<usize>, n: usize, adj: &dyn Fn(usize, usize) -> bool, out: &mut Vec<Vec<usize>>) {
            out.push(p.clone());
            for v in 0..n {
                if !p.contains(&v) && adj(*p.last().unwrap(), v) {
                    p.push(v);
                    dfs(p, n, adj, out);
                    p.pop();
                }
            }
        }
        for s in 0..n {
            dfs(&mut vec![s], n, &adj, &mut all_paths);
        }
        let mut cb = vec![0.0; n];
        for s in 0..n {
            for t in s + 1..n {
                let ps: Vec<&Vec<usize>> = all_paths.iter().filter(|p| p[0] == s && *p.last().unwrap() == t).collect();
                let Some(best) = ps.iter().map(|p| p.len()).min() else { continue };
                let sp: Vec<_> = ps.into_iter().filter(|p| p.len() == best).collect();
                for v in 0..n {
                    let through = sp.iter().filter(|p| p[1..p.len() - 1].contains(&v)).count();
                    cb[v] += through as f64 / sp.len() as f64;
                }
            }
        }
        cb
    }

    #[test]
    fn betweenness_matches_enumeration() {
        let cases: Vec<(usize, Vec<(usize, usize)>)> = vec![
            (3, vec![(0, 1), (1, 2)]),
            (4, vec![(0, 1), (0, 2), (0, 3)]),
            (5, vec![(0, 1), (1, 2), (2, 3), (3, 0), (2, 4)]),
            (6, vec![(0, 1), (1, 2), (0, 3), (3, 2), (2, 4), (4, 5), (1, 5)]),
        ];
        for (n, e) in cases {
            let b = betweenness_centrality(&unit_graph(n, &e).adjacency);
            let o = brute_betweenness(n, &e);
            for i in 0..n {
                assert!((b[i] - o[i]).abs() < 1e-12, "{e:?}: {b:?} vs {o:?}");
            }
        }
        let b = betweenness_centrality(&unit_graph(3, &[(0, 1), (1, 2)]).adjacency);
        assert_eq!(b, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn weighted_betweenness_prefers_strong_links() {
        // 0-1-2 strong chain versus direct weak 0-2 link (length 1/0.2 = 5 > 2)
        let mut a = DMatrix::zeros(3, 3);
        for (i, j, w) in [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 0.2)] {
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
        assert_eq!(betweenness_centrality(&a), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn star_center_dominates() {
        let g = unit_graph(4, &[(0, 1), (0, 2), (0, 3)]);
        let c = centralities(&g, &GraphParams::default());
        for v in [&c.degree, &c.eigenvector, &c.betweenness] {
            assert!(v[0] > v[1] && v[1] == v[2] && v[2] == v[3]);
        }
        assert!((c.composite[0] - 1.0).abs() < 1e-12);
        assert_eq!(&c.composite[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn edgeless_centralities_zero() {
        let c = centralities(&unit_graph(3, &[]), &GraphParams::default());
        assert!(c.composite.iter().chain(&c.degree).chain(&c.eigenvector).chain(&c.betweenness).all(|&x| x == 0.0));
    }

    #[test]
    fn snapshot_json_shape() {
        let g = unit_graph(2, &[(0, 1)]);
        let js = serde_json::to_string(&g.snapshot(3.0)).unwrap();
        assert_eq!(js, r#"{"t":3.0,"vertices":[0,1],"edges":[[0,1,1.0]]}"#);
    }
}
