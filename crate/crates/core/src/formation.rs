//! Interaction graph and bearing-rigidity machinery.
//!
//! A formation is a directed sensing graph over `n` agents, the first `l`
//! of which are leaders. Followers sense relative positions along edges;
//! the desired shape is encoded by unit bearing vectors attached to the
//! edges. The bearing Laplacian assembled from the desired bearings
//! decides whether the shape is rigid and whether the leader anchors pin
//! it down uniquely.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Unit-norm tolerance for bearing vectors supplied in specs.
pub const BEARING_UNIT_TOL: f64 = 1e-9;

/// Singular values below `RANK_REL_TOL * sigma_max` count as zero in the
/// rigidity rank test.
pub const RANK_REL_TOL: f64 = 1e-8;

/// Positive-definiteness cutoff for eigenvalue checks on B_ff and L_ff.
pub const PD_TOL: f64 = 1e-10;

/// A leader-follower formation spec: graph, desired bearings, leader anchors.
///
/// Indices are 0-based everywhere inside the library; the config layer is
/// the single place that converts from the 1-based agent ids used in
/// scenario files and reports.
#[derive(Debug, Clone)]
pub struct FormationSpec {
    dim: usize,
    n_agents: usize,
    n_leaders: usize,
    edges: Vec<(usize, usize)>,
    bearings: BTreeMap<(usize, usize), DVector<f64>>,
    leader_positions: Vec<DVector<f64>>,
}

impl FormationSpec {
    /// Build and validate a spec. Every violated rule is collected and
    /// reported at once.
    ///
    /// `renormalize` opts into silently renormalizing near-unit bearings
    /// instead of rejecting them; default callers should pass `false` so
    /// malformed inputs fail loudly.
    pub fn new(
        dim: usize,
        n_agents: usize,
        n_leaders: usize,
        bearings: Vec<(usize, usize, DVector<f64>)>,
        leader_positions: Vec<DVector<f64>>,
        renormalize: bool,
    ) -> Result<Self> {
        let mut violations = Vec::new();
        if dim < 2 {
            violations.push(format!("dimension must be >= 2, got {dim}"));
        }
        if n_leaders < 2 {
            violations.push(format!(
                "at least 2 leaders are required for leader-anchored rigidity, got {n_leaders}"
            ));
        }
        if n_leaders >= n_agents {
            violations.push(format!(
                "need at least one follower: {n_leaders} leaders out of {n_agents} agents"
            ));
        }
        if leader_positions.len() != n_leaders {
            violations.push(format!(
                "expected {n_leaders} leader positions, got {}",
                leader_positions.len()
            ));
        }
        for (idx, p) in leader_positions.iter().enumerate() {
            if p.len() != dim {
                violations.push(format!(
                    "leader {} position has {} components, expected {dim}",
                    idx + 1,
                    p.len()
                ));
            }
        }

        let mut edge_map: BTreeMap<(usize, usize), DVector<f64>> = BTreeMap::new();
        for (i, j, mut g) in bearings {
            if i >= n_agents || j >= n_agents || i == j {
                violations.push(format!("edge ({}, {}) out of range", i + 1, j + 1));
                continue;
            }
            if g.len() != dim {
                violations.push(format!(
                    "bearing on edge ({}, {}) has {} components, expected {dim}",
                    i + 1,
                    j + 1,
                    g.len()
                ));
                continue;
            }
            let norm = g.norm();
            if (norm - 1.0).abs() > BEARING_UNIT_TOL {
                if renormalize && norm > 0.0 {
                    g /= norm;
                } else {
                    violations.push(format!(
                        "bearing on edge ({}, {}) has norm {norm}, expected 1 within {BEARING_UNIT_TOL}",
                        i + 1,
                        j + 1
                    ));
                    continue;
                }
            }
            if edge_map.insert((i, j), g).is_some() {
                violations.push(format!("duplicate edge ({}, {})", i + 1, j + 1));
            }
        }

        // Graph rules: leaders never sense anyone; follower-follower edges
        // are bidirectional with antisymmetric bearings; follower-leader
        // edges are one-way.
        let edges: Vec<(usize, usize)> = edge_map.keys().copied().collect();
        for &(i, j) in &edges {
            if i < n_leaders {
                violations.push(format!(
                    "edge ({}, {}): leaders have no outgoing edges",
                    i + 1,
                    j + 1
                ));
            } else if j < n_leaders {
                if edge_map.contains_key(&(j, i)) {
                    violations.push(format!(
                        "edge ({}, {}): follower-to-leader edges must be unidirectional",
                        j + 1,
                        i + 1
                    ));
                }
            } else {
                match edge_map.get(&(j, i)) {
                    None => violations.push(format!(
                        "edge ({}, {}): follower-follower edges must be bidirectional",
                        i + 1,
                        j + 1
                    )),
                    Some(g_ji) => {
                        let g_ij = &edge_map[&(i, j)];
                        if (g_ij + g_ji).norm() > 1e-8 {
                            violations.push(format!(
                                "bearings on ({}, {}) and ({}, {}) are not antisymmetric",
                                i + 1,
                                j + 1,
                                j + 1,
                                i + 1
                            ));
                        }
                    }
                }
            }
        }
        for follower in n_leaders..n_agents {
            if !edges.iter().any(|&(i, _)| i == follower) {
                violations.push(format!("follower {} has no neighbors", follower + 1));
            }
        }

        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        Ok(Self {
            dim,
            n_agents,
            n_leaders,
            edges,
            bearings: edge_map,
            leader_positions,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_leaders(&self) -> usize {
        self.n_leaders
    }

    pub fn n_followers(&self) -> usize {
        self.n_agents - self.n_leaders
    }

    pub fn is_leader(&self, i: usize) -> bool {
        i < self.n_leaders
    }

    /// Directed edge list, 0-based.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Desired bearing attached to a directed edge.
    pub fn desired_bearing(&self, i: usize, j: usize) -> Option<&DVector<f64>> {
        self.bearings.get(&(i, j))
    }

    /// Out-neighbors of agent `i` (the agents it senses).
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .filter(move |&&(a, _)| a == i)
            .map(|&(_, b)| b)
    }

    pub fn leader_positions(&self) -> &[DVector<f64>] {
        &self.leader_positions
    }

    /// Leader anchor positions stacked into one `d*l` vector.
    pub fn stacked_leader_positions(&self) -> DVector<f64> {
        stack(&self.leader_positions)
    }
}

/// Orthogonal projector `P_g = I - g g^T` onto the complement of a unit
/// vector `g`. Zero exactly on multiples of `g`.
pub fn projection_matrix(g: &DVector<f64>) -> Result<DMatrix<f64>> {
    let norm = g.norm();
    if (norm - 1.0).abs() > BEARING_UNIT_TOL {
        return Err(Error::InvalidBearing {
            i: 0,
            j: 0,
            norm,
            tol: BEARING_UNIT_TOL,
        });
    }
    let d = g.len();
    Ok(DMatrix::identity(d, d) - g * g.transpose())
}

/// Unit vector from `p_i` toward `p_j`.
pub fn bearing_of(p_i: &DVector<f64>, p_j: &DVector<f64>, eps_collide: f64) -> Result<DVector<f64>> {
    let diff = p_j - p_i;
    let dist = diff.norm();
    if dist < eps_collide {
        return Err(Error::Collision {
            i: 0,
            j: 0,
            t: 0.0,
            dist,
            eps: eps_collide,
        });
    }
    Ok(diff / dist)
}

/// Graph Laplacian of the sensing graph with its leader/follower blocks.
#[derive(Debug, Clone)]
pub struct LaplacianBlocks {
    pub full: DMatrix<f64>,
    /// Follower rows, leader columns (`f x l`).
    pub fl: DMatrix<f64>,
    /// Follower rows and columns (`f x f`); symmetric positive definite
    /// for a valid spec.
    pub ff: DMatrix<f64>,
}

/// Assemble the graph Laplacian. Leaders have no out-edges, so their rows
/// are identically zero and the matrix is lower block triangular.
pub fn build_laplacian(spec: &FormationSpec) -> LaplacianBlocks {
    let n = spec.n_agents();
    let l = spec.n_leaders();
    let mut lap = DMatrix::zeros(n, n);
    for &(i, j) in spec.edges() {
        lap[(i, j)] = -1.0;
        lap[(i, i)] += 1.0;
    }
    let fl = lap.view((l, 0), (n - l, l)).into_owned();
    let ff = lap.view((l, l), (n - l, n - l)).into_owned();
    LaplacianBlocks { full: lap, fl, ff }
}

/// Bearing Laplacian of the desired formation with its blocks, partitioned
/// at index `d*l`.
#[derive(Debug, Clone)]
pub struct BearingLaplacianBlocks {
    pub full: DMatrix<f64>,
    pub ll: DMatrix<f64>,
    pub lf: DMatrix<f64>,
    pub fl: DMatrix<f64>,
    pub ff: DMatrix<f64>,
}

/// Assemble the bearing Laplacian from the desired-bearing projectors.
///
/// The matrix lives on the underlying undirected graph: `P_g = P_{-g}`, so
/// a follower-to-leader edge contributes the same projector block to both
/// endpoints and the result is symmetric positive semidefinite with the
/// translations `1_n (x) w` in its null space.
pub fn build_bearing_laplacian(spec: &FormationSpec) -> BearingLaplacianBlocks {
    let d = spec.dim();
    let n = spec.n_agents();
    let dl = d * spec.n_leaders();
    let mut full = DMatrix::zeros(d * n, d * n);
    for &(i, j) in spec.edges() {
        if i > j && spec.desired_bearing(j, i).is_some() {
            continue; // bidirectional pair already handled from the other side
        }
        let g = spec.desired_bearing(i, j).expect("edge has a bearing");
        let proj = projection_matrix(g).expect("validated bearing is unit");
        add_block(&mut full, d, i, i, &proj, 1.0);
        add_block(&mut full, d, j, j, &proj, 1.0);
        add_block(&mut full, d, i, j, &proj, -1.0);
        add_block(&mut full, d, j, i, &proj, -1.0);
    }
    let df = d * n - dl;
    BearingLaplacianBlocks {
        ll: full.view((0, 0), (dl, dl)).into_owned(),
        lf: full.view((0, dl), (dl, df)).into_owned(),
        fl: full.view((dl, 0), (df, dl)).into_owned(),
        ff: full.view((dl, dl), (df, df)).into_owned(),
        full,
    }
}

fn add_block(m: &mut DMatrix<f64>, d: usize, bi: usize, bj: usize, block: &DMatrix<f64>, scale: f64) {
    for r in 0..d {
        for c in 0..d {
            m[(bi * d + r, bj * d + c)] += scale * block[(r, c)];
        }
    }
}

/// Outcome of the infinitesimal-rigidity rank test.
#[derive(Debug, Clone)]
pub struct RigidityReport {
    pub rigid: bool,
    pub rank: usize,
    pub nullity: usize,
    pub expected_rank: usize,
    pub singular_values: Vec<f64>,
}

/// Rank test for infinitesimal bearing rigidity: the framework is rigid
/// iff the bearing Laplacian's null space is exactly the translations plus
/// the uniform scaling direction, i.e. `rank(B) = d*n - d - 1`.
///
/// Fails with [`Error::AmbiguousRigidity`] when a singular value sits
/// within two decades of the cutoff on either side, so a borderline rank
/// is reported instead of silently decided.
pub fn check_infinitesimal_bearing_rigidity(spec: &FormationSpec) -> Result<RigidityReport> {
    let blocks = build_bearing_laplacian(spec);
    let svd = blocks.full.svd(false, false);
    let mut sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let cutoff = RANK_REL_TOL * sigma_max;
    let (band_lo, band_hi) = (cutoff * 1e-2, cutoff * 1e2);
    if let Some(&s) = sigma.iter().find(|&&s| s > band_lo && s < band_hi) {
        return Err(Error::AmbiguousRigidity { sigma: s, band_lo, band_hi });
    }
    let rank = sigma.iter().filter(|&&s| s > cutoff).count();
    let dn = spec.dim() * spec.n_agents();
    let expected_rank = dn - spec.dim() - 1;
    Ok(RigidityReport {
        rigid: rank == expected_rank,
        rank,
        nullity: dn - rank,
        expected_rank,
        singular_values: sigma,
    })
}

/// Positive-definiteness check on `B_ff` (the leader-anchored follower
/// block). Reports the minimum eigenvalue, which later feeds the
/// settling-time bounds.
#[derive(Debug, Clone)]
pub struct AnchoredBlockReport {
    pub positive_definite: bool,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

pub fn check_anchored_block(spec: &FormationSpec) -> Result<AnchoredBlockReport> {
    if spec.n_leaders() < 2 {
        return Err(Error::HypothesisViolated(format!(
            "B_ff positive-definiteness requires at least 2 leaders, got {}",
            spec.n_leaders()
        )));
    }
    let blocks = build_bearing_laplacian(spec);
    let (lambda_min, lambda_max) = symmetric_eig_extrema(&blocks.ff);
    Ok(AnchoredBlockReport {
        positive_definite: lambda_min > PD_TOL,
        lambda_min,
        lambda_max,
    })
}

/// Extreme eigenvalues of a symmetric matrix (symmetrized first to shed
/// assembly round-off).
pub fn symmetric_eig_extrema(m: &DMatrix<f64>) -> (f64, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Stack per-agent vectors into one column vector.
pub fn stack(vs: &[DVector<f64>]) -> DVector<f64> {
    let d = vs.first().map_or(0, |v| v.len());
    let mut out = DVector::zeros(d * vs.len());
    for (idx, v) in vs.iter().enumerate() {
        out.rows_mut(idx * d, d).copy_from(v);
    }
    out
}

/// Split a stacked vector back into `count` blocks of size `d`.
pub fn unstack(v: &DVector<f64>, d: usize) -> Vec<DVector<f64>> {
    (0..v.len() / d).map(|i| v.rows(i * d, d).into_owned()).collect()
}
