//! Weighted undirected graphs, their combinatorial Laplacian and its full
//! eigendecomposition, the graph Fourier transform and total variation.
//!
//! [`SpectralGraph`] is the single source of truth for the graph frequencies
//! `λ` (ascending) and the orthonormal eigenvector basis `V`. Everything in the
//! spectral domain is indexed consistently with it.

use std::collections::HashSet;
use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the eigendecomposition residual and orthonormality.
pub const TOL_EVD: f64 = 1e-9;
/// Relative tolerance for numerical identities (GFT round trip, TV forms).
pub const TOL_NUM: f64 = 1e-9;
/// Default connectivity tolerance, relative to `λ_N`.
pub const TOL_CONNECT_REL: f64 = 1e-8;
/// Default eigenvalue multiplicity tolerance, relative to `λ_N`.
pub const TOL_GROUP_REL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

/// Undirected graph with strictly positive edge weights.
///
/// Each unordered node pair is stored at most once; the adjacency matrix is
/// symmetrized when materialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph {
    n_nodes: usize,
    edges: Vec<Edge>,
}

impl WeightedGraph {
    pub fn new(n_nodes: usize, edges: Vec<Edge>) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            let bad = |reason| Error::InvalidEdge {
                src: e.src,
                dst: e.dst,
                weight: e.weight,
                reason,
            };
            if e.src >= n_nodes || e.dst >= n_nodes {
                return Err(bad("node id out of range"));
            }
            if e.src == e.dst {
                return Err(bad("self-loop"));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(bad("weight must be finite and strictly positive"));
            }
            let key = (e.src.min(e.dst), e.src.max(e.dst));
            if !seen.insert(key) {
                return Err(Error::DuplicateEdge(key.0, key.1));
            }
        }
        Ok(Self { n_nodes, edges })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Symmetric weighted adjacency matrix `W`.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n_nodes, self.n_nodes);
        for e in &self.edges {
            w[(e.src, e.dst)] = e.weight;
            w[(e.dst, e.src)] = e.weight;
        }
        w
    }

    /// `½ Σ_k Σ_n W_kn (x_k − x_n)²`, summed edge by edge.
    pub fn edge_variation(&self, x: &[f64]) -> Result<f64> {
        check_len(self.n_nodes, x.len())?;
        Ok(self
            .edges
            .iter()
            .map(|e| {
                let d = x[e.src] - x[e.dst];
                e.weight * d * d
            })
            .sum())
    }

    /// Union-find connectivity check; needs no eigendecomposition.
    pub fn is_connected(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.n_nodes).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let mut components = self.n_nodes;
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.src), find(&mut parent, e.dst));
            if a != b {
                parent[a] = b;
                components -= 1;
            }
        }
        components == 1
    }
}

/// Dense combinatorial Laplacian `L = diag(W·1) − W`.
///
/// This is the EVD-free view of a graph: everything that only needs matrix
/// products with `L` (total variation, polynomial filters, `λ_avg = Tr(L)/N`)
/// works from here.
#[derive(Debug, Clone)]
pub struct Laplacian {
    matrix: DMatrix<f64>,
    lambda_avg: f64,
}

impl Laplacian {
    pub fn from_graph(g: &WeightedGraph) -> Self {
        let n = g.n_nodes();
        let mut l = DMatrix::zeros(n, n);
        for e in g.edges() {
            l[(e.src, e.dst)] -= e.weight;
            l[(e.dst, e.src)] -= e.weight;
            l[(e.src, e.src)] += e.weight;
            l[(e.dst, e.dst)] += e.weight;
        }
        let lambda_avg = l.trace() / n as f64;
        Self { matrix: l, lambda_avg }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_nodes(&self) -> usize {
        self.matrix.nrows()
    }

    /// Mean eigenvalue, obtained from the trace.
    pub fn lambda_avg(&self) -> f64 {
        self.lambda_avg
    }

    /// `xᵀ L x`.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        check_len(self.n_nodes(), x.len())?;
        let v = DVector::from_column_slice(x);
        Ok(v.dot(&(&self.matrix * &v)))
    }
}

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

/// A connected weighted graph together with the full eigendecomposition of
/// its Laplacian.
#[derive(Debug, Clone)]
pub struct SpectralGraph {
    id: u64,
    graph: WeightedGraph,
    laplacian: Laplacian,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

/// Builds the spectral view of `g`.
///
/// `tol_connect` defaults to `1e-8 · λ_N`. Eigenvalues come out ascending and
/// every eigenvector has its largest-magnitude entry positive.
pub fn build_spectral_graph(g: WeightedGraph, tol_connect: Option<f64>) -> Result<SpectralGraph> {
    let laplacian = Laplacian::from_graph(&g);
    let n = g.n_nodes();
    if n < 2 {
        return Err(Error::DisconnectedGraph { lambda2: 0.0, tol: 0.0 });
    }
    let eig = laplacian.matrix().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).clone_owned();
        let pivot = v
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if pivot < 0.0 {
            v.neg_mut();
        }
        eigenvectors.set_column(col, &v);
    }

    let lambda_n = eigenvalues[n - 1].max(0.0);
    let tol = tol_connect.unwrap_or(TOL_CONNECT_REL * lambda_n);
    if eigenvalues[1] <= tol {
        return Err(Error::DisconnectedGraph {
            lambda2: eigenvalues[1],
            tol,
        });
    }

    Ok(SpectralGraph {
        id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
        graph: g,
        laplacian,
        eigenvalues,
        eigenvectors,
    })
}

impl SpectralGraph {
    pub fn new(g: WeightedGraph) -> Result<Self> {
        build_spectral_graph(g, None)
    }

    /// Process-unique identity, used to key cached transforms.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn laplacian(&self) -> &Laplacian {
        &self.laplacian
    }

    pub fn n_nodes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Graph frequencies, ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors as columns, aligned with [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.n_nodes() - 1]
    }

    /// `(1/N) Σ λ_n`.
    pub fn lambda_avg(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / self.n_nodes() as f64
    }

    pub fn default_group_tol(&self) -> f64 {
        TOL_GROUP_REL * self.lambda_max()
    }

    /// Partition of the eigenvalue indices into runs of numerically equal
    /// eigenvalues (consecutive gaps `≤ tol`).
    pub fn eigen_groups(&self, tol: f64) -> Vec<Range<usize>> {
        let mut groups = Vec::new();
        let mut start = 0;
        for i in 1..=self.n_nodes() {
            if i == self.n_nodes() || self.eigenvalues[i] - self.eigenvalues[i - 1] > tol {
                groups.push(start..i);
                start = i;
            }
        }
        groups
    }

    /// Graph Fourier transform `Vᵀ x`.
    pub fn gft(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_nodes(), x.len())?;
        let v = DVector::from_column_slice(x);
        Ok(self.eigenvectors.tr_mul(&v).as_slice().to_vec())
    }

    /// Inverse transform `V ã`.
    pub fn inverse_gft(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_nodes(), coeffs.len())?;
        let v = DVector::from_column_slice(coeffs);
        Ok((&self.eigenvectors * v).as_slice().to_vec())
    }

    /// Total variation `xᵀ L x`.
    pub fn total_variation(&self, x: &[f64]) -> Result<f64> {
        self.laplacian.quadratic_form(x)
    }

    /// Total variation evaluated in the spectral domain, `Σ λ_n ã_n²`.
    pub fn spectral_variation(&self, x: &[f64]) -> Result<f64> {
        let a = self.gft(x)?;
        Ok(a.iter().zip(&self.eigenvalues).map(|(c, l)| l * c * c).sum())
    }
}

/// `M` node-domain measurements stored row-wise (`row m = x[m]ᵀ`), with a
/// lazily computed graph Fourier image.
#[derive(Debug, Clone)]
pub struct SignalBatch {
    values: DMatrix<f64>,
    gft_cache: OnceLock<(u64, DMatrix<f64>)>,
}

impl SignalBatch {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::EmptyBatch);
        }
        Ok(Self {
            values,
            gft_cache: OnceLock::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::EmptyBatch);
        }
        let n = rows[0].len();
        for r in rows {
            check_len(n, r.len())?;
        }
        Self::new(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Number of samples `M`.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn n_nodes(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, m: usize) -> Vec<f64> {
        self.values.row(m).iter().copied().collect()
    }

    /// Row-wise GFT `X V`; cached for the first graph it is requested with.
    pub fn gft(&self, sg: &SpectralGraph) -> Result<std::borrow::Cow<'_, DMatrix<f64>>> {
        check_len(sg.n_nodes(), self.n_nodes())?;
        let (id, cached) = self
            .gft_cache
            .get_or_init(|| (sg.id(), &self.values * sg.eigenvectors()));
        if *id == sg.id() {
            Ok(std::borrow::Cow::Borrowed(cached))
        } else {
            Ok(std::borrow::Cow::Owned(&self.values * sg.eigenvectors()))
        }
    }

    /// Sum of squared norms `Σ_m ‖x[m]‖²`.
    pub fn energy(&self) -> f64 {
        self.values.norm_squared()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: &self.values * c,
            gft_cache: OnceLock::new(),
        }
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn path3() -> SpectralGraph {
        let g = WeightedGraph::new(
            3,
            vec![
                Edge {
                    src: 0,
                    dst: 1,
                    weight: 1.0,
                },
                Edge {
                    src: 1,
                    dst: 2,
                    weight: 1.0,
                },
            ],
        )
        .unwrap();
        SpectralGraph::new(g).unwrap()
    }

    /// Closed-form eigenvalues of a symmetric 3×3 matrix (trigonometric
    /// solution of the characteristic cubic).
    fn sym3_eigenvalues(a: &DMatrix<f64>) -> [f64; 3] {
        let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        let q = a.trace() / 3.0;
        let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = (a - DMatrix::identity(3, 3) * q) / p;
        let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        let mut e = [e1, e2, e3];
        e.sort_by(f64::total_cmp);
        e
    }

    #[test]
    fn two_node_laplacian_and_spectrum() {
        let g = WeightedGraph::new(
            2,
            vec![Edge {
                src: 0,
                dst: 1,
                weight: 1.0,
            }],
        )
        .unwrap();
        let sg = SpectralGraph::new(g).unwrap();
        let l = sg.laplacian().matrix();
        assert_eq!(l.as_slice(), &[1.0, -1.0, -1.0, 1.0]);
        assert_relative_eq!(sg.eigenvalues()[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(sg.eigenvalues()[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn path3_spectrum_matches_closed_form() {
        let sg = path3();
        let oracle = sym3_eigenvalues(sg.laplacian().matrix());
        for (got, want) in sg.eigenvalues().iter().zip(oracle) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        for (got, want) in sg.eigenvalues().iter().zip([0.0, 1.0, 3.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn edgeless_graph_is_disconnected() {
        let g = WeightedGraph::new(2, vec![]).unwrap();
        assert!(matches!(SpectralGraph::new(g), Err(Error::DisconnectedGraph { .. })));
    }

    #[test]
    fn invalid_edges_are_rejected() {
        let e = |s, d, w| Edge {
            src: s,
            dst: d,
            weight: w,
        };
        assert!(matches!(
            WeightedGraph::new(2, vec![e(0, 0, 1.0)]),
            Err(Error::InvalidEdge { .. })
        ));
        assert!(matches!(
            WeightedGraph::new(2, vec![e(0, 1, 0.0)]),
            Err(Error::InvalidEdge { .. })
        ));
        assert!(matches!(
            WeightedGraph::new(2, vec![e(0, 1, -1.0)]),
            Err(Error::InvalidEdge { .. })
        ));
        assert!(matches!(
            WeightedGraph::new(2, vec![e(0, 2, 1.0)]),
            Err(Error::InvalidEdge { .. })
        ));
        assert!(matches!(
            WeightedGraph::new(2, vec![e(0, 1, 1.0), e(1, 0, 2.0)]),
            Err(Error::DuplicateEdge(0, 1))
        ));
    }

    #[test]
    fn gft_of_eigenvector_is_unit_vector() {
        let sg = path3();
        for k in 0..3 {
            let v: Vec<f64> = sg.eigenvectors().column(k).iter().copied().collect();
            let a = sg.gft(&v).unwrap();
            for (i, c) in a.iter().enumerate() {
                assert_relative_eq!(*c, if i == k { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
        assert_eq!(sg.gft(&[0.0; 3]).unwrap(), vec![0.0; 3]);
        assert!(matches!(sg.gft(&[1.0; 2]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn gft_preserves_norm_on_path() {
        let sg = path3();
        let x = [0.3, -1.7, 2.2];
        let a = sg.gft(&x).unwrap();
        // direct oracle: explicit sum over the eigenvector columns
        let v = sg.eigenvectors();
        for k in 0..3 {
            let direct: f64 = (0..3).map(|i| v[(i, k)] * x[i]).sum();
            assert_relative_eq!(a[k], direct, epsilon = 1e-14);
        }
        let nx: f64 = x.iter().map(|t| t * t).sum();
        let na: f64 = a.iter().map(|t| t * t).sum();
        assert_relative_eq!(nx, na, max_relative = 1e-12);
        let back = sg.inverse_gft(&a).unwrap();
        for (b, o) in back.iter().zip(x) {
            assert_relative_eq!(*b, o, epsilon = 1e-12);
        }
    }

    #[test]
    fn total_variation_forms_agree() {
        let sg = path3();
        let x = [0.3, -1.7, 2.2];
        let quad = sg.total_variation(&x).unwrap();
        let pair = sg.graph().edge_variation(&x).unwrap();
        let spec = sg.spectral_variation(&x).unwrap();
        assert_relative_eq!(quad, pair, max_relative = 1e-10);
        assert_relative_eq!(quad, spec, max_relative = 1e-10);
        assert_relative_eq!(sg.total_variation(&[2.5; 3]).unwrap(), 0.0, epsilon = 1e-12);
        for k in 0..3 {
            let v: Vec<f64> = sg.eigenvectors().column(k).iter().copied().collect();
            assert_relative_eq!(sg.total_variation(&v).unwrap(), sg.eigenvalues()[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn eigenvector_signs_are_canonical() {
        let sg = path3();
        for k in 0..3 {
            let col = sg.eigenvectors().column(k);
            let pivot = col.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn groups_split_repeated_eigenvalues() {
        // complete graph K4: λ = (0, 4, 4, 4)
        let mut edges = vec![];
        for i in 0..4 {
            for j in i + 1..4 {
                edges.push(Edge {
                    src: i,
                    dst: j,
                    weight: 1.0,
                });
            }
        }
        let sg = SpectralGraph::new(WeightedGraph::new(4, edges).unwrap()).unwrap();
        assert_eq!(sg.eigen_groups(sg.default_group_tol()), vec![0..1, 1..4]);
        assert_relative_eq!(sg.lambda_avg(), sg.laplacian().lambda_avg(), max_relative = 1e-12);
    }

    #[test]
    fn batch_gft_cache_is_keyed_by_graph() {
        let a = path3();
        let b = path3();
        let x = SignalBatch::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let ga = x.gft(&a).unwrap().into_owned();
        let gb = x.gft(&b).unwrap().into_owned();
        assert_eq!(ga, gb);
        assert!(matches!(x.gft(&a).unwrap(), std::borrow::Cow::Borrowed(_)));
        assert!(matches!(x.gft(&b).unwrap(), std::borrow::Cow::Owned(_)));
    }
}
