//! Differential-geometric apparatus of an immersion: metric, orthonormal
//! normal frames, torsion coefficients, second fundamental form, and the
//! curvature of the normal bundle computed along two independent routes.

use crate::error::{Error, Result};
use crate::grid::{gradient, GridRef, ScalarField, VectorField2};

/// Closed-form first and second derivatives of an immersion at one point.
#[derive(Debug, Clone)]
pub struct Jet {
    pub x: Vec<f64>,
    pub xu: Vec<f64>,
    pub xv: Vec<f64>,
    pub xuu: Vec<f64>,
    pub xuv: Vec<f64>,
    pub xvv: Vec<f64>,
}

/// An immersion X: B -> R^{n+2} with analytic jets. Evaluators must be
/// stateless; they are called from data-parallel loops.
pub trait Immersion: Send + Sync {
    /// Codimension n >= 1.
    fn codimension(&self) -> usize;
    fn jet(&self, u: f64, v: f64) -> Jet;

    fn ambient_dim(&self) -> usize {
        self.codimension() + 2
    }
}

/// Lexicographic index pairs (sigma, theta) with sigma < theta, 0-based.
pub fn index_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for s in 0..n {
        for t in s + 1..n {
            out.push((s, t));
        }
    }
    out
}

/// First fundamental form, area element, and inverse metric on the grid.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub h11: ScalarField,
    pub h22: ScalarField,
    pub h12: ScalarField,
    pub w: ScalarField,
    pub inv11: ScalarField,
    pub inv22: ScalarField,
    pub inv12: ScalarField,
}

const RANK_TOL: f64 = 1e-8;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Evaluates a function of the jet at every interior node and cut point.
fn field_from_jet(
    grid: &GridRef,
    x: &dyn Immersion,
    f: impl Fn(&Jet) -> f64,
) -> ScalarField {
    let mut out = ScalarField::zeros(grid);
    for k in 0..grid.num_nodes() {
        let (u, v) = grid.node_point(k);
        out.interior[k] = f(&x.jet(u, v));
    }
    for (ci, c) in grid.cuts().iter().enumerate() {
        out.boundary[ci] = f(&x.jet(c.point.0, c.point.1));
    }
    out
}

/// First fundamental form from the analytic jets. Fails when the rank
/// condition is violated at any node.
pub fn metric(x: &dyn Immersion, grid: &GridRef) -> Result<MetricField> {
    let h11 = field_from_jet(grid, x, |j| dot(&j.xu, &j.xu));
    let h22 = field_from_jet(grid, x, |j| dot(&j.xv, &j.xv));
    let h12 = field_from_jet(grid, x, |j| dot(&j.xu, &j.xv));

    for k in 0..grid.num_nodes() {
        let (a, b, c) = (h11.interior[k], h22.interior[k], h12.interior[k]);
        // smallest singular value of (Xu; Xv) via the Gram matrix
        let disc = ((a - b) * (a - b) + 4.0 * c * c).sqrt();
        let eig_min = ((a + b - disc) / 2.0).max(0.0);
        let sigma = eig_min.sqrt();
        if sigma <= RANK_TOL {
            let (u, v) = grid.node_point(k);
            return Err(Error::RankDeficient { u, v, sigma });
        }
    }

    let w = h11.zip(&h22, |a, b| a * b).zip(&h12.mul(&h12), |p, q| (p - q).max(0.0).sqrt());
    let det = h11.mul(&h22).sub(&h12.mul(&h12));
    Ok(MetricField {
        inv11: h22.zip(&det, |a, d| a / d),
        inv22: h11.zip(&det, |a, d| a / d),
        inv12: h12.zip(&det, |a, d| -a / d),
        h11,
        h22,
        h12,
        w,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ConformalityReport {
    pub max_diag_ratio: f64,
    pub max_offdiag_ratio: f64,
    pub conformal: bool,
}

/// Checks the conformality relations h11 = h22, h12 = 0 relative to W.
pub fn check_conformal(m: &MetricField, tol: f64) -> ConformalityReport {
    let mut diag = 0.0f64;
    let mut off = 0.0f64;
    for k in 0..m.w.interior.len() {
        let w = m.w.interior[k];
        diag = diag.max((m.h11.interior[k] - m.h22.interior[k]).abs() / w);
        off = off.max(m.h12.interior[k].abs() / w);
    }
    ConformalityReport {
        max_diag_ratio: diag,
        max_offdiag_ratio: off,
        conformal: diag < tol && off < tol,
    }
}

/// An orthonormal section of the normal bundle: n fields valued in R^{n+2},
/// each component stored as a scalar field (interior plus boundary trace).
#[derive(Debug, Clone)]
pub struct NormalFrame {
    pub grid: GridRef,
    pub n: usize,
    pub ambient: usize,
    /// vecs[sigma][component]
    pub vecs: Vec<Vec<ScalarField>>,
}

impl NormalFrame {
    /// Vector N_sigma at interior node `k`.
    pub fn at_node(&self, sigma: usize, k: usize) -> Vec<f64> {
        self.vecs[sigma].iter().map(|c| c.interior[k]).collect()
    }

    pub fn at_cut(&self, sigma: usize, c: usize) -> Vec<f64> {
        self.vecs[sigma].iter().map(|f| f.boundary[c]).collect()
    }

    /// Largest deviation from orthonormality and tangency over all sites.
    pub fn orthonormality_deviation(&self, x: &dyn Immersion) -> f64 {
        let mut dev = 0.0f64;
        let sites: Vec<(f64, f64, bool, usize)> = (0..self.grid.num_nodes())
            .map(|k| {
                let (u, v) = self.grid.node_point(k);
                (u, v, true, k)
            })
            .chain(self.grid.cuts().iter().enumerate().map(|(ci, c)| {
                (c.point.0, c.point.1, false, ci)
            }))
            .collect();
        for (u, v, interior, idx) in sites {
            let j = x.jet(u, v);
            let get = |s: usize| -> Vec<f64> {
                if interior {
                    self.at_node(s, idx)
                } else {
                    self.at_cut(s, idx)
                }
            };
            for s in 0..self.n {
                let ns = get(s);
                dev = dev.max(dot(&ns, &j.xu).abs());
                dev = dev.max(dot(&ns, &j.xv).abs());
                for t in 0..self.n {
                    let nt = get(t);
                    let target = if s == t { 1.0 } else { 0.0 };
                    dev = dev.max((dot(&ns, &nt) - target).abs());
                }
            }
        }
        dev
    }
}

/// Gram-Schmidt frame with the basis-vector pivots frozen at the origin, so
/// the section does not flip between nodes.
pub fn initial_frame(x: &dyn Immersion, grid: &GridRef) -> Result<NormalFrame> {
    let n = x.codimension();
    let dim = x.ambient_dim();

    // pivot selection at the origin: the n basis vectors with the largest
    // residual after removing the tangent components
    let origin = x.jet(0.0, 0.0);
    let (t1, t2) = orthonormal_tangents(&origin)?;
    let mut residuals: Vec<(usize, f64)> = (0..dim)
        .map(|k| {
            let mut e = vec![0.0; dim];
            e[k] = 1.0;
            let r = reject(&e, &[t1.clone(), t2.clone()]);
            (k, dot(&r, &r).sqrt())
        })
        .collect();
    residuals.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    if residuals.iter().take(n).any(|(_, r)| *r < 1e-8) {
        return Err(Error::FrameDegenerate(
            "pivot residuals at the reference node are all degenerate".into(),
        ));
    }
    let pivots: Vec<usize> = residuals.iter().take(n).map(|(k, _)| *k).collect();

    let mut vecs = vec![vec![ScalarField::zeros(grid); dim]; n];
    let build_at = |u: f64, v: f64| -> Result<Vec<Vec<f64>>> {
        let j = x.jet(u, v);
        let (t1, t2) = orthonormal_tangents(&j)?;
        let mut basis = vec![t1, t2];
        let mut normals = Vec::with_capacity(n);
        for &p in &pivots {
            let mut e = vec![0.0; dim];
            e[p] = 1.0;
            let r = reject(&e, &basis);
            let norm = dot(&r, &r).sqrt();
            if norm < 1e-8 {
                return Err(Error::FrameDegenerate(format!(
                    "pivot e_{p} degenerate at ({u}, {v})"
                )));
            }
            let nvec: Vec<f64> = r.iter().map(|c| c / norm).collect();
            basis.push(nvec.clone());
            normals.push(nvec);
        }
        Ok(normals)
    };

    for k in 0..grid.num_nodes() {
        let (u, v) = grid.node_point(k);
        let normals = build_at(u, v)?;
        for s in 0..n {
            for c in 0..dim {
                vecs[s][c].interior[k] = normals[s][c];
            }
        }
    }
    for (ci, cut) in grid.cuts().iter().enumerate() {
        let normals = build_at(cut.point.0, cut.point.1)?;
        for s in 0..n {
            for c in 0..dim {
                vecs[s][c].boundary[ci] = normals[s][c];
            }
        }
    }

    Ok(NormalFrame {
        grid: grid.clone(),
        n,
        ambient: dim,
        vecs,
    })
}

fn orthonormal_tangents(j: &Jet) -> Result<(Vec<f64>, Vec<f64>)> {
    let n1 = dot(&j.xu, &j.xu).sqrt();
    if n1 < 1e-12 {
        return Err(Error::FrameDegenerate("vanishing X_u".into()));
    }
    let t1: Vec<f64> = j.xu.iter().map(|c| c / n1).collect();
    let r = reject(&j.xv, std::slice::from_ref(&t1));
    let n2 = dot(&r, &r).sqrt();
    if n2 < 1e-12 {
        return Err(Error::FrameDegenerate("tangents are parallel".into()));
    }
    Ok((t1, r.iter().map(|c| c / n2).collect()))
}

fn reject(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut r = v.to_vec();
    for b in basis {
        let p = dot(&r, b);
        for (rc, bc) in r.iter_mut().zip(b) {
            *rc -= p * bc;
        }
    }
    r
}

/// Torsion coefficients T_{sigma,i}^theta = N_{sigma,u^i} . N_theta for the
/// independent pairs sigma < theta; the remaining entries follow from
/// skew-symmetry by the storage convention.
#[derive(Debug, Clone)]
pub struct TorsionField {
    pub grid: GridRef,
    pub n: usize,
    pub pairs: Vec<(usize, usize)>,
    /// per pair: (T_{sigma,1}^theta, T_{sigma,2}^theta)
    pub t: Vec<VectorField2>,
}

impl TorsionField {
    pub fn zeros(grid: &GridRef, n: usize) -> Self {
        let pairs = index_pairs(n);
        let t = pairs
            .iter()
            .map(|_| VectorField2 {
                u: ScalarField::zeros(grid),
                v: ScalarField::zeros(grid),
            })
            .collect();
        TorsionField {
            grid: grid.clone(),
            n,
            pairs,
            t,
        }
    }

    fn pair_index(&self, s: usize, t: usize) -> usize {
        // lexicographic over s < t
        debug_assert!(s < t && t < self.n);
        let n = self.n;
        s * n - s * (s + 1) / 2 + (t - s - 1)
    }

    /// T_{sigma,i}^theta at interior node k, with the skew sign for
    /// sigma > theta; zero on the diagonal. `i` is 0 (u) or 1 (v).
    pub fn value(&self, sigma: usize, theta: usize, i: usize, k: usize) -> f64 {
        if sigma == theta {
            return 0.0;
        }
        let (p, sign) = if sigma < theta {
            (self.pair_index(sigma, theta), 1.0)
        } else {
            (self.pair_index(theta, sigma), -1.0)
        };
        let f = if i == 0 { &self.t[p].u } else { &self.t[p].v };
        sign * f.interior[k]
    }

    /// Largest |T| over all pairs, components, and interior nodes.
    pub fn sup_norm(&self) -> f64 {
        self.t
            .iter()
            .fold(0.0f64, |m, v| m.max(v.u.sup_norm()).max(v.v.sup_norm()))
    }
}

/// Torsion of a frame: the frame components are differentiated with the grid
/// gradient stencils.
pub fn torsion(frame: &NormalFrame, grid: &GridRef) -> TorsionField {
    let n = frame.n;
    let pairs = index_pairs(n);
    let grads: Vec<Vec<VectorField2>> = frame
        .vecs
        .iter()
        .map(|comps| comps.iter().map(gradient).collect())
        .collect();
    let mut t = Vec::with_capacity(pairs.len());
    for &(s, th) in &pairs {
        let mut tu = ScalarField::zeros(grid);
        let mut tv = ScalarField::zeros(grid);
        for c in 0..frame.ambient {
            tu = tu.add(&grads[s][c].u.mul(&frame.vecs[th][c]));
            tv = tv.add(&grads[s][c].v.mul(&frame.vecs[th][c]));
        }
        // the trace at the cut points is defined by extrapolating the
        // interior field, like every other derived quantity; the product of
        // the extrapolated gradient with the cut frame values is noisier
        tu.extrapolate_boundary();
        tv.extrapolate_boundary();
        t.push(VectorField2 { u: tu, v: tv });
    }
    TorsionField {
        grid: grid.clone(),
        n,
        pairs,
        t,
    }
}

/// Second fundamental form L_{sigma,ij} = X_{u^i u^j} . N_sigma, assembled
/// from analytic jets only.
#[derive(Debug, Clone)]
pub struct SecondFundamentalForm {
    pub n: usize,
    /// per sigma: (L11, L12, L22)
    pub l: Vec<(ScalarField, ScalarField, ScalarField)>,
}

pub fn second_fundamental(x: &dyn Immersion, frame: &NormalFrame) -> SecondFundamentalForm {
    let grid = &frame.grid;
    let mut l = Vec::with_capacity(frame.n);
    for s in 0..frame.n {
        let mut l11 = ScalarField::zeros(grid);
        let mut l12 = ScalarField::zeros(grid);
        let mut l22 = ScalarField::zeros(grid);
        for k in 0..grid.num_nodes() {
            let (u, v) = grid.node_point(k);
            let j = x.jet(u, v);
            let nvec = frame.at_node(s, k);
            l11.interior[k] = dot(&j.xuu, &nvec);
            l12.interior[k] = dot(&j.xuv, &nvec);
            l22.interior[k] = dot(&j.xvv, &nvec);
        }
        for (ci, c) in grid.cuts().iter().enumerate() {
            let j = x.jet(c.point.0, c.point.1);
            let nvec = frame.at_cut(s, ci);
            l11.boundary[ci] = dot(&j.xuu, &nvec);
            l12.boundary[ci] = dot(&j.xuv, &nvec);
            l22.boundary[ci] = dot(&j.xvv, &nvec);
        }
        l.push((l11, l12, l22));
    }
    SecondFundamentalForm { n: frame.n, l }
}

/// The independent components S_{sigma,12}^theta of the normal-bundle
/// curvature, one scalar field per pair in U_n.
#[derive(Debug, Clone)]
pub struct NormalCurvatureField {
    pub grid: GridRef,
    pub n: usize,
    pub pairs: Vec<(usize, usize)>,
    pub s: Vec<ScalarField>,
}

impl NormalCurvatureField {
    /// Pointwise Euclidean norm |S(w)| of the Grassmann-type curvature vector.
    pub fn pointwise_norm(&self) -> ScalarField {
        let mut sq = ScalarField::zeros(&self.grid);
        for comp in &self.s {
            sq = sq.add(&comp.mul(comp));
        }
        sq.map(f64::sqrt)
    }

    pub fn sup_norm(&self) -> f64 {
        self.pointwise_norm().sup_norm()
    }

    pub fn l2_norm(&self) -> f64 {
        self.pointwise_norm().l2_norm()
    }
}

/// Curvature from the connection: S_{sigma,12}^theta =
/// d_v T_{sigma,1}^theta - d_u T_{sigma,2}^theta
/// + sum_omega (T_{sigma,1}^omega T_{omega,2}^theta - T_{sigma,2}^omega T_{omega,1}^theta).
pub fn normal_curvature_from_torsion(t: &TorsionField, grid: &GridRef) -> NormalCurvatureField {
    let n = t.n;
    let pairs = index_pairs(n);
    let mut s = Vec::with_capacity(pairs.len());
    for (p, &(sg, th)) in pairs.iter().enumerate() {
        let d1 = gradient(&t.t[p].u);
        let d2 = gradient(&t.t[p].v);
        let mut comp = d1.v.sub(&d2.u);
        for k in 0..grid.num_nodes() {
            let mut q = 0.0;
            for om in 0..n {
                q += t.value(sg, om, 0, k) * t.value(om, th, 1, k)
                    - t.value(sg, om, 1, k) * t.value(om, th, 0, k);
            }
            comp.interior[k] += q;
        }
        comp.extrapolate_boundary();
        s.push(comp);
    }
    NormalCurvatureField {
        grid: grid.clone(),
        n,
        pairs,
        s,
    }
}

/// Curvature via Ricci's integrability conditions:
/// S_{sigma,12}^theta = (L_{sigma,1m} L_{theta,2n} - L_{sigma,2m} L_{theta,1n}) h^{mn}.
/// Pointwise algebra, no differentiation.
pub fn normal_curvature_ricci(
    l: &SecondFundamentalForm,
    m: &MetricField,
) -> NormalCurvatureField {
    let grid = m.w.grid.clone();
    let n = l.n;
    let pairs = index_pairs(n);
    let eval = |sg: usize, th: usize, k: usize, boundary: bool| -> f64 {
        let pick = |f: &ScalarField| if boundary { f.boundary[k] } else { f.interior[k] };
        let lm = |s: usize, i: usize, mm: usize| -> f64 {
            let (l11, l12, l22) = &l.l[s];
            match (i, mm) {
                (0, 0) => pick(l11),
                (0, 1) | (1, 0) => pick(l12),
                (1, 1) => pick(l22),
                _ => unreachable!(),
            }
        };
        let hinv = |a: usize, b: usize| -> f64 {
            match (a, b) {
                (0, 0) => pick(&m.inv11),
                (1, 1) => pick(&m.inv22),
                _ => pick(&m.inv12),
            }
        };
        let mut acc = 0.0;
        for mm in 0..2 {
            for nn in 0..2 {
                acc += (lm(sg, 0, mm) * lm(th, 1, nn) - lm(sg, 1, mm) * lm(th, 0, nn))
                    * hinv(mm, nn);
            }
        }
        acc
    };
    let mut s = Vec::with_capacity(pairs.len());
    for &(sg, th) in &pairs {
        let mut comp = ScalarField::zeros(&grid);
        for k in 0..grid.num_nodes() {
            comp.interior[k] = eval(sg, th, k, false);
        }
        for ci in 0..grid.num_cuts() {
            comp.boundary[ci] = eval(sg, th, ci, true);
        }
        s.push(comp);
    }
    NormalCurvatureField {
        grid,
        n,
        pairs,
        s,
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RicciBoundReport {
    /// max over nodes and pairs of |S_{sigma,12}^theta| - 2(|H|^2 - K) W
    pub max_excess: f64,
    pub pass: bool,
}

/// Checks |S_{sigma,12}^theta| <= 2 (|H|^2 - K) W, with H and K assembled
/// from the second fundamental form and the metric.
pub fn ricci_bound_check(
    s: &NormalCurvatureField,
    l: &SecondFundamentalForm,
    m: &MetricField,
    slack: f64,
) -> RicciBoundReport {
    let grid = &s.grid;
    let mut max_excess = f64::NEG_INFINITY;
    for k in 0..grid.num_nodes() {
        let mut h_sq = 0.0;
        let mut gauss_num = 0.0;
        for sg in 0..l.n {
            let (l11, l12, l22) = &l.l[sg];
            let hs = 0.5
                * (m.inv11.interior[k] * l11.interior[k]
                    + 2.0 * m.inv12.interior[k] * l12.interior[k]
                    + m.inv22.interior[k] * l22.interior[k]);
            h_sq += hs * hs;
            gauss_num += l11.interior[k] * l22.interior[k] - l12.interior[k] * l12.interior[k];
        }
        let w = m.w.interior[k];
        let gauss = gauss_num / (w * w);
        let rhs = 2.0 * (h_sq - gauss) * w;
        for comp in &s.s {
            max_excess = max_excess.max(comp.interior[k].abs() - rhs);
        }
    }
    RicciBoundReport {
        max_excess,
        pass: max_excess <= slack,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DiscGrid;
    use crate::zoo;

    fn grid(m: usize) -> GridRef {
        DiscGrid::build(m).unwrap()
    }

    #[test]
    fn plane_metric_is_identity() {
        let g = grid(33);
        let x = zoo::make_surface(&zoo::SurfaceSpec::named("plane_embed", 2)).unwrap();
        let m = metric(x.as_ref(), &g).unwrap();
        for k in 0..g.num_nodes() {
            assert!((m.h11.interior[k] - 1.0).abs() < 1e-14);
            assert!((m.h22.interior[k] - 1.0).abs() < 1e-14);
            assert!(m.h12.interior[k].abs() < 1e-14);
            assert!((m.w.interior[k] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn clifford_torus_metric() {
        let g = grid(33);
        let x = zoo::make_surface(&zoo::SurfaceSpec::named("clifford_torus", 2)).unwrap();
        let m = metric(x.as_ref(), &g).unwrap();
        for k in 0..g.num_nodes() {
            assert!((m.h11.interior[k] - 0.5).abs() < 1e-13);
            assert!((m.h22.interior[k] - 0.5).abs() < 1e-13);
            assert!(m.h12.interior[k].abs() < 1e-13);
        }
        let rep = check_conformal(&m, 1e-12);
        assert!(rep.conformal);
    }

    #[test]
    fn complex_curve_metric_conformal() {
        let g = grid(33);
        let x = zoo::make_surface(&zoo::SurfaceSpec::named("complex_curve", 2)).unwrap();
        let m = metric(x.as_ref(), &g).unwrap();
        for k in 0..g.num_nodes() {
            let (u, v) = g.node_point(k);
            let expect = 1.0 + 4.0 * (u * u + v * v);
            assert!((m.h11.interior[k] - expect).abs() < 1e-12);
            assert!((m.h22.interior[k] - expect).abs() < 1e-12);
            assert!(m.h12.interior[k].abs() < 1e-12);
        }
        assert!(check_conformal(&m, 1e-12).conformal);
    }

    #[test]
    fn graph_not_conformal() {
        let g = grid(33);
        let x = zoo::make_surface(&zoo::SurfaceSpec::named("scaled_graph", 2)).unwrap();
        let m = metric(x.as_ref(), &g).unwrap();
        let rep = check_conformal(&m, 1e-8);
        assert!(!rep.conformal);
    }

    #[test]
    fn plane_frame_is_standard_basis() {
        let g = grid(33);
        let x = zoo::make_surface(&zoo::SurfaceSpec::named("plane_embed", 2)).unwrap();
        let f = initial_frame(x.as_ref(), &g).unwrap();
        for k in 0..g.num_nodes() {
            let n1 = f.at_node(0, k);
            let n2 = f.at_node(1, k);
            assert!(n1[2].abs() == 1.0 || n1[3].abs() == 1.0);
            assert!((dot(&n1, &n2)).abs() < 1e-14);
        }
        assert!(f.orthonormality_deviation(x.as_ref()) < 1e-12);
    }

    #[test]
    fn frame_orthonormal_on_catalog() {
        let g = grid(17);
        for name in ["clifford_torus", "complex_curve", "lifted_complex_curve"] {
            let n = if name == "lifted_complex_curve" { 3 } else { 2 };
            let x = zoo::make_surface(&zoo::SurfaceSpec::named(name, n)).unwrap();
            let f = initial_frame(x.as_ref(), &g).unwrap();
            let dev = f.orthonormality_deviation(x.as_ref());
            assert!(dev < 1e-10, "{name}: deviation {dev}");
        }
    }

    #[test]
    fn frame_varies_smoothly() {
        let g = grid(33);
        let x = zoo::make_surface(&zoo::SurfaceSpec::named("complex_curve", 2)).unwrap();
        let f = initial_frame(x.as_ref(), &g).unwrap();
        let h = g.spacing();
        let mut max_jump = 0.0f64;
        for k in 0..g.num_nodes() {
            for nb in f.grid.neighbors(k) {
                if let crate::grid::Neighbor::Interior(j) = nb {
                    for s in 0..f.n {
                        let a = f.at_node(s, k);
                        let b = f.at_node(s, *j);
                        let d: f64 = a
                            .iter()
                            .zip(&b)
                            .map(|(x, y)| (x - y) * (x - y))
                            .sum::<f64>()
                            .sqrt();
                        max_jump = max_jump.max(d);
                    }
                }
            }
        }
        assert!(max_jump < 10.0 * h, "jump {max_jump} vs h {h}");
    }

    #[test]
    fn constant_frame_has_zero_torsion() {
        let g = grid(33);
        let x = zoo::make_surface(&zoo::SurfaceSpec::named("plane_embed", 2)).unwrap();
        let f = initial_frame(x.as_ref(), &g).unwrap();
        let t = torsion(&f, &g);
        assert!(t.sup_norm() < 1e-12);
    }

    #[test]
    fn clifford_torus_natural_frame_parallel() {
        let g = grid(33);
        let x = zoo::make_surface(&zoo::SurfaceSpec::named("clifford_torus", 2)).unwrap();
        let f = initial_frame(x.as_ref(), &g).unwrap();
        let t = torsion(&f, &g);
        // the Gram-Schmidt frame on this torus is parallel
        assert!(t.sup_norm() < 1e-10, "sup {}", t.sup_norm());
    }

    #[test]
    fn torsion_of_rotated_flat_frame_is_gradient() {
        // plane with the frame {e3, e4} rotated by alpha = u v:
        // T_{1,1}^2 = alpha_u = v, T_{1,2}^2 = alpha_v = u
        let g = grid(65);
        let h = g.spacing();
        let x = zoo::make_surface(&zoo::SurfaceSpec::named("plane_embed", 2)).unwrap();
        let f0 = initial_frame(x.as_ref(), &g).unwrap();
        let f = crate::functional::rotate_flat_pair(&f0, |u, v| u * v);
        let t = torsion(&f, &g);
        for k in 0..g.num_nodes() {
            let (u, v) = g.node_point(k);
            assert!((t.t[0].u.interior[k] - v).abs() < 20.0 * h * h);
            assert!((t.t[0].v.interior[k] - u).abs() < 20.0 * h * h);
        }
    }

    #[test]
    fn differentiated_orthonormality() {
        let g = grid(33);
        let h = g.spacing();
        let x = zoo::make_surface(&zoo::SurfaceSpec::named("complex_curve", 2)).unwrap();
        let f = initial_frame(x.as_ref(), &g).unwrap();
        // raw inner products: N_{s,i} . N_t + N_{t,i} . N_s should vanish
        let grads: Vec<Vec<VectorField2>> = f
            .vecs
            .iter()
            .map(|comps| comps.iter().map(gradient).collect())
            .collect();
        for k in 0..g.num_nodes() {
            for s in 0..f.n {
                for t in 0..f.n {
                    let mut sum_u = 0.0;
                    for c in 0..f.ambient {
                        sum_u += grads[s][c].u.interior[k] * f.vecs[t][c].interior[k]
                            + grads[t][c].u.interior[k] * f.vecs[s][c].interior[k];
                    }
                    // product-rule error of the discrete gradient is O(h^2)
                    assert!(sum_u.abs() < 20.0 * h * h, "pair ({s},{t}) sum {sum_u}");
                }
            }
        }
    }

    #[test]
    fn plane_second_fundamental_zero() {
        let g = grid(17);
        let x = zoo::make_surface(&zoo::SurfaceSpec::named("plane_embed", 2)).unwrap();
        let f = initial_frame(x.as_ref(), &g).unwrap();
        let l = second_fundamental(x.as_ref(), &f);
        for (l11, l12, l22) in &l.l {
            assert!(l11.sup_norm() < 1e-14);
            assert!(l12.sup_norm() < 1e-14);
            assert!(l22.sup_norm() < 1e-14);
        }
    }

    #[test]
    fn curvature_routes_trivial_cases() {
        let g = grid(33);
        // zero torsion -> zero curvature
        let t = TorsionField::zeros(&g, 3);
        let s = normal_curvature_from_torsion(&t, &g);
        assert!(s.sup_norm() < 1e-15);

        // flat torus: Ricci route vanishes
        let x = zoo::make_surface(&zoo::SurfaceSpec::named("clifford_torus", 2)).unwrap();
        let f = initial_frame(x.as_ref(), &g).unwrap();
        let m = metric(x.as_ref(), &g).unwrap();
        let l = second_fundamental(x.as_ref(), &f);
        let s = normal_curvature_ricci(&l, &m);
        assert!(s.sup_norm() < 1e-12, "sup {}", s.sup_norm());
    }

    #[test]
    fn curvature_route_equivalence_complex_curve() {
        let discrepancy = |m: usize| {
            let g = grid(m);
            let x = zoo::make_surface(&zoo::SurfaceSpec::named("complex_curve", 2)).unwrap();
            let f = initial_frame(x.as_ref(), &g).unwrap();
            let met = metric(x.as_ref(), &g).unwrap();
            let t = torsion(&f, &g);
            let s_conn = normal_curvature_from_torsion(&t, &g);
            let s_ricci = normal_curvature_ricci(&second_fundamental(x.as_ref(), &f), &met);
            let mut d = 0.0f64;
            for k in 0..g.num_nodes() {
                d = d.max((s_conn.s[0].interior[k] - s_ricci.s[0].interior[k]).abs());
            }
            (d, s_ricci.sup_norm())
        };
        let (d33, sup) = discrepancy(33);
        let (d65, _) = discrepancy(65);
        assert!(sup > 0.1, "complex curve should have non-flat bundle");
        assert!(d33 / d65 > 3.5, "refinement ratio {}", d33 / d65);
    }

    #[test]
    fn curvature_gauge_invariance_constant_rotation() {
        let g = grid(33);
        let x = zoo::make_surface(&zoo::SurfaceSpec::named("complex_curve", 2)).unwrap();
        let f = initial_frame(x.as_ref(), &g).unwrap();
        let t = torsion(&f, &g);
        let s0 = normal_curvature_from_torsion(&t, &g);
        let rot = crate::functional::RotationField::constant(&g, &{
            let mut a = nalgebra::DMatrix::zeros(2, 2);
            a[(0, 1)] = 0.7;
            a[(1, 0)] = -0.7;
            crate::functional::so_exp(&a)
        });
        let f2 = crate::functional::apply_gauge(&f, &rot).unwrap();
        let t2 = torsion(&f2, &g);
        let s2 = normal_curvature_from_torsion(&t2, &g);
        // n = 2: the single component is invariant
        let mut d = 0.0f64;
        for k in 0..g.num_nodes() {
            d = d.max((s0.s[0].interior[k] - s2.s[0].interior[k]).abs());
        }
        assert!(d < 1e-9, "gauge deviation {d}");
    }

    #[test]
    fn ricci_bound_holds_on_catalog() {
        let g = grid(33);
        let h = g.spacing();
        for name in ["plane_embed", "clifford_torus", "complex_curve"] {
            let x = zoo::make_surface(&zoo::SurfaceSpec::named(name, 2)).unwrap();
            let f = initial_frame(x.as_ref(), &g).unwrap();
            let m = metric(x.as_ref(), &g).unwrap();
            let l = second_fundamental(x.as_ref(), &f);
            let s = normal_curvature_ricci(&l, &m);
            let rep = ricci_bound_check(&s, &l, &m, 10.0 * h * h);
            assert!(rep.pass, "{name}: excess {}", rep.max_excess);
        }
    }
}
