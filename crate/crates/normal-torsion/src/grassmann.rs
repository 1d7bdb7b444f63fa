//! Potential functions of a critical torsion field, the Grassmann-type
//! vectors G, delta G, S, the nonlinear elliptic system
//! Delta G = -delta G + S, and the structural checks that come with it:
//! the quadratic-growth bound and the flat-case holomorphy lemma.

use crate::error::{Error, Result};
use crate::geometry::{index_pairs, TorsionField};
use crate::grid::{
    gradient, integrate, laplacian, solve_poisson, wirtinger, ComplexField, GridRef, ScalarField,
    VectorField2,
};
use rayon::prelude::*;
use serde::Serialize;

/// Vector of Grassmann type: one scalar field per index pair in U_n,
/// lexicographic order; entries with sigma > theta follow by sign flip and
/// the diagonal is zero.
#[derive(Debug, Clone)]
pub struct GrassmannVector {
    pub grid: GridRef,
    pub n: usize,
    pub pairs: Vec<(usize, usize)>,
    pub g: Vec<ScalarField>,
}

impl GrassmannVector {
    pub fn zeros(grid: &GridRef, n: usize) -> Self {
        let pairs = index_pairs(n);
        let g = pairs.iter().map(|_| ScalarField::zeros(grid)).collect();
        GrassmannVector {
            grid: grid.clone(),
            n,
            pairs,
            g,
        }
    }

    pub fn from_fields(grid: &GridRef, n: usize, g: Vec<ScalarField>) -> Self {
        let pairs = index_pairs(n);
        assert_eq!(pairs.len(), g.len());
        GrassmannVector {
            grid: grid.clone(),
            n,
            pairs,
            g,
        }
    }

    pub fn pair_index(&self, s: usize, t: usize) -> usize {
        debug_assert!(s < t && t < self.n);
        s * self.n - s * (s + 1) / 2 + (t - s - 1)
    }

    /// Component value with the skew sign extension.
    pub fn value(&self, s: usize, t: usize, k: usize) -> f64 {
        if s == t {
            0.0
        } else if s < t {
            self.g[self.pair_index(s, t)].interior[k]
        } else {
            -self.g[self.pair_index(t, s)].interior[k]
        }
    }

    /// Pointwise Euclidean length |G(w)| over the pair components.
    pub fn pointwise_norm(&self) -> ScalarField {
        let mut acc = ScalarField::zeros(&self.grid);
        for f in &self.g {
            acc = acc.add(&f.mul(f));
        }
        acc.map(f64::sqrt)
    }

    /// sup_B |G| with the Euclidean vector norm.
    pub fn sup_norm(&self) -> f64 {
        self.pointwise_norm().sup_norm()
    }

    /// L1 norm of |G| over the disc.
    pub fn l1_norm(&self) -> f64 {
        integrate(&self.pointwise_norm())
    }

    /// L2 norm of |G| over the disc.
    pub fn l2_norm(&self) -> f64 {
        integrate(&self.pointwise_norm().map(|x| x * x))
            .max(0.0)
            .sqrt()
    }

    /// Dirichlet energy: integral of |grad G|^2 over all components.
    pub fn grad_l2_sq(&self) -> f64 {
        let mut acc = ScalarField::zeros(&self.grid);
        for f in &self.g {
            let d = gradient(f);
            acc = acc.add(&d.u.mul(&d.u)).add(&d.v.mul(&d.v));
        }
        integrate(&acc)
    }

    pub fn boundary_trace_norm(&self) -> f64 {
        self.g
            .iter()
            .flat_map(|f| f.boundary.iter())
            .fold(0.0f64, |m, &x| m.max(x.abs()))
    }
}

/// Result of [`build_potentials`]: the potentials plus the per-pair L2
/// discrepancy between grad g and (-T_2, T_1), which vanishes in the
/// continuum exactly when the frame is critical.
#[derive(Debug, Clone)]
pub struct PotentialBuild {
    pub g: GrassmannVector,
    pub consistency: Vec<f64>,
    pub warning: bool,
}

/// Integrates the torsion field into potentials g with grad g = (-T_2, T_1)
/// and g = 0 on the circle, by a Dirichlet Poisson solve of
/// Delta g = d/dv T_1 - d/du T_2.
pub fn build_potentials(
    t: &TorsionField,
    grid: &GridRef,
    el_residual_total: f64,
) -> Result<PotentialBuild> {
    let n = t.n;
    let zeros_bd = vec![0.0; grid.num_cuts()];
    let fields: Result<Vec<ScalarField>> = t
        .t
        .par_iter()
        .map(|v| {
            let du = gradient(&v.u);
            let dv = gradient(&v.v);
            let rhs = du.v.sub(&dv.u);
            solve_poisson(&rhs, &zeros_bd)
        })
        .collect();
    let g = GrassmannVector::from_fields(grid, n, fields?);
    let mut consistency = Vec::with_capacity(g.g.len());
    for (p, f) in g.g.iter().enumerate() {
        let d = gradient(f);
        let eu = d.u.add(&t.t[p].v);
        let ev = d.v.sub(&t.t[p].u);
        consistency.push(integrate(&eu.mul(&eu).add(&ev.mul(&ev))).max(0.0).sqrt());
    }
    let worst = consistency.iter().cloned().fold(0.0f64, f64::max);
    let warning = worst > 10.0 * el_residual_total;
    Ok(PotentialBuild {
        g,
        consistency,
        warning,
    })
}

/// delta g^{(sigma theta)} = sum_omega det(grad g^{(sigma omega)},
/// grad g^{(omega theta)}), with the skew extension of the indices.
pub fn delta_g(g: &GrassmannVector, grid: &GridRef) -> GrassmannVector {
    let n = g.n;
    let grads: Vec<VectorField2> = g.g.iter().map(gradient).collect();
    let comp = |a: usize, b: usize, k: usize| -> (f64, f64) {
        if a == b {
            (0.0, 0.0)
        } else if a < b {
            let p = g.pair_index(a, b);
            (grads[p].u.interior[k], grads[p].v.interior[k])
        } else {
            let p = g.pair_index(b, a);
            (-grads[p].u.interior[k], -grads[p].v.interior[k])
        }
    };
    let mut out = GrassmannVector::zeros(grid, n);
    for (p, &(sg, th)) in out.pairs.clone().iter().enumerate() {
        for k in 0..grid.num_nodes() {
            let mut acc = 0.0;
            for om in 0..n {
                let (au, av) = comp(sg, om, k);
                let (bu, bv) = comp(om, th, k);
                acc += au * bv - av * bu;
            }
            out.g[p].interior[k] = acc;
        }
        out.g[p].extrapolate_boundary();
    }
    out
}

/// L2 residual of Delta G + delta G - S over the disc, plus the sup of the
/// boundary trace of G (the system demands a zero trace).
pub fn system_residual(g: &GrassmannVector, s: &GrassmannVector, grid: &GridRef) -> f64 {
    let dg = delta_g(g, grid);
    let mut acc = ScalarField::zeros(grid);
    for p in 0..g.g.len() {
        let r = laplacian(&g.g[p]).add(&dg.g[p]).sub(&s.g[p]);
        acc = acc.add(&r.mul(&r));
    }
    integrate(&acc).max(0.0).sqrt() + g.boundary_trace_norm()
}

#[derive(Debug, Clone)]
pub struct PicardOptions {
    pub max_picard: usize,
    pub tol: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions {
            max_picard: 500,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SystemReport {
    /// sup |G_k| after each Picard update.
    pub sup_history: Vec<f64>,
    /// sup |G_k - G_{k-1}| per update.
    pub diff_history: Vec<f64>,
    /// Empirical contraction: the last ratio of successive differences.
    pub contraction: Option<f64>,
    /// A-priori bound (sqrt(N)/4) ||S||_inf / (1 - q) using the measured q.
    pub apriori_bound: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Picard iteration for Delta G = -delta G + S with zero boundary trace,
/// starting from G = 0. Errors out when the iterates leave the smallness
/// regime in which the fixed point is expected to exist.
pub fn solve_system(
    s: &GrassmannVector,
    grid: &GridRef,
    opts: &PicardOptions,
) -> Result<(GrassmannVector, SystemReport)> {
    let n = s.n;
    let ncomp = s.g.len();
    let zeros_bd = vec![0.0; grid.num_cuts()];
    let s_sup = s.sup_norm();
    let guard = 10.0 * ((ncomp as f64).sqrt() / 4.0) * s_sup + 10.0;

    let mut g = GrassmannVector::zeros(grid, n);
    let mut report = SystemReport {
        sup_history: Vec::new(),
        diff_history: Vec::new(),
        contraction: None,
        apriori_bound: None,
        iterations: 0,
        converged: false,
    };

    for k in 0..opts.max_picard {
        let dg = delta_g(&g, grid);
        let fields: Result<Vec<ScalarField>> = (0..ncomp)
            .into_par_iter()
            .map(|p| solve_poisson(&s.g[p].sub(&dg.g[p]), &zeros_bd))
            .collect();
        let next = GrassmannVector::from_fields(grid, n, fields?);
        let mut diff = 0.0f64;
        for p in 0..ncomp {
            diff = diff.max(next.g[p].sub(&g.g[p]).sup_norm());
        }
        g = next;
        report.iterations = k + 1;
        let sup = g.sup_norm();
        report.sup_history.push(sup);
        report.diff_history.push(diff);
        if sup > guard || !sup.is_finite() {
            return Err(Error::SmallnessViolated {
                k: k + 1,
                sup,
                history: report.sup_history,
            });
        }
        // for n = 2 the nonlinearity vanishes identically and the first
        // solve is already the fixed point
        if n == 2 || diff < opts.tol {
            report.converged = true;
            break;
        }
    }
    let m = report.diff_history.len();
    if m >= 2 && report.diff_history[m - 2] > 0.0 {
        let q = report.diff_history[m - 1] / report.diff_history[m - 2];
        report.contraction = Some(q);
        if q < 1.0 {
            report.apriori_bound =
                Some(((ncomp as f64).sqrt() / 4.0) * s_sup / (1.0 - q));
        }
    }
    Ok((g, report))
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    /// Worst violation of |delta G|^2 <= (n-2) |G_u|^2 |G_v|^2 (exact
    /// algebraic inequality; positive excess means violation).
    pub lagrange_excess: f64,
    /// Worst violation of |Delta G| <= (sqrt(n-2)/2) |grad G|^2 + |S| with
    /// the O(h^2) discretization slack already subtracted.
    pub laplace_excess: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Discretization slack for pointwise inequality checks.
pub fn h2_slack(grid: &GridRef) -> f64 {
    let h = grid.spacing();
    10.0 * h * h
}

/// Verifies the quadratic-growth chain: the Lagrange-identity estimate
/// |delta G|^2 <= (n-2)|G_u|^2|G_v|^2 pointwise, and the resulting
/// |Delta G| <= (sqrt(n-2)/2)|grad G|^2 + |S| on a solved system.
pub fn quadratic_growth_check(
    g: &GrassmannVector,
    s: &GrassmannVector,
    grid: &GridRef,
) -> GrowthReport {
    let n = g.n;
    let nf = (n as f64 - 2.0).max(0.0);
    let dg = delta_g(g, grid);
    let grads: Vec<VectorField2> = g.g.iter().map(gradient).collect();

    let mut lagrange_excess = f64::NEG_INFINITY;
    let mut laplace_excess = f64::NEG_INFINITY;
    let slack = h2_slack(grid);
    for k in 0..grid.num_nodes() {
        let mut dg2 = 0.0;
        let mut gu2 = 0.0;
        let mut gv2 = 0.0;
        let mut lap2 = 0.0;
        let mut s2 = 0.0;
        for p in 0..g.g.len() {
            dg2 += dg.g[p].interior[k] * dg.g[p].interior[k];
            gu2 += grads[p].u.interior[k] * grads[p].u.interior[k];
            gv2 += grads[p].v.interior[k] * grads[p].v.interior[k];
            s2 += s.g[p].interior[k] * s.g[p].interior[k];
            let l = laplacian(&g.g[p]).interior[k];
            lap2 += l * l;
        }
        lagrange_excess = lagrange_excess.max(dg2 - nf * gu2 * gv2);
        let bound = nf.sqrt() / 2.0 * (gu2 + gv2) + s2.sqrt();
        laplace_excess = laplace_excess.max(lap2.sqrt() - bound - slack);
    }
    GrowthReport {
        lagrange_excess,
        laplace_excess,
        slack,
        pass: lagrange_excess <= 0.0 && laplace_excess <= 0.0,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HolomorphyReport {
    /// sup |f| for f = G_w . G_w^t.
    pub f_sup: f64,
    /// sup |d/dwbar f| over the interior.
    pub fwbar_sup: f64,
    /// sup |Im(w^2 f)| over the boundary trace.
    pub boundary_imag_sup: f64,
}

/// Flat-case lemma diagnostic: f(w) = G_w . G_w^t should be holomorphic in
/// B with Im(w^2 f) = 0 on the circle, and vanish identically when the
/// normal bundle is flat.
pub fn flat_holomorphy_check(g: &GrassmannVector, grid: &GridRef) -> HolomorphyReport {
    // f = sum over components of (g_w)^2
    let mut f_re = ScalarField::zeros(grid);
    let mut f_im = ScalarField::zeros(grid);
    for comp in &g.g {
        let cf = ComplexField {
            re: comp.clone(),
            im: ScalarField::zeros(grid),
        };
        let gw = wirtinger(&cf, false);
        f_re = f_re.add(&gw.re.mul(&gw.re)).sub(&gw.im.mul(&gw.im));
        f_im = f_im.add(&gw.re.mul(&gw.im).scale(2.0));
    }
    let f = ComplexField {
        re: f_re,
        im: f_im,
    };
    let f_sup = f.sup_norm();

    let re_wbar = wirtinger(
        &ComplexField {
            re: f.re.clone(),
            im: ScalarField::zeros(grid),
        },
        true,
    );
    let im_wbar = wirtinger(
        &ComplexField {
            re: f.im.clone(),
            im: ScalarField::zeros(grid),
        },
        true,
    );
    let fwbar = ComplexField {
        re: re_wbar.re.sub(&im_wbar.im),
        im: re_wbar.im.add(&im_wbar.re),
    };

    let mut boundary_imag_sup = 0.0f64;
    for (ci, cut) in grid.cuts().iter().enumerate() {
        let (u, v) = cut.point;
        // w^2 = (u^2 - v^2) + 2iuv
        let (a, b) = (u * u - v * v, 2.0 * u * v);
        let (fr, fi) = (f.re.boundary[ci], f.im.boundary[ci]);
        boundary_imag_sup = boundary_imag_sup.max((a * fi + b * fr).abs());
    }
    HolomorphyReport {
        f_sup,
        fwbar_sup: fwbar.sup_norm(),
        boundary_imag_sup,
    }
}
