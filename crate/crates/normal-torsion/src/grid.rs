//! Discrete substrate on the closed unit disc: masked Cartesian grid with
//! Shortley-Weller cut-cell stencils, quadrature, a Dirichlet Poisson solver,
//! and Green's-function utilities.

use crate::error::{Error, Result};
use std::sync::Arc;

/// Axis directions of the four-point neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    East,
    West,
    North,
    South,
}

pub const DIRS: [Dir; 4] = [Dir::East, Dir::West, Dir::North, Dir::South];

impl Dir {
    pub fn offset(self) -> (i64, i64) {
        match self {
            Dir::East => (1, 0),
            Dir::West => (-1, 0),
            Dir::North => (0, 1),
            Dir::South => (0, -1),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Dir::East => 0,
            Dir::West => 1,
            Dir::North => 2,
            Dir::South => 3,
        }
    }
}

/// Neighbor of an interior node in one axis direction: either another
/// interior node or a point where the grid line crosses the unit circle.
#[derive(Debug, Clone, Copy)]
pub enum Neighbor {
    Interior(usize),
    Cut(usize),
}

/// A point where a grid line through an interior node meets the unit circle.
/// Dirichlet traces are stored at these points.
#[derive(Debug, Clone)]
pub struct Cut {
    /// Interior node owning this cut.
    pub node: usize,
    pub dir: Dir,
    /// Fractional distance to the circle along the axis, in (0, 1].
    pub theta: f64,
    /// Location on the unit circle.
    pub point: (f64, f64),
    /// Polar angle of `point`.
    pub angle: f64,
    /// Arc-length quadrature weight for boundary integrals.
    pub arc_weight: f64,
}

/// Uniform grid on [-1,1]^2 masked to the open unit disc.
#[derive(Debug)]
pub struct DiscGrid {
    m: usize,
    h: f64,
    /// (i,j) lattice index -> interior node index.
    node_index: Vec<Option<usize>>,
    /// Interior node index -> (i,j).
    nodes: Vec<(usize, usize)>,
    neighbors: Vec<[Neighbor; 4]>,
    cuts: Vec<Cut>,
    /// Node-centered quadrature weights, cells clipped by the cut fractions.
    weights: Vec<f64>,
}

pub type GridRef = Arc<DiscGrid>;

impl DiscGrid {
    /// Builds the disc grid with `m` nodes per axis. `m` must be odd and >= 9
    /// so the origin is a node and the stencils have room to breathe.
    pub fn build(m: usize) -> Result<GridRef> {
        if m < 9 {
            return Err(Error::Grid(format!("grid resolution M={m} too small, need M >= 9")));
        }
        if m % 2 == 0 {
            return Err(Error::Grid(format!("grid resolution M={m} must be odd")));
        }
        let h = 2.0 / (m - 1) as f64;
        let coord = |i: usize| -1.0 + i as f64 * h;

        let mut node_index = vec![None; m * m];
        let mut nodes = Vec::new();
        for j in 0..m {
            for i in 0..m {
                let (u, v) = (coord(i), coord(j));
                if u * u + v * v < 1.0 {
                    node_index[j * m + i] = Some(nodes.len());
                    nodes.push((i, j));
                }
            }
        }

        let mut neighbors = Vec::with_capacity(nodes.len());
        let mut cuts: Vec<Cut> = Vec::new();
        for &(i, j) in &nodes {
            let (u, v) = (coord(i), coord(j));
            let mut nb = [Neighbor::Interior(usize::MAX); 4];
            for dir in DIRS {
                let (di, dj) = dir.offset();
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                let inside = ni >= 0
                    && nj >= 0
                    && (ni as usize) < m
                    && (nj as usize) < m
                    && node_index[nj as usize * m + ni as usize].is_some();
                if inside {
                    nb[dir.index()] =
                        Neighbor::Interior(node_index[nj as usize * m + ni as usize].unwrap());
                } else {
                    // distance to the circle along this axis
                    let t = match dir {
                        Dir::East => (1.0 - v * v).sqrt() - u,
                        Dir::West => (1.0 - v * v).sqrt() + u,
                        Dir::North => (1.0 - u * u).sqrt() - v,
                        Dir::South => (1.0 - u * u).sqrt() + v,
                    };
                    let theta = (t / h).clamp(1e-12, 1.0);
                    let point = match dir {
                        Dir::East => (u + theta * h, v),
                        Dir::West => (u - theta * h, v),
                        Dir::North => (u, v + theta * h),
                        Dir::South => (u, v - theta * h),
                    };
                    nb[dir.index()] = Neighbor::Cut(cuts.len());
                    cuts.push(Cut {
                        node: node_index[j * m + i].unwrap(),
                        dir,
                        theta,
                        point,
                        angle: point.1.atan2(point.0),
                        arc_weight: 0.0,
                    });
                }
            }
            neighbors.push(nb);
        }

        // Arc-length weights: half-distance to the angular neighbors on the circle.
        let mut order: Vec<usize> = (0..cuts.len()).collect();
        order.sort_by(|&a, &b| cuts[a].angle.total_cmp(&cuts[b].angle));
        let k = order.len();
        for p in 0..k {
            let prev = cuts[order[(p + k - 1) % k]].angle;
            let next = cuts[order[(p + 1) % k]].angle;
            let gap = (next - prev).rem_euclid(2.0 * std::f64::consts::PI);
            cuts[order[p]].arc_weight = gap / 2.0;
        }

        // Cell quadrature: the node-centered cell reaches h/2 towards each
        // neighbor and is clipped where the circle comes closer than that.
        let mut weights = Vec::with_capacity(nodes.len());
        for nb in &neighbors {
            let frac = |n: &Neighbor| match n {
                Neighbor::Interior(_) => 0.5,
                Neighbor::Cut(c) => cuts[*c].theta,
            };
            let cov_u = frac(&nb[0]) + frac(&nb[1]);
            let cov_v = frac(&nb[2]) + frac(&nb[3]);
            weights.push(h * h * cov_u * cov_v);
        }

        Ok(Arc::new(DiscGrid {
            m,
            h,
            node_index,
            nodes,
            neighbors,
            cuts,
            weights,
        }))
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_cuts(&self) -> usize {
        self.cuts.len()
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn neighbors(&self, node: usize) -> &[Neighbor; 4] {
        &self.neighbors[node]
    }

    /// Coordinates of interior node `idx`.
    pub fn node_point(&self, idx: usize) -> (f64, f64) {
        let (i, j) = self.nodes[idx];
        (-1.0 + i as f64 * self.h, -1.0 + j as f64 * self.h)
    }

    pub fn node_at(&self, i: usize, j: usize) -> Option<usize> {
        self.node_index[j * self.m + i]
    }

    pub fn lattice(&self, idx: usize) -> (usize, usize) {
        self.nodes[idx]
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Spacing and field value towards `dir`, reading cut traces where the
    /// circle intersects.
    fn axis_sample(&self, f: &ScalarField, node: usize, dir: Dir) -> (f64, f64) {
        match self.neighbors[node][dir.index()] {
            Neighbor::Interior(k) => (self.h, f.interior[k]),
            Neighbor::Cut(c) => (self.cuts[c].theta * self.h, f.boundary[c]),
        }
    }
}

/// Real-valued field on the masked nodes plus boundary trace at cut points.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: GridRef,
    /// Values at interior nodes.
    pub interior: Vec<f64>,
    /// Trace at the cut points of the grid (one value per cut).
    pub boundary: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &GridRef) -> Self {
        ScalarField {
            grid: grid.clone(),
            interior: vec![0.0; grid.num_nodes()],
            boundary: vec![0.0; grid.num_cuts()],
        }
    }

    /// Samples a function at interior nodes and at the boundary cut points.
    pub fn from_fn(grid: &GridRef, f: impl Fn(f64, f64) -> f64) -> Self {
        let interior = (0..grid.num_nodes())
            .map(|k| {
                let (u, v) = grid.node_point(k);
                f(u, v)
            })
            .collect();
        let boundary = grid.cuts().iter().map(|c| f(c.point.0, c.point.1)).collect();
        ScalarField {
            grid: grid.clone(),
            interior,
            boundary,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            interior: self.interior.iter().map(|&x| f(x)).collect(),
            boundary: self.boundary.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            interior: self
                .interior
                .iter()
                .zip(&other.interior)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            boundary: self
                .boundary
                .iter()
                .zip(&other.boundary)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|x| s * x)
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> Self {
        self.zip(other, |a, b| a * b)
    }

    /// Sup norm over interior nodes.
    pub fn sup_norm(&self) -> f64 {
        self.interior.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    /// L2 norm via the disc quadrature.
    pub fn l2_norm(&self) -> f64 {
        integrate(&self.map(|x| x * x)).max(0.0).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.interior.iter().all(|x| x.is_finite()) && self.boundary.iter().all(|x| x.is_finite())
    }

    /// Fills the boundary trace by one-sided quadratic extrapolation of the
    /// interior values along the axis of each cut.
    pub fn extrapolate_boundary(&mut self) {
        let grid = self.grid.clone();
        for (ci, cut) in grid.cuts().iter().enumerate() {
            self.boundary[ci] = extrapolate_cut(&grid, &self.interior, cut);
        }
    }
}

/// Interior nodes and Lagrange weights whose combination extrapolates a
/// field to the cut point: up to quadratic order along the cut axis.
pub fn extrapolation_stencil(grid: &DiscGrid, cut: &Cut) -> Vec<(usize, f64)> {
    let (di, dj) = cut.dir.offset();
    let (mut i, mut j) = grid.lattice(cut.node);
    let mut pts: Vec<(f64, usize)> = vec![(0.0, cut.node)];
    for step in 1..=2i64 {
        let (ni, nj) = (i as i64 - di, j as i64 - dj);
        if ni < 0 || nj < 0 || ni as usize >= grid.resolution() || nj as usize >= grid.resolution() {
            break;
        }
        match grid.node_at(ni as usize, nj as usize) {
            Some(k) => {
                pts.push((-(step as f64) * grid.spacing(), k));
                i = ni as usize;
                j = nj as usize;
            }
            None => break,
        }
    }
    let x = cut.theta * grid.spacing();
    match pts.len() {
        1 => vec![(pts[0].1, 1.0)],
        2 => {
            let s = (x - pts[0].0) / (pts[0].0 - pts[1].0);
            vec![(pts[0].1, 1.0 + s), (pts[1].1, -s)]
        }
        _ => {
            // quadratic Lagrange through three points
            let mut out = Vec::with_capacity(3);
            for a in 0..3 {
                let (xa, k) = pts[a];
                let mut l = 1.0;
                for b in 0..3 {
                    if a != b {
                        l *= (x - pts[b].0) / (xa - pts[b].0);
                    }
                }
                out.push((k, l));
            }
            out
        }
    }
}

fn extrapolate_cut(grid: &DiscGrid, interior: &[f64], cut: &Cut) -> f64 {
    extrapolation_stencil(grid, cut)
        .iter()
        .map(|&(k, w)| w * interior[k])
        .sum()
}

/// Pair of scalar fields sharing one grid: components along u and v.
#[derive(Debug, Clone)]
pub struct VectorField2 {
    pub u: ScalarField,
    pub v: ScalarField,
}

/// Second-order gradient: nonuniform central differences using cut
/// distances at the boundary. The trace of the result is extrapolated.
pub fn gradient(f: &ScalarField) -> VectorField2 {
    let grid = &f.grid;
    let mut gu = ScalarField::zeros(grid);
    let mut gv = ScalarField::zeros(grid);
    for k in 0..grid.num_nodes() {
        let (he, fe) = grid.axis_sample(f, k, Dir::East);
        let (hw, fw) = grid.axis_sample(f, k, Dir::West);
        let (hn, fn_) = grid.axis_sample(f, k, Dir::North);
        let (hs, fs) = grid.axis_sample(f, k, Dir::South);
        let fc = f.interior[k];
        gu.interior[k] = (fe * hw * hw - fw * he * he + fc * (he * he - hw * hw))
            / (hw * he * (hw + he));
        gv.interior[k] = (fn_ * hs * hs - fs * hn * hn + fc * (hn * hn - hs * hs))
            / (hs * hn * (hs + hn));
    }
    gu.extrapolate_boundary();
    gv.extrapolate_boundary();
    VectorField2 { u: gu, v: gv }
}

/// Five-point Laplacian with Shortley-Weller correction at cut cells.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let grid = &f.grid;
    let mut out = ScalarField::zeros(grid);
    for k in 0..grid.num_nodes() {
        let (he, fe) = grid.axis_sample(f, k, Dir::East);
        let (hw, fw) = grid.axis_sample(f, k, Dir::West);
        let (hn, fn_) = grid.axis_sample(f, k, Dir::North);
        let (hs, fs) = grid.axis_sample(f, k, Dir::South);
        let fc = f.interior[k];
        out.interior[k] = 2.0 * (fw / (hw * (hw + he)) + fe / (he * (hw + he)) - fc / (hw * he))
            + 2.0 * (fs / (hs * (hs + hn)) + fn_ / (hn * (hs + hn)) - fc / (hs * hn));
    }
    out.extrapolate_boundary();
    out
}

/// Quadrature over the disc with boundary-clipped cell weights.
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid
        .quad_weights()
        .iter()
        .zip(&f.interior)
        .map(|(w, x)| w * x)
        .sum()
}

/// Line integral over the unit circle of a trace sampled at the cut points.
pub fn boundary_integral(grid: &DiscGrid, trace: &[f64]) -> f64 {
    grid.cuts()
        .iter()
        .zip(trace)
        .map(|(c, t)| c.arc_weight * t)
        .sum()
}

/// Samples V . nu at the cut points (nu the outer unit normal of the circle)
/// and returns the trace together with its L2(dB) norm.
pub fn boundary_flux(v: &VectorField2) -> (Vec<f64>, f64) {
    let grid = &v.u.grid;
    let trace: Vec<f64> = grid
        .cuts()
        .iter()
        .enumerate()
        .map(|(ci, c)| v.u.boundary[ci] * c.point.0 + v.v.boundary[ci] * c.point.1)
        .collect();
    let sq: Vec<f64> = trace.iter().map(|t| t * t).collect();
    let norm = boundary_integral(grid, &sq).max(0.0).sqrt();
    (trace, norm)
}

/// Discrete interior divergence of a vector field, via the gradient stencils.
pub fn divergence(v: &VectorField2) -> ScalarField {
    let gu = gradient(&v.u);
    let gv = gradient(&v.v);
    let mut out = gu.u.add(&gv.v);
    out.extrapolate_boundary();
    out
}

const SOR_TOL: f64 = 1e-10;

/// Solves Delta u = rhs in B with u = dirichlet on the circle (trace given at
/// cut points), by SOR sweeps over the Shortley-Weller system.
pub fn solve_poisson(rhs: &ScalarField, dirichlet: &[f64]) -> Result<ScalarField> {
    let grid = rhs.grid.clone();
    assert_eq!(dirichlet.len(), grid.num_cuts());
    let n = grid.num_nodes();
    let h = grid.spacing();

    // Per-node stencil: coefficient and either interior index or folded bc term.
    struct Row {
        diag: f64,
        terms: Vec<(usize, f64)>,
        b: f64,
    }
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let nb = grid.neighbors(k);
        let len = |d: Dir| match nb[d.index()] {
            Neighbor::Interior(_) => h,
            Neighbor::Cut(c) => grid.cuts()[c].theta * h,
        };
        let (he, hw, hn, hs) = (len(Dir::East), len(Dir::West), len(Dir::North), len(Dir::South));
        let coeff = |d: Dir| match d {
            Dir::East => 2.0 / (he * (hw + he)),
            Dir::West => 2.0 / (hw * (hw + he)),
            Dir::North => 2.0 / (hn * (hs + hn)),
            Dir::South => 2.0 / (hs * (hs + hn)),
        };
        let mut b = rhs.interior[k];
        let mut terms = Vec::with_capacity(4);
        for d in DIRS {
            match nb[d.index()] {
                Neighbor::Interior(j) => terms.push((j, coeff(d))),
                Neighbor::Cut(c) => b -= coeff(d) * dirichlet[c],
            }
        }
        rows.push(Row {
            diag: 2.0 / (hw * he) + 2.0 / (hs * hn),
            terms,
            b,
        });
    }

    let b_norm: f64 = rows.iter().map(|r| r.b * r.b).sum::<f64>().sqrt();
    let mut u = vec![0.0; n];
    if b_norm == 0.0 {
        let mut out = ScalarField::zeros(&grid);
        out.boundary.copy_from_slice(dirichlet);
        return Ok(out);
    }

    let omega = 2.0 / (1.0 + (std::f64::consts::PI * h / 2.0).sin());
    let max_iters = 20 * grid.resolution() * grid.resolution();
    let mut history = Vec::new();
    let mut sweep = 0;
    loop {
        for (k, row) in rows.iter().enumerate() {
            let mut s = row.b;
            for &(j, c) in &row.terms {
                s += c * u[j];
            }
            // row equation: sum(c u_j) - diag u_k = b  =>  u_k = (s_without_b ... )
            let unew = (s - 2.0 * row.b) / row.diag; // s = b + sum, want (sum - b)/diag
            u[k] += omega * (unew - u[k]);
        }
        sweep += 1;
        if sweep % 16 == 0 || sweep >= max_iters {
            let mut res = 0.0;
            for (k, row) in rows.iter().enumerate() {
                let mut s = -row.diag * u[k];
                for &(j, c) in &row.terms {
                    s += c * u[j];
                }
                let r = s - row.b;
                res += r * r;
            }
            let rel = res.sqrt() / b_norm;
            history.push(rel);
            if rel < SOR_TOL {
                break;
            }
            if sweep >= max_iters {
                return Err(Error::PoissonDiverged {
                    sweeps: sweep,
                    history,
                });
            }
        }
    }

    let mut out = ScalarField::zeros(&grid);
    out.interior = u;
    out.boundary.copy_from_slice(dirichlet);
    Ok(out)
}

/// Green's function of the Laplacian on the unit disc,
/// phi(zeta; w) = (1/2pi) log |zeta - w| - (1/2pi) log |1 - conj(w) zeta| <= 0.
pub fn green_function(zeta: (f64, f64), w: (f64, f64)) -> Result<f64> {
    let dx = zeta.0 - w.0;
    let dy = zeta.1 - w.1;
    let d = (dx * dx + dy * dy).sqrt();
    if d < 1e-14 {
        return Err(Error::Grid("green_function: coincident points".into()));
    }
    // 1 - conj(w) zeta with w, zeta as complex numbers
    let re = 1.0 - (w.0 * zeta.0 + w.1 * zeta.1);
    let im = w.1 * zeta.0 - w.0 * zeta.1;
    let q = (re * re + im * im).sqrt();
    Ok((d.ln() - q.ln()) / (2.0 * std::f64::consts::PI))
}

/// Complex field as a pair of real fields.
#[derive(Debug, Clone)]
pub struct ComplexField {
    pub re: ScalarField,
    pub im: ScalarField,
}

impl ComplexField {
    pub fn sup_norm(&self) -> f64 {
        self.re
            .interior
            .iter()
            .zip(&self.im.interior)
            .fold(0.0f64, |m, (&a, &b)| m.max((a * a + b * b).sqrt()))
    }
}

/// Wirtinger derivative in the convention f_w = f_u - i f_v and
/// f_wbar = f_u + i f_v (so that f_w wbar = Delta f).
pub fn wirtinger(f: &ComplexField, conjugate: bool) -> ComplexField {
    let gre = gradient(&f.re);
    let gim = gradient(&f.im);
    if conjugate {
        ComplexField {
            re: gre.u.sub(&gim.v),
            im: gim.u.add(&gre.v),
        }
    } else {
        ComplexField {
            re: gre.u.add(&gim.v),
            im: gim.u.sub(&gre.v),
        }
    }
}

/// CSV export: header `u,v,value`, one row per interior node.
pub fn write_csv(field: &ScalarField, path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "u,v,value")?;
    for k in 0..field.grid.num_nodes() {
        let (u, v) = field.grid.node_point(k);
        writeln!(out, "{:.16e},{:.16e},{:.16e}", u, v, field.interior[k])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(m: usize) -> GridRef {
        DiscGrid::build(m).unwrap()
    }

    #[test]
    fn build_rejects_even_and_small() {
        assert!(DiscGrid::build(8).is_err());
        assert!(DiscGrid::build(7).is_err());
        assert!(DiscGrid::build(9).is_ok());
    }

    #[test]
    fn origin_interior_corners_exterior() {
        let g = grid(9);
        assert!(g.node_at(4, 4).is_some());
        assert!(g.node_at(0, 0).is_none());
        assert!(g.node_at(8, 8).is_none());
    }

    #[test]
    fn interior_count_near_disc_area() {
        let g = grid(65);
        let h = g.spacing();
        let expected = std::f64::consts::PI / (h * h);
        let count = g.num_nodes() as f64;
        assert!((count - expected).abs() / expected < 0.01, "count {count} vs {expected}");
    }

    #[test]
    fn every_node_has_neighbor_or_cut() {
        let g = grid(33);
        for k in 0..g.num_nodes() {
            for d in DIRS {
                match g.neighbors(k)[d.index()] {
                    Neighbor::Interior(_) => {}
                    Neighbor::Cut(c) => {
                        let t = g.cuts()[c].theta;
                        assert!(t > 0.0 && t <= 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn quadrature_weights_nonneg_and_sum_to_area() {
        for m in [33, 65] {
            let g = grid(m);
            assert!(g.quad_weights().iter().all(|&w| w >= 0.0));
            let sum: f64 = g.quad_weights().iter().sum();
            let h = g.spacing();
            assert!(
                (sum - std::f64::consts::PI).abs() < 10.0 * h * h,
                "M={m}: area {sum}"
            );
        }
    }

    #[test]
    fn gradient_of_linear_field() {
        let g = grid(33);
        let f = ScalarField::from_fn(&g, |u, _| u);
        let grad = gradient(&f);
        for k in 0..g.num_nodes() {
            assert!((grad.u.interior[k] - 1.0).abs() < 1e-11);
            assert!(grad.v.interior[k].abs() < 1e-11);
        }
    }

    #[test]
    fn gradient_of_radius_squared() {
        let g = grid(33);
        let h = g.spacing();
        let f = ScalarField::from_fn(&g, |u, v| u * u + v * v);
        let grad = gradient(&f);
        for k in 0..g.num_nodes() {
            let (u, v) = g.node_point(k);
            assert!((grad.u.interior[k] - 2.0 * u).abs() < 10.0 * h * h);
            assert!((grad.v.interior[k] - 2.0 * v).abs() < 10.0 * h * h);
        }
    }

    #[test]
    fn gradient_second_order_convergence() {
        let err = |m: usize| {
            let g = grid(m);
            let f = ScalarField::from_fn(&g, |u, v| u.sin() * v.cos());
            let grad = gradient(&f);
            let mut e = 0.0f64;
            for k in 0..g.num_nodes() {
                let (u, v) = g.node_point(k);
                e = e.max((grad.u.interior[k] - u.cos() * v.cos()).abs());
                e = e.max((grad.v.interior[k] + u.sin() * v.sin()).abs());
            }
            e
        };
        let ratio = err(33) / err(65);
        assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio}");
    }

    #[test]
    fn laplacian_of_polynomials() {
        let g = grid(33);
        let f = ScalarField::from_fn(&g, |u, v| u * u + v * v);
        let lap = laplacian(&f);
        for k in 0..g.num_nodes() {
            assert!((lap.interior[k] - 4.0).abs() < 1e-9, "{}", lap.interior[k]);
        }
        let lin = ScalarField::from_fn(&g, |u, _| u);
        let lap = laplacian(&lin);
        for k in 0..g.num_nodes() {
            assert!(lap.interior[k].abs() < 1e-9);
        }
    }

    #[test]
    fn laplacian_of_psi_is_one() {
        let g = grid(65);
        let h = g.spacing();
        let f = ScalarField::from_fn(&g, |u, v| (u * u + v * v - 1.0) / 4.0);
        let lap = laplacian(&f);
        for k in 0..g.num_nodes() {
            assert!((lap.interior[k] - 1.0).abs() < 10.0 * h * h);
        }
    }

    #[test]
    fn integrate_basics() {
        let g = grid(65);
        let h = g.spacing();
        let one = ScalarField::from_fn(&g, |_, _| 1.0);
        assert!((integrate(&one) - std::f64::consts::PI).abs() < 10.0 * h * h);
        let odd = ScalarField::from_fn(&g, |u, _| u);
        assert!(integrate(&odd).abs() < 10.0 * h * h);
        let r2 = ScalarField::from_fn(&g, |u, v| u * u + v * v);
        assert!((integrate(&r2) - std::f64::consts::PI / 2.0).abs() < 10.0 * h * h);
    }

    #[test]
    fn integrate_linear_and_monotone() {
        let g = grid(33);
        let f = ScalarField::from_fn(&g, |u, v| u * v + 0.3);
        let q = ScalarField::from_fn(&g, |u, v| (u + v).cos());
        let a = 1.7;
        let lin = integrate(&f.scale(a).add(&q));
        assert!((lin - (a * integrate(&f) + integrate(&q))).abs() < 1e-12);
        // monotone: f <= f + |q|
        let bigger = f.add(&q.map(f64::abs));
        assert!(integrate(&f) <= integrate(&bigger) + 1e-15);
    }

    #[test]
    fn boundary_flux_examples() {
        let g = grid(65);
        let radial = VectorField2 {
            u: ScalarField::from_fn(&g, |u, _| u),
            v: ScalarField::from_fn(&g, |_, v| v),
        };
        let (trace, norm) = boundary_flux(&radial);
        for t in &trace {
            assert!((t - 1.0).abs() < 1e-12);
        }
        assert!((norm - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-8);

        let tangential = VectorField2 {
            u: ScalarField::from_fn(&g, |_, v| -v),
            v: ScalarField::from_fn(&g, |u, _| u),
        };
        let (trace, norm) = boundary_flux(&tangential);
        for t in &trace {
            assert!(t.abs() < 1e-12);
        }
        assert!(norm < 1e-12);
    }

    #[test]
    fn boundary_flux_of_psi_gradient() {
        let g = grid(65);
        let psi = ScalarField::from_fn(&g, |u, v| (u * u + v * v - 1.0) / 4.0);
        let grad = gradient(&psi);
        let (trace, _) = boundary_flux(&grad);
        for t in &trace {
            assert!((t - 0.5).abs() < 5e-3, "flux {t}");
        }
    }

    #[test]
    fn poisson_rhs_one() {
        let g = grid(65);
        let h = g.spacing();
        let rhs = ScalarField::from_fn(&g, |_, _| 1.0);
        let sol = solve_poisson(&rhs, &vec![0.0; g.num_cuts()]).unwrap();
        for k in 0..g.num_nodes() {
            let (u, v) = g.node_point(k);
            let exact = (u * u + v * v - 1.0) / 4.0;
            assert!((sol.interior[k] - exact).abs() < 10.0 * h * h);
        }
    }

    #[test]
    fn poisson_zero_is_zero() {
        let g = grid(33);
        let rhs = ScalarField::zeros(&g);
        let sol = solve_poisson(&rhs, &vec![0.0; g.num_cuts()]).unwrap();
        assert!(sol.sup_norm() < 1e-14);
    }

    #[test]
    fn poisson_laplacian_round_trip() {
        let g = grid(33);
        let h = g.spacing();
        let f = ScalarField::from_fn(&g, |u, v| (1.0 - u * u - v * v) * (u * 2.0).sin());
        let lap = laplacian(&f);
        let sol = solve_poisson(&lap, &f.boundary.clone()).unwrap();
        let err = sol.sub(&f).sup_norm();
        assert!(err < 20.0 * h * h, "round trip err {err}");
    }

    #[test]
    fn green_function_basics() {
        let phi = green_function((0.3, 0.2), (0.0, 0.0)).unwrap();
        let r = (0.3f64 * 0.3 + 0.2 * 0.2).sqrt();
        assert!((phi - r.ln() / (2.0 * std::f64::consts::PI)).abs() < 1e-14);
        // boundary vanishing
        let phi = green_function((1.0, 0.0), (0.3, 0.4)).unwrap();
        assert!(phi.abs() < 1e-12);
        // symmetry
        let a = green_function((0.1, -0.2), (0.5, 0.3)).unwrap();
        let b = green_function((0.5, 0.3), (0.1, -0.2)).unwrap();
        assert!((a - b).abs() < 1e-14);
        // nonpositive
        assert!(green_function((0.7, 0.1), (-0.2, 0.6)).unwrap() <= 0.0);
        assert!(green_function((0.5, 0.5), (0.5, 0.5)).is_err());
    }

    #[test]
    fn green_symmetry_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = loop {
                let p = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                if p.0 * p.0 + p.1 * p.1 < 0.98 {
                    break p;
                }
            };
            let q = loop {
                let q: (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                if q.0 * q.0 + q.1 * q.1 < 0.98 && (q.0 - p.0).abs() + (q.1 - p.1).abs() > 1e-3 {
                    break q;
                }
            };
            let a = green_function(p, q).unwrap();
            let b = green_function(q, p).unwrap();
            assert!((a - b).abs() < 1e-13);
            assert!(a <= 1e-15);
        }
    }

    #[test]
    fn wirtinger_conventions() {
        let g = grid(33);
        // f = w is "analytic": f_wbar = 0 under the stated convention
        let f = ComplexField {
            re: ScalarField::from_fn(&g, |u, _| u),
            im: ScalarField::from_fn(&g, |_, v| v),
        };
        let d = wirtinger(&f, true);
        assert!(d.re.sup_norm() < 1e-10 && d.im.sup_norm() < 1e-10);
        // f = conj(w): f_wbar = 2
        let f = ComplexField {
            re: ScalarField::from_fn(&g, |u, _| u),
            im: ScalarField::from_fn(&g, |_, v| -v),
        };
        let d = wirtinger(&f, true);
        for k in 0..g.num_nodes() {
            assert!((d.re.interior[k] - 2.0).abs() < 1e-10);
            assert!(d.im.interior[k].abs() < 1e-10);
        }
    }

    #[test]
    fn wirtinger_matches_finite_difference_oracle() {
        // f = w^2: compare f_w against a plain finite-difference evaluation of
        // f_u - i f_v at a few inner nodes.
        let g = grid(65);
        let f = ComplexField {
            re: ScalarField::from_fn(&g, |u, v| u * u - v * v),
            im: ScalarField::from_fn(&g, |u, v| 2.0 * u * v),
        };
        let d = wirtinger(&f, false);
        let eps = 1e-6;
        for k in 0..g.num_nodes() {
            let (u, v) = g.node_point(k);
            if u * u + v * v > 0.25 {
                continue;
            }
            let re = |u: f64, v: f64| u * u - v * v;
            let im = |u: f64, v: f64| 2.0 * u * v;
            let fu = (
                (re(u + eps, v) - re(u - eps, v)) / (2.0 * eps),
                (im(u + eps, v) - im(u - eps, v)) / (2.0 * eps),
            );
            let fv = (
                (re(u, v + eps) - re(u, v - eps)) / (2.0 * eps),
                (im(u, v + eps) - im(u, v - eps)) / (2.0 * eps),
            );
            // f_w = f_u - i f_v
            let oracle = (fu.0 + fv.1, fu.1 - fv.0);
            assert!((d.re.interior[k] - oracle.0).abs() < 1e-4);
            assert!((d.im.interior[k] - oracle.1).abs() < 1e-4);
        }
    }
}
