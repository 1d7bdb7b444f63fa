//! Catalog of benchmark immersions with closed-form jets. Surfaces are
//! registered by name and constructed from a [`SurfaceSpec`], so callers
//! (including the CLI) only ever handle `Box<dyn Immersion>`.

use crate::error::{Error, Result};
use crate::geometry::{Immersion, Jet};
use std::collections::BTreeMap;

/// A named surface plus its numeric parameters.
#[derive(Debug, Clone)]
pub struct SurfaceSpec {
    pub name: String,
    pub n: usize,
    pub params: BTreeMap<String, f64>,
}

impl SurfaceSpec {
    pub fn named(name: &str, n: usize) -> Self {
        SurfaceSpec {
            name: name.to_string(),
            n,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }
}

/// Names and short descriptions of every registered surface.
pub fn list_surfaces() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "plane_embed",
            "flat disc (u, v, 0, ..., 0) in R^{n+2}; torsion-free reference",
        ),
        (
            "clifford_torus",
            "Clifford torus patch (cos u, sin u, cos v, sin v)/sqrt(2) in R^4 (n = 2)",
        ),
        (
            "complex_curve",
            "graph of the analytic map w -> w^degree in R^4 (n = 2, conformal)",
        ),
        (
            "lifted_complex_curve",
            "complex_curve with an appended zero coordinate into R^5 (n = 3)",
        ),
        (
            "scaled_graph",
            "graph (u, v, eps u^2, eps u v) in R^4 (n = 2, not conformal)",
        ),
    ]
}

struct PlaneEmbed {
    n: usize,
}

impl Immersion for PlaneEmbed {
    fn codimension(&self) -> usize {
        self.n
    }

    fn jet(&self, u: f64, v: f64) -> Jet {
        let dim = self.n + 2;
        let mut x = vec![0.0; dim];
        x[0] = u;
        x[1] = v;
        let mut xu = vec![0.0; dim];
        xu[0] = 1.0;
        let mut xv = vec![0.0; dim];
        xv[1] = 1.0;
        Jet {
            x,
            xu,
            xv,
            xuu: vec![0.0; dim],
            xuv: vec![0.0; dim],
            xvv: vec![0.0; dim],
        }
    }
}

struct CliffordTorus;

impl Immersion for CliffordTorus {
    fn codimension(&self) -> usize {
        2
    }

    fn jet(&self, u: f64, v: f64) -> Jet {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let (su, cu) = u.sin_cos();
        let (sv, cv) = v.sin_cos();
        Jet {
            x: vec![r * cu, r * su, r * cv, r * sv],
            xu: vec![-r * su, r * cu, 0.0, 0.0],
            xv: vec![0.0, 0.0, -r * sv, r * cv],
            xuu: vec![-r * cu, -r * su, 0.0, 0.0],
            xuv: vec![0.0; 4],
            xvv: vec![0.0, 0.0, -r * cv, -r * sv],
        }
    }
}

/// Graph of p(w) = w^d over the disc; the lifted variant appends a zero
/// coordinate, which raises the codimension without changing the geometry.
struct ComplexCurve {
    degree: u32,
    lifted: bool,
}

fn cpow(u: f64, v: f64, d: u32) -> (f64, f64) {
    let mut re = 1.0;
    let mut im = 0.0;
    for _ in 0..d {
        let (r, i) = (re * u - im * v, re * v + im * u);
        re = r;
        im = i;
    }
    (re, im)
}

impl Immersion for ComplexCurve {
    fn codimension(&self) -> usize {
        if self.lifted {
            3
        } else {
            2
        }
    }

    fn jet(&self, u: f64, v: f64) -> Jet {
        let d = self.degree;
        let (p_re, p_im) = cpow(u, v, d);
        let (mut dp_re, mut dp_im) = cpow(u, v, d.saturating_sub(1));
        dp_re *= d as f64;
        dp_im *= d as f64;
        let (mut ddp_re, mut ddp_im) = if d >= 2 {
            cpow(u, v, d - 2)
        } else {
            (0.0, 0.0)
        };
        ddp_re *= (d * d.saturating_sub(1)) as f64;
        ddp_im *= (d * d.saturating_sub(1)) as f64;

        let mut jet = Jet {
            x: vec![u, v, p_re, p_im],
            xu: vec![1.0, 0.0, dp_re, dp_im],
            xv: vec![0.0, 1.0, -dp_im, dp_re],
            xuu: vec![0.0, 0.0, ddp_re, ddp_im],
            xuv: vec![0.0, 0.0, -ddp_im, ddp_re],
            xvv: vec![0.0, 0.0, -ddp_re, -ddp_im],
        };
        if self.lifted {
            for f in [
                &mut jet.x,
                &mut jet.xu,
                &mut jet.xv,
                &mut jet.xuu,
                &mut jet.xuv,
                &mut jet.xvv,
            ] {
                f.push(0.0);
            }
        }
        jet
    }
}

struct ScaledGraph {
    eps: f64,
}

impl Immersion for ScaledGraph {
    fn codimension(&self) -> usize {
        2
    }

    fn jet(&self, u: f64, v: f64) -> Jet {
        let e = self.eps;
        Jet {
            x: vec![u, v, e * u * u, e * u * v],
            xu: vec![1.0, 0.0, 2.0 * e * u, e * v],
            xv: vec![0.0, 1.0, 0.0, e * u],
            xuu: vec![0.0, 0.0, 2.0 * e, 0.0],
            xuv: vec![0.0, 0.0, 0.0, e],
            xvv: vec![0.0; 4],
        }
    }
}

pub fn make_surface(spec: &SurfaceSpec) -> Result<Box<dyn Immersion>> {
    let require_n = |expected: usize| -> Result<()> {
        if spec.n == expected {
            Ok(())
        } else {
            Err(Error::BadParameter(format!(
                "surface '{}' has codimension {expected}, got n = {}",
                spec.name, spec.n
            )))
        }
    };
    match spec.name.as_str() {
        "plane_embed" => {
            if spec.n < 1 {
                return Err(Error::BadParameter("plane_embed needs n >= 1".into()));
            }
            Ok(Box::new(PlaneEmbed { n: spec.n }))
        }
        "clifford_torus" => {
            require_n(2)?;
            Ok(Box::new(CliffordTorus))
        }
        "complex_curve" | "lifted_complex_curve" => {
            let lifted = spec.name == "lifted_complex_curve";
            require_n(if lifted { 3 } else { 2 })?;
            let degree = spec.param("degree", 2.0);
            if degree < 1.0 || degree.fract() != 0.0 || degree > 12.0 {
                return Err(Error::BadParameter(format!(
                    "degree must be an integer in 1..=12, got {degree}"
                )));
            }
            Ok(Box::new(ComplexCurve {
                degree: degree as u32,
                lifted,
            }))
        }
        "scaled_graph" => {
            require_n(2)?;
            let eps = spec.param("eps", 0.1);
            if !eps.is_finite() || eps.abs() > 10.0 {
                return Err(Error::BadParameter(format!("eps out of range: {eps}")));
            }
            Ok(Box::new(ScaledGraph { eps }))
        }
        other => Err(Error::UnknownSurface(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name_rejected() {
        assert!(matches!(
            make_surface(&SurfaceSpec::named("torus_of_doom", 2)),
            Err(Error::UnknownSurface(_))
        ));
    }

    #[test]
    fn codimension_mismatch_rejected() {
        assert!(make_surface(&SurfaceSpec::named("clifford_torus", 3)).is_err());
        assert!(make_surface(&SurfaceSpec::named("lifted_complex_curve", 2)).is_err());
    }

    #[test]
    fn catalog_is_complete() {
        for (name, _) in list_surfaces() {
            let n = if name == "lifted_complex_curve" { 3 } else { 2 };
            let x = make_surface(&SurfaceSpec::named(name, n)).unwrap();
            assert_eq!(x.ambient_dim(), n + 2);
        }
    }

    #[test]
    fn complex_curve_default_is_w_squared() {
        let x = make_surface(&SurfaceSpec::named("complex_curve", 2)).unwrap();
        let j = x.jet(0.3, -0.2);
        // w^2 = u^2 - v^2 + 2iuv
        assert!((j.x[2] - (0.09 - 0.04)).abs() < 1e-15);
        assert!((j.x[3] - 2.0 * 0.3 * (-0.2)).abs() < 1e-15);
    }

    /// Finite-difference oracle: every analytic jet must agree with central
    /// differences of its own position map.
    #[test]
    fn jets_match_finite_differences() {
        let eps = 1e-5;
        let cases: Vec<(SurfaceSpec, usize)> = vec![
            (SurfaceSpec::named("plane_embed", 2), 2),
            (SurfaceSpec::named("plane_embed", 4), 4),
            (SurfaceSpec::named("clifford_torus", 2), 2),
            (SurfaceSpec::named("complex_curve", 2), 2),
            (
                SurfaceSpec::named("complex_curve", 2).with_param("degree", 3.0),
                2,
            ),
            (SurfaceSpec::named("lifted_complex_curve", 3), 3),
            (
                SurfaceSpec::named("scaled_graph", 2).with_param("eps", 0.25),
                2,
            ),
        ];
        for (spec, n) in cases {
            let x = make_surface(&spec).unwrap();
            for &(u, v) in &[(0.0, 0.0), (0.4, -0.3), (-0.7, 0.1), (0.2, 0.6)] {
                let j = x.jet(u, v);
                let dim = n + 2;
                for c in 0..dim {
                    let f = |a: f64, b: f64| x.jet(a, b).x[c];
                    let du = (f(u + eps, v) - f(u - eps, v)) / (2.0 * eps);
                    let dv = (f(u, v + eps) - f(u, v - eps)) / (2.0 * eps);
                    let duu = (f(u + eps, v) - 2.0 * f(u, v) + f(u - eps, v)) / (eps * eps);
                    let dvv = (f(u, v + eps) - 2.0 * f(u, v) + f(u, v - eps)) / (eps * eps);
                    let duv = (f(u + eps, v + eps) - f(u + eps, v - eps)
                        - f(u - eps, v + eps)
                        + f(u - eps, v - eps))
                        / (4.0 * eps * eps);
                    assert!((j.xu[c] - du).abs() < 1e-8, "{} xu[{c}]", spec.name);
                    assert!((j.xv[c] - dv).abs() < 1e-8, "{} xv[{c}]", spec.name);
                    assert!((j.xuu[c] - duu).abs() < 1e-4, "{} xuu[{c}]", spec.name);
                    assert!((j.xvv[c] - dvv).abs() < 1e-4, "{} xvv[{c}]", spec.name);
                    assert!((j.xuv[c] - duv).abs() < 1e-4, "{} xuv[{c}]", spec.name);
                }
            }
        }
    }
}
