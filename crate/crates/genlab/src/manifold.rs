//! Analytic manifolds with closed-form spectra: circle, sphere and flat
//! torus. Provides measure-aware samplers, eigenpair oracles for the
//! density-weighted Laplace operator, bandlimited signal synthesis,
//! Lipschitz-certified target functions, and certified deformation maps.
//!
//! With constant density rho = 1/vol, the weighted operator reduces to
//! -(rho/2) * Delta, so every closed-form eigenvalue carries the rho/2
//! factor explicitly. The eigenpair oracle is only available for uniform
//! density; tilted densities are supported by the samplers alone.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geograph::{CloudSource, PointCloud};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ManifoldKind {
    Circle { radius: f64 },
    Sphere { radius: f64 },
    /// Flat torus embedded in R^4 as (r1 cos u, r1 sin u, r2 cos v, r2 sin v).
    FlatTorus { r_major: f64, r_minor: f64 },
}

/// Density descriptor for the sampling measure mu. `CosineTilt` multiplies
/// the uniform density by (1 + strength * cos(first angle)), normalized so
/// the total mass stays 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "density")]
pub enum Density {
    Uniform,
    CosineTilt { strength: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldModel {
    pub kind: ManifoldKind,
    pub density: Density,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Trig {
    Cos,
    Sin,
}

/// Closed-form eigenfunction label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EigenMode {
    Const,
    Circle { k: usize, trig: Trig },
    Sphere { l: usize, m: i32 },
    Torus { k1: usize, t1: Trig, k2: usize, t2: Trig },
}

#[derive(Debug, Clone)]
pub struct EigenFunction {
    pub manifold: ManifoldModel,
    pub mode: EigenMode,
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    /// 1-based index into the ascending spectrum.
    pub index: usize,
    pub eigenvalue: f64,
    pub function: EigenFunction,
}

/// Anything evaluable at ambient points of a manifold.
pub trait ManifoldFn {
    fn eval(&self, point: &[f64]) -> f64;
}

impl ManifoldModel {
    pub fn circle(radius: f64) -> Self {
        ManifoldModel {
            kind: ManifoldKind::Circle { radius },
            density: Density::Uniform,
        }
    }

    pub fn sphere(radius: f64) -> Self {
        ManifoldModel {
            kind: ManifoldKind::Sphere { radius },
            density: Density::Uniform,
        }
    }

    pub fn flat_torus(r_major: f64, r_minor: f64) -> Self {
        ManifoldModel {
            kind: ManifoldKind::FlatTorus { r_major, r_minor },
            density: Density::Uniform,
        }
    }

    pub fn with_density(mut self, density: Density) -> Self {
        self.density = density;
        self
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Circle { .. } => 1,
            ManifoldKind::Sphere { .. } | ManifoldKind::FlatTorus { .. } => 2,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Circle { .. } => 2,
            ManifoldKind::Sphere { .. } => 3,
            ManifoldKind::FlatTorus { .. } => 4,
        }
    }

    pub fn volume(&self) -> f64 {
        match self.kind {
            ManifoldKind::Circle { radius } => 2.0 * std::f64::consts::PI * radius,
            ManifoldKind::Sphere { radius } => 4.0 * std::f64::consts::PI * radius * radius,
            ManifoldKind::FlatTorus { r_major, r_minor } => {
                4.0 * std::f64::consts::PI * std::f64::consts::PI * r_major * r_minor
            }
        }
    }

    /// Density value at an ambient point, normalized so the integral over
    /// the manifold is 1.
    pub fn density_at(&self, point: &[f64]) -> f64 {
        let base = 1.0 / self.volume();
        match self.density {
            Density::Uniform => base,
            Density::CosineTilt { strength } => {
                let a = self.primary_angle(point);
                base * (1.0 + strength * a.cos())
            }
        }
    }

    pub fn density_bounds(&self) -> (f64, f64) {
        let base = 1.0 / self.volume();
        match self.density {
            Density::Uniform => (base, base),
            Density::CosineTilt { strength } => {
                let s = strength.abs();
                (base * (1.0 - s), base * (1.0 + s))
            }
        }
    }

    fn primary_angle(&self, point: &[f64]) -> f64 {
        match self.kind {
            ManifoldKind::Circle { .. } => point[1].atan2(point[0]),
            ManifoldKind::Sphere { .. } => point[1].atan2(point[0]),
            ManifoldKind::FlatTorus { .. } => point[1].atan2(point[0]),
        }
    }

    /// Intrinsic coordinates: circle -> [theta]; sphere -> [theta, phi]
    /// (polar, azimuth); torus -> [u, v].
    pub fn to_coords(&self, point: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::Circle { .. } => vec![point[1].atan2(point[0])],
            ManifoldKind::Sphere { radius } => {
                let z = (point[2] / radius).clamp(-1.0, 1.0);
                vec![z.acos(), point[1].atan2(point[0])]
            }
            ManifoldKind::FlatTorus { .. } => {
                vec![point[1].atan2(point[0]), point[3].atan2(point[2])]
            }
        }
    }

    pub fn to_ambient(&self, coords: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::Circle { radius } => {
                vec![radius * coords[0].cos(), radius * coords[0].sin()]
            }
            ManifoldKind::Sphere { radius } => {
                let (theta, phi) = (coords[0], coords[1]);
                vec![
                    radius * theta.sin() * phi.cos(),
                    radius * theta.sin() * phi.sin(),
                    radius * theta.cos(),
                ]
            }
            ManifoldKind::FlatTorus { r_major, r_minor } => {
                let (u, v) = (coords[0], coords[1]);
                vec![
                    r_major * u.cos(),
                    r_major * u.sin(),
                    r_minor * v.cos(),
                    r_minor * v.sin(),
                ]
            }
        }
    }

    /// Nearest manifold point; used to re-project after deformation flows.
    pub fn project(&self, point: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::Circle { radius } => {
                let norm = (point[0] * point[0] + point[1] * point[1]).sqrt();
                vec![radius * point[0] / norm, radius * point[1] / norm]
            }
            ManifoldKind::Sphere { radius } => {
                let norm = point.iter().map(|c| c * c).sum::<f64>().sqrt();
                point.iter().map(|c| radius * c / norm).collect()
            }
            ManifoldKind::FlatTorus { r_major, r_minor } => {
                let n1 = (point[0] * point[0] + point[1] * point[1]).sqrt();
                let n2 = (point[2] * point[2] + point[3] * point[3]).sqrt();
                vec![
                    r_major * point[0] / n1,
                    r_major * point[1] / n1,
                    r_minor * point[2] / n2,
                    r_minor * point[3] / n2,
                ]
            }
        }
    }

    /// Closed-form geodesic distance (arc length / great circle / flat
    /// quotient metric).
    pub fn geodesic_dist(&self, p: &[f64], q: &[f64]) -> f64 {
        match self.kind {
            ManifoldKind::Circle { radius } => {
                let a = p[1].atan2(p[0]);
                let b = q[1].atan2(q[0]);
                radius * wrap_angle(b - a).abs()
            }
            ManifoldKind::Sphere { radius } => {
                let dot = (p[0] * q[0] + p[1] * q[1] + p[2] * q[2]) / (radius * radius);
                radius * dot.clamp(-1.0, 1.0).acos()
            }
            ManifoldKind::FlatTorus { r_major, r_minor } => {
                let cu = self.to_coords(p);
                let cv = self.to_coords(q);
                let du = r_major * wrap_angle(cv[0] - cu[0]);
                let dv = r_minor * wrap_angle(cv[1] - cu[1]);
                (du * du + dv * dv).sqrt()
            }
        }
    }

    /// Orthonormal tangent basis at a point, as ambient vectors.
    pub fn tangent_basis(&self, point: &[f64]) -> Vec<Vec<f64>> {
        match self.kind {
            ManifoldKind::Circle { radius } => {
                vec![vec![-point[1] / radius, point[0] / radius]]
            }
            ManifoldKind::Sphere { radius } => {
                let n = [point[0] / radius, point[1] / radius, point[2] / radius];
                // pick a reference axis not parallel to n
                let a = if n[0].abs() < 0.9 {
                    [1.0, 0.0, 0.0]
                } else {
                    [0.0, 1.0, 0.0]
                };
                let dot = a[0] * n[0] + a[1] * n[1] + a[2] * n[2];
                let mut e1 = [a[0] - dot * n[0], a[1] - dot * n[1], a[2] - dot * n[2]];
                let norm = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
                e1 = [e1[0] / norm, e1[1] / norm, e1[2] / norm];
                let e2 = [
                    n[1] * e1[2] - n[2] * e1[1],
                    n[2] * e1[0] - n[0] * e1[2],
                    n[0] * e1[1] - n[1] * e1[0],
                ];
                vec![e1.to_vec(), e2.to_vec()]
            }
            ManifoldKind::FlatTorus { r_major, r_minor } => {
                vec![
                    vec![-point[1] / r_major, point[0] / r_major, 0.0, 0.0],
                    vec![0.0, 0.0, -point[3] / r_minor, point[2] / r_minor],
                ]
            }
        }
    }

    /// Exponential map in the chart given by `tangent_basis(point)`:
    /// coefficients are arc-length coordinates.
    pub fn chart_exp(&self, point: &[f64], coeffs: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::Circle { radius } => {
                let theta = point[1].atan2(point[0]) + coeffs[0] / radius;
                self.to_ambient(&[theta])
            }
            ManifoldKind::Sphere { radius } => {
                let basis = self.tangent_basis(point);
                let norm = (coeffs[0] * coeffs[0] + coeffs[1] * coeffs[1]).sqrt();
                if norm < 1e-300 {
                    return point.to_vec();
                }
                let dir: Vec<f64> = (0..3)
                    .map(|j| (coeffs[0] * basis[0][j] + coeffs[1] * basis[1][j]) / norm)
                    .collect();
                let angle = norm / radius;
                (0..3)
                    .map(|j| point[j] * angle.cos() + radius * dir[j] * angle.sin())
                    .collect()
            }
            ManifoldKind::FlatTorus { r_major, r_minor } => {
                let c = self.to_coords(point);
                self.to_ambient(&[c[0] + coeffs[0] / r_major, c[1] + coeffs[1] / r_minor])
            }
        }
    }

    /// Logarithm map: arc-length coordinates of `other` in the chart at
    /// `point`, expressed in the provided orthonormal frame.
    pub fn chart_log_in_frame(&self, point: &[f64], other: &[f64], frame: &[Vec<f64>]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::Circle { radius } => {
                let a = point[1].atan2(point[0]);
                let b = other[1].atan2(other[0]);
                let arc = radius * wrap_angle(b - a);
                // express along the frame direction (frame is +/- e_theta)
                let e = &frame[0];
                let etheta = [-point[1] / radius, point[0] / radius];
                let sign = e[0] * etheta[0] + e[1] * etheta[1];
                vec![arc * sign.signum()]
            }
            ManifoldKind::Sphere { radius } => {
                let r2 = radius * radius;
                let dot = (point[0] * other[0] + point[1] * other[1] + point[2] * other[2]) / r2;
                let angle = dot.clamp(-1.0, 1.0).acos();
                if angle < 1e-300 {
                    return vec![0.0, 0.0];
                }
                // tangential component of other at point
                let mut w = [0.0f64; 3];
                for j in 0..3 {
                    w[j] = other[j] / radius - dot * point[j] / radius;
                }
                let wn = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
                let scale = radius * angle / wn;
                let v: Vec<f64> = w.iter().map(|c| c * scale).collect();
                frame
                    .iter()
                    .map(|e| e[0] * v[0] + e[1] * v[1] + e[2] * v[2])
                    .collect()
            }
            ManifoldKind::FlatTorus { r_major, r_minor } => {
                let cp = self.to_coords(point);
                let co = self.to_coords(other);
                let v = [
                    r_major * wrap_angle(co[0] - cp[0]),
                    r_minor * wrap_angle(co[1] - cp[1]),
                ];
                // ambient tangent then project on frame
                let basis = self.tangent_basis(point);
                let ambient: Vec<f64> = (0..4)
                    .map(|j| v[0] * basis[0][j] + v[1] * basis[1][j])
                    .collect();
                frame
                    .iter()
                    .map(|e| e.iter().zip(&ambient).map(|(a, b)| a * b).sum())
                    .collect()
            }
        }
    }

    pub fn chart_log(&self, point: &[f64], other: &[f64]) -> Vec<f64> {
        let frame = self.tangent_basis(point);
        self.chart_log_in_frame(point, other, &frame)
    }

    /// Parallel transport of the tangent frame at `from` to `to` along the
    /// connecting geodesic. For circle and flat torus the coordinate frames
    /// are globally parallel, so the frame at `to` is returned directly.
    pub fn transported_frame(&self, from: &[f64], to: &[f64]) -> Vec<Vec<f64>> {
        match self.kind {
            ManifoldKind::Circle { .. } | ManifoldKind::FlatTorus { .. } => {
                self.tangent_basis(to)
            }
            ManifoldKind::Sphere { radius } => {
                let nx: Vec<f64> = from.iter().map(|c| c / radius).collect();
                let ny: Vec<f64> = to.iter().map(|c| c / radius).collect();
                let dot = nx[0] * ny[0] + nx[1] * ny[1] + nx[2] * ny[2];
                if dot < -1.0 + 1e-12 {
                    // antipodal transport is ill-defined; fall back
                    return self.tangent_basis(to);
                }
                let frame = self.tangent_basis(from);
                frame
                    .iter()
                    .map(|v| {
                        let vny = v[0] * ny[0] + v[1] * ny[1] + v[2] * ny[2];
                        let coef = vny / (1.0 + dot);
                        (0..3).map(|j| v[j] - coef * (nx[j] + ny[j])).collect()
                    })
                    .collect()
            }
        }
    }

    /// i.i.d. sample of n points distributed per the density descriptor.
    /// Deterministic given (model, n, seed).
    pub fn sample_points(&self, n: usize, seed: u64) -> PointCloud {
        assert!(n >= 1, "sample_points requires n >= 1");
        let mut rng = rng_from_seed(seed);
        let dim = self.ambient_dim();
        let mut coords = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let p = self.sample_one(&mut rng);
            coords.extend_from_slice(&p);
        }
        PointCloud::new(dim, coords, CloudSource::Sampled { seed })
    }

    fn sample_one(&self, rng: &mut impl Rng) -> Vec<f64> {
        let two_pi = 2.0 * std::f64::consts::PI;
        match (self.kind, self.density) {
            (ManifoldKind::Circle { .. }, Density::Uniform) => {
                let theta = two_pi * rng.gen::<f64>();
                self.to_ambient(&[theta])
            }
            (ManifoldKind::Circle { .. }, Density::CosineTilt { strength }) => {
                let theta = invert_tilt_cdf(rng.gen::<f64>(), strength);
                self.to_ambient(&[theta])
            }
            (ManifoldKind::Sphere { .. }, density) => loop {
                let z = 2.0 * rng.gen::<f64>() - 1.0;
                let phi = two_pi * rng.gen::<f64>();
                let theta = z.clamp(-1.0, 1.0).acos();
                match density {
                    Density::Uniform => return self.to_ambient(&[theta, phi]),
                    Density::CosineTilt { strength } => {
                        let accept = (1.0 + strength * phi.cos()) / (1.0 + strength.abs());
                        if rng.gen::<f64>() < accept {
                            return self.to_ambient(&[theta, phi]);
                        }
                    }
                }
            },
            (ManifoldKind::FlatTorus { .. }, density) => loop {
                let u = two_pi * rng.gen::<f64>();
                let v = two_pi * rng.gen::<f64>();
                match density {
                    Density::Uniform => return self.to_ambient(&[u, v]),
                    Density::CosineTilt { strength } => {
                        let accept = (1.0 + strength * u.cos()) / (1.0 + strength.abs());
                        if rng.gen::<f64>() < accept {
                            return self.to_ambient(&[u, v]);
                        }
                    }
                }
            },
        }
    }

    /// i-th eigenpair (1-based) of the weighted operator. Only available
    /// for uniform density, where the closed forms exist.
    pub fn eigenpair(&self, i: usize) -> Result<EigenPair> {
        if i == 0 {
            return Err(Error::config("eigenpair indices are 1-based"));
        }
        if !matches!(self.density, Density::Uniform) {
            return Err(Error::Unsupported(
                "eigenpair oracle requires uniform density".into(),
            ));
        }
        let mode = self.mode_for_index(i)?;
        Ok(EigenPair {
            index: i,
            eigenvalue: self.mode_eigenvalue(&mode),
            function: EigenFunction {
                manifold: *self,
                mode,
            },
        })
    }

    /// First `count` eigenvalues, ascending.
    pub fn eigenvalues(&self, count: usize) -> Result<Vec<f64>> {
        (1..=count).map(|i| Ok(self.eigenpair(i)?.eigenvalue)).collect()
    }

    fn mode_for_index(&self, i: usize) -> Result<EigenMode> {
        match self.kind {
            ManifoldKind::Circle { .. } => Ok(if i == 1 {
                EigenMode::Const
            } else if i % 2 == 0 {
                EigenMode::Circle {
                    k: i / 2,
                    trig: Trig::Cos,
                }
            } else {
                EigenMode::Circle {
                    k: (i - 1) / 2,
                    trig: Trig::Sin,
                }
            }),
            ManifoldKind::Sphere { .. } => {
                // degree l occupies indices l^2+1 ..= (l+1)^2
                let mut l = 0usize;
                while (l + 1) * (l + 1) < i {
                    l += 1;
                }
                if l == 0 {
                    return Ok(EigenMode::Const);
                }
                let offset = i - l * l - 1; // 0-based within the degree
                let m = if offset == 0 {
                    0
                } else if offset % 2 == 1 {
                    ((offset + 1) / 2) as i32
                } else {
                    -((offset / 2) as i32)
                };
                Ok(EigenMode::Sphere { l, m })
            }
            ManifoldKind::FlatTorus { .. } => {
                let modes = self.torus_modes(i);
                Ok(modes[i - 1])
            }
        }
    }

    /// Sorted torus mode table, long enough to cover `count` entries.
    fn torus_modes(&self, count: usize) -> Vec<EigenMode> {
        let (r1, r2) = match self.kind {
            ManifoldKind::FlatTorus { r_major, r_minor } => (r_major, r_minor),
            _ => unreachable!(),
        };
        let mut kmax = 4usize;
        loop {
            let mut entries: Vec<(f64, usize, usize)> = Vec::new();
            for k1 in 0..=kmax {
                for k2 in 0..=kmax {
                    let lam = (k1 * k1) as f64 / (r1 * r1) + (k2 * k2) as f64 / (r2 * r2);
                    entries.push((lam, k1, k2));
                }
            }
            entries.sort_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap()
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            let mut modes = Vec::new();
            for (_, k1, k2) in &entries {
                let t1s: &[Trig] = if *k1 == 0 {
                    &[Trig::Cos]
                } else {
                    &[Trig::Cos, Trig::Sin]
                };
                let t2s: &[Trig] = if *k2 == 0 {
                    &[Trig::Cos]
                } else {
                    &[Trig::Cos, Trig::Sin]
                };
                for &t1 in t1s {
                    for &t2 in t2s {
                        if *k1 == 0 && *k2 == 0 {
                            modes.push(EigenMode::Const);
                        } else {
                            modes.push(EigenMode::Torus {
                                k1: *k1,
                                t1,
                                k2: *k2,
                                t2,
                            });
                        }
                    }
                }
            }
            // valid only if the next shell cannot undercut the count-th mode
            let boundary =
                ((kmax + 1) * (kmax + 1)) as f64 / (r1 * r1).max(r2 * r2);
            if modes.len() >= count {
                let lam_count = self.mode_lb_eigenvalue(&modes[count - 1]);
                if lam_count < boundary {
                    modes.truncate(count);
                    return modes;
                }
            }
            kmax *= 2;
        }
    }

    fn mode_lb_eigenvalue(&self, mode: &EigenMode) -> f64 {
        match (self.kind, mode) {
            (_, EigenMode::Const) => 0.0,
            (ManifoldKind::Circle { radius }, EigenMode::Circle { k, .. }) => {
                (*k * *k) as f64 / (radius * radius)
            }
            (ManifoldKind::Sphere { radius }, EigenMode::Sphere { l, .. }) => {
                (*l * (*l + 1)) as f64 / (radius * radius)
            }
            (
                ManifoldKind::FlatTorus { r_major, r_minor },
                EigenMode::Torus { k1, k2, .. },
            ) => {
                (*k1 * *k1) as f64 / (r_major * r_major) + (*k2 * *k2) as f64 / (r_minor * r_minor)
            }
            _ => panic!("mode does not match manifold kind"),
        }
    }

    /// Weighted-operator eigenvalue: (rho/2) * lambda_LB with rho = 1/vol.
    fn mode_eigenvalue(&self, mode: &EigenMode) -> f64 {
        self.mode_lb_eigenvalue(mode) / (2.0 * self.volume())
    }
}

impl EigenFunction {
    pub fn eval(&self, point: &[f64]) -> f64 {
        let m = &self.manifold;
        match self.mode {
            EigenMode::Const => 1.0,
            EigenMode::Circle { k, trig } => {
                let theta = point[1].atan2(point[0]);
                let arg = k as f64 * theta;
                std::f64::consts::SQRT_2
                    * match trig {
                        Trig::Cos => arg.cos(),
                        Trig::Sin => arg.sin(),
                    }
            }
            EigenMode::Sphere { l, m: order } => {
                let coords = m.to_coords(point);
                let (theta, phi) = (coords[0], coords[1]);
                // sqrt(4 pi) * real spherical harmonic: orthonormal under the
                // mean (mass-1) measure
                (4.0 * std::f64::consts::PI).sqrt() * real_sph_harm(l, order, theta, phi)
            }
            EigenMode::Torus { k1, t1, k2, t2 } => {
                let coords = m.to_coords(point);
                torus_factor(k1, t1, coords[0]) * torus_factor(k2, t2, coords[1])
            }
        }
    }
}

impl ManifoldFn for EigenFunction {
    fn eval(&self, point: &[f64]) -> f64 {
        EigenFunction::eval(self, point)
    }
}

fn torus_factor(k: usize, trig: Trig, angle: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let arg = k as f64 * angle;
    std::f64::consts::SQRT_2
        * match trig {
            Trig::Cos => arg.cos(),
            Trig::Sin => arg.sin(),
        }
}

/// Real spherical harmonic with the usual L2(S^2, dOmega) normalization.
fn real_sph_harm(l: usize, m: i32, theta: f64, phi: f64) -> f64 {
    let am = m.unsigned_abs() as usize;
    let x = theta.cos();
    let p = assoc_legendre(l, am, x);
    // sqrt((2l+1)/(4pi) * (l-m)!/(l+m)!)
    let mut ratio = 1.0;
    for j in (l - am + 1)..=(l + am) {
        ratio /= j as f64;
    }
    let norm = ((2 * l + 1) as f64 / (4.0 * std::f64::consts::PI) * ratio).sqrt();
    if m == 0 {
        norm * p
    } else if m > 0 {
        std::f64::consts::SQRT_2 * norm * p * (am as f64 * phi).cos()
    } else {
        std::f64::consts::SQRT_2 * norm * p * (am as f64 * phi).sin()
    }
}

/// Associated Legendre P_l^m (m >= 0) with Condon-Shortley phase.
fn assoc_legendre(l: usize, m: usize, x: f64) -> f64 {
    assert!(m <= l);
    let somx2 = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
    let mut pmm = 1.0;
    let mut fact = 1.0;
    for _ in 0..m {
        pmm *= -fact * somx2;
        fact += 2.0;
    }
    if l == m {
        return pmm;
    }
    let mut pmmp1 = x * (2.0 * m as f64 + 1.0) * pmm;
    if l == m + 1 {
        return pmmp1;
    }
    let mut pll = 0.0;
    for ll in (m + 2)..=l {
        pll = (x * (2.0 * ll as f64 - 1.0) * pmmp1 - (ll + m - 1) as f64 * pmm)
            / (ll - m) as f64;
        pmm = pmmp1;
        pmmp1 = pll;
    }
    pll
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a % two_pi;
    if r > std::f64::consts::PI {
        r -= two_pi;
    } else if r <= -std::f64::consts::PI {
        r += two_pi;
    }
    r
}

/// Inverse CDF of the tilted circle density (1 + s cos t)/(2 pi) via Newton
/// with bisection safeguard.
fn invert_tilt_cdf(u: f64, strength: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let target = u * two_pi;
    let f = |t: f64| t + strength * t.sin();
    let (mut lo, mut hi) = (0.0, two_pi);
    let mut t = target;
    for _ in 0..100 {
        let val = f(t) - target;
        if val.abs() < 1e-13 {
            break;
        }
        if val > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let deriv = 1.0 + strength * t.cos();
        let newton = t - val / deriv;
        t = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    t
}

// ---------------------------------------------------------------------------
// Bandlimited signals
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BandlimitedSignal {
    pub manifold: ManifoldModel,
    /// (eigen index, coefficient), sorted by index, all nonzero.
    pub coefficients: Vec<(usize, f64)>,
    pub cutoff: f64,
    terms: Vec<(f64, EigenFunction)>,
}

impl BandlimitedSignal {
    pub fn coefficient(&self, index: usize) -> f64 {
        self.coefficients
            .iter()
            .find(|(i, _)| *i == index)
            .map(|(_, c)| *c)
            .unwrap_or(0.0)
    }

    /// Exact L2(M) norm from orthonormality of the eigenbasis.
    pub fn norm(&self) -> f64 {
        self.coefficients
            .iter()
            .map(|(_, c)| c * c)
            .sum::<f64>()
            .sqrt()
    }

    /// Apply a spectral multiplier lambda -> hat(g)(lambda); stays
    /// bandlimited with the same cutoff.
    pub fn spectral_multiply(&self, response: impl Fn(f64) -> f64) -> BandlimitedSignal {
        let coefficients: Vec<(usize, f64)> = self
            .coefficients
            .iter()
            .zip(&self.terms)
            .map(|((i, c), (lam_scaled, _))| (*i, c * response(*lam_scaled)))
            .collect();
        let terms = self
            .terms
            .iter()
            .zip(&coefficients)
            .map(|((lam, f), _)| (*lam, f.clone()))
            .collect();
        BandlimitedSignal {
            manifold: self.manifold,
            coefficients,
            cutoff: self.cutoff,
            terms,
        }
    }
}

impl ManifoldFn for BandlimitedSignal {
    fn eval(&self, point: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(&self.terms)
            .map(|((_, c), (_, f))| c * f.eval(point))
            .sum()
    }
}

/// Build a bandlimited signal from eigen-index coefficients. Rejects any
/// nonzero coefficient whose eigenvalue exceeds the cutoff.
pub fn synth_bandlimited(
    m: &ManifoldModel,
    coeffs: &[(usize, f64)],
    cutoff: f64,
) -> Result<BandlimitedSignal> {
    let mut coefficients: Vec<(usize, f64)> = coeffs
        .iter()
        .filter(|(_, c)| *c != 0.0)
        .copied()
        .collect();
    coefficients.sort_by_key(|(i, _)| *i);
    let mut terms = Vec::with_capacity(coefficients.len());
    for (i, _) in &coefficients {
        let pair = m.eigenpair(*i)?;
        if pair.eigenvalue > cutoff {
            return Err(Error::config(format!(
                "coefficient at eigen index {i} has eigenvalue {} above cutoff {cutoff}",
                pair.eigenvalue
            )));
        }
        terms.push((pair.eigenvalue, pair.function));
    }
    Ok(BandlimitedSignal {
        manifold: *m,
        coefficients,
        cutoff,
        terms,
    })
}

// ---------------------------------------------------------------------------
// Lipschitz targets
// ---------------------------------------------------------------------------

/// Teacher description: a spectral filter applied to an input signal,
/// optionally thresholded into a class label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeacherSpec {
    pub taps: Vec<f64>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TargetFunction {
    pub signal: BandlimitedSignal,
    pub threshold: Option<f64>,
    /// Largest sampled ratio |g(x)-g(y)| / dist(x, y) seen during
    /// certification.
    pub certified_lipschitz: f64,
}

impl ManifoldFn for TargetFunction {
    fn eval(&self, point: &[f64]) -> f64 {
        let v = self.signal.eval(point);
        match self.threshold {
            Some(t) => {
                if v >= t {
                    1.0
                } else {
                    0.0
                }
            }
            None => v,
        }
    }
}

/// g = hat(g)(L) f for fixed teacher taps, with empirical Lipschitz
/// certification over sampled pairs (geodesic distance). Thresholded
/// teachers are not certified (step functions are not Lipschitz).
pub fn lipschitz_target(
    m: &ManifoldModel,
    c_g: f64,
    f: &BandlimitedSignal,
    spec: &TeacherSpec,
    n_pairs: usize,
    seed: u64,
) -> Result<TargetFunction> {
    if c_g <= 0.0 {
        return Err(Error::config("lipschitz budget c_g must be positive"));
    }
    let response = |lam: f64| {
        spec.taps
            .iter()
            .enumerate()
            .map(|(k, h)| h * (-(k as f64) * lam).exp())
            .sum::<f64>()
    };
    let signal = f.spectral_multiply(response);
    if spec.threshold.is_some() {
        return Ok(TargetFunction {
            signal,
            threshold: spec.threshold,
            certified_lipschitz: f64::NAN,
        });
    }
    let certified = certify_lipschitz(m, &signal, c_g, n_pairs, seed)?;
    Ok(TargetFunction {
        signal,
        threshold: None,
        certified_lipschitz: certified,
    })
}

/// Empirical Lipschitz certification: random far pairs plus short geodesic
/// perturbation pairs that probe local ratios.
pub fn certify_lipschitz(
    m: &ManifoldModel,
    g: &impl ManifoldFn,
    c_g: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<f64> {
    let cloud = m.sample_points(2 * n_pairs, seed);
    let mut rng = rng_from_seed(crate::rng::derive_seed(seed, &["lipschitz-local"]));
    let d = m.intrinsic_dim();
    let mut worst = 0.0f64;
    let mut check = |a: &[f64], b: &[f64]| -> Result<()> {
        let dist = m.geodesic_dist(a, b);
        if dist < 1e-12 {
            return Ok(());
        }
        let ratio = (g.eval(a) - g.eval(b)).abs() / dist;
        if ratio > c_g {
            return Err(Error::LipschitzCertification {
                ratio,
                budget: c_g,
                a: a.to_vec(),
                b: b.to_vec(),
            });
        }
        worst = worst.max(ratio);
        Ok(())
    };
    for i in 0..n_pairs {
        let a = cloud.point(2 * i).to_vec();
        let b = cloud.point(2 * i + 1).to_vec();
        check(&a, &b)?;
        // short geodesic step from a in a random tangent direction
        let mut t = vec![0.0; d];
        for tj in t.iter_mut() {
            *tj = rng.gen::<f64>() - 0.5;
        }
        let norm: f64 = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        let step = 1e-3;
        for tj in t.iter_mut() {
            *tj *= step / norm;
        }
        let near = m.chart_exp(&a, &t);
        check(&a, &near)?;
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Deformation maps
// ---------------------------------------------------------------------------

/// Smooth tangent field descriptor for deformation flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DeformationField {
    /// Rigid rotation: shift of the primary angle (isometry).
    Rotation,
    /// Finite combination of eigenfunction gradients: sum of a_j grad(phi_j).
    EigenGradients(Vec<(usize, f64)>),
}

#[derive(Debug, Clone)]
pub struct DeformationMap {
    pub base: ManifoldModel,
    pub field: DeformationField,
    pub amplitude: f64,
    pub nominal_gamma: f64,
    pub certified_gamma_dist: f64,
    pub certified_gamma_jac: f64,
}

impl DeformationMap {
    pub fn identity(base: ManifoldModel) -> Self {
        DeformationMap {
            base,
            field: DeformationField::Rotation,
            amplitude: 0.0,
            nominal_gamma: 0.0,
            certified_gamma_dist: 0.0,
            certified_gamma_jac: 0.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.amplitude == 0.0
    }

    /// tau(x): apply the field at the given amplitude and re-project.
    pub fn apply(&self, point: &[f64]) -> Vec<f64> {
        apply_field(&self.base, &self.field, self.amplitude, point)
    }

    pub fn apply_cloud(&self, cloud: &PointCloud) -> PointCloud {
        if self.is_identity() {
            return cloud.clone();
        }
        let mut coords = Vec::with_capacity(cloud.n() * cloud.dim());
        for i in 0..cloud.n() {
            coords.extend_from_slice(&self.apply(cloud.point(i)));
        }
        PointCloud::new(cloud.dim(), coords, CloudSource::Derived)
    }
}

fn apply_field(
    base: &ManifoldModel,
    field: &DeformationField,
    amplitude: f64,
    point: &[f64],
) -> Vec<f64> {
    if amplitude == 0.0 {
        return point.to_vec();
    }
    match field {
        DeformationField::Rotation => {
            let mut coords = base.to_coords(point);
            // shift of the primary angle by arc length `amplitude`
            let radius = match base.kind {
                ManifoldKind::Circle { radius } => radius,
                ManifoldKind::Sphere { radius } => radius,
                ManifoldKind::FlatTorus { r_major, .. } => r_major,
            };
            match base.kind {
                ManifoldKind::Circle { .. } => coords[0] += amplitude / radius,
                ManifoldKind::Sphere { .. } => coords[1] += amplitude / radius,
                ManifoldKind::FlatTorus { .. } => coords[0] += amplitude / radius,
            }
            base.to_ambient(&coords)
        }
        DeformationField::EigenGradients(terms) => {
            let basis = base.tangent_basis(point);
            let d = base.intrinsic_dim();
            let h = 1e-5;
            let mut tangent = vec![0.0; point.len()];
            for (idx, a) in terms {
                let pair = base
                    .eigenpair(*idx)
                    .expect("eigen gradient field requires a valid eigen index");
                for i in 0..d {
                    let mut step = vec![0.0; d];
                    step[i] = h;
                    let plus = pair.function.eval(&base.chart_exp(point, &step));
                    step[i] = -h;
                    let minus = pair.function.eval(&base.chart_exp(point, &step));
                    let grad_i = (plus - minus) / (2.0 * h);
                    for (t, b) in tangent.iter_mut().zip(&basis[i]) {
                        *t += a * grad_i * b;
                    }
                }
            }
            let moved: Vec<f64> = point
                .iter()
                .zip(&tangent)
                .map(|(p, t)| p + amplitude * t)
                .collect();
            base.project(&moved)
        }
    }
}

/// Measure sup geodesic displacement and sup metric distortion of the
/// chart Jacobian over n_check sampled points.
pub fn certify_deformation(tau: &DeformationMap, n_check: usize, seed: u64) -> (f64, f64) {
    measure_field(
        &tau.base,
        &tau.field,
        tau.amplitude,
        n_check,
        seed,
    )
}

fn measure_field(
    base: &ManifoldModel,
    field: &DeformationField,
    amplitude: f64,
    n_check: usize,
    seed: u64,
) -> (f64, f64) {
    if amplitude == 0.0 {
        return (0.0, 0.0);
    }
    let cloud = base.sample_points(n_check, seed);
    let d = base.intrinsic_dim();
    let h = 1e-5;
    let mut sup_dist = 0.0f64;
    let mut sup_jac = 0.0f64;
    for p in 0..cloud.n() {
        let x = cloud.point(p);
        let tx = apply_field(base, field, amplitude, x);
        sup_dist = sup_dist.max(base.geodesic_dist(x, &tx));
        // Jacobian in charts aligned by parallel transport, measured as
        // metric distortion ||J^T J - I||_F so that isometries certify to
        // zero regardless of holonomy between x and tau(x)
        let frame = base.transported_frame(x, &tx);
        let mut jac = vec![vec![0.0f64; d]; d]; // columns
        for j in 0..d {
            let mut step = vec![0.0; d];
            step[j] = h;
            let yp = apply_field(base, field, amplitude, &base.chart_exp(x, &step));
            step[j] = -h;
            let ym = apply_field(base, field, amplitude, &base.chart_exp(x, &step));
            let lp = base.chart_log_in_frame(&tx, &yp, &frame);
            let lm = base.chart_log_in_frame(&tx, &ym, &frame);
            for i in 0..d {
                jac[j][i] = (lp[i] - lm[i]) / (2.0 * h);
            }
        }
        let mut dev = 0.0;
        for a in 0..d {
            for b in 0..d {
                let dot: f64 = (0..d).map(|i| jac[a][i] * jac[b][i]).sum();
                let delta = if a == b { dot - 1.0 } else { dot };
                dev += delta * delta;
            }
        }
        sup_jac = sup_jac.max(dev.sqrt());
    }
    // finite-difference noise floor (chart conditioning degrades near the
    // sphere poles); genuine distortions of interest are orders larger
    if sup_jac < 2e-5 {
        sup_jac = 0.0;
    }
    (sup_dist, sup_jac)
}

/// Build a deformation and auto-scale its amplitude by bisection so both
/// certified suprema land at (or just under) the nominal gamma budget.
pub fn deform(
    m: &ManifoldModel,
    field: DeformationField,
    nominal_gamma: f64,
    n_check: usize,
    seed: u64,
) -> Result<DeformationMap> {
    if nominal_gamma < 0.0 {
        return Err(Error::config("nominal gamma must be nonnegative"));
    }
    if nominal_gamma == 0.0 {
        let mut id = DeformationMap::identity(*m);
        id.field = field;
        return Ok(id);
    }
    let measure = |amp: f64| measure_field(m, &field, amp, n_check, seed);
    // bracket: find an amplitude whose measured size exceeds the budget
    let mut hi = nominal_gamma;
    let mut m_hi = measure(hi);
    let mut grow = 0;
    while m_hi.0.max(m_hi.1) < nominal_gamma {
        hi *= 2.0;
        m_hi = measure(hi);
        grow += 1;
        if grow > 60 {
            return Err(Error::Numeric(
                "deformation field is degenerate: amplitude bisection cannot reach the gamma budget"
                    .into(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let mm = measure(mid);
        if mm.0.max(mm.1) > nominal_gamma {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (gd, gj) = measure(lo);
    Ok(DeformationMap {
        base: *m,
        field,
        amplitude: lo,
        nominal_gamma,
        certified_gamma_dist: gd,
        certified_gamma_jac: gj,
    })
}

/// f composed with tau: evaluation at x returns f(tau(x)).
pub struct Pushforward<'a, F: ManifoldFn> {
    pub f: &'a F,
    pub tau: &'a DeformationMap,
}

impl<F: ManifoldFn> ManifoldFn for Pushforward<'_, F> {
    fn eval(&self, point: &[f64]) -> f64 {
        self.f.eval(&self.tau.apply(point))
    }
}

pub fn pushforward_signal<'a, F: ManifoldFn>(
    f: &'a F,
    tau: &'a DeformationMap,
) -> Pushforward<'a, F> {
    Pushforward { f, tau }
}

/// Monte-Carlo estimate of the manifold inner product <f, g>_M, with the
/// standard error of the mean.
pub fn mc_inner_product(
    m: &ManifoldModel,
    f: &impl ManifoldFn,
    g: &impl ManifoldFn,
    n: usize,
    seed: u64,
) -> (f64, f64) {
    let cloud = m.sample_points(n, seed);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for i in 0..n {
        let v = f.eval(cloud.point(i)) * g.eval(cloud.point(i));
        sum += v;
        sumsq += v * v;
    }
    let mean = sum / n as f64;
    let var = (sumsq / n as f64 - mean * mean).max(0.0);
    (mean, (var / n as f64).sqrt())
}
