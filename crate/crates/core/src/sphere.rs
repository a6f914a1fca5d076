//! Quadrature on the unit sphere.
//!
//! The rule is a tensor product of Gauss-Legendre nodes in `cos θ` and
//! equispaced nodes in the azimuth `φ`. A rule of order `p` uses
//! `p / 2 + 1` rings and `p + 1` azimuthal nodes per ring, which makes it
//! exact for every polynomial in `(ω_x, ω_y, ω_z)` of total degree `≤ p`.
//!
//! Nodes are generated on the fly from the ring and azimuth tables, so very
//! high orders stay cheap in memory.

use std::f64::consts::PI;

use nalgebra::{Unit, Vector3};
use thiserror::Error;

use crate::quad::GaussLegendre;

/// Smallest supported polynomial-exactness order.
pub const MIN_ORDER: usize = 2;
/// Largest supported polynomial-exactness order.
pub const MAX_ORDER: usize = 4000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("unsupported sphere rule order {order}; supported orders are {min}..={max}")]
    UnsupportedOrder { order: usize, min: usize, max: usize },
    #[error("integrand is not finite at node {index} (omega = [{x}, {y}, {z}])")]
    NonFinite { index: usize, x: f64, y: f64, z: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Ring {
    cos_theta: f64,
    sin_theta: f64,
    weight: f64,
}

/// Product quadrature rule on `S²`. Immutable once built.
#[derive(Debug, Clone)]
pub struct SphereRule {
    order: usize,
    rings: Vec<Ring>,
    azimuth: Vec<(f64, f64)>,
    azimuth_weight: f64,
}

impl SphereRule {
    /// Builds the product rule exact to polynomial degree `order`.
    pub fn new(order: usize) -> Result<Self, QuadratureError> {
        if !(MIN_ORDER..=MAX_ORDER).contains(&order) {
            return Err(QuadratureError::UnsupportedOrder {
                order,
                min: MIN_ORDER,
                max: MAX_ORDER,
            });
        }
        let gl = GaussLegendre::new(order / 2 + 1);
        let rings = gl
            .nodes()
            .iter()
            .zip(gl.weights())
            .rev()
            .map(|(&mu, &w)| Ring {
                cos_theta: mu,
                sin_theta: (1.0 - mu * mu).max(0.0).sqrt(),
                weight: w,
            })
            .collect();
        let n_phi = order + 1;
        let azimuth = (0..n_phi)
            .map(|j| {
                let phi = 2.0 * PI * j as f64 / n_phi as f64;
                (phi.cos(), phi.sin())
            })
            .collect();
        Ok(Self {
            order,
            rings,
            azimuth,
            azimuth_weight: 2.0 * PI / n_phi as f64,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.rings.len() * self.azimuth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ring_count(&self) -> usize {
        self.rings.len()
    }

    pub fn azimuth_count(&self) -> usize {
        self.azimuth.len()
    }

    /// Node `i` (ring-major ordering).
    pub fn node(&self, i: usize) -> Vector3<f64> {
        let ring = &self.rings[i / self.azimuth.len()];
        let (c, s) = self.azimuth[i % self.azimuth.len()];
        Vector3::new(ring.sin_theta * c, ring.sin_theta * s, ring.cos_theta)
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.rings[i / self.azimuth.len()].weight * self.azimuth_weight
    }

    /// Iterates `(node, weight)` pairs in ring-major order.
    pub fn iter(&self) -> impl Iterator<Item = (Vector3<f64>, f64)> + '_ {
        self.rings.iter().flat_map(move |ring| {
            let w = ring.weight * self.azimuth_weight;
            self.azimuth.iter().map(move |&(c, s)| {
                (
                    Vector3::new(ring.sin_theta * c, ring.sin_theta * s, ring.cos_theta),
                    w,
                )
            })
        })
    }

    /// `Σ w_i f(ω_i)`, failing on the first non-finite integrand value.
    pub fn integrate<F>(&self, mut f: F) -> Result<f64, QuadratureError>
    where
        F: FnMut(&Vector3<f64>) -> f64,
    {
        let mut acc = 0.0;
        for (index, (omega, w)) in self.iter().enumerate() {
            let val = f(&omega);
            if !val.is_finite() {
                return Err(non_finite(index, &omega));
            }
            acc += w * val;
        }
        Ok(acc)
    }

    /// Vector-valued version of [`SphereRule::integrate`].
    pub fn integrate_vec<F>(&self, mut f: F) -> Result<Vector3<f64>, QuadratureError>
    where
        F: FnMut(&Vector3<f64>) -> Vector3<f64>,
    {
        let mut acc = Vector3::zeros();
        for (index, (omega, w)) in self.iter().enumerate() {
            let val = f(&omega);
            if !val.iter().all(|c| c.is_finite()) {
                return Err(non_finite(index, &omega));
            }
            acc += w * val;
        }
        Ok(acc)
    }

    /// Unchecked weighted sum for hot loops whose integrands are finite by construction.
    pub fn sum<F>(&self, mut f: F) -> f64
    where
        F: FnMut(&Vector3<f64>) -> f64,
    {
        self.iter().map(|(omega, w)| w * f(&omega)).sum()
    }

    /// Weighted sum over the rule rotated so that its pole points along `axis`,
    /// restricted to the rings within polar angle `max_polar` of the axis.
    ///
    /// The rotated rule has the same exactness as the original. Dropping rings is
    /// exact whenever `f` vanishes outside the cone `∠(ω, axis) ≤ max_polar`.
    pub fn sum_oriented<F>(&self, axis: &Unit<Vector3<f64>>, max_polar: f64, mut f: F) -> f64
    where
        F: FnMut(&Vector3<f64>) -> f64,
    {
        let (e1, e2) = orthonormal_complement(axis);
        let cos_limit = if max_polar >= PI { -2.0 } else { max_polar.cos() };
        let mut acc = 0.0;
        for ring in self.rings.iter().take_while(|r| r.cos_theta >= cos_limit) {
            let mut ring_acc = 0.0;
            let base = axis.into_inner() * ring.cos_theta;
            for &(c, s) in &self.azimuth {
                let omega = base + e1 * (ring.sin_theta * c) + e2 * (ring.sin_theta * s);
                ring_acc += f(&omega);
            }
            acc += ring.weight * self.azimuth_weight * ring_acc;
        }
        acc
    }
}

fn non_finite(index: usize, omega: &Vector3<f64>) -> QuadratureError {
    QuadratureError::NonFinite {
        index,
        x: omega.x,
        y: omega.y,
        z: omega.z,
    }
}

/// Two unit vectors completing `axis` to a right-handed orthonormal frame.
pub(crate) fn orthonormal_complement(axis: &Unit<Vector3<f64>>) -> (Vector3<f64>, Vector3<f64>) {
    let a = axis.as_ref();
    let helper = if a.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = (helper - a * a.dot(&helper)).normalize();
    let e2 = a.cross(&e1);
    (e1, e2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn monomial(w: &Vector3<f64>, a: i32, b: i32, c: i32) -> f64 {
        w.x.powi(a) * w.y.powi(b) * w.z.powi(c)
    }

    /// Exact `∫_{S²} x^a y^b z^c dω` via the Beta-function formula.
    fn monomial_moment(a: i32, b: i32, c: i32) -> f64 {
        if a % 2 == 1 || b % 2 == 1 || c % 2 == 1 {
            return 0.0;
        }
        // 2 Γ(β_a)Γ(β_b)Γ(β_c)/Γ(β_a+β_b+β_c), β = (k+1)/2
        let lg = |x: f64| ln_gamma(x);
        let (ba, bb, bc) = (
            (a as f64 + 1.0) / 2.0,
            (b as f64 + 1.0) / 2.0,
            (c as f64 + 1.0) / 2.0,
        );
        2.0 * (lg(ba) + lg(bb) + lg(bc) - lg(ba + bb + bc)).exp()
    }

    // Lanczos approximation, adequate for the half-integers used here.
    fn ln_gamma(x: f64) -> f64 {
        const G: [f64; 9] = [
            0.999_999_999_999_809_9,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_1,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        if x < 0.5 {
            return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
        }
        let x = x - 1.0;
        let mut a = G[0];
        let t = x + 7.5;
        for (i, g) in G.iter().enumerate().skip(1) {
            a += g / (x + i as f64);
        }
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }

    #[test]
    fn unsupported_order_lists_range() {
        let err = SphereRule::new(1).unwrap_err();
        assert!(err.to_string().contains("2..=4000"));
        assert!(SphereRule::new(MAX_ORDER + 1).is_err());
    }

    #[test]
    fn nodes_are_unit_and_weights_sum_to_area() {
        for order in [2, 6, 14, 31, 200] {
            let rule = SphereRule::new(order).unwrap();
            let total: f64 = rule.iter().map(|(_, w)| w).sum();
            assert!((total - 4.0 * PI).abs() < 1e-10);
            assert!(rule.iter().all(|(n, w)| (n.norm() - 1.0).abs() < 1e-12 && w > 0.0));
            assert_eq!(rule.iter().count(), rule.len());
        }
    }

    #[test]
    fn constant_and_odd_integrands() {
        let rule = SphereRule::new(6).unwrap();
        assert_relative_eq!(rule.integrate(|_| 1.0).unwrap(), 4.0 * PI, epsilon = 1e-12);
        assert!(rule.integrate(|w| w.x).unwrap().abs() < 1e-14);
        let c = Vector3::new(1.0, -2.0, 0.5);
        let v = rule.integrate_vec(|_| c).unwrap();
        assert!((v - 4.0 * PI * c).norm() < 1e-12);
    }

    #[test]
    fn quartic_moment_order_14() {
        let rule = SphereRule::new(14).unwrap();
        let got = rule.integrate(|w| w.x * w.x * w.y * w.y).unwrap();
        // independent check of the oracle itself
        assert_relative_eq!(monomial_moment(2, 2, 0), 4.0 * PI / 15.0, epsilon = 1e-12);
        assert_relative_eq!(got, 4.0 * PI / 15.0, max_relative = 1e-12);
    }

    #[test]
    fn exact_up_to_order_for_all_monomials() {
        for order in [4, 9, 12] {
            let rule = SphereRule::new(order).unwrap();
            for a in 0..=order as i32 {
                for b in 0..=(order as i32 - a) {
                    for c in 0..=(order as i32 - a - b) {
                        let got = rule.integrate(|w| monomial(w, a, b, c)).unwrap();
                        let want = monomial_moment(a, b, c);
                        assert!(
                            (got - want).abs() <= 1e-9 * want.abs().max(1.0),
                            "order {order} monomial ({a},{b},{c}): {got} vs {want}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn plane_wave_at_first_zero() {
        // ∫ e^{i t ξ·ω} dω = 4π sin(t|ξ|)/(t|ξ|), zero at t|ξ| = π.
        let rule = SphereRule::new(30).unwrap();
        let xi = Vector3::new(0.3, -0.5, 0.8).normalize() * PI;
        let re = rule.integrate(|w| xi.dot(w).cos()).unwrap();
        let im = rule.integrate(|w| xi.dot(w).sin()).unwrap();
        assert!(re.abs() < 1e-12 && im.abs() < 1e-12, "{re} {im}");
    }

    #[test]
    fn upper_hemisphere_cosine() {
        // Kink on the equator: converges slowly, π in the limit.
        let rule = SphereRule::new(1200).unwrap();
        let got = rule.integrate(|w| w.z.max(0.0)).unwrap();
        assert!((got - PI).abs() < 1e-4, "{got}");
    }

    #[test]
    fn non_finite_names_the_node() {
        let rule = SphereRule::new(4).unwrap();
        let err = rule.integrate(|w| if w.z > 0.5 { f64::NAN } else { 1.0 }).unwrap_err();
        match err {
            QuadratureError::NonFinite { index, z, .. } => {
                assert!(z > 0.5);
                assert!(rule.node(index).z > 0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn refinement_is_monotone_for_smooth_integrand() {
        let f = |w: &Vector3<f64>| (2.0 * w.x + 1.5 * w.y * w.z).exp();
        let reference = SphereRule::new(256).unwrap().sum(f);
        let mut prev = f64::INFINITY;
        for order in [4, 8, 16, 32] {
            let err = (SphereRule::new(order).unwrap().sum(f) - reference).abs();
            assert!(err < prev || err < 1e-13, "order {order}: {err} !< {prev}");
            prev = err;
        }
    }

    #[test]
    fn oriented_sum_matches_full_sum() {
        let rule = SphereRule::new(20).unwrap();
        let axis = Unit::new_normalize(Vector3::new(1.0, 2.0, -0.5));
        let f = |w: &Vector3<f64>| w.x * w.x * w.y + 0.3 * w.z.powi(4) + 1.0;
        let full = rule.sum(f);
        let oriented = rule.sum_oriented(&axis, PI, f);
        assert_relative_eq!(full, oriented, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn rotation_invariance(ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0, angle in 0.0f64..6.28) {
            prop_assume!(ax * ax + ay * ay + az * az > 1e-3);
            let rule = SphereRule::new(10).unwrap();
            let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(ax, ay, az)), angle);
            let f = |w: &Vector3<f64>| w.x.powi(3) * w.y * w.y + w.z.powi(6) - 2.0 * w.x * w.y * w.z.powi(4) + w.y.powi(2);
            let plain = rule.sum(f);
            let rotated = rule.sum(|w| f(&(rot * w)));
            prop_assert!((plain - rotated).abs() < 1e-8);
        }
    }
}
