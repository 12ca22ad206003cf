//! Second-order truncated-Taylor values ("jets").
//!
//! A [`Jet2`] carries a value, first directional derivatives along `k`
//! tangent directions and the packed upper triangle of second directional
//! derivatives. Arithmetic propagates all components exactly, so a
//! function evaluated on seeded jets returns its value, gradient and
//! Hessian with respect to the seeded inputs in one pass.

use super::kernels::{self, coeffs};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    k: usize,
    comps: Vec<f64>,
}

impl Jet2 {
    /// Constant with respect to every direction.
    pub fn constant(val: f64, k: usize) -> Self {
        let mut comps = vec![0.0; kernels::ncomp(k)];
        comps[0] = val;
        Jet2 { k, comps }
    }

    /// Input variable seeded along direction `dir` with the given slope
    /// (the chain-rule factor when the direction is a scaled coordinate).
    pub fn seeded(val: f64, k: usize, dir: usize, slope: f64) -> Self {
        let mut j = Jet2::constant(val, k);
        j.comps[1 + dir] = slope;
        j
    }

    /// Variable with a unit seed along `dir`.
    pub fn variable(val: f64, k: usize, dir: usize) -> Self {
        Jet2::seeded(val, k, dir, 1.0)
    }

    pub fn from_components(k: usize, comps: Vec<f64>) -> Self {
        assert_eq!(comps.len(), kernels::ncomp(k));
        Jet2 { k, comps }
    }

    pub fn directions(&self) -> usize {
        self.k
    }

    pub fn val(&self) -> f64 {
        self.comps[0]
    }

    /// First derivative along direction `i`.
    pub fn d1(&self, i: usize) -> f64 {
        self.comps[1 + i]
    }

    /// Second derivative for the direction pair `(i, j)` (order-free).
    pub fn d2(&self, i: usize, j: usize) -> f64 {
        self.comps[1 + self.k + kernels::pack_sym(self.k, i, j)]
    }

    pub fn d1_slice(&self) -> &[f64] {
        &self.comps[1..1 + self.k]
    }

    pub fn d2_slice(&self) -> &[f64] {
        &self.comps[1 + self.k..]
    }

    pub fn components(&self) -> &[f64] {
        &self.comps
    }

    fn binary(&self, other: &Jet2, f: impl Fn(usize, &[f64], &[f64], &mut [f64])) -> Jet2 {
        assert_eq!(self.k, other.k, "jets carry different direction counts");
        let mut out = vec![0.0; self.comps.len()];
        f(self.k, &self.comps, &other.comps, &mut out);
        Jet2 { k: self.k, comps: out }
    }

    fn unary(&self, (f0, f1, f2, _): (f64, f64, f64, f64)) -> Jet2 {
        let mut out = vec![0.0; self.comps.len()];
        kernels::unary_forward(self.k, f0, f1, f2, &self.comps, &mut out);
        Jet2 { k: self.k, comps: out }
    }

    pub fn add(&self, other: &Jet2) -> Jet2 {
        self.binary(other, |_, a, b, out| {
            for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
                *o = x + y;
            }
        })
    }

    pub fn sub(&self, other: &Jet2) -> Jet2 {
        self.binary(other, |_, a, b, out| {
            for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
                *o = x - y;
            }
        })
    }

    pub fn mul(&self, other: &Jet2) -> Jet2 {
        self.binary(other, kernels::mul_forward)
    }

    pub fn div(&self, other: &Jet2) -> Jet2 {
        self.mul(&other.recip())
    }

    pub fn neg(&self) -> Jet2 {
        self.scale(-1.0)
    }

    /// Multiply all components by a constant.
    pub fn scale(&self, s: f64) -> Jet2 {
        let comps = self.comps.iter().map(|c| c * s).collect();
        Jet2 { k: self.k, comps }
    }

    /// Add a constant to the value.
    pub fn shift(&self, s: f64) -> Jet2 {
        let mut out = self.clone();
        out.comps[0] += s;
        out
    }

    pub fn tanh(&self) -> Jet2 {
        self.unary(coeffs::tanh(self.val()))
    }

    pub fn sigmoid(&self) -> Jet2 {
        self.unary(coeffs::sigmoid(self.val()))
    }

    pub fn exp(&self) -> Jet2 {
        self.unary(coeffs::exp(self.val()))
    }

    pub fn ln(&self) -> Jet2 {
        self.unary(coeffs::ln(self.val()))
    }

    pub fn ln_1p(&self) -> Jet2 {
        self.unary(coeffs::ln_1p(self.val()))
    }

    pub fn recip(&self) -> Jet2 {
        self.unary(coeffs::recip(self.val()))
    }
}

impl std::ops::Add for &Jet2 {
    type Output = Jet2;
    fn add(self, rhs: &Jet2) -> Jet2 {
        Jet2::add(self, rhs)
    }
}

impl std::ops::Sub for &Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: &Jet2) -> Jet2 {
        Jet2::sub(self, rhs)
    }
}

impl std::ops::Mul for &Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: &Jet2) -> Jet2 {
        Jet2::mul(self, rhs)
    }
}

/// Lift a coordinate vector to jets: entry `i` gets value `x[i]` and first
/// derivatives from row `i` of `directions` (one column per tangent
/// direction); second derivatives start at zero.
pub fn jet_lift(x: &[f64], directions: &Matrix) -> Vec<Jet2> {
    assert_eq!(
        x.len(),
        directions.rows(),
        "one direction row per input coordinate required"
    );
    let k = directions.cols();
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut j = Jet2::constant(v, k);
            for (dir, &slope) in directions.row(i).iter().enumerate() {
                j.comps[1 + dir] = slope;
            }
            j
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lift_seeds_values_and_directions() {
        let dirs = Matrix::from_rows(&[&[1.0]]);
        let jets = jet_lift(&[3.0], &dirs);
        assert_eq!(jets[0].val(), 3.0);
        assert_eq!(jets[0].d1_slice(), &[1.0]);
        assert_eq!(jets[0].d2_slice(), &[0.0]);

        let jets = jet_lift(&[1.0, 2.0], &Matrix::identity(2));
        assert_eq!(jets[0].d1_slice(), &[1.0, 0.0]);
        assert_eq!(jets[1].d1_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn zero_directions_stay_zero_through_arithmetic() {
        let dirs = Matrix::zeros(2, 2);
        let jets = jet_lift(&[0.7, -0.4], &dirs);
        let out = jets[0].mul(&jets[1]).tanh().exp();
        assert!(out.d1_slice().iter().all(|&d| d == 0.0));
        assert!(out.d2_slice().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn tanh_of_constant_zero() {
        let a = Jet2::constant(0.0, 1);
        let t = a.tanh();
        assert_eq!(t.val(), 0.0);
        assert_eq!(t.d1_slice(), &[0.0]);
        assert_eq!(t.d2_slice(), &[0.0]);
    }

    #[test]
    fn tanh_second_derivative_vanishes_at_origin() {
        let a = Jet2::variable(0.0, 1, 0);
        let t = a.tanh();
        assert_eq!(t.val(), 0.0);
        assert_eq!(t.d1(0), 1.0);
        assert_eq!(t.d2(0, 0), 0.0);
    }

    #[test]
    fn tanh_matches_finite_differences() {
        let x = 0.5;
        let h = 1e-5;
        let t = Jet2::variable(x, 1, 0).tanh();
        let fd1 = ((x + h).tanh() - (x - h).tanh()) / (2.0 * h);
        let fd2 = ((x + h).tanh() - 2.0 * x.tanh() + (x - h).tanh()) / (h * h);
        assert!((t.d1(0) - fd1).abs() < 1e-8);
        assert!((t.d2(0, 0) - fd2).abs() < 1e-6);
    }

    #[test]
    fn product_rule_with_two_directions() {
        // f(u, v) = u * v at (2, 3): grad (3, 2), Hessian [[0,1],[1,0]]
        let u = Jet2::variable(2.0, 2, 0);
        let v = Jet2::variable(3.0, 2, 1);
        let f = u.mul(&v);
        assert_eq!(f.val(), 6.0);
        assert_eq!(f.d1(0), 3.0);
        assert_eq!(f.d1(1), 2.0);
        assert_eq!(f.d2(0, 0), 0.0);
        assert_eq!(f.d2(0, 1), 1.0);
        assert_eq!(f.d2(1, 1), 0.0);
    }

    #[test]
    fn division_inverts_multiplication() {
        let a = Jet2::variable(1.3, 2, 0);
        let b = Jet2::variable(0.8, 2, 1);
        let c = a.mul(&b).div(&b);
        for (x, y) in c.components().iter().zip(a.components()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn mixed_partials_symmetric_under_direction_swap() {
        // f(u, v) = u * exp(v), directions assigned both ways round
        let f = |udir: usize, vdir: usize| {
            let u = Jet2::variable(1.2, 2, udir);
            let v = Jet2::variable(0.3, 2, vdir);
            u.mul(&v.exp())
        };
        let a = f(0, 1);
        let b = f(1, 0);
        assert_eq!(a.d2(0, 1), b.d2(1, 0));
        assert!((a.d2(0, 1) - 0.3f64.exp()).abs() < 1e-14);
    }
}
