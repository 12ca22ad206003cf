//! Component-level kernels shared by [`super::Jet2`] and [`super::Tape`].
//!
//! A jet with `k` tangent directions is stored flat as
//! `[val, d1[0..k], d2[0..k(k+1)/2]]` with the second-derivative block in
//! upper-triangular pair order `(0,0), (0,1), .., (0,k-1), (1,1), ..`.
//! Forward rules are the truncated second-order Taylor arithmetic; backward
//! rules are the exact transposes of the forward Jacobians, which is what a
//! reverse sweep over jet-valued intermediates needs.

/// Number of stored components for `k` directions.
pub fn ncomp(k: usize) -> usize {
    1 + k + k * (k + 1) / 2
}

/// Packed index of the direction pair `(i, j)` with `i <= j`.
pub fn pack(k: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < k);
    i * (2 * k - i + 1) / 2 + (j - i)
}

/// Packed index for an unordered pair.
pub fn pack_sym(k: usize, i: usize, j: usize) -> usize {
    if i <= j {
        pack(k, i, j)
    } else {
        pack(k, j, i)
    }
}

/// Forward rule for a smooth unary op with value `f0` and first/second
/// derivatives `f1`, `f2` at the operand's value.
pub fn unary_forward(k: usize, f0: f64, f1: f64, f2: f64, a: &[f64], out: &mut [f64]) {
    out[0] = f0;
    for i in 0..k {
        out[1 + i] = f1 * a[1 + i];
    }
    let o = 1 + k;
    let mut p = 0;
    for i in 0..k {
        let ai = a[1 + i];
        for j in i..k {
            out[o + p] = f1 * a[o + p] + f2 * ai * a[1 + j];
            p += 1;
        }
    }
}

/// Reverse rule for a unary op: accumulates the operand adjoint given the
/// output adjoint `c_adj`. `f3` is the third derivative at the operand's
/// value; it enters because the output's second-derivative components
/// depend on the operand's value through `f2`.
pub fn unary_backward(
    k: usize,
    f1: f64,
    f2: f64,
    f3: f64,
    a: &[f64],
    c_adj: &[f64],
    a_adj: &mut [f64],
) {
    let o = 1 + k;
    let mut acc = c_adj[0] * f1;
    let mut p = 0;
    for i in 0..k {
        acc += f2 * c_adj[1 + i] * a[1 + i];
        let ai = a[1 + i];
        for j in i..k {
            acc += c_adj[o + p] * (f2 * a[o + p] + f3 * ai * a[1 + j]);
            p += 1;
        }
    }
    a_adj[0] += acc;
    for i in 0..k {
        let mut acc = f1 * c_adj[1 + i];
        for j in 0..k {
            let fac = if i == j { 2.0 } else { 1.0 };
            acc += f2 * fac * c_adj[o + pack_sym(k, i, j)] * a[1 + j];
        }
        a_adj[1 + i] += acc;
    }
    for p in 0..k * (k + 1) / 2 {
        a_adj[o + p] += f1 * c_adj[o + p];
    }
}

/// Forward rule for the jet product `out = a * b` (truncated Taylor
/// convolution).
pub fn mul_forward(k: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    out[0] = a[0] * b[0];
    for i in 0..k {
        out[1 + i] = a[0] * b[1 + i] + a[1 + i] * b[0];
    }
    let o = 1 + k;
    let mut p = 0;
    for i in 0..k {
        for j in i..k {
            out[o + p] =
                a[0] * b[o + p] + a[1 + i] * b[1 + j] + a[1 + j] * b[1 + i] + a[o + p] * b[0];
            p += 1;
        }
    }
}

/// Reverse rule for the product: accumulates the adjoint of operand `a`
/// from the output adjoint `c_adj` and the value of the *other* operand
/// `b`. (This is the transpose of "multiply by the jet b", a correlation
/// rather than a convolution.) Call twice, swapping operands, for both
/// adjoints; for a square call it twice with the same operand.
pub fn mul_backward(k: usize, c_adj: &[f64], b: &[f64], a_adj: &mut [f64]) {
    let o = 1 + k;
    let np = k * (k + 1) / 2;
    let mut acc = c_adj[0] * b[0];
    for i in 0..k {
        acc += c_adj[1 + i] * b[1 + i];
    }
    for p in 0..np {
        acc += c_adj[o + p] * b[o + p];
    }
    a_adj[0] += acc;
    for i in 0..k {
        let mut acc = c_adj[1 + i] * b[0];
        for j in 0..k {
            let fac = if i == j { 2.0 } else { 1.0 };
            acc += fac * c_adj[o + pack_sym(k, i, j)] * b[1 + j];
        }
        a_adj[1 + i] += acc;
    }
    for p in 0..np {
        a_adj[o + p] += c_adj[o + p] * b[0];
    }
}

/// Derivative coefficients `(value, f', f'', f''')` of the supported
/// smooth primitives, written in terms of either the input `x` or the
/// already-computed output `y` (whichever is numerically cheaper).
pub mod coeffs {
    pub fn tanh(x: f64) -> (f64, f64, f64, f64) {
        let y = x.tanh();
        let s = 1.0 - y * y;
        (y, s, -2.0 * y * s, -2.0 * s * (1.0 - 3.0 * y * y))
    }

    pub fn sigmoid(x: f64) -> (f64, f64, f64, f64) {
        // 1 / (1 + e^-x), evaluated branch-free in a stable form
        let y = if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        };
        let s = y * (1.0 - y);
        (y, s, s * (1.0 - 2.0 * y), s * (1.0 - 6.0 * y + 6.0 * y * y))
    }

    pub fn exp(x: f64) -> (f64, f64, f64, f64) {
        let y = x.exp();
        (y, y, y, y)
    }

    pub fn ln(x: f64) -> (f64, f64, f64, f64) {
        let inv = 1.0 / x;
        (x.ln(), inv, -inv * inv, 2.0 * inv * inv * inv)
    }

    pub fn ln_1p(x: f64) -> (f64, f64, f64, f64) {
        let inv = 1.0 / (1.0 + x);
        (x.ln_1p(), inv, -inv * inv, 2.0 * inv * inv * inv)
    }

    pub fn recip(x: f64) -> (f64, f64, f64, f64) {
        let y = 1.0 / x;
        (y, -y * y, 2.0 * y * y * y, -6.0 * y * y * y * y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packing_is_a_bijection() {
        for k in 1..6 {
            let mut seen = vec![false; k * (k + 1) / 2];
            for i in 0..k {
                for j in i..k {
                    let p = pack(k, i, j);
                    assert!(!seen[p]);
                    seen[p] = true;
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }
}
