//! Gauss-Hermite quadrature with weight `exp(-y^2)` on the real line.

/// Nodes and weights of an n-point Gauss-Hermite rule: the rule integrates
/// `p(y) exp(-y^2)` exactly for polynomials `p` up to degree `2n - 1`, and
/// the weights sum to `sqrt(pi)`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate `f(y) exp(-y^2) dy` over the real line. Mirror nodes are
    /// summed as pairs so that the symmetry of the rule carries over to the
    /// result (odd integrands cancel exactly).
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let n = self.nodes.len();
        let mut total = 0.0;
        for i in 0..n / 2 {
            let j = n - 1 - i;
            total += self.weights[i] * f(self.nodes[i]) + self.weights[j] * f(self.nodes[j]);
        }
        if n % 2 == 1 {
            total += self.weights[n / 2] * f(self.nodes[n / 2]);
        }
        total
    }
}

/// Evaluate the orthonormal Hermite polynomial of degree `n` (with respect
/// to the weight `exp(-y^2)`) and its predecessor at `y`.
///
/// The orthonormal recurrence p_{k+1} = y sqrt(2/(k+1)) p_k - sqrt(k/(k+1)) p_{k-1}
/// stays O(1) in magnitude near the nodes, avoiding the overflow the raw
/// physicists' polynomials would hit for large n.
fn hermite_orthonormal(n: usize, y: f64) -> (f64, f64) {
    let mut p_prev = 0.0;
    let mut p = std::f64::consts::PI.powf(-0.25);
    for k in 0..n {
        let kf = k as f64;
        let p_next = y * (2.0 / (kf + 1.0)).sqrt() * p - (kf / (kf + 1.0)).sqrt() * p_prev;
        p_prev = p;
        p = p_next;
    }
    (p, p_prev)
}

/// Construct the n-point Gauss-Hermite rule by Newton iteration on the
/// orthonormal Hermite polynomial, using the standard asymptotic initial
/// guesses for the roots (largest first). Nodes are returned in increasing
/// order and are exactly symmetric about zero.
pub fn gauss_hermite(n: usize) -> QuadratureRule {
    assert!(n >= 1, "quadrature needs at least one node");
    let mut half_nodes: Vec<f64> = Vec::with_capacity(n / 2 + 1);
    let mut half_weights: Vec<f64> = Vec::with_capacity(n / 2 + 1);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..(n + 1) / 2 {
        // Initial guesses per Numerical-Recipes-style asymptotics.
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * half_nodes[0],
            3 => 1.91 * z - 0.91 * half_nodes[1],
            _ => 2.0 * z - half_nodes[i - 2],
        };
        for iter in 0.. {
            let (p, p_prev) = hermite_orthonormal(n, z);
            // derivative of the orthonormal polynomial
            let dp = (2.0 * nf).sqrt() * p_prev;
            let dz = p / dp;
            z -= dz;
            if dz.abs() <= 1e-15 * (1.0 + z.abs()) {
                break;
            }
            assert!(iter < 100, "Gauss-Hermite Newton iteration did not converge");
        }
        let (_, p_prev) = hermite_orthonormal(n, z);
        let dp = (2.0 * nf).sqrt() * p_prev;
        half_nodes.push(z);
        half_weights.push(2.0 / (dp * dp));
    }
    // half_nodes holds the positive roots in decreasing order (middle root
    // of an odd rule is pinned to exactly zero); assemble the full rule in
    // increasing node order with exact +/- symmetry.
    let h = (n + 1) / 2;
    if n % 2 == 1 {
        half_nodes[h - 1] = 0.0;
    }
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..h {
        nodes.push(-half_nodes[i]);
        weights.push(half_weights[i]);
    }
    for i in (0..h - n % 2).rev() {
        nodes.push(half_nodes[i]);
        weights.push(half_weights[i]);
    }
    QuadratureRule { nodes, weights }
}
