//! Exponential-sum approximation of the rough kernel.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::QrhError;

/// Decay rates `γ_i` (per day) and weights `c_i` with
/// `Σ c_i e^{-γ_i t} ≈ t^{H-1/2}/Γ(H+1/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "StoredNodes")]
pub struct KernelNodes {
    pub h: f64,
    pub gammas: Vec<f64>,
    pub weights: Vec<f64>,
    /// Cell edges in rate space, `edges[0] = 0`.
    pub edges: Vec<f64>,
    /// `e^{-γ_i}`, the one-day factor decay.
    #[serde(skip)]
    pub decays: Vec<f64>,
}

impl KernelNodes {
    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.gammas
            .iter()
            .zip(&self.weights)
            .map(|(g, c)| c * (-g * t).exp())
            .sum()
    }

    /// Recomputes the decay factors from `gammas`.
    pub fn refresh(&mut self) {
        self.decays = self.gammas.iter().map(|g| (-g).exp()).collect();
    }
}

#[derive(Deserialize)]
struct StoredNodes {
    h: f64,
    gammas: Vec<f64>,
    weights: Vec<f64>,
    edges: Vec<f64>,
}

impl From<StoredNodes> for KernelNodes {
    fn from(s: StoredNodes) -> Self {
        let mut n = KernelNodes {
            h: s.h,
            gammas: s.gammas,
            weights: s.weights,
            edges: s.edges,
            decays: Vec::new(),
        };
        n.refresh();
        n
    }
}

/// Builds `n` nodes from the Laplace representation
/// `K(t) = ∫ e^{-γt} γ^{-H-1/2} dγ / (Γ(H+1/2) Γ(1/2-H))`.
///
/// Rate space is cut at `η_i = η_1 r^{i-1}` (geometric, `η_n = 1/t_min`,
/// `η_0` on the geometric grid would be `1/t_max`) except that the first
/// cell starts at zero so no low-rate mass is dropped. Each node carries its
/// cell's mass as weight and the cell's barycenter as rate.
pub fn kernel_nodes(h: f64, n: usize, t_min: f64, t_max: f64) -> Result<KernelNodes, QrhError> {
    if !(h > 0.0 && h < 0.5) {
        return Err(QrhError::Kernel(format!("H = {h} outside (0, 1/2)")));
    }
    if n < 1 {
        return Err(QrhError::Kernel("need at least one factor".into()));
    }
    if !(t_min > 0.0 && t_min < t_max && t_max.is_finite()) {
        return Err(QrhError::Kernel(format!("window [{t_min}, {t_max}]")));
    }
    let lo = 1.0 / t_max;
    let hi = 1.0 / t_min;
    let ratio = (hi / lo).powf(1.0 / n as f64);
    let mut edges: Vec<f64> = (0..=n).map(|i| lo * ratio.powi(i as i32)).collect();
    edges[0] = 0.0;
    edges[n] = hi;

    let a = 0.5 - h;
    let norm = a * gamma(h + 0.5) * gamma(0.5 - h);
    let mut gammas = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for w in edges.windows(2) {
        let (e0, e1) = (w[0], w[1]);
        let mass = e1.powf(a) - e0.powf(a);
        weights.push(mass / norm);
        gammas.push(a / (1.5 - h) * (e1.powf(1.5 - h) - e0.powf(1.5 - h)) / mass);
    }
    let mut nodes = KernelNodes {
        h,
        gammas,
        weights,
        edges,
        decays: Vec::new(),
    };
    nodes.refresh();
    Ok(nodes)
}

/// Relative L² error of the node sum against `K` on a uniform grid of
/// `points` samples over `[t0, t1]`.
pub fn relative_l2_error(nodes: &KernelNodes, t0: f64, t1: f64, points: usize) -> f64 {
    let g = gamma(nodes.h + 0.5);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..points {
        let t = t0 + (t1 - t0) * i as f64 / (points - 1) as f64;
        let k = t.powf(nodes.h - 0.5) / g;
        num += (nodes.eval(t) - k).powi(2);
        den += k * k;
    }
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss_legendre_16<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
        const X: [f64; 8] = [
            0.0950125098376374,
            0.2816035507792589,
            0.4580167776572274,
            0.6178762444026438,
            0.755404408355003,
            0.8656312023878318,
            0.9445750230732326,
            0.9894009349916499,
        ];
        const W: [f64; 8] = [
            0.1894506104550685,
            0.1826034150449236,
            0.1691565193950025,
            0.1495959888165767,
            0.1246289712555339,
            0.0951585116824928,
            0.0622535239386479,
            0.0271524594117541,
        ];
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let (lo, hi) = (a + p as f64 * h, a + (p + 1) as f64 * h);
                let (m, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                X.iter()
                    .zip(&W)
                    .map(|(x, w)| w * r * (f(m + r * x) + f(m - r * x)))
                    .sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn cell_weight_matches_quadrature() {
        let h = 0.1;
        let nodes = kernel_nodes(h, 5, 1.0, 500.0).unwrap();
        let density = |g: f64| g.powf(-h - 0.5) / (gamma(h + 0.5) * gamma(0.5 - h));
        for i in 1..nodes.len() {
            let (e0, e1) = (nodes.edges[i], nodes.edges[i + 1]);
            let q = gauss_legendre_16(density, e0, e1, 200);
            assert!((q - nodes.weights[i]).abs() < 1e-10 * q, "cell {i}");
        }
        // The first cell has an integrable singularity at zero; substitute g = u^{1/a}.
        let a = 0.5 - h;
        let e1 = nodes.edges[1];
        let q0 = gauss_legendre_16(|_u| 1.0 / (a * gamma(h + 0.5) * gamma(0.5 - h)), 0.0, e1.powf(a), 4);
        assert!((q0 - nodes.weights[0]).abs() < 1e-12 * q0);
    }

    #[test]
    fn rates_inside_cells_and_increasing() {
        let nodes = kernel_nodes(0.1, 10, 1.0, 500.0).unwrap();
        for i in 0..nodes.len() {
            assert!(nodes.edges[i] < nodes.gammas[i] && nodes.gammas[i] < nodes.edges[i + 1]);
            assert!(nodes.weights[i] > 0.0);
        }
        assert!(nodes.gammas.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn approximation_error_on_window() {
        let nodes = kernel_nodes(0.1, 10, 1.0, 500.0).unwrap();
        assert!(relative_l2_error(&nodes, 1.0, 500.0, 50_000) < 0.05);
    }

    #[test]
    fn invalid_inputs() {
        assert!(kernel_nodes(0.6, 10, 1.0, 500.0).is_err());
        assert!(kernel_nodes(0.1, 0, 1.0, 500.0).is_err());
        assert!(kernel_nodes(0.1, 10, 5.0, 1.0).is_err());
    }
}
