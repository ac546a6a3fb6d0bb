//! Fixed-grid quadrature over a standard-normal ability prior.

/// Evenly spaced nodes on `[-6, 6]` with standard-normal density weights,
/// renormalized to sum to one. This discretized prior is shared by the EM
/// fitter and the EAP scorer, which is what makes their likelihoods
/// comparable across iterations.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub log_weights: Vec<f64>,
}

const HALF_WIDTH: f64 = 6.0;

impl QuadratureGrid {
    pub fn standard_normal(n_nodes: usize) -> Self {
        assert!(n_nodes >= 2, "need at least 2 quadrature nodes");
        let step = 2.0 * HALF_WIDTH / (n_nodes - 1) as f64;
        let nodes: Vec<f64> = (0..n_nodes)
            .map(|q| -HALF_WIDTH + q as f64 * step)
            .collect();
        let raw: Vec<f64> = nodes.iter().map(|&t| (-0.5 * t * t).exp()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let log_weights: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        QuadratureGrid {
            nodes,
            weights,
            log_weights,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one_and_grid_is_symmetric() {
        let g = QuadratureGrid::standard_normal(61);
        let sum: f64 = g.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(g.nodes[0], -6.0);
        assert_eq!(g.nodes[60], 6.0);
        // Prior mean zero by symmetry.
        let mean: f64 = g.nodes.iter().zip(&g.weights).map(|(t, w)| t * w).sum();
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn prior_variance_is_close_to_one() {
        let g = QuadratureGrid::standard_normal(61);
        let var: f64 = g.nodes.iter().zip(&g.weights).map(|(t, w)| t * t * w).sum();
        assert!((var - 1.0).abs() < 1e-3, "variance {var}");
    }
}
