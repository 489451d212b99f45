#![allow(dead_code)]

use vtg::explorer::{initial_state, tree_stats, InitialConfiguration, PriorityRule, TreeSettings};
use vtg::{Circuit, FuelParameters};

/// Classical RK4 on `phi' = -(rho + lambda phi)`.
pub fn rk4_fuel(f: &FuelParameters, phi0: f64, t: f64, steps: usize) -> f64 {
    let rhs = |phi: f64| -(f.rho + f.lambda * phi);
    let h = t / steps as f64;
    let mut y = phi0;
    for _ in 0..steps {
        let k1 = rhs(y);
        let k2 = rhs(y + 0.5 * h * k1);
        let k3 = rhs(y + 0.5 * h * k2);
        let k4 = rhs(y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

/// Pairwise-difference Gini straight from the definition.
pub fn gini_pairs(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let mut s = 0.0;
    for a in xs {
        for b in xs {
            s += (a - b).abs();
        }
    }
    s / (2.0 * n * n * mean)
}

/// Sorted (leaves, longest path, cycles) over all configurations: the shape
/// of the forest of trees for a priority vector.
pub fn forest_shape(c: &Circuit, configs: &[InitialConfiguration], w: [f64; 3]) -> Vec<(usize, u32, bool)> {
    let settings = TreeSettings::unlimited(c, Default::default());
    let rule = PriorityRule::Fixed(w.to_vec());
    let mut v: Vec<_> = configs
        .iter()
        .map(|init| {
            let t = tree_stats(c, initial_state(init, &w, &[0.0; 3]), &rule, &settings).unwrap();
            (t.leaves, t.max_len, t.has_cycle)
        })
        .collect();
    v.sort_unstable();
    v
}
