//! Euclidean projection onto the probability simplex and a projected-gradient
//! minimizer over it.

/// Projection of `v` onto `{x : x ≥ 0, Σx = 1}` (sort-based, O(K log K)).
pub fn project(v: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes a convex `f` over the simplex by projected gradient descent with
/// backtracking, starting from `x0`.
///
/// A step `x⁺ = P(x − t∇f)` is accepted when
/// `f(x⁺) ≤ f(x) + ∇fᵀ(x⁺ − x) + ‖x⁺ − x‖²/(2t)`; the step size grows by two
/// after each accepted step. Stops once `‖x⁺ − x‖∞ < tol`.
pub fn minimize<F, G>(f: F, grad: G, x0: &[f64], max_iters: usize, tol: f64) -> Minimum
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = project(x0);
    let mut fx = f(&x);
    let mut step = 1.0;
    for it in 0..max_iters {
        let g = grad(&x);
        let mut accepted = None;
        for _ in 0..200 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            let next = project(&trial);
            let diff: Vec<f64> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
            let lin: f64 = g.iter().zip(&diff).map(|(gi, d)| gi * d).sum();
            let sq: f64 = diff.iter().map(|d| d * d).sum();
            let fn_ = f(&next);
            if fn_ <= fx + lin + sq / (2.0 * step) || sq == 0.0 {
                accepted = Some((next, fn_, diff));
                break;
            }
            step /= 2.0;
        }
        let Some((next, fn_, diff)) = accepted else {
            return Minimum {
                x,
                value: fx,
                iterations: it,
                converged: false,
            };
        };
        let moved = diff.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        // Never accept an uphill move caused by rounding.
        if fn_ <= fx {
            x = next;
            fx = fn_;
        }
        if moved < tol {
            return Minimum {
                x,
                value: fx,
                iterations: it + 1,
                converged: true,
            };
        }
        step *= 2.0;
    }
    Minimum {
        x,
        value: fx,
        iterations: max_iters,
        converged: false,
    }
}

/// Numerical rank of a dense matrix by Gaussian elimination with partial
/// pivoting; pivots below `rel_tol · max|a|` count as zero.
pub fn rank(m: &[Vec<f64>], rel_tol: f64) -> usize {
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let scale = a.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let pivot = (r..rows)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap_or(r);
        if a[pivot][c].abs() <= rel_tol * scale {
            continue;
        }
        a.swap(r, pivot);
        let (upper, lower) = a.split_at_mut(r + 1);
        let pivot_row = &upper[r];
        for row in lower.iter_mut().take(rows - r - 1) {
            let factor = row[c] / pivot_row[c];
            for (x, p) in row[c..cols].iter_mut().zip(&pivot_row[c..cols]) {
                *x -= factor * p;
            }
        }
        r += 1;
    }
    r
}
