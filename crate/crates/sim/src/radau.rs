//! Three-stage Radau IIA (order 5) with a fixed step and simplified Newton iterations.

use crate::error::{Result, SimError};

/// A first-order system `y' = f(t, y)` with its Jacobian.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
    /// Row-major `dim × dim` Jacobian `∂f/∂y`.
    fn jacobian(&self, t: f64, y: &[f64], jac: &mut [f64]);
}

const SQRT6: f64 = 2.449_489_742_783_178;

const C: [f64; 3] = [(4.0 - SQRT6) / 10.0, (4.0 + SQRT6) / 10.0, 1.0];

const A: [[f64; 3]; 3] = [
    [
        (88.0 - 7.0 * SQRT6) / 360.0,
        (296.0 - 169.0 * SQRT6) / 1800.0,
        (-2.0 + 3.0 * SQRT6) / 225.0,
    ],
    [
        (296.0 + 169.0 * SQRT6) / 1800.0,
        (88.0 + 7.0 * SQRT6) / 360.0,
        (-2.0 - 3.0 * SQRT6) / 225.0,
    ],
    [(16.0 - SQRT6) / 36.0, (16.0 + SQRT6) / 36.0, 1.0 / 9.0],
];

/// Dense LU factorization with partial pivoting.
struct Lu {
    n: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl Lu {
    fn factor(n: usize, mut a: Vec<f64>) -> Option<Self> {
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))?;
            if a[p * n + k] == 0.0 || !a[p * n + k].is_finite() {
                return None;
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                piv.swap(k, p);
            }
            let d = a[k * n + k];
            for i in k + 1..n {
                let l = a[i * n + k] / d;
                a[i * n + k] = l;
                for c in k + 1..n {
                    a[i * n + c] -= l * a[k * n + c];
                }
            }
        }
        Some(Self { n, a, piv })
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for c in 0..i {
                x[i] -= self.a[i * n + c] * x[c];
            }
        }
        for i in (0..n).rev() {
            for c in i + 1..n {
                x[i] -= self.a[i * n + c] * x[c];
            }
            x[i] /= self.a[i * n + i];
        }
        b.copy_from_slice(&x);
    }
}

#[derive(Clone, Debug)]
pub struct RadauIIA {
    pub rtol: f64,
    pub atol: f64,
    pub max_newton: usize,
}

impl Default for RadauIIA {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-14,
            max_newton: 12,
        }
    }
}

impl RadauIIA {
    /// Advances `y` from `t` to `t + h`.
    pub fn step<S: OdeSystem + ?Sized>(&self, sys: &S, t: f64, y: &mut [f64], h: f64) -> Result<()> {
        let n = sys.dim();
        let m = 3 * n;
        let mut jac = vec![0.0; n * n];
        sys.jacobian(t, y, &mut jac);

        // I - h (A ⊗ J)
        let mut mat = vec![0.0; m * m];
        for i in 0..3 {
            for j in 0..3 {
                for r in 0..n {
                    for c in 0..n {
                        let v = -h * A[i][j] * jac[r * n + c];
                        mat[(i * n + r) * m + j * n + c] = v + if i == j && r == c { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        let lu = Lu::factor(m, mat).ok_or(SimError::SolverDiverged { time: t })?;

        let mut z = vec![0.0; m];
        let mut f = vec![0.0; m];
        let mut stage = vec![0.0; n];
        let mut g = vec![0.0; m];
        let mut converged = false;
        for _ in 0..self.max_newton {
            for j in 0..3 {
                for r in 0..n {
                    stage[r] = y[r] + z[j * n + r];
                }
                sys.rhs(t + C[j] * h, &stage, &mut f[j * n..(j + 1) * n]);
            }
            for i in 0..3 {
                for r in 0..n {
                    let hf: f64 = (0..3).map(|j| A[i][j] * f[j * n + r]).sum::<f64>() * h;
                    g[i * n + r] = hf - z[i * n + r];
                }
            }
            lu.solve(&mut g);
            let mut worst: f64 = 0.0;
            for k in 0..m {
                z[k] += g[k];
                let scale = self.atol + self.rtol * (y[k % n].abs() + z[k].abs());
                worst = worst.max(g[k].abs() / scale);
            }
            if !worst.is_finite() {
                break;
            }
            if worst <= 1.0 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(SimError::SolverDiverged { time: t });
        }
        // stiffly accurate: the last stage is the step result
        for r in 0..n {
            y[r] += z[2 * n + r];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay(f64);

    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = -self.0 * y[0];
        }
        fn jacobian(&self, _t: f64, _y: &[f64], jac: &mut [f64]) {
            jac[0] = -self.0;
        }
    }

    struct Oscillator;

    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
        fn jacobian(&self, _t: f64, _y: &[f64], jac: &mut [f64]) {
            jac.copy_from_slice(&[0.0, 1.0, -1.0, 0.0]);
        }
    }

    fn run<S: OdeSystem>(sys: &S, y0: &[f64], t1: f64, steps: usize) -> Vec<f64> {
        let mut y = y0.to_vec();
        let h = t1 / steps as f64;
        let r = RadauIIA::default();
        for k in 0..steps {
            r.step(sys, k as f64 * h, &mut y, h).unwrap();
        }
        y
    }

    #[test]
    fn coefficients_are_consistent() {
        for i in 0..3 {
            let row: f64 = A[i].iter().sum();
            assert!((row - C[i]).abs() < 1e-15);
        }
        // quadrature weights integrate t^k exactly up to k = 4
        for k in 0..5 {
            let q: f64 = (0..3).map(|j| A[2][j] * C[j].powi(k)).sum();
            assert!((q - 1.0 / (k + 1) as f64).abs() < 1e-14, "k = {k}");
        }
    }

    #[test]
    fn fifth_order_on_oscillator() {
        let exact = [1f64.cos(), -1f64.sin()];
        let err = |steps| {
            let y = run(&Oscillator, &[1.0, 0.0], 1.0, steps);
            (y[0] - exact[0]).abs().max((y[1] - exact[1]).abs())
        };
        let (e1, e2) = (err(4), err(8));
        let order = (e1 / e2).log2();
        assert!(order > 4.5, "observed order {order}");
    }

    #[test]
    fn stable_on_stiff_decay() {
        let y = run(&Decay(1e8), &[1.0], 1.0, 10);
        assert!(y[0].abs() < 1e-10);
        let y = run(&Decay(2.0), &[1.0], 1.0, 50);
        assert!((y[0] - (-2f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn lu_solves_permuted_system() {
        let lu = Lu::factor(3, vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0]).unwrap();
        let mut b = vec![5.0, 3.0, 6.0];
        lu.solve(&mut b);
        let a = [[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        for (r, rhs) in a.iter().zip([5.0, 3.0, 6.0]) {
            let v: f64 = r.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert!((v - rhs).abs() < 1e-14);
        }
        assert!(Lu::factor(2, vec![1.0, 2.0, 2.0, 4.0]).is_none());
    }
}
