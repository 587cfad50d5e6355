//! Method-of-steps RK4 reference for the truncated delay system.
//!
//! Independent of the library integrator: its own eigenvalues, its own
//! sine tables for the cable term, cubic Hermite dense output for the
//! delayed and nonlocal reads, and its own Picard loop over whole
//! trajectories for the nonlocal history.

use std::f64::consts::{PI, SQRT_2};

pub struct Oracle {
    pub modes: usize,
    pub c: f64,
    pub d: f64,
    pub k: f64,
    pub horizon: f64,
    pub delay: f64,
    pub grid_points: usize,
    /// `(time, gain, offset)` with jump `(0, gain·y + offset)`.
    pub impulses: Vec<(f64, f64, Vec<f64>)>,
    pub lags: Vec<f64>,
    pub gamma_w: Vec<f64>,
    pub gamma_y: Vec<f64>,
    /// `a` of `a·tanh(y(t − r))`.
    pub saturation: f64,
    /// `(mode, amplitude, omega)` of `A cos(ωt) sin(nπx)`.
    pub forcing: (usize, f64, f64),
    /// Constant history `(w, y)`.
    pub history: (Vec<f64>, Vec<f64>),
}

#[derive(Clone)]
struct Node {
    right: Vec<f64>,
    left: Vec<f64>,
    d_right: Vec<f64>,
    d_left: Vec<f64>,
}

struct Run {
    step: f64,
    delay_nodes: usize,
    nodes: Vec<Node>,
}

impl Run {
    fn index(&self, t: f64) -> f64 {
        t / self.step + self.delay_nodes as f64
    }

    /// Dense value at `t`; `left` picks the left limit at nodes.
    fn eval(&self, t: f64, left: bool) -> Vec<f64> {
        let x = self.index(t);
        let j = x.round();
        if (x - j).abs() < 1e-9 {
            let n = &self.nodes[j as usize];
            return if left { n.left.clone() } else { n.right.clone() };
        }
        let i = x.floor() as usize;
        let s = x - i as f64;
        let (a, b) = (&self.nodes[i], &self.nodes[i + 1]);
        let h = self.step;
        let h00 = 2.0 * s * s * s - 3.0 * s * s + 1.0;
        let h10 = s * s * s - 2.0 * s * s + s;
        let h01 = -2.0 * s * s * s + 3.0 * s * s;
        let h11 = s * s * s - s * s;
        (0..a.right.len())
            .map(|m| h00 * a.right[m] + h10 * h * a.d_right[m] + h01 * b.left[m] + h11 * h * b.d_left[m])
            .collect()
    }
}

impl Oracle {
    fn sine_table(&self) -> Vec<Vec<f64>> {
        let g = self.grid_points;
        (1..=g)
            .map(|i| {
                let x = i as f64 / (g as f64 + 1.0);
                (1..=self.modes).map(|n| SQRT_2 * (n as f64 * PI * x).sin()).collect()
            })
            .collect()
    }

    fn rhs(&self, table: &[Vec<f64>], t: f64, x: &[f64], delayed_y: &[f64]) -> Vec<f64> {
        let n = self.modes;
        let mut out = vec![0.0; 2 * n];
        let dx = 1.0 / (self.grid_points as f64 + 1.0);
        let mut wplus = vec![0.0; n];
        if self.k != 0.0 {
            for row in table {
                let v: f64 = row.iter().zip(&x[..n]).map(|(b, w)| b * w).sum();
                if v > 0.0 {
                    for m in 0..n {
                        wplus[m] += dx * v * row[m];
                    }
                }
            }
        }
        for m in 0..n {
            let lam = ((m + 1) as f64).powi(4) * PI.powi(4);
            let mut g = -self.k * wplus[m] + self.saturation * delayed_y[m].tanh();
            if m + 1 == self.forcing.0 {
                g += self.forcing.1 * (self.forcing.2 * t).cos() / SQRT_2;
            }
            out[m] = x[n + m];
            out[n + m] = -self.d * lam * x[m] - self.c * x[n + m] + g;
        }
        out
    }

    fn history_at(&self, s_index: usize, prev: Option<&Run>, step: f64, left: bool) -> (Vec<f64>, Vec<f64>) {
        let n = self.modes;
        let mut x: Vec<f64> = self.history.0.iter().chain(&self.history.1).copied().collect();
        let mut dx = vec![0.0; 2 * n];
        if let Some(p) = prev {
            for (j, tau) in self.lags.iter().enumerate() {
                let i = s_index + (tau / step).round() as usize;
                let node = &p.nodes[i];
                let (v, dv) = if left {
                    (&node.left, &node.d_left)
                } else {
                    (&node.right, &node.d_right)
                };
                for m in 0..n {
                    x[m] -= self.gamma_w[j] * v[m];
                    x[n + m] -= self.gamma_y[j] * v[n + m];
                    dx[m] -= self.gamma_w[j] * dv[m];
                    dx[n + m] -= self.gamma_y[j] * dv[n + m];
                }
            }
        }
        (x, dx)
    }

    fn sweep(&self, step: f64, prev: Option<&Run>, table: &[Vec<f64>]) -> Run {
        let n = self.modes;
        let r = (self.delay / step).round() as usize;
        let steps = (self.horizon / step).round() as usize;
        let mut run = Run {
            step,
            delay_nodes: r,
            nodes: Vec::with_capacity(r + steps + 1),
        };
        for i in 0..=r {
            let (right, d_right) = self.history_at(i, prev, step, false);
            let (left, d_left) = self.history_at(i, prev, step, true);
            run.nodes.push(Node {
                right,
                left,
                d_right,
                d_left,
            });
        }
        let ydel = |run: &Run, t: f64, left: bool| run.eval(t - self.delay, left)[n..].to_vec();
        // derivative at t = 0 from the right needs the solution itself
        let x0 = run.nodes[r].right.clone();
        run.nodes[r].d_right = self.rhs(table, 0.0, &x0, &ydel(&run, 0.0, false));
        for i in 0..steps {
            let t = i as f64 * step;
            let x = run.nodes[r + i].right.clone();
            let k1 = self.rhs(table, t, &x, &ydel(&run, t, false));
            let mid = t + 0.5 * step;
            let yd_mid = ydel(&run, mid, false);
            let x2: Vec<f64> = x.iter().zip(&k1).map(|(a, b)| a + 0.5 * step * b).collect();
            let k2 = self.rhs(table, mid, &x2, &yd_mid);
            let x3: Vec<f64> = x.iter().zip(&k2).map(|(a, b)| a + 0.5 * step * b).collect();
            let k3 = self.rhs(table, mid, &x3, &yd_mid);
            let x4: Vec<f64> = x.iter().zip(&k3).map(|(a, b)| a + step * b).collect();
            let t1 = t + step;
            let k4 = self.rhs(table, t1, &x4, &ydel(&run, t1, true));
            let left: Vec<f64> = (0..2 * n)
                .map(|m| x[m] + step / 6.0 * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m]))
                .collect();
            let d_left = self.rhs(table, t1, &left, &ydel(&run, t1, true));
            let mut right = left.clone();
            if let Some((_, gain, offset)) = self.impulses.iter().find(|(ti, _, _)| ((ti - t1) / step).abs() < 1e-6) {
                for m in 0..n {
                    right[n + m] += gain * left[n + m] + offset[m];
                }
            }
            let d_right = self.rhs(table, t1, &right, &ydel(&run, t1, false));
            run.nodes.push(Node {
                right,
                left,
                d_right,
                d_left,
            });
        }
        run
    }

    fn diff(a: &Run, b: &Run, modes: usize) -> f64 {
        a.nodes
            .iter()
            .zip(&b.nodes)
            .flat_map(|(x, y)| [(&x.right, &y.right), (&x.left, &y.left)])
            .map(|(x, y)| energy_norm(&x.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>(), modes))
            .fold(0.0, f64::max)
    }

    /// Terminal state `(w, y)` with RK4 step `step`.
    pub fn terminal(&self, step: f64) -> Vec<f64> {
        let table = self.sine_table();
        let mut run = self.sweep(step, None, &table);
        let nontrivial = self.gamma_w.iter().chain(&self.gamma_y).any(|g| *g != 0.0);
        if nontrivial {
            for _ in 0..60 {
                let next = self.sweep(step, Some(&run), &table);
                let d = Self::diff(&next, &run, self.modes);
                run = next;
                if d < 1e-13 {
                    break;
                }
            }
        }
        run.nodes.last().unwrap().left.clone()
    }
}

/// `Z½` norm of a stacked `(w, y)` vector.
pub fn energy_norm(x: &[f64], modes: usize) -> f64 {
    (0..modes)
        .map(|m| {
            let lam = ((m + 1) as f64).powi(4) * PI.powi(4);
            lam * x[m] * x[m] + x[modes + m] * x[modes + m]
        })
        .sum::<f64>()
        .sqrt()
}
