//! Sequential minimal optimization for the C-SVC dual
//!
//!   min_α  ½ αᵀQα − eᵀα   s.t.  yᵀα = 0,  0 ≤ αᵢ ≤ C,   Qᵢⱼ = yᵢyⱼK(xᵢ, xⱼ)
//!
//! Working pairs are chosen with second-order information: `i` is the
//! maximal violator, `j` the index giving the largest guaranteed objective
//! decrease for the pair.

const TAU: f64 = 1e-12;

pub(crate) struct SmoOutput {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) struct SmoProblem<'a> {
    /// Row-major n×n kernel matrix.
    pub gram: &'a [f64],
    /// Labels as ±1.
    pub y: &'a [f64],
    pub c: f64,
    /// Stop once the maximal KKT violation gap falls below this.
    pub eps: f64,
    pub max_iterations: usize,
}

impl SmoProblem<'_> {
    fn n(&self) -> usize {
        self.y.len()
    }

    #[inline]
    fn k(&self, i: usize, j: usize) -> f64 {
        self.gram[i * self.n() + j]
    }

    /// `∇ = Qα − e` evaluated from scratch.
    fn gradient(&self, alphas: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let s: f64 = (0..n)
                    .filter(|&j| alphas[j] != 0.0)
                    .map(|j| alphas[j] * self.y[j] * self.k(i, j))
                    .sum();
                self.y[i] * s - 1.0
            })
            .collect()
    }

    fn in_up(&self, t: usize, a: f64) -> bool {
        if self.y[t] > 0.0 {
            a < self.c
        } else {
            a > 0.0
        }
    }

    fn in_low(&self, t: usize, a: f64) -> bool {
        if self.y[t] > 0.0 {
            a > 0.0
        } else {
            a < self.c
        }
    }

    /// Returns `None` when the pair gap is below `eps`.
    fn select_pair(&self, alphas: &[f64], grad: &[f64]) -> Option<(usize, usize)> {
        let n = self.n();
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if self.in_up(t, alphas[t]) {
                let v = -self.y[t] * grad[t];
                if v >= gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let i = i_sel?;
        let mut gmin = f64::INFINITY;
        let mut best = f64::INFINITY;
        let mut j_sel = None;
        for t in 0..n {
            if !self.in_low(t, alphas[t]) {
                continue;
            }
            let v = -self.y[t] * grad[t];
            gmin = gmin.min(v);
            let diff = gmax - v;
            if diff > 0.0 {
                let mut quad = self.k(i, i) + self.k(t, t) - 2.0 * self.k(i, t);
                if quad <= 0.0 {
                    quad = TAU;
                }
                let decrease = -(diff * diff) / quad;
                if decrease <= best {
                    best = decrease;
                    j_sel = Some(t);
                }
            }
        }
        if gmax - gmin < self.eps {
            return None;
        }
        j_sel.map(|j| (i, j))
    }

    /// Analytic two-variable update keeping `yᵢαᵢ + yⱼαⱼ` fixed.
    fn update_pair(&self, alphas: &mut [f64], grad: &[f64], i: usize, j: usize) -> (f64, f64) {
        let c = self.c;
        let (old_i, old_j) = (alphas[i], alphas[j]);
        let mut quad = self.k(i, i) + self.k(j, j) - 2.0 * self.k(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }
        let (mut ai, mut aj) = (old_i, old_j);
        if self.y[i] != self.y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alphas[i] = ai;
        alphas[j] = aj;
        (ai - old_i, aj - old_j)
    }

    /// Bias from free multipliers, or the midpoint of the feasible interval
    /// when every multiplier sits at a bound.
    fn bias(&self, alphas: &[f64], grad: &[f64]) -> f64 {
        let mut upper = f64::INFINITY;
        let mut lower = f64::NEG_INFINITY;
        let mut free_sum = 0.0;
        let mut free = 0usize;
        for t in 0..self.n() {
            // b estimate at t: yₜ − Σⱼ αⱼyⱼKₜⱼ
            let est = -self.y[t] * grad[t];
            let a = alphas[t];
            if a > 0.0 && a < self.c {
                free_sum += est;
                free += 1;
                continue;
            }
            // α = 0 requires yₜ(b − est) ≥ 0, α = C requires yₜ(b − est) ≤ 0
            let raises_floor = (a == 0.0) == (self.y[t] > 0.0);
            if raises_floor {
                lower = lower.max(est);
            } else {
                upper = upper.min(est);
            }
        }
        if free > 0 {
            free_sum / free as f64
        } else if lower.is_finite() && upper.is_finite() {
            (lower + upper) / 2.0
        } else if lower.is_finite() {
            lower
        } else {
            upper
        }
    }

    pub fn solve(&self) -> SmoOutput {
        let n = self.n();
        let mut alphas = vec![0.0; n];
        let mut grad = vec![-1.0; n];
        let mut iterations = 0;
        let mut converged = false;
        loop {
            let Some((i, j)) = self.select_pair(&alphas, &grad) else {
                converged = true;
                break;
            };
            if iterations == self.max_iterations {
                break;
            }
            let (di, dj) = self.update_pair(&mut alphas, &grad, i, j);
            if di != 0.0 || dj != 0.0 {
                let (yi, yj) = (self.y[i], self.y[j]);
                for (t, g) in grad.iter_mut().enumerate() {
                    let yt = self.y[t];
                    *g += yt * (yi * self.k(t, i) * di + yj * self.k(t, j) * dj);
                }
            }
            iterations += 1;
        }
        // refresh to drop accumulated drift before deriving the bias
        let grad = self.gradient(&alphas);
        let bias = self.bias(&alphas, &grad);
        SmoOutput {
            alphas,
            bias,
            iterations,
            converged,
        }
    }
}
