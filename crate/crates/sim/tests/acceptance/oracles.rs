//! Independent reference computations. Nothing here calls into the solver
//! code it is compared against; linear algebra is plain Gauss-Jordan on
//! nested vectors.

use cellfree_core::baseline::MmseEstimate;
use cellfree_core::model::Frame;
use cellfree_core::C64;

pub type Mat = Vec<Vec<C64>>;

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![C64::new(0.0, 0.0); c]; r]
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (r, k, c) = (a.len(), b.len(), b[0].len());
    let mut out = zeros(r, c);
    for i in 0..r {
        for p in 0..k {
            let aip = a[i][p];
            for j in 0..c {
                out[i][j] += aip * b[p][j];
            }
        }
    }
    out
}

pub fn adjoint(a: &Mat) -> Mat {
    let (r, c) = (a.len(), a[0].len());
    let mut out = zeros(c, r);
    for i in 0..r {
        for j in 0..c {
            out[j][i] = a[i][j].conj();
        }
    }
    out
}

pub fn matvec(a: &Mat, v: &[C64]) -> Vec<C64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut m: Mat = a.clone();
    let mut inv = zeros(n, n);
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = C64::new(1.0, 0.0);
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].norm().total_cmp(&m[y][col].norm()))
            .unwrap();
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let p = m[col][col];
        assert!(p.norm() > 0.0, "singular matrix in oracle");
        for j in 0..n {
            m[col][j] /= p;
            inv[col][j] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != C64::new(0.0, 0.0) {
                    for j in 0..n {
                        let (mc, ic) = (m[col][j], inv[col][j]);
                        m[r][j] -= f * mc;
                        inv[r][j] -= f * ic;
                    }
                }
            }
        }
    }
    inv
}

pub fn frob(a: &Mat) -> f64 {
    a.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn rel_err_mat(a: &Mat, b: &Mat) -> f64 {
    let diff: f64 = a
        .iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    diff / frob(b).max(1e-300)
}

pub fn rel_err_vec(a: &[C64], b: &[C64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}

/// Posterior of the stacked channel `[h_1; ...; h_K]` of one AP given its
/// pilot observation, by conditioning the joint Gaussian of `(h, vec(Y_p))`.
/// Returns the per-UE mean and covariance blocks.
pub fn joint_conditioning(
    xi: &[Mat],
    pilots: &Mat,
    received: &Mat,
    noise_power: f64,
) -> Vec<(Vec<C64>, Mat)> {
    let k_n = xi.len();
    let n = xi[0].len();
    let tp = pilots[0].len();
    // y[t*N + i] = sum_k x[k][t] h_k[i] + w
    let mut a = zeros(tp * n, k_n * n);
    for t in 0..tp {
        for i in 0..n {
            for k in 0..k_n {
                a[t * n + i][k * n + i] = pilots[k][t];
            }
        }
    }
    let mut cov_h = zeros(k_n * n, k_n * n);
    for k in 0..k_n {
        for i in 0..n {
            for j in 0..n {
                cov_h[k * n + i][k * n + j] = xi[k][i][j];
            }
        }
    }
    let y: Vec<C64> = (0..tp).flat_map(|t| (0..n).map(move |i| (t, i))).map(|(t, i)| received[i][t]).collect();
    let cov_yh = matmul(&a, &cov_h);
    let mut cov_yy = matmul(&cov_yh, &adjoint(&a));
    for (i, row) in cov_yy.iter_mut().enumerate() {
        row[i] += noise_power;
    }
    let gain = matmul(&adjoint(&cov_yh), &inverse(&cov_yy));
    let mean = matvec(&gain, &y);
    let reduction = matmul(&gain, &cov_yh);
    (0..k_n)
        .map(|k| {
            let m: Vec<C64> = mean[k * n..(k + 1) * n].to_vec();
            let mut c = zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    c[i][j] = cov_h[k * n + i][k * n + j] - reduction[k * n + i][k * n + j];
                }
            }
            (m, c)
        })
        .collect()
}

/// Single-component tilted distribution of `z = h x` for a known symbol.
/// Inputs are natural parameters `(gamma, Lambda)` of the two incoming
/// messages. Returns `(mean, cov)` of `z` and of `h = z / x`.
pub fn single_component(
    gamma_y: &[C64],
    lambda_y: &Mat,
    gamma_h: &[C64],
    lambda_h: &Mat,
    x: C64,
) -> ((Vec<C64>, Mat), (Vec<C64>, Mat)) {
    let n = gamma_y.len();
    let p = x.norm_sqr();
    let mut lambda = zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            lambda[i][j] = lambda_y[i][j] + lambda_h[i][j] / p;
        }
    }
    let gamma: Vec<C64> = (0..n).map(|i| gamma_y[i] + gamma_h[i] * x / p).collect();
    let cov = inverse(&lambda);
    let mean = matvec(&cov, &gamma);
    let h_mean: Vec<C64> = mean.iter().map(|m| m / x).collect();
    let h_cov: Mat = cov.iter().map(|row| row.iter().map(|c| c / p).collect()).collect();
    ((mean, cov), (h_mean, h_cov))
}

/// Scalar natural parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Nat {
    g: C64,
    lam: f64,
}

impl Nat {
    const NONE: Nat = Nat { g: C64 { re: 0.0, im: 0.0 }, lam: 0.0 };

    fn from_moments(mean: C64, var: f64) -> Nat {
        Nat { g: mean / var, lam: 1.0 / var }
    }

    fn mean(self) -> C64 {
        self.g / self.lam
    }

    fn var(self) -> f64 {
        1.0 / self.lam
    }
}

fn normalize(log_w: &[f64], floor: f64) -> Vec<f64> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = w.iter().sum();
    let m = w.len() as f64;
    w.iter().map(|v| floor + (1.0 - m * floor) * v / s).collect()
}

/// Result of the reference receiver.
pub struct ReferenceOutput {
    /// `h_hat[l * K + k]`.
    pub channel: Vec<C64>,
    /// Symbol posteriors, row-major `K x T_d`.
    pub posteriors: Vec<Vec<f64>>,
}

/// Undamped bilinear EP for single-antenna APs, written directly from the
/// message equations: interference cancellation, local symbol beliefs,
/// their extrinsic products, channel refinement from the one- or
/// multi-component tilted distribution, channel beliefs towards each slot
/// and refined product beliefs. Updates whose projection or quotient is not
/// positive are skipped. Returns `None` on a non-proper channel belief.
#[allow(clippy::too_many_arguments)]
pub fn reference_ep(
    frame: &Frame,
    prior: &MmseEstimate,
    symbols: &[C64],
    iterations: usize,
    legacy: bool,
    variance_floor: f64,
    prob_floor: f64,
) -> Option<ReferenceOutput> {
    let d = frame.dims;
    assert_eq!(d.antennas, 1);
    let (l_n, k_n, tp, td) = (d.aps, d.ues, d.pilot_len, d.data_len);
    let t_n = tp + td;
    let m = symbols.len();
    let sx2 = symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / m as f64;
    let floor = variance_floor * sx2;
    let noise = frame.noise_power.max(floor);
    let e = |l: usize, k: usize, t: usize| (l * k_n + k) * t_n + t;
    let de = |l: usize, k: usize, dd: usize| (l * k_n + k) * td + dd;
    let active: Vec<usize> = if legacy { (tp..t_n).collect() } else { (0..t_n).collect() };

    let pri: Vec<Nat> = (0..l_n * k_n)
        .map(|i| Nat::from_moments(prior.mean(i / k_n, i % k_n)[0], prior.cov(i / k_n, i % k_n)[(0, 0)].re))
        .collect();
    let mut y2z = vec![Nat::NONE; l_n * k_n * t_n];
    let mut z2h = vec![Nat::NONE; l_n * k_n * t_n];
    let mut h2z = vec![Nat::NONE; l_n * k_n * t_n];
    let mut z2z = vec![Nat::NONE; l_n * k_n * t_n];
    for l in 0..l_n {
        for k in 0..k_n {
            let p = pri[l * k_n + k];
            let (mu, v) = (p.mean(), p.var());
            for t in 0..t_n {
                h2z[e(l, k, t)] = p;
                z2z[e(l, k, t)] = if t < tp {
                    let x = frame.pilots[(k, t)];
                    Nat::from_moments(mu * x, v * x.norm_sqr())
                } else {
                    Nat::from_moments(C64::new(0.0, 0.0), (v + mu.norm_sqr()) * sx2)
                };
            }
        }
    }
    let uniform = vec![1.0 / m as f64; m];
    let mut z2x = vec![uniform.clone(); l_n * k_n * td];
    let mut x2z = vec![uniform; l_n * k_n * td];

    let log_theta = |y: Nat, h: Nat, x: C64| -> f64 {
        let v = y.var() + h.var() * x.norm_sqr();
        let diff = y.mean() - h.mean() * x;
        -std::f64::consts::PI.ln() - v.ln() - diff.norm_sqr() / v
    };
    // Moments of z (product) or h (channel) under the tilted distribution.
    let tilted = |y: Nat, h: Nat, weights: &[(C64, f64)], channel: bool| -> (C64, f64) {
        let mut mean = C64::new(0.0, 0.0);
        let mut second = 0.0;
        for &(x, w) in weights {
            if w == 0.0 {
                continue;
            }
            let p = x.norm_sqr();
            let lam = y.lam + h.lam / p;
            let g = y.g + h.g * x / p;
            let (mut mu, mut var) = (g / lam, 1.0 / lam);
            if channel {
                mu /= x;
                var /= p;
            }
            mean += mu * w;
            second += (var + mu.norm_sqr()) * w;
        }
        (mean, second - mean.norm_sqr())
    };
    let weights = |l: usize, k: usize, t: usize, y2z: &[Nat], h2z: &[Nat], x2z: &[Vec<f64>]| -> Vec<(C64, f64)> {
        if t < tp {
            return vec![(frame.pilots[(k, t)], 1.0)];
        }
        let (y, h) = (y2z[e(l, k, t)], h2z[e(l, k, t)]);
        let lw: Vec<f64> = (0..m)
            .map(|i| x2z[de(l, k, t - tp)][i].ln() + log_theta(y, h, symbols[i]))
            .collect();
        let p = normalize(&lw, 0.0);
        symbols.iter().copied().zip(p).collect()
    };
    let quotient = |proj: (C64, f64), incoming: Nat| -> Option<Nat> {
        if !(proj.1 > 0.0) || !proj.1.is_finite() {
            return None;
        }
        let b = Nat::from_moments(proj.0, proj.1);
        let out = Nat { g: b.g - incoming.g, lam: b.lam - incoming.lam };
        (out.lam > 0.0 && out.lam.is_finite() && out.g.is_finite()).then_some(out)
    };

    for _ in 0..iterations {
        for l in 0..l_n {
            for &t in &active {
                let y = frame.received[(l, t)];
                for k in 0..k_n {
                    let mut mean = y;
                    let mut var = noise;
                    for kk in (0..k_n).filter(|&kk| kk != k) {
                        mean -= z2z[e(l, kk, t)].mean();
                        var += z2z[e(l, kk, t)].var();
                    }
                    y2z[e(l, k, t)] = Nat::from_moments(mean, var);
                }
            }
        }
        for l in 0..l_n {
            for k in 0..k_n {
                for dd in 0..td {
                    let (y, h) = (y2z[e(l, k, tp + dd)], h2z[e(l, k, tp + dd)]);
                    let lt: Vec<f64> = symbols.iter().map(|&x| log_theta(y, h, x)).collect();
                    z2x[de(l, k, dd)] = normalize(&lt, prob_floor);
                }
            }
        }
        for k in 0..k_n {
            for dd in 0..td {
                for l in 0..l_n {
                    let lw: Vec<f64> = (0..m)
                        .map(|i| (0..l_n).filter(|&ll| ll != l).map(|ll| z2x[de(ll, k, dd)][i].ln()).sum())
                        .collect();
                    x2z[de(l, k, dd)] = normalize(&lw, prob_floor);
                }
            }
        }
        for l in 0..l_n {
            for k in 0..k_n {
                for &t in &active {
                    let w = weights(l, k, t, &y2z, &h2z, &x2z);
                    let proj = tilted(y2z[e(l, k, t)], h2z[e(l, k, t)], &w, true);
                    if let Some(q) = quotient(proj, h2z[e(l, k, t)]) {
                        z2h[e(l, k, t)] = q;
                    }
                }
            }
        }
        for l in 0..l_n {
            for k in 0..k_n {
                for &t in &active {
                    let mut acc = pri[l * k_n + k];
                    for &tt in active.iter().filter(|&&tt| tt != t) {
                        acc.g += z2h[e(l, k, tt)].g;
                        acc.lam += z2h[e(l, k, tt)].lam;
                    }
                    if !(acc.lam > 0.0) {
                        return None;
                    }
                    h2z[e(l, k, t)] = acc;
                }
            }
        }
        for l in 0..l_n {
            for k in 0..k_n {
                for &t in &active {
                    let w = weights(l, k, t, &y2z, &h2z, &x2z);
                    let proj = tilted(y2z[e(l, k, t)], h2z[e(l, k, t)], &w, false);
                    if let Some(q) = quotient(proj, y2z[e(l, k, t)]) {
                        z2z[e(l, k, t)] = q;
                    }
                }
            }
        }
    }

    let channel = (0..l_n * k_n)
        .map(|i| {
            let (l, k) = (i / k_n, i % k_n);
            let mut acc = pri[i];
            for t in 0..t_n {
                acc.g += z2h[e(l, k, t)].g;
                acc.lam += z2h[e(l, k, t)].lam;
            }
            acc.mean()
        })
        .collect();
    let posteriors = (0..k_n)
        .flat_map(|k| (0..td).map(move |dd| (k, dd)))
        .map(|(k, dd)| {
            let lw: Vec<f64> = (0..m).map(|i| (0..l_n).map(|l| z2x[de(l, k, dd)][i].ln()).sum()).collect();
            normalize(&lw, 0.0)
        })
        .collect();
    Some(ReferenceOutput { channel, posteriors })
}
