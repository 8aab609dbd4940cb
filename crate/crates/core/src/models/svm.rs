use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use wastemap_nn::{Real, Tensor};

use crate::error::{CoreError, Result};

const SVM_MAGIC: &[u8; 4] = b"WMSV";
const SVM_VERSION: u32 = 1;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    /// Kernel width; `None` picks `1 / (d · var(X))`.
    pub gamma: Option<f64>,
    /// Stopping tolerance on the maximal KKT violation.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            gamma: None,
            tolerance: 1e-3,
            max_iterations: 1_000_000,
        }
    }
}

/// Binary RBF-kernel SVM: `f(x) = Σ coefᵢ · exp(−γ‖svᵢ − x‖²) + b`, where
/// `coefᵢ = αᵢ yᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfSvm {
    pub dim: usize,
    pub support_vectors: Vec<f32>,
    pub coef: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
}

/// Rows of a batch tensor flattened to `[N, d]`.
pub fn flatten_patches(batch: &Tensor) -> (Vec<f32>, usize) {
    (batch.data().to_vec(), batch.sample_len())
}

/// Squared distances between rows of `a` (`n × d`) and `b` (`m × d`).
fn squared_distances(a: &[f32], n: usize, b: &[f32], m: usize, d: usize) -> Vec<f64> {
    let a64: Vec<f64> = a.iter().map(|v| *v as f64).collect();
    let b64: Vec<f64> = b.iter().map(|v| *v as f64).collect();
    let na: Vec<f64> = a64.chunks_exact(d.max(1)).map(|r| r.iter().map(|v| v * v).sum()).collect();
    let nb: Vec<f64> = b64.chunks_exact(d.max(1)).map(|r| r.iter().map(|v| v * v).sum()).collect();
    let mut dots = vec![0.0f64; n * m];
    if d > 0 && n > 0 && m > 0 {
        f64::gemm(n, d, m, &a64, (d as isize, 1), &b64, (1, d as isize), 0.0, &mut dots, m);
    }
    for i in 0..n {
        for j in 0..m {
            let v = &mut dots[i * m + j];
            *v = (na[i] + nb[j] - 2.0 * *v).max(0.0);
        }
    }
    dots
}

/// Trains with sequential minimal optimization and second-order working-set
/// selection on the full kernel matrix.
pub fn train_svm(x: &[f32], dim: usize, labels: &[bool], params: &SvmParams) -> Result<RbfSvm> {
    let n = labels.len();
    if dim == 0 || x.len() != n * dim {
        return Err(CoreError::InvalidInput(format!(
            "SVM input has {} values, expected {n} rows of {dim}",
            x.len()
        )));
    }
    let pos = labels.iter().filter(|l| **l).count();
    if pos == 0 || pos == n {
        return Err(CoreError::SingleClass(format!("{pos} positives among {n} samples")));
    }
    if !(params.c > 0.0) {
        return Err(CoreError::InvalidInput(format!("C must be positive, got {}", params.c)));
    }
    let gamma = match params.gamma {
        Some(g) if g > 0.0 => g,
        Some(g) => return Err(CoreError::InvalidInput(format!("gamma must be positive, got {g}"))),
        None => {
            let mean = x.iter().map(|v| *v as f64).sum::<f64>() / x.len() as f64;
            let var = x.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / x.len() as f64;
            if var > 0.0 {
                1.0 / (dim as f64 * var)
            } else {
                1.0
            }
        }
    };
    let mut k = squared_distances(x, n, x, n, dim);
    k.iter_mut().for_each(|v| *v = (-gamma * *v).exp());
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let c = params.c;
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];

    let mut alpha = vec![0.0f64; n];
    let mut grad = vec![-1.0f64; n];
    let is_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let is_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let mut iterations = 0;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if is_up(alpha[t], y[t]) && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i_sel = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !is_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i_sel != usize::MAX {
                let b = gmax - v;
                if b > 0.0 {
                    let a = k[i_sel * n + i_sel] + k[t * n + t] - 2.0 * k[i_sel * n + t];
                    let obj = -(b * b) / if a > 0.0 { a } else { TAU };
                    if obj <= best {
                        best = obj;
                        j_sel = t;
                    }
                }
            }
        }
        let residual = gmax - gmin;
        if residual < params.tolerance || j_sel == usize::MAX {
            break;
        }
        if iterations >= params.max_iterations {
            return Err(CoreError::SvmNonConvergence {
                cap: params.max_iterations,
                residual,
            });
        }
        iterations += 1;
        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    // Bias from free vectors, or the midpoint of the feasible interval.
    let (mut sum, mut free) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            sum += yg;
            free += 1;
        } else if (alpha[t] >= c && y[t] < 0.0) || (alpha[t] <= 0.0 && y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
    log::debug!("SMO converged after {iterations} iterations");

    let mut support_vectors = Vec::new();
    let mut coef = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.extend_from_slice(&x[t * dim..(t + 1) * dim]);
            coef.push(alpha[t] * y[t]);
        }
    }
    Ok(RbfSvm {
        dim,
        support_vectors,
        coef,
        bias: -rho,
        gamma,
        c,
    })
}

impl RbfSvm {
    pub fn num_support(&self) -> usize {
        self.coef.len()
    }

    /// Decision values for the rows of `x`.
    pub fn decision(&self, x: &[f32]) -> Result<Vec<f64>> {
        if x.len() % self.dim != 0 {
            return Err(CoreError::InvalidInput(format!(
                "SVM input length {} is not a multiple of dimension {}",
                x.len(),
                self.dim
            )));
        }
        let m = x.len() / self.dim;
        let ns = self.num_support();
        let d2 = squared_distances(x, m, &self.support_vectors, ns, self.dim);
        Ok((0..m)
            .map(|r| {
                self.bias
                    + (0..ns)
                        .map(|s| self.coef[s] * (-self.gamma * d2[r * ns + s]).exp())
                        .sum::<f64>()
            })
            .collect())
    }

    /// Binary votes: decision value above zero.
    pub fn predict(&self, x: &[f32]) -> Result<Vec<bool>> {
        Ok(self.decision(x)?.into_iter().map(|v| v > 0.0).collect())
    }

    /// Little-endian container: magic `WMSV`, version u32, dim u32, count
    /// u32, gamma/C/bias f64, coefficients f64, support vectors f32.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SVM_MAGIC)?;
        w.write_all(&SVM_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.num_support() as u32).to_le_bytes())?;
        for v in [self.gamma, self.c, self.bias].iter().chain(&self.coef) {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.support_vectors {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let bad = |m: &str| CoreError::Format(format!("SVM file: {m}"));
        if bytes.len() < 16 || &bytes[..4] != SVM_MAGIC {
            return Err(bad("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        if u32_at(4) as u32 != SVM_VERSION {
            return Err(bad("unsupported version"));
        }
        let (dim, count) = (u32_at(8), u32_at(12));
        let need = 16 + 8 * (3 + count) + 4 * dim * count;
        if bytes.len() != need {
            return Err(bad("truncated or oversized payload"));
        }
        let f64s: Vec<f64> = bytes[16..16 + 8 * (3 + count)]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let support_vectors = bytes[16 + 8 * (3 + count)..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(RbfSvm {
            dim,
            support_vectors,
            coef: f64s[3..].to_vec(),
            bias: f64s[2],
            gamma: f64s[0],
            c: f64s[1],
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
