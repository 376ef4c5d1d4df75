//! Independent reference implementations used to check the library.
#![allow(dead_code)]

use latent_edit::classifier::ClassifierModel;
use latent_edit::world::{LatentCode, LatentShape, OracleWorld};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn random_code<R: Rng>(rng: &mut R, shape: LatentShape) -> LatentCode {
    LatentCode::from_flat(shape, gaussian_vec(rng, shape.flat_len())).unwrap()
}

/// Forward pass written out with explicit loops over the stored weights.
pub fn mlp_probs(model: &ClassifierModel, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let depth = model.layers().len();
    for (li, layer) in model.layers().iter().enumerate() {
        let mut z = vec![0.0; layer.out_dim()];
        for r in 0..layer.out_dim() {
            let mut acc = layer.bias()[r];
            for c in 0..layer.in_dim() {
                acc += layer.weights()[r * layer.in_dim() + c] * h[c];
            }
            z[r] = acc;
        }
        h = if li + 1 == depth {
            z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect()
        } else {
            z.iter().map(|v| v.max(0.0)).collect()
        };
    }
    h
}

fn labels(model: &ClassifierModel, code: &LatentCode) -> Vec<bool> {
    mlp_probs(model, code.flat()).iter().map(|&p| p > 0.5).collect()
}

pub fn brute_change(judge: &ClassifierModel, originals: &[LatentCode], edited: &[LatentCode], k: usize) -> f64 {
    let mut flips = 0usize;
    for s in 0..originals.len() {
        if labels(judge, &originals[s])[k] != labels(judge, &edited[s])[k] {
            flips += 1;
        }
    }
    flips as f64 / originals.len() as f64
}

pub fn brute_preservation(judge: &ClassifierModel, originals: &[LatentCode], edited: &[LatentCode], k: usize) -> f64 {
    let n = judge.num_attributes();
    let mut sum = 0.0;
    for i in 0..n {
        if i == k {
            continue;
        }
        let mut same = 0usize;
        for s in 0..originals.len() {
            if labels(judge, &originals[s])[i] == labels(judge, &edited[s])[i] {
                same += 1;
            }
        }
        sum += same as f64 / originals.len() as f64;
    }
    sum / (n - 1) as f64
}

pub fn brute_identity(world: &OracleWorld, originals: &[LatentCode], edited: &[LatentCode]) -> f64 {
    let embed = |c: &LatentCode| -> Vec<f64> {
        world
            .identity_projection
            .iter()
            .map(|row| row.iter().zip(c.flat()).map(|(a, b)| a * b).sum())
            .collect()
    };
    let mut total = 0.0;
    for (o, e) in originals.iter().zip(edited) {
        let (a, b) = (embed(o), embed(e));
        let ab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let aa: f64 = a.iter().map(|x| x * x).sum();
        let bb: f64 = b.iter().map(|x| x * x).sum();
        if aa > 0.0 && bb > 0.0 {
            total += (ab / (aa * bb).sqrt()).clamp(-1.0, 1.0);
        }
    }
    total / originals.len() as f64
}

/// Normalized Gaussian weights for offsets `-r..=r`, `r = ceil(3 sigma)`,
/// applied with explicit index clamping.
pub fn direct_convolution(series: &[f64], sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let weights: Vec<f64> = (-r..=r).map(|o| (-(o as f64).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = weights.iter().sum();
    let n = series.len() as i64;
    (0..n)
        .map(|t| {
            let mut acc = 0.0;
            for (j, o) in (-r..=r).enumerate() {
                let idx = if t + o < 0 {
                    0
                } else if t + o >= n {
                    n - 1
                } else {
                    t + o
                };
                acc += weights[j] / norm * series[idx as usize];
            }
            acc
        })
        .collect()
}

/// Assembles the masked Poisson system as a dense matrix and solves it by LU.
/// Returns the full plane with the target outside the mask.
pub fn dense_poisson(source: &[f64], target: &[f64], mask: &[bool], height: usize, width: usize) -> Vec<f64> {
    let unknowns: Vec<(usize, usize)> = (0..height * width).filter(|&i| mask[i]).map(|i| (i / width, i % width)).collect();
    let m = unknowns.len();
    let mut out = target.to_vec();
    if m == 0 {
        return out;
    }
    let position = |y: usize, x: usize| unknowns.iter().position(|&(uy, ux)| uy == y && ux == x);
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (row, &(y, x)) in unknowns.iter().enumerate() {
        a[(row, row)] = 4.0;
        let neighbours = [(y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)];
        for (ny, nx) in neighbours {
            let q = ny * width + nx;
            b[row] += source[y * width + x] - source[q];
            match position(ny, nx) {
                Some(col) => a[(row, col)] -= 1.0,
                None => b[row] += target[q],
            }
        }
    }
    let f = a.lu().solve(&b).expect("Poisson matrix is nonsingular");
    for (row, &(y, x)) in unknowns.iter().enumerate() {
        out[y * width + x] = f[row];
    }
    out
}

/// `max |A f - b|` of the masked system for a full plane `f`.
pub fn poisson_residual(f: &[f64], source: &[f64], target: &[f64], mask: &[bool], width: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for p in 0..f.len() {
        if !mask[p] {
            continue;
        }
        let mut lhs = 4.0 * f[p];
        let mut rhs = 0.0;
        for q in [p - width, p + width, p - 1, p + 1] {
            rhs += source[p] - source[q];
            if mask[q] {
                lhs -= f[q];
            } else {
                rhs += target[q];
            }
        }
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

/// Random border-free mask with at most `max_true` pixels.
pub fn random_mask<R: Rng>(rng: &mut R, height: usize, width: usize, max_true: usize, density: f64) -> Vec<bool> {
    let mut mask = vec![false; height * width];
    let mut count = 0;
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            if count < max_true && rng.random::<f64>() < density {
                mask[y * width + x] = true;
                count += 1;
            }
        }
    }
    mask
}
