//! Seeded stand-in for a generator's layered latent space.
//!
//! An [`OracleWorld`] owns N unit attribute directions and an identity
//! projection. Ground-truth labels are `sigmoid(v_i . tanh(w) + b_i) > 0.5`
//! over the flattened code `w`; the identity embedding is a fixed linear map.
//! Datasets are i.i.d. standard-Gaussian codes labeled by the oracle.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::nn::{l2_norm, sigmoid};

/// Layers x per-layer dimension of a latent code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentShape {
    pub layers: usize,
    pub dim: usize,
}

impl LatentShape {
    pub fn new(layers: usize, dim: usize) -> Result<Self> {
        if layers == 0 || dim == 0 {
            return Err(Error::InvalidArgument("latent layers and dim must be positive".into()));
        }
        Ok(Self { layers, dim })
    }

    pub fn flat_len(&self) -> usize {
        self.layers * self.dim
    }
}

/// A layered latent code stored row-major (`layers` rows of `dim` values).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    shape: LatentShape,
    values: Vec<f64>,
}

impl LatentCode {
    pub fn from_flat(shape: LatentShape, values: Vec<f64>) -> Result<Self> {
        check_len("latent code", shape.flat_len(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent code".into()));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: LatentShape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.flat_len()],
        }
    }

    pub fn shape(&self) -> LatentShape {
        self.shape
    }

    pub fn flat(&self) -> &[f64] {
        &self.values
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.values
    }

    pub fn layer(&self, index: usize) -> &[f64] {
        &self.values[index * self.shape.dim..(index + 1) * self.shape.dim]
    }

    /// Reinterprets the same flat values under another shape of equal size.
    pub fn reshape(&self, shape: LatentShape) -> Result<Self> {
        Self::from_flat(shape, self.values.clone())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            shape: self.shape,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// `(source, target, shared)`: direction `target` is rebuilt to share a
/// fraction `shared` of direction `source`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationLink {
    pub source: usize,
    pub target: usize,
    pub shared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    pub layers: usize,
    pub dim: usize,
    pub attributes: usize,
    pub identity_dim: usize,
    pub correlation_spec: Vec<CorrelationLink>,
    #[serde(default)]
    pub attribute_names: Vec<String>,
}

pub const DEFAULT_ATTRIBUTE_NAMES: [&str; 8] = [
    "smile",
    "mouth_open",
    "narrow_eyes",
    "cheekbones",
    "bangs",
    "eyeglasses",
    "beard",
    "makeup",
];

impl Default for WorldParams {
    fn default() -> Self {
        let link = |source, target, shared| CorrelationLink { source, target, shared };
        Self {
            layers: 4,
            dim: 4,
            attributes: 8,
            identity_dim: 16,
            correlation_spec: vec![link(0, 1, 0.5), link(0, 2, 0.3), link(0, 3, 0.3)],
            attribute_names: DEFAULT_ATTRIBUTE_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleWorld {
    pub seed: u64,
    pub shape: LatentShape,
    pub attribute_names: Vec<String>,
    /// N rows of length `shape.flat_len()`, each unit norm.
    pub attribute_directions: Vec<Vec<f64>>,
    pub attribute_biases: Vec<f64>,
    pub correlation_spec: Vec<CorrelationLink>,
    /// E rows of length `shape.flat_len()`, each unit norm.
    pub identity_projection: Vec<Vec<f64>>,
}

const DIRECTION_STREAM: u64 = 1;
const LINK_STREAM: u64 = 2;
const IDENTITY_STREAM: u64 = 3;

fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

fn normalize(v: &mut [f64]) {
    let n = l2_norm(v);
    v.iter_mut().for_each(|x| *x /= n);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Removes the components of `v` along each (unit) basis vector; two passes.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let d = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, bi)| *x -= d * bi);
        }
    }
}

pub fn make_world(seed: u64, params: &WorldParams) -> Result<OracleWorld> {
    let shape = LatentShape::new(params.layers, params.dim)?;
    let n = params.attributes;
    let flat = shape.flat_len();
    if n == 0 {
        return Err(Error::InvalidArgument("at least one attribute is required".into()));
    }
    if params.identity_dim == 0 {
        return Err(Error::InvalidArgument("identity embedding size must be positive".into()));
    }
    let needed = n + usize::from(!params.correlation_spec.is_empty());
    if needed > flat {
        return Err(Error::InvalidArgument(format!(
            "{n} attribute directions (plus link components) do not fit in a {flat}-dimensional latent"
        )));
    }
    for link in &params.correlation_spec {
        if link.source >= n || link.target >= n || link.source == link.target {
            return Err(Error::InvalidArgument(format!(
                "correlation link {}->{} is out of range for {n} attributes",
                link.source, link.target
            )));
        }
        if !(0.0..=1.0).contains(&link.shared) {
            return Err(Error::InvalidArgument(format!(
                "shared fraction {} must lie in [0, 1]",
                link.shared
            )));
        }
    }
    let names = if params.attribute_names.is_empty() {
        (0..n).map(|i| format!("attr_{i}")).collect()
    } else if params.attribute_names.len() == n {
        params.attribute_names.clone()
    } else {
        return Err(Error::shape("attribute names", n, params.attribute_names.len()));
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DIRECTION_STREAM);
    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v = gaussian_vec(&mut rng, flat);
        orthogonalize(&mut v, &directions);
        normalize(&mut v);
        directions.push(v);
    }

    rng.set_stream(LINK_STREAM);
    for link in &params.correlation_spec {
        let mut fresh = gaussian_vec(&mut rng, flat);
        if link.shared == 1.0 {
            directions[link.target] = directions[link.source].clone();
            continue;
        }
        orthogonalize(&mut fresh, &directions);
        normalize(&mut fresh);
        let source = &directions[link.source];
        let mut v: Vec<f64> = source
            .iter()
            .zip(&fresh)
            .map(|(s, f)| link.shared * s + (1.0 - link.shared) * f)
            .collect();
        normalize(&mut v);
        directions[link.target] = v;
    }

    rng.set_stream(IDENTITY_STREAM);
    let identity_projection = (0..params.identity_dim)
        .map(|_| {
            let mut v = gaussian_vec(&mut rng, flat);
            normalize(&mut v);
            v
        })
        .collect();

    Ok(OracleWorld {
        seed,
        shape,
        attribute_names: names,
        attribute_directions: directions,
        attribute_biases: vec![0.0; n],
        correlation_spec: params.correlation_spec.clone(),
        identity_projection,
    })
}

impl OracleWorld {
    pub fn num_attributes(&self) -> usize {
        self.attribute_directions.len()
    }

    pub fn identity_dim(&self) -> usize {
        self.identity_projection.len()
    }

    pub fn attribute_index(&self, name: &str) -> Result<usize> {
        self.attribute_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownAttribute {
                name: name.to_string(),
                known: self.attribute_names.join(", "),
            })
    }

    fn check_code(&self, code: &LatentCode) -> Result<()> {
        check_len("latent code for world", self.shape.flat_len(), code.flat().len())
    }

    /// Oracle attribute probabilities `sigmoid(v_i . tanh(w) + b_i)`.
    pub fn attribute_probabilities(&self, code: &LatentCode) -> Result<Vec<f64>> {
        self.check_code(code)?;
        let squashed: Vec<f64> = code.flat().iter().map(|v| v.tanh()).collect();
        Ok(self
            .attribute_directions
            .iter()
            .zip(&self.attribute_biases)
            .map(|(v, b)| sigmoid(dot(v, &squashed) + b))
            .collect())
    }
}

/// Ground-truth labels; probability exactly 0.5 maps to 0.
pub fn oracle_label(world: &OracleWorld, code: &LatentCode) -> Result<Vec<u8>> {
    Ok(world
        .attribute_probabilities(code)?
        .into_iter()
        .map(|p| u8::from(p > 0.5))
        .collect())
}

pub fn identity_embed(world: &OracleWorld, code: &LatentCode) -> Result<Vec<f64>> {
    world.check_code(code)?;
    Ok(world.identity_projection.iter().map(|row| dot(row, code.flat())).collect())
}

/// Cosine similarity, or `None` when either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Option<f64> {
    let (saa, sbb) = (dot(a, a), dot(b, b));
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    // sqrt(s * s) == s exactly, so identical inputs give exactly 1.
    Some((dot(a, b) / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub code: LatentCode,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentDataset {
    pub shape: LatentShape,
    pub attribute_names: Vec<String>,
    pub samples: Vec<LatentSample>,
    /// Absolute label correlations measured on the train split.
    pub correlation: Vec<Vec<f64>>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl LatentDataset {
    pub fn num_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn train_samples(&self) -> impl Iterator<Item = &LatentSample> + '_ {
        self.train.iter().map(move |&i| &self.samples[i])
    }

    pub fn test_samples(&self) -> impl Iterator<Item = &LatentSample> + '_ {
        self.test.iter().map(move |&i| &self.samples[i])
    }

    pub fn test_codes(&self) -> Vec<LatentCode> {
        self.test_samples().map(|s| s.code.clone()).collect()
    }

    pub fn gamma_row(&self, k: usize) -> &[f64] {
        &self.correlation[k]
    }

    /// Checks split disjointness/coverage and the correlation matrix invariants.
    /// Assembles a dataset and measures its correlations on `train`.
    pub fn from_parts(
        shape: LatentShape,
        attribute_names: Vec<String>,
        samples: Vec<LatentSample>,
        train: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<Self> {
        let n = samples.len();
        if let Some(&i) = train.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidArgument(format!("train index {i} out of range for {n} samples")));
        }
        let train_labels: Vec<Vec<u8>> = train.iter().map(|&i| samples[i].labels.clone()).collect();
        let correlation = estimate_correlations(&train_labels)?;
        let dataset = Self {
            shape,
            attribute_names,
            samples,
            correlation,
            train,
            test,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.samples.len();
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.test) {
            if i >= n || seen[i] {
                return Err(Error::InvalidArgument(format!("split index {i} is out of range or repeated")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("train/test split does not cover every sample".into()));
        }
        let m = self.num_attributes();
        check_len("correlation rows", m, self.correlation.len())?;
        for (i, row) in self.correlation.iter().enumerate() {
            check_len("correlation row", m, row.len())?;
            for (j, &g) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&g) || g != self.correlation[j][i] {
                    return Err(Error::InvalidArgument(format!("correlation entry ({i}, {j}) = {g} is invalid")));
                }
            }
            if row[i] != 1.0 {
                return Err(Error::InvalidArgument(format!("correlation diagonal ({i}, {i}) must be 1")));
            }
        }
        for s in &self.samples {
            check_len("latent code", self.shape.flat_len(), s.code.flat().len())?;
            check_len("label vector", m, s.labels.len())?;
        }
        Ok(())
    }
}

pub fn sample_dataset(world: &OracleWorld, n: usize, seed: u64) -> Result<LatentDataset> {
    sample_dataset_with_split(world, n, seed, 0.9)
}

pub fn sample_dataset_with_split(
    world: &OracleWorld,
    n: usize,
    seed: u64,
    train_fraction: f64,
) -> Result<LatentDataset> {
    if n < 10 {
        return Err(Error::InvalidArgument(format!("dataset needs at least 10 samples, got {n}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction {train_fraction} must lie in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat = world.shape.flat_len();
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let code = LatentCode::from_flat(world.shape, gaussian_vec(&mut rng, flat))?;
        let labels = oracle_label(world, &code)?;
        samples.push(LatentSample { code, labels });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let train_len = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let test = order.split_off(train_len);
    let train = order;

    LatentDataset::from_parts(world.shape, world.attribute_names.clone(), samples, train, test)
}

/// Absolute Pearson correlation between binary label columns.
///
/// A column with zero variance is uncorrelated with everything else and has
/// unit self-correlation.
pub fn estimate_correlations(labels: &[Vec<u8>]) -> Result<Vec<Vec<f64>>> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::InvalidArgument("correlation needs at least two rows".into()));
    }
    let m = labels[0].len();
    for row in labels {
        check_len("label row", m, row.len())?;
    }
    let cols: Vec<Vec<f64>> = (0..m)
        .map(|j| labels.iter().map(|r| f64::from(r[j])).collect())
        .collect();
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let centered: Vec<Vec<f64>> = cols
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|v| v - mu).collect())
        .collect();
    let var: Vec<f64> = centered.iter().map(|c| dot(c, c)).collect();

    let mut gamma = vec![vec![0.0; m]; m];
    for i in 0..m {
        gamma[i][i] = 1.0;
        for j in i + 1..m {
            let g = if var[i] == 0.0 || var[j] == 0.0 {
                0.0
            } else {
                (dot(&centered[i], &centered[j]) / (var[i] * var[j]).sqrt()).abs().min(1.0)
            };
            gamma[i][j] = g;
            gamma[j][i] = g;
        }
    }
    Ok(gamma)
}
