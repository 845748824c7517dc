use crate::domain::{check_len, dot, EnvironmentSpec, FeatureVector, Trajectory, WeightVector};
use crate::error::{Error, Result};
use crate::featurizer::{subsample_grid, theta_coefficient, truncated_features};

const GAMMA_MIN: f64 = 1e-30;
const GAMMA_MAX: f64 = 1e30;

/// `γ = exp(−wᵀ(Φᵢ − Φ*))`, clamped to `[1e-30, 1e30]`.
pub fn compute_gamma(
    w: &WeightVector,
    phi_i: &FeatureVector,
    phi_star: &FeatureVector,
) -> Result<f64> {
    Ok(log_gamma(w, phi_i, phi_star)?.exp())
}

pub(crate) fn log_gamma(
    w: &WeightVector,
    phi_i: &FeatureVector,
    phi_star: &FeatureVector,
) -> Result<f64> {
    check_len(w.len(), phi_i.len())?;
    let diff = phi_i.difference(phi_star)?;
    let exponent = -dot(w.as_slice(), &diff);
    if exponent.is_nan() {
        return Err(Error::NonFinite("γ exponent is NaN".into()));
    }
    Ok(exponent.clamp(GAMMA_MIN.ln(), GAMMA_MAX.ln()))
}

/// One sampled trajectory seen through every truncation of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    /// `ln γᵢ`, already clamped.
    pub log_gamma: f64,
    /// `ΔΦ_{i,d} = Φ_{i,d} − Φ*_d`, one row per truncation.
    pub diffs: Vec<Vec<f64>>,
}

impl DatasetEntry {
    pub fn gamma(&self) -> f64 {
        self.log_gamma.exp()
    }
}

/// Partition-function samples for one step-direction problem.
#[derive(Debug, Clone, PartialEq)]
pub struct IrlDataset {
    truncations: Vec<usize>,
    thetas: Vec<f64>,
    demo_features: Vec<FeatureVector>,
    entries: Vec<DatasetEntry>,
    dim: usize,
}

impl IrlDataset {
    /// Builds the dataset from the sample window with `n_subsamples`
    /// truncations. `γ` uses full-length features and is shared across
    /// truncations.
    pub fn build(
        window: &[Trajectory],
        demo: &Trajectory,
        w: &WeightVector,
        env: &EnvironmentSpec,
        n_subsamples: usize,
    ) -> Result<Self> {
        if window.is_empty() {
            return Err(Error::EmptyDataset);
        }
        check_len(env.feature_count(), w.len())?;
        let truncations = subsample_grid(env.horizon, n_subsamples)?;
        let thetas = truncations
            .iter()
            .map(|&d| theta_coefficient(d, env.horizon))
            .collect();
        let demo_features = truncations
            .iter()
            .map(|&d| truncated_features(demo, d, env))
            .collect::<Result<Vec<_>>>()?;

        let entries = window
            .iter()
            .map(|tau| {
                let per_d = truncations
                    .iter()
                    .map(|&d| truncated_features(tau, d, env))
                    .collect::<Result<Vec<_>>>()?;
                // truncation 0 is always first
                let log_gamma = log_gamma(w, &per_d[0], &demo_features[0])?;
                let diffs = per_d
                    .iter()
                    .zip(&demo_features)
                    .map(|(phi, star)| phi.difference(star))
                    .collect::<Result<Vec<_>>>()?;
                Ok(DatasetEntry { log_gamma, diffs })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            truncations,
            thetas,
            demo_features,
            entries,
            dim: env.feature_count(),
        })
    }

    /// Assembles a dataset directly from `θ_d` and entries.
    pub fn from_parts(thetas: Vec<f64>, entries: Vec<DatasetEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = entries[0].diffs.first().map_or(0, Vec::len);
        for e in &entries {
            check_len(thetas.len(), e.diffs.len())?;
            for row in &e.diffs {
                check_len(dim, row.len())?;
            }
        }
        if thetas.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(Error::InvalidConfig("θ_d must lie in (0, 1]".into()));
        }
        Ok(Self {
            truncations: (0..thetas.len()).collect(),
            thetas,
            demo_features: Vec::new(),
            entries,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn truncations(&self) -> &[usize] {
        &self.truncations
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn entries(&self) -> &[DatasetEntry] {
        &self.entries
    }

    pub fn demo_features(&self) -> &[FeatureVector] {
        &self.demo_features
    }

    pub fn push_entry(&mut self, entry: DatasetEntry) -> Result<()> {
        check_len(self.thetas.len(), entry.diffs.len())?;
        for row in &entry.diffs {
            check_len(self.dim, row.len())?;
        }
        self.entries.push(entry);
        Ok(())
    }
}
