//! Echo-state networks: construction, driving, and ridge readout training.
//!
//! The state update is
//!   r_t = (1 − λ) r_{t−1} + λ · tanh(r_in_t + W · r_{t−1}),
//!   r_in_t = logistic(W_in · [u_t; 1]),
//! and the readout is linear in the state, y_t = W_out · [r_t; 1], trained in
//! closed form by ridge regression W_out = (R·Rᵀ + αI)⁻¹ (Y·Rᵀ) where R
//! stacks states with an appended constant-1 row.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation applied to the input projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputActivation {
    Logistic,
}

/// Activation applied inside the recurrent update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecurrentActivation {
    Tanh,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReservoirConfig {
    pub n_units: usize,
    pub input_dim: usize,
    /// Fraction of input weights kept; 1.0 means dense.
    pub sparsity_in: f64,
    /// Fraction of recurrent weights kept; 1.0 means dense.
    pub sparsity_rec: f64,
    pub activation_in: InputActivation,
    pub activation_rec: RecurrentActivation,
    pub input_scaling: f64,
    pub input_shift: f64,
    pub bias_scaling: f64,
    pub bias_shift: f64,
    pub spectral_radius: f64,
    /// Leakage λ; 1.0 replaces the state entirely each step.
    pub leakage: f64,
    /// Optional fixed base seed recorded in configs; derivation of the
    /// per-reservoir seeds happens upstream.
    pub seed: Option<u64>,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        ReservoirConfig {
            n_units: 50,
            input_dim: 1,
            sparsity_in: 1.0,
            sparsity_rec: 1.0,
            activation_in: InputActivation::Logistic,
            activation_rec: RecurrentActivation::Tanh,
            input_scaling: 1.0,
            input_shift: 0.0,
            bias_scaling: 1.0,
            bias_shift: 0.0,
            spectral_radius: 1.0,
            leakage: 1.0,
            seed: None,
        }
    }
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_units == 0 {
            return Err(Error::argument("n_units must be at least 1"));
        }
        if self.input_dim == 0 {
            return Err(Error::argument("input_dim must be at least 1"));
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius.is_finite()) {
            return Err(Error::argument("spectral_radius must be positive"));
        }
        if !(self.leakage > 0.0 && self.leakage <= 1.0) {
            return Err(Error::argument("leakage must lie in (0, 1]"));
        }
        for (name, s) in [("sparsity_in", self.sparsity_in), ("sparsity_rec", self.sparsity_rec)]
        {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::argument(format!("{name} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// A fixed random network; immutable after construction.
#[derive(Debug, Clone)]
pub struct Reservoir {
    /// N×(N_in+1); the last column is the bias weight vector.
    pub w_in: DMatrix<f64>,
    /// N×N recurrent weights, rescaled to the configured spectral radius.
    pub w_rec: DMatrix<f64>,
    pub config: ReservoirConfig,
}

/// Largest eigenvalue modulus, from the full (complex) spectrum.
///
/// Random dense recurrent matrices routinely have a complex dominant pair,
/// where plain power iteration fails to settle; a dense eigensolve is exact
/// and still cheap at these sizes.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Builds a reservoir: input weights uniform in [−1,1], recurrent weights
/// standard normal rescaled to the configured spectral radius.
pub fn init_reservoir(config: &ReservoirConfig, seed: u64) -> Result<Reservoir> {
    config.validate()?;
    let n = config.n_units;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut w_in = DMatrix::zeros(n, config.input_dim + 1);
    for i in 0..n {
        for j in 0..=config.input_dim {
            w_in[(i, j)] = rng.random_range(-1.0..=1.0);
        }
    }
    if config.sparsity_in < 1.0 {
        for v in w_in.iter_mut() {
            if rng.random::<f64>() >= config.sparsity_in {
                *v = 0.0;
            }
        }
    }

    let mut w_rec = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            w_rec[(i, j)] = rng.sample(StandardNormal);
        }
    }
    if config.sparsity_rec < 1.0 {
        for v in w_rec.iter_mut() {
            if rng.random::<f64>() >= config.sparsity_rec {
                *v = 0.0;
            }
        }
    }

    let rho = spectral_radius(&w_rec);
    if rho <= 0.0 || !rho.is_finite() {
        return Err(Error::numerical(
            "recurrent matrix has zero spectral radius, cannot rescale",
        ));
    }
    w_rec *= config.spectral_radius / rho;

    Ok(Reservoir {
        w_in,
        w_rec,
        config: config.clone(),
    })
}

impl Reservoir {
    /// Drives the network from the zero state; returns the T×N state matrix.
    pub fn drive(&self, input: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let r0 = DVector::zeros(self.config.n_units);
        self.drive_from(input, &r0)
    }

    /// Drives the network from an explicit initial state.
    pub fn drive_from(&self, input: &DMatrix<f64>, r0: &DVector<f64>) -> Result<DMatrix<f64>> {
        let cfg = &self.config;
        if input.ncols() != cfg.input_dim {
            return Err(Error::argument(format!(
                "input has {} channels, reservoir expects {}",
                input.ncols(),
                cfg.input_dim
            )));
        }
        if r0.len() != cfg.n_units {
            return Err(Error::argument("initial state dimension mismatch"));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("input contains non-finite values"));
        }
        let t = input.nrows();
        let n = cfg.n_units;
        let lambda = cfg.leakage;
        let w_u = self.w_in.columns(0, cfg.input_dim);
        let bias = self.w_in.column(cfg.input_dim);

        let mut states = DMatrix::zeros(t, n);
        let mut r = r0.clone();
        let mut proj = DVector::zeros(n);
        let mut rec = DVector::zeros(n);
        for step in 0..t {
            // r_in = logistic(scale·W_u·u + shift + bias terms)
            proj.gemv(1.0, &w_u, &input.row(step).transpose(), 0.0);
            rec.gemv(1.0, &self.w_rec, &r, 0.0);
            for i in 0..n {
                let z = cfg.input_scaling * proj[i]
                    + cfg.input_shift
                    + cfg.bias_scaling * bias[i]
                    + cfg.bias_shift;
                let r_in = logistic(z);
                r[i] = (1.0 - lambda) * r[i] + lambda * (r_in + rec[i]).tanh();
            }
            states.row_mut(step).copy_from(&r.transpose());
        }
        Ok(states)
    }
}

/// Linear readout on top of the state plus a bias term.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReadoutWeights {
    /// N_out×(N+1); the last column multiplies the constant-1 row.
    pub w_out: DMatrix<f64>,
}

/// Ridge-regression readout fit on precomputed states.
///
/// Solves (R·Rᵀ + αI) W_outᵀ = R·Yᵀ by Cholesky; R is states transposed with
/// a constant-1 row appended.
pub fn fit_readout(
    states: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    alpha: f64,
) -> Result<ReadoutWeights> {
    if states.nrows() != targets.nrows() {
        return Err(Error::argument(format!(
            "states have {} rows, targets {}",
            states.nrows(),
            targets.nrows()
        )));
    }
    if states.nrows() == 0 {
        return Err(Error::argument("cannot fit a readout on zero samples"));
    }
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::argument("alpha must be finite and non-negative"));
    }
    if states.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(Error::argument("states and targets must be finite"));
    }
    let n = states.ncols();
    let aug = augment_ones(states);
    // Gram matrix of the augmented design, (N+1)×(N+1).
    let mut gram = aug.transpose() * &aug;
    for i in 0..=n {
        gram[(i, i)] += alpha;
    }
    let rhs = aug.transpose() * targets;
    let chol = gram.cholesky().ok_or_else(|| {
        Error::numerical("singular readout system; use a regularization alpha > 0")
    })?;
    let solution = chol.solve(&rhs);
    Ok(ReadoutWeights {
        w_out: solution.transpose(),
    })
}

/// Applies a readout to precomputed states.
pub fn predict_from_states(states: &DMatrix<f64>, readout: &ReadoutWeights) -> DMatrix<f64> {
    augment_ones(states) * readout.w_out.transpose()
}

/// Drives the reservoir on `input` and applies the readout.
pub fn predict(
    reservoir: &Reservoir,
    readout: &ReadoutWeights,
    input: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if readout.w_out.ncols() != reservoir.config.n_units + 1 {
        return Err(Error::argument(format!(
            "readout expects {} state dimensions, reservoir has {}",
            readout.w_out.ncols() - 1,
            reservoir.config.n_units
        )));
    }
    let states = reservoir.drive(input)?;
    Ok(predict_from_states(&states, readout))
}

fn augment_ones(states: &DMatrix<f64>) -> DMatrix<f64> {
    let mut aug = DMatrix::zeros(states.nrows(), states.ncols() + 1);
    aug.columns_mut(0, states.ncols()).copy_from(states);
    aug.column_mut(states.ncols()).fill(1.0);
    aug
}
