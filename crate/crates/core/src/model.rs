//! Market models and path storage.
//!
//! Two simulators are provided: exact log-normal stepping for a vector of
//! independent geometric Brownian motions, and an Euler scheme for a
//! two-factor mean-reverting jump-diffusion (long-run level pulled toward
//! `beta`, market price pulled toward the first factor, joint jumps to a
//! correlated bivariate normal level).
//!
//! Reproducibility contract: path `m` of a simulation is a function of the
//! seed and `m` only. Each path draws from its own ChaCha8 stream
//! (`seed_from_u64(seed)` plus `set_stream(m)`), so results do not depend
//! on thread count or scheduling, and a prefix of a larger batch equals the
//! smaller batch. Within a step the draw order is fixed: one standard
//! normal per coordinate for the diffusion, then one uniform for the jump
//! trigger, then two normals for the jump level when it fires.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};

/// Simulated state paths, stored path-major: the trajectory of path `m` is
/// one contiguous block of `(J + 1) * dim` scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet<T> {
    data: Vec<T>,
    num_paths: usize,
    num_epochs: usize,
    dim: usize,
    seed: u64,
    times: Vec<T>,
    params_desc: Option<String>,
}

impl<T: Scalar> PathSet<T> {
    /// Wraps an existing buffer. `data` must hold `num_paths * num_epochs *
    /// dim` scalars in path-major order and `times` one instant per epoch.
    pub fn from_raw(
        data: Vec<T>,
        num_paths: usize,
        num_epochs: usize,
        dim: usize,
        seed: u64,
        times: Vec<T>,
    ) -> Result<Self> {
        if num_paths == 0 || num_epochs == 0 || dim == 0 {
            return Err(Error::InvalidInput("empty path set".into()));
        }
        if data.len() != num_paths * num_epochs * dim {
            return Err(Error::DimensionMismatch {
                expected: num_paths * num_epochs * dim,
                found: data.len(),
            });
        }
        if times.len() != num_epochs {
            return Err(Error::DimensionMismatch {
                expected: num_epochs,
                found: times.len(),
            });
        }
        Ok(Self {
            data,
            num_paths,
            num_epochs,
            dim,
            seed,
            times,
            params_desc: None,
        })
    }

    pub fn num_paths(&self) -> usize {
        self.num_paths
    }

    /// Number of stored instants per path (`J + 1`).
    pub fn num_epochs(&self) -> usize {
        self.num_epochs
    }

    /// Number of decision epochs `J`.
    pub fn horizon(&self) -> usize {
        self.num_epochs - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    /// Description of the generating model, carried through file round trips.
    pub fn params_desc(&self) -> Option<&str> {
        self.params_desc.as_deref()
    }

    pub fn set_params_desc(&mut self, desc: String) {
        self.params_desc = Some(desc);
    }

    /// State of path `m` at epoch `j` as a `dim`-length slice.
    #[inline]
    pub fn state(&self, m: usize, j: usize) -> &[T] {
        let start = (m * self.num_epochs + j) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// Full trajectory of path `m`.
    pub fn path(&self, m: usize) -> &[T] {
        let row = self.num_epochs * self.dim;
        &self.data[m * row..(m + 1) * row]
    }

    /// Copies the cross-section at epoch `j` for paths `range` into `out`
    /// (row-major `len(range) x dim`). Used to build contiguous per-epoch
    /// design inputs.
    pub fn gather_epoch(&self, j: usize, range: std::ops::Range<usize>, out: &mut Vec<T>) {
        out.clear();
        out.reserve(range.len() * self.dim);
        for m in range {
            out.extend_from_slice(self.state(m, j));
        }
    }

    /// Raw path-major buffer.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

// ============================================================================
// Geometric Brownian motion
// ============================================================================

/// Parameters of `dim` independent geometric Brownian motions with shared
/// spot, rate, dividend yield and volatility.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GbmParams {
    pub dim: usize,
    pub x0: f64,
    pub rate: f64,
    pub dividend: f64,
    pub sigma: f64,
    pub maturity: f64,
    pub epochs: usize,
}

impl GbmParams {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidInput("dim must be >= 1".into()));
        }
        if !(self.x0 > 0.0) {
            return Err(Error::InvalidInput("x0 must be positive".into()));
        }
        if !(self.maturity > 0.0) {
            return Err(Error::InvalidInput("maturity must be positive".into()));
        }
        if self.sigma < 0.0 || !self.sigma.is_finite() {
            return Err(Error::InvalidInput("sigma must be nonnegative".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be >= 1".into()));
        }
        if !self.rate.is_finite() || !self.dividend.is_finite() {
            return Err(Error::InvalidInput(
                "rate and dividend must be finite".into(),
            ));
        }
        Ok(())
    }
}

fn path_rng(seed: u64, m: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(m as u64);
    rng
}

/// Simulates `num_paths` GBM paths on the epoch grid `t_j = j T / J` using
/// exact log-normal transitions (no discretization bias, so `sigma = 0`
/// yields the deterministic forward curve).
pub fn simulate_gbm<T>(params: &GbmParams, num_paths: usize, seed: u64) -> Result<PathSet<T>>
where
    T: Scalar,
    StandardNormal: Distribution<T>,
{
    params.validate()?;
    if num_paths == 0 {
        return Err(Error::InvalidInput("num_paths must be >= 1".into()));
    }
    let epochs = params.epochs;
    let dim = params.dim;
    let dt = params.maturity / epochs as f64;
    let drift: T = real((params.rate - params.dividend - 0.5 * params.sigma * params.sigma) * dt);
    let vol: T = real(params.sigma * dt.sqrt());
    let x0: T = real(params.x0);

    let row = (epochs + 1) * dim;
    let mut data = vec![T::zero(); num_paths * row];
    data.par_chunks_mut(row).enumerate().for_each(|(m, path)| {
        let mut rng = path_rng(seed, m);
        for slot in path[..dim].iter_mut() {
            *slot = x0;
        }
        for j in 1..=epochs {
            for k in 0..dim {
                let z: T = rng.sample(StandardNormal);
                let prev = path[(j - 1) * dim + k];
                path[j * dim + k] = prev * (drift + vol * z).exp();
            }
        }
    });

    let times = (0..=epochs).map(|j| real::<T>(j as f64 * dt)).collect();
    let mut paths = PathSet::from_raw(data, num_paths, epochs + 1, dim, seed, times)?;
    paths.set_params_desc(
        serde_json::to_string(params).map_err(|e| Error::Serialization(e.to_string()))?,
    );
    Ok(paths)
}

// ============================================================================
// Two-factor mean-reverting jump-diffusion
// ============================================================================

/// Parameters of the two-factor jump-diffusion on the unit time interval.
///
/// Factor one (long-run marker) reverts to `beta`; factor two (market
/// price) reverts to factor one. Brownian increments are correlated with
/// coefficient `rho_w`. Jumps arrive with intensity `lambda` per year; on a
/// jump both coordinates are replaced by a bivariate normal level with
/// means `mu1, mu2`, standard deviations `eta1, eta2` and correlation
/// `rho_j`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OilGasParams {
    pub beta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho_w: f64,
    pub lambda: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub rho_j: f64,
    pub x0: [f64; 2],
    /// Number of Euler steps on `[0, 1]`; 365 gives daily stepping.
    pub euler_steps: usize,
    /// Clamp both coordinates at zero after each step. Off by default.
    #[serde(default)]
    pub floor_at_zero: bool,
}

impl OilGasParams {
    fn validate(&self) -> Result<()> {
        if self.euler_steps == 0 {
            return Err(Error::InvalidInput("euler_steps must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.rho_w) || !(0.0..=1.0).contains(&self.rho_j) {
            return Err(Error::InvalidInput(
                "correlations must lie in [0, 1]".into(),
            ));
        }
        if self.sigma1 < 0.0 || self.sigma2 < 0.0 || self.eta1 < 0.0 || self.eta2 < 0.0 {
            return Err(Error::InvalidInput(
                "volatilities must be nonnegative".into(),
            ));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidInput(
                "jump intensity must be nonnegative".into(),
            ));
        }
        for v in [
            self.beta,
            self.alpha1,
            self.alpha2,
            self.mu1,
            self.mu2,
            self.x0[0],
            self.x0[1],
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidInput("parameters must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Runs one Euler path, handing each stored instant `(step, x1, x2)` to
/// `sink` (step 0 is the initial state). Draw order per step is fixed; see
/// the module docs.
fn oil_gas_path<T, F>(params: &OilGasParams, rng: &mut ChaCha8Rng, mut sink: F)
where
    T: Scalar,
    StandardNormal: Distribution<T>,
    F: FnMut(usize, T, T),
{
    let dt = 1.0 / params.euler_steps as f64;
    let sqrt_dt: T = real(dt.sqrt());
    let a1dt: T = real(params.alpha1 * dt);
    let a2dt: T = real(params.alpha2 * dt);
    let beta: T = real(params.beta);
    let s1: T = real(params.sigma1);
    let s2: T = real(params.sigma2);
    let rho_w: T = real(params.rho_w);
    let rho_w_c: T = real((1.0 - params.rho_w * params.rho_w).sqrt());
    let jump_prob = 1.0 - (-params.lambda * dt).exp();
    let mu1: T = real(params.mu1);
    let mu2: T = real(params.mu2);
    let eta1: T = real(params.eta1);
    let eta2: T = real(params.eta2);
    let rho_j: T = real(params.rho_j);
    let rho_j_c: T = real((1.0 - params.rho_j * params.rho_j).sqrt());

    let mut x1: T = real(params.x0[0]);
    let mut x2: T = real(params.x0[1]);
    sink(0, x1, x2);
    for step in 1..=params.euler_steps {
        let z1: T = rng.sample(StandardNormal);
        let z2: T = rng.sample(StandardNormal);
        let w2 = rho_w * z1 + rho_w_c * z2;
        let next1 = x1 + a1dt * (beta - x1) + s1 * x1 * sqrt_dt * z1;
        let next2 = x2 + a2dt * (x1 - x2) + s2 * x2 * sqrt_dt * w2;
        x1 = next1;
        x2 = next2;
        if rng.random::<f64>() < jump_prob {
            let n1: T = rng.sample(StandardNormal);
            let n2: T = rng.sample(StandardNormal);
            x1 = mu1 + eta1 * n1;
            x2 = mu2 + eta2 * (rho_j * n1 + rho_j_c * n2);
        }
        if params.floor_at_zero {
            x1 = x1.max(T::zero());
            x2 = x2.max(T::zero());
        }
        sink(step, x1, x2);
    }
}

/// Simulates the jump-diffusion on the full Euler grid. Times are reported
/// in step units (0..=euler_steps).
pub fn simulate_oil_gas<T>(params: &OilGasParams, num_paths: usize, seed: u64) -> Result<PathSet<T>>
where
    T: Scalar,
    StandardNormal: Distribution<T>,
{
    params.validate()?;
    if num_paths == 0 {
        return Err(Error::InvalidInput("num_paths must be >= 1".into()));
    }
    let epochs = params.euler_steps;
    let row = (epochs + 1) * 2;
    let mut data = vec![T::zero(); num_paths * row];
    data.par_chunks_mut(row).enumerate().for_each(|(m, path)| {
        let mut rng = path_rng(seed, m);
        oil_gas_path::<T, _>(params, &mut rng, |step, x1, x2| {
            path[step * 2] = x1;
            path[step * 2 + 1] = x2;
        });
    });
    let times = (0..=epochs).map(|j| real::<T>(j as f64)).collect();
    let mut paths = PathSet::from_raw(data, num_paths, epochs + 1, 2, seed, times)?;
    paths.set_params_desc(
        serde_json::to_string(params).map_err(|e| Error::Serialization(e.to_string()))?,
    );
    Ok(paths)
}

/// Simulates the jump-diffusion but stores only every `stride`-th step,
/// producing `euler_steps / stride + 1` instants per path. Bit-identical to
/// [`simulate_oil_gas`] followed by [`subsample`], without materialising
/// the fine grid.
pub fn simulate_oil_gas_subsampled<T>(
    params: &OilGasParams,
    stride: usize,
    num_paths: usize,
    seed: u64,
) -> Result<PathSet<T>>
where
    T: Scalar,
    StandardNormal: Distribution<T>,
{
    params.validate()?;
    if num_paths == 0 {
        return Err(Error::InvalidInput("num_paths must be >= 1".into()));
    }
    let coarse = check_stride(stride, params.euler_steps)?;
    let row = (coarse + 1) * 2;
    let mut data = vec![T::zero(); num_paths * row];
    data.par_chunks_mut(row).enumerate().for_each(|(m, path)| {
        let mut rng = path_rng(seed, m);
        oil_gas_path::<T, _>(params, &mut rng, |step, x1, x2| {
            if step % stride == 0 && step / stride <= coarse {
                let j = step / stride;
                path[j * 2] = x1;
                path[j * 2 + 1] = x2;
            }
        });
    });
    let times = (0..=coarse)
        .map(|j| real::<T>((j * stride) as f64))
        .collect();
    let mut paths = PathSet::from_raw(data, num_paths, coarse + 1, 2, seed, times)?;
    paths.set_params_desc(
        serde_json::to_string(params).map_err(|e| Error::Serialization(e.to_string()))?,
    );
    Ok(paths)
}

fn check_stride(stride: usize, fine_steps: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::InvalidInput("stride must be >= 1".into()));
    }
    let coarse = fine_steps / stride;
    if coarse == 0 {
        return Err(Error::InvalidInput(format!(
            "stride {stride} overruns the {fine_steps}-step grid"
        )));
    }
    Ok(coarse)
}

/// Keeps the initial state and every `stride`-th state of each path.
pub fn subsample<T: Scalar>(paths: &PathSet<T>, stride: usize) -> Result<PathSet<T>> {
    let fine_steps = paths.horizon();
    let coarse = check_stride(stride, fine_steps)?;
    let dim = paths.dim();
    let mut data = Vec::with_capacity(paths.num_paths() * (coarse + 1) * dim);
    for m in 0..paths.num_paths() {
        for j in 0..=coarse {
            data.extend_from_slice(paths.state(m, j * stride));
        }
    }
    let times = (0..=coarse).map(|j| paths.times[j * stride]).collect();
    let mut out = PathSet::from_raw(
        data,
        paths.num_paths(),
        coarse + 1,
        dim,
        paths.seed(),
        times,
    )?;
    if let Some(desc) = paths.params_desc() {
        out.set_params_desc(desc.to_string());
    }
    Ok(out)
}

// ============================================================================
// File round trips
// ============================================================================

const PATHS_MAGIC: &[u8; 8] = b"LSMCPS01";

#[derive(Serialize, Deserialize)]
struct PathsHeader {
    num_paths: usize,
    num_epochs: usize,
    dim: usize,
    seed: u64,
    times: Vec<f64>,
    params_desc: Option<String>,
}

/// Writes a path set as flat binary: magic, JSON header (shape, seed,
/// times, model parameters), then the buffer as little-endian f64. Exact
/// for both scalar types, since every f32 converts to f64 and back without
/// rounding.
pub fn write_paths_binary<T: Scalar>(paths: &PathSet<T>, target: &Path) -> Result<()> {
    let file = File::create(target)?;
    let mut w = BufWriter::new(file);
    let header = PathsHeader {
        num_paths: paths.num_paths(),
        num_epochs: paths.num_epochs(),
        dim: paths.dim(),
        seed: paths.seed(),
        times: paths.times().iter().map(|t| t.to_f64().unwrap()).collect(),
        params_desc: paths.params_desc().map(str::to_string),
    };
    let header_bytes =
        serde_json::to_vec(&header).map_err(|e| Error::Serialization(e.to_string()))?;
    w.write_all(PATHS_MAGIC)?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for v in paths.as_slice() {
        w.write_all(&v.to_f64().unwrap().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a path set written by [`write_paths_binary`].
pub fn read_paths_binary<T: Scalar>(source: &Path) -> Result<PathSet<T>> {
    let file = File::open(source)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != PATHS_MAGIC {
        return Err(Error::Serialization("not a path-set file".into()));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: PathsHeader =
        serde_json::from_slice(&header_bytes).map_err(|e| Error::Serialization(e.to_string()))?;
    let n = header.num_paths * header.num_epochs * header.dim;
    let mut data = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        data.push(real::<T>(f64::from_le_bytes(buf)));
    }
    let times = header.times.iter().map(|&t| real::<T>(t)).collect();
    let mut paths = PathSet::from_raw(
        data,
        header.num_paths,
        header.num_epochs,
        header.dim,
        header.seed,
        times,
    )?;
    if let Some(desc) = header.params_desc {
        paths.set_params_desc(desc);
    }
    Ok(paths)
}

/// Writes a path set as CSV: one `# key=value` comment line with shape and
/// seed, a column header, then one row per (path, epoch).
pub fn write_paths_csv<T: Scalar>(paths: &PathSet<T>, target: &Path) -> Result<()> {
    let file = File::create(target)?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "# paths={} epochs={} dim={} seed={}",
        paths.num_paths(),
        paths.num_epochs(),
        paths.dim(),
        paths.seed()
    )?;
    let coords: Vec<String> = (1..=paths.dim()).map(|k| format!("x{k}")).collect();
    writeln!(w, "path,epoch,time,{}", coords.join(","))?;
    for m in 0..paths.num_paths() {
        for j in 0..paths.num_epochs() {
            write!(w, "{},{},{}", m, j, paths.times()[j].to_f64().unwrap())?;
            for v in paths.state(m, j) {
                write!(w, ",{}", v.to_f64().unwrap())?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

// ============================================================================
// Tests
// ============================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gbm_params(dim: usize, sigma: f64, epochs: usize) -> GbmParams {
        GbmParams {
            dim,
            x0: 100.0,
            rate: 0.05,
            dividend: 0.1,
            sigma,
            maturity: 1.0,
            epochs,
        }
    }

    fn oil_gas_params() -> OilGasParams {
        OilGasParams {
            beta: 45.0,
            alpha1: 0.25,
            alpha2: 0.5,
            sigma1: 0.2,
            sigma2: 0.2,
            rho_w: 0.6,
            lambda: 2.0,
            mu1: 100.0,
            mu2: 100.0,
            eta1: 30.0,
            eta2: 30.0,
            rho_j: 0.6,
            x0: [100.0, 100.0],
            euler_steps: 365,
            floor_at_zero: false,
        }
    }

    #[test]
    fn gbm_zero_vol_is_deterministic_forward() {
        let paths = simulate_gbm::<f64>(&gbm_params(1, 0.0, 9), 16, 7).unwrap();
        let expected = 100.0 * (-0.05_f64).exp();
        for m in 0..16 {
            assert_relative_eq!(paths.state(m, 9)[0], expected, max_relative = 1e-12);
            assert_relative_eq!(paths.state(m, 0)[0], 100.0);
        }
        assert_relative_eq!(expected, 95.1229, max_relative = 1e-5);
    }

    #[test]
    fn gbm_terminal_mean_matches_forward() {
        let params = gbm_params(1, 0.2, 1);
        let m = 100_000;
        let paths = simulate_gbm::<f64>(&params, m, 2024).unwrap();
        let mean: f64 = (0..m).map(|i| paths.state(i, 1)[0]).sum::<f64>() / m as f64;
        let forward = 100.0 * (0.05_f64 - 0.1).exp();
        // Lognormal std of the terminal value over sqrt(M), four sigmas.
        let sd = forward * ((0.04_f64).exp() - 1.0).sqrt();
        let tol = 4.0 * sd / (m as f64).sqrt();
        assert!(
            (mean - forward).abs() < tol,
            "mean {mean} vs forward {forward} (tol {tol})"
        );
    }

    #[test]
    fn same_seed_reproduces_bitwise() {
        let a = simulate_gbm::<f64>(&gbm_params(3, 0.2, 5), 64, 99).unwrap();
        let b = simulate_gbm::<f64>(&gbm_params(3, 0.2, 5), 64, 99).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        let c = simulate_gbm::<f64>(&gbm_params(3, 0.2, 5), 64, 100).unwrap();
        assert_ne!(a.as_slice(), c.as_slice());
    }

    #[test]
    fn path_batches_share_per_path_streams() {
        let small = simulate_gbm::<f64>(&gbm_params(2, 0.2, 4), 8, 5).unwrap();
        let large = simulate_gbm::<f64>(&gbm_params(2, 0.2, 4), 32, 5).unwrap();
        for m in 0..8 {
            assert_eq!(small.path(m), large.path(m), "path {m} differs");
        }
    }

    #[test]
    fn oil_gas_reverts_to_beta_without_noise() {
        let mut params = oil_gas_params();
        params.sigma1 = 0.0;
        params.sigma2 = 0.0;
        params.lambda = 0.0;
        let paths = simulate_oil_gas::<f64>(&params, 2, 3).unwrap();
        let x1_end = paths.state(0, 365)[0];
        let expected = 45.0 + 55.0 * (-0.25_f64).exp();
        assert!(
            (x1_end - expected).abs() < 0.1,
            "Euler endpoint {x1_end} vs ODE {expected}"
        );
        assert_relative_eq!(expected, 87.834, max_relative = 1e-4);
        // Both paths identical: dynamics are deterministic.
        assert_eq!(paths.path(0), paths.path(1));
    }

    #[test]
    fn oil_gas_jump_frequency_matches_intensity() {
        // With zero diffusion a step either follows the deterministic Euler
        // map exactly or was replaced by a jump level, so jumps are
        // detectable without instrumentation.
        let mut params = oil_gas_params();
        params.sigma1 = 0.0;
        params.sigma2 = 0.0;
        let m = 100_000usize;
        let paths = simulate_oil_gas::<f64>(&params, m, 11).unwrap();
        let dt = 1.0 / 365.0;
        let mut jumps = 0u64;
        for i in 0..m {
            for step in 1..=365usize {
                let prev = paths.state(i, step - 1)[0];
                let pred = prev + 0.25 * dt * (45.0 - prev);
                if paths.state(i, step)[0] != pred {
                    jumps += 1;
                }
            }
        }
        let mean = jumps as f64 / m as f64;
        // Per-path count is Binomial(365, 1 - exp(-lambda dt)).
        let p = 1.0 - (-2.0 * dt).exp();
        let sd = (365.0 * p * (1.0 - p)).sqrt();
        let tol = 4.0 * sd / (m as f64).sqrt();
        assert!(
            (mean - 2.0).abs() < tol + (2.0 - 365.0 * p).abs(),
            "mean jump count {mean} vs 2 (tol {tol})"
        );
    }

    #[test]
    fn oil_gas_brownian_correlation() {
        let mut params = oil_gas_params();
        params.lambda = 0.0;
        let m = 2000usize;
        let paths = simulate_oil_gas::<f64>(&params, m, 13).unwrap();
        let dt = 1.0f64 / 365.0;
        let sqrt_dt = dt.sqrt();
        let (mut sxy, mut sxx, mut syy) = (0.0f64, 0.0, 0.0);
        for i in 0..m {
            for step in 1..=365usize {
                let s = paths.state(i, step - 1);
                let e = paths.state(i, step);
                let z1 = (e[0] - s[0] - 0.25 * dt * (45.0 - s[0])) / (0.2 * s[0] * sqrt_dt);
                let w2 = (e[1] - s[1] - 0.5 * dt * (s[0] - s[1])) / (0.2 * s[1] * sqrt_dt);
                sxy += z1 * w2;
                sxx += z1 * z1;
                syy += w2 * w2;
            }
        }
        let corr = sxy / (sxx.sqrt() * syy.sqrt());
        assert!(
            (corr - 0.6).abs() < 0.01,
            "increment correlation {corr} vs 0.6"
        );
    }

    #[test]
    fn subsample_weekly_grid() {
        let mut params = oil_gas_params();
        params.euler_steps = 365;
        let fine = simulate_oil_gas::<f64>(&params, 4, 17).unwrap();
        let weekly = subsample(&fine, 7).unwrap();
        assert_eq!(weekly.num_epochs(), 53);
        assert_eq!(weekly.horizon(), 52);
        for m in 0..4 {
            for j in 0..=52usize {
                assert_eq!(weekly.state(m, j), fine.state(m, 7 * j));
            }
        }
        assert_eq!(weekly.times()[1], 7.0);
        assert!(subsample(&fine, 0).is_err());
        assert!(subsample(&fine, 400).is_err());
    }

    #[test]
    fn streamed_subsampling_matches_two_pass() {
        let params = oil_gas_params();
        let fine = simulate_oil_gas::<f64>(&params, 32, 23).unwrap();
        let two_pass = subsample(&fine, 7).unwrap();
        let streamed = simulate_oil_gas_subsampled::<f64>(&params, 7, 32, 23).unwrap();
        assert_eq!(two_pass.as_slice(), streamed.as_slice());
        assert_eq!(two_pass.times(), streamed.times());
    }

    #[test]
    fn binary_round_trip_is_lossless() {
        let paths = simulate_gbm::<f64>(&gbm_params(2, 0.2, 9), 32, 41).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("paths.bin");
        write_paths_binary(&paths, &file).unwrap();
        let back = read_paths_binary::<f64>(&file).unwrap();
        assert_eq!(paths, back);
    }

    #[test]
    fn binary_round_trip_is_lossless_f32() {
        let paths = simulate_gbm::<f32>(&gbm_params(2, 0.2, 5), 16, 41).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("paths32.bin");
        write_paths_binary(&paths, &file).unwrap();
        let back = read_paths_binary::<f32>(&file).unwrap();
        assert_eq!(paths, back);
    }

    #[test]
    fn csv_export_writes_expected_shape() {
        let paths = simulate_gbm::<f64>(&gbm_params(2, 0.2, 3), 5, 41).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("paths.csv");
        write_paths_csv(&paths, &file).unwrap();
        let text = std::fs::read_to_string(&file).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# paths=5 epochs=4 dim=2 seed=41"));
        assert_eq!(lines[1], "path,epoch,time,x1,x2");
        assert_eq!(lines.len(), 2 + 5 * 4);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(simulate_gbm::<f64>(&gbm_params(0, 0.2, 9), 4, 1).is_err());
        let mut p = gbm_params(1, 0.2, 9);
        p.x0 = 0.0;
        assert!(simulate_gbm::<f64>(&p, 4, 1).is_err());
        let mut p = gbm_params(1, 0.2, 9);
        p.maturity = -1.0;
        assert!(simulate_gbm::<f64>(&p, 4, 1).is_err());
        let mut o = oil_gas_params();
        o.rho_w = 1.5;
        assert!(simulate_oil_gas::<f64>(&o, 4, 1).is_err());
        let mut o = oil_gas_params();
        o.lambda = -1.0;
        assert!(simulate_oil_gas::<f64>(&o, 4, 1).is_err());
    }

    #[test]
    fn from_raw_checks_shapes() {
        assert!(PathSet::from_raw(vec![1.0; 12], 2, 3, 2, 0, vec![0.0, 1.0, 2.0]).is_ok());
        assert!(PathSet::from_raw(vec![1.0; 11], 2, 3, 2, 0, vec![0.0, 1.0, 2.0]).is_err());
        assert!(PathSet::from_raw(vec![1.0; 12], 2, 3, 2, 0, vec![0.0, 1.0]).is_err());
        assert!(PathSet::<f64>::from_raw(vec![], 0, 3, 2, 0, vec![]).is_err());
    }
}
