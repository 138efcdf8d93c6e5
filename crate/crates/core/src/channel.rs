//! Wideband clustered channel model and per-subcarrier optimal precoders.
//!
//! Channels follow an extended Saleh-Valenzuela geometry: P planar-wave paths
//! with complex normal gains, uniform ToAs, and uniform angles, observed
//! through uniform planar arrays whose response is frequency dependent
//! (beam squint). Each realization carries K subcarrier matrices.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::linalg::{svd, waterfill, CMat, CVec};

pub mod dataset;

/// Stream-id offset separating test-set realizations from training ones so a
/// single master seed yields disjoint substreams.
pub const TEST_STREAM_BASE: u64 = 1 << 32;

/// System dimensions shared across the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemDims {
    /// Transmit antennas N_t = n_tx_h * n_tx_v.
    pub n_tx: usize,
    pub n_tx_h: usize,
    pub n_tx_v: usize,
    /// Receive antennas N_r = n_rx_h * n_rx_v.
    pub n_rx: usize,
    pub n_rx_h: usize,
    pub n_rx_v: usize,
    /// RF chains at the transmitter.
    pub n_rf: usize,
    /// Spatial streams.
    pub n_streams: usize,
    /// OFDM subcarriers K.
    pub n_subcarriers: usize,
    /// Propagation paths P.
    pub n_paths: usize,
    /// Cyclic prefix length Q in samples; bounds the ToA spread.
    pub cyclic_prefix: usize,
    /// Center frequency in Hz.
    pub center_freq_hz: f64,
    /// System bandwidth in Hz.
    pub bandwidth_hz: f64,
}

impl SystemDims {
    /// Largest divisor of `n` not exceeding sqrt(n), paired with its
    /// complement: a near-square planar factorization.
    pub fn near_square_factors(n: usize) -> (usize, usize) {
        let mut v = 1;
        let mut d = 1;
        while d * d <= n {
            if n % d == 0 {
                v = d;
            }
            d += 1;
        }
        (n / v, v)
    }

    /// Desk-scale defaults: 16 antennas on a 4x4 planar array, 2 RF chains,
    /// 2 streams, 16 subcarriers, 4 paths, 300 GHz center, 30 GHz bandwidth.
    pub fn desk_default() -> Self {
        Self::new(16, 2, 2, 2, 16, 4, 300e9, 30e9).expect("desk defaults are valid")
    }

    /// Builds dimensions with near-square transmit factorization, a linear
    /// receive array, and cyclic prefix K/4.
    pub fn new(
        n_tx: usize,
        n_rx: usize,
        n_rf: usize,
        n_streams: usize,
        n_subcarriers: usize,
        n_paths: usize,
        center_freq_hz: f64,
        bandwidth_hz: f64,
    ) -> Result<Self> {
        let (n_tx_h, n_tx_v) = Self::near_square_factors(n_tx);
        let (n_rx_h, n_rx_v) = (n_rx, 1);
        let dims = Self {
            n_tx,
            n_tx_h,
            n_tx_v,
            n_rx,
            n_rx_h,
            n_rx_v,
            n_rf,
            n_streams,
            n_subcarriers,
            n_paths,
            cyclic_prefix: n_subcarriers / 4,
            center_freq_hz,
            bandwidth_hz,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        };
        check(self.n_streams >= 1, "n_streams must be at least 1")?;
        check(
            self.n_streams <= self.n_rf && self.n_rf <= self.n_tx,
            "need n_streams <= n_rf <= n_tx",
        )?;
        check(
            self.n_tx_h * self.n_tx_v == self.n_tx,
            "transmit array factorization must multiply to n_tx",
        )?;
        check(
            self.n_rx_h * self.n_rx_v == self.n_rx,
            "receive array factorization must multiply to n_rx",
        )?;
        check(
            self.n_tx % self.n_rf == 0,
            "n_tx must be divisible by n_rf",
        )?;
        check(self.n_subcarriers >= 1, "need at least one subcarrier")?;
        check(self.n_paths >= 1, "need at least one path")?;
        check(self.bandwidth_hz > 0.0, "bandwidth must be positive")?;
        check(self.center_freq_hz > 0.0, "center frequency must be positive")?;
        Ok(())
    }

    /// Antennas per RF chain in the sub-connected architecture.
    pub fn antennas_per_chain(&self) -> usize {
        self.n_tx / self.n_rf
    }

    /// Maximum time of arrival: cyclic prefix times the sampling period 1/BW.
    pub fn toa_max(&self) -> f64 {
        self.cyclic_prefix as f64 / self.bandwidth_hz
    }
}

/// Per-path parameters of one channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub gains: Vec<Complex64>,
    pub toas: Vec<f64>,
    pub aod_az: Vec<f64>,
    pub aod_el: Vec<f64>,
    pub aoa_az: Vec<f64>,
    pub aoa_el: Vec<f64>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }
}

/// One channel realization: K matrices of shape N_r x N_t plus the paths
/// that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    pub h: Vec<CMat>,
    pub dims: SystemDims,
    pub paths: PathSet,
}

/// Per-subcarrier optimal fully digital precoders with their SNR context.
#[derive(Debug, Clone)]
pub struct DigitalOptimal {
    pub f_opt: Vec<CMat>,
    pub rho: f64,
    pub noise_power: f64,
}

/// Subcarrier frequencies f_k = f_c + BW (2k - 1 - K) / (2K) for k = 1..K.
pub fn subcarrier_frequencies(dims: &SystemDims) -> Vec<f64> {
    let k_total = dims.n_subcarriers as f64;
    (1..=dims.n_subcarriers)
        .map(|k| {
            dims.center_freq_hz
                + dims.bandwidth_hz * (2.0 * k as f64 - 1.0 - k_total) / (2.0 * k_total)
        })
        .collect()
}

/// Planar-array response with half-wavelength spacing at the center
/// frequency. Entry (i_h, i_v) carries phase
/// `pi (f / f_c) (i_h sin(az) sin(el) + i_v cos(el))`; the `f / f_c` factor
/// is the beam-squint mechanism. The vector has unit norm.
pub fn array_response(n_h: usize, n_v: usize, az: f64, el: f64, f: f64, f_c: f64) -> CVec {
    let n = n_h * n_v;
    let scale = 1.0 / (n as f64).sqrt();
    let ratio = f / f_c;
    let horiz = az.sin() * el.sin();
    let vert = el.cos();
    let mut out = CVec::zeros(n);
    let mut idx = 0;
    for ih in 0..n_h {
        for iv in 0..n_v {
            let phase = std::f64::consts::PI * ratio * (ih as f64 * horiz + iv as f64 * vert);
            out[idx] = Complex64::from_polar(scale, phase);
            idx += 1;
        }
    }
    out
}

/// Assembles the K subcarrier matrices from explicit path parameters.
pub fn channel_from_paths(dims: &SystemDims, paths: &PathSet) -> Result<ChannelTensor> {
    if paths.len() != dims.n_paths {
        return Err(Error::Dim(format!(
            "path set has {} entries, dims declare {}",
            paths.len(),
            dims.n_paths
        )));
    }
    let freqs = subcarrier_frequencies(dims);
    let xi = ((dims.n_rx * dims.n_tx) as f64 / dims.n_paths as f64).sqrt();
    let mut h = Vec::with_capacity(dims.n_subcarriers);
    for &fk in &freqs {
        let mut hk = CMat::zeros(dims.n_rx, dims.n_tx);
        for p in 0..paths.len() {
            let a_r = array_response(
                dims.n_rx_h,
                dims.n_rx_v,
                paths.aoa_az[p],
                paths.aoa_el[p],
                fk,
                dims.center_freq_hz,
            );
            let a_t = array_response(
                dims.n_tx_h,
                dims.n_tx_v,
                paths.aod_az[p],
                paths.aod_el[p],
                fk,
                dims.center_freq_hz,
            );
            let delay = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * paths.toas[p] * fk);
            let coeff = paths.gains[p] * delay * Complex64::new(xi, 0.0);
            // Rank-1 update coeff * a_r * a_t^H.
            for r in 0..dims.n_rx {
                for c in 0..dims.n_tx {
                    hk[(r, c)] += coeff * a_r[r] * a_t[c].conj();
                }
            }
        }
        h.push(hk);
    }
    Ok(ChannelTensor {
        h,
        dims: dims.clone(),
        paths: paths.clone(),
    })
}

/// Samples one path set: gains CN(0,1), ToAs U[0, toa_max], azimuths
/// U[0, 2pi), elevations U[-pi/2, pi/2].
pub fn sample_paths(dims: &SystemDims, rng: &mut impl Rng) -> PathSet {
    let p = dims.n_paths;
    let comp = Normal::new(0.0, (0.5_f64).sqrt()).expect("valid normal");
    let gains: Vec<Complex64> = (0..p)
        .map(|_| Complex64::new(comp.sample(rng), comp.sample(rng)))
        .collect();
    let toa_dist = Uniform::new_inclusive(0.0, dims.toa_max());
    let toas: Vec<f64> = (0..p).map(|_| toa_dist.sample(rng)).collect();
    let az_dist = Uniform::new(0.0, 2.0 * std::f64::consts::PI);
    let el_dist = Uniform::new_inclusive(
        -std::f64::consts::FRAC_PI_2,
        std::f64::consts::FRAC_PI_2,
    );
    let aod_az: Vec<f64> = (0..p).map(|_| az_dist.sample(rng)).collect();
    let aod_el: Vec<f64> = (0..p).map(|_| el_dist.sample(rng)).collect();
    let aoa_az: Vec<f64> = (0..p).map(|_| az_dist.sample(rng)).collect();
    let aoa_el: Vec<f64> = (0..p).map(|_| el_dist.sample(rng)).collect();
    PathSet {
        gains,
        toas,
        aod_az,
        aod_el,
        aoa_az,
        aoa_el,
    }
}

/// Generates one channel realization from the supplied generator.
pub fn generate_channel(dims: &SystemDims, rng: &mut impl Rng) -> Result<ChannelTensor> {
    let paths = sample_paths(dims, rng);
    channel_from_paths(dims, &paths)
}

/// Derives the generator for one realization: substreams of a single master
/// seed, so generation order (or parallelism) cannot change the data.
pub fn realization_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates `count` realizations on substreams `stream_base..stream_base + count`.
pub fn generate_dataset(
    dims: &SystemDims,
    seed: u64,
    stream_base: u64,
    count: usize,
) -> Result<Vec<ChannelTensor>> {
    (0..count)
        .map(|i| {
            let mut rng = realization_rng(seed, stream_base + i as u64);
            generate_channel(dims, &mut rng)
        })
        .collect()
}

/// Per-subcarrier optimal fully digital precoder: the top `n_streams` right
/// singular vectors of H[k], scaled by water-filling powers with budget
/// `n_streams` against noise-to-gain levels `noise_power * n_streams /
/// (rho * gain^2)`. Streams with vanishing singular values receive zero
/// power, so the per-subcarrier norm budget is always met.
pub fn optimal_digital_precoder(
    channel: &ChannelTensor,
    rho: f64,
    noise_power: f64,
    n_streams: usize,
) -> Result<DigitalOptimal> {
    let dims = &channel.dims;
    if n_streams > dims.n_rx.min(dims.n_tx) {
        return Err(Error::Dim(format!(
            "n_streams {} exceeds min(n_rx, n_tx) = {}",
            n_streams,
            dims.n_rx.min(dims.n_tx)
        )));
    }
    let budget = n_streams as f64;
    let mut f_opt = Vec::with_capacity(channel.h.len());
    for hk in &channel.h {
        let (_, s, v) = svd(hk);
        let levels: Vec<f64> = (0..n_streams)
            .map(|i| {
                let g = s.get(i).copied().unwrap_or(0.0);
                if g > 1e-300 {
                    noise_power * budget / (rho * g * g)
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let powers = waterfill(&levels, budget);
        let mut fk = CMat::zeros(dims.n_tx, n_streams);
        for i in 0..n_streams {
            let scale = powers[i].sqrt();
            if scale > 0.0 {
                for r in 0..dims.n_tx {
                    fk[(r, i)] = v[(r, i)] * Complex64::new(scale, 0.0);
                }
            }
        }
        f_opt.push(fk);
    }
    Ok(DigitalOptimal {
        f_opt,
        rho,
        noise_power,
    })
}

/// Numerical rank: singular values above `tol` times the largest.
pub fn numerical_rank(m: &CMat, tol: f64) -> usize {
    let (_, s, _) = svd(m);
    let smax = s.iter().cloned().fold(0.0_f64, f64::max);
    s.iter().filter(|&&x| x > tol * smax && x > 0.0).count()
}
