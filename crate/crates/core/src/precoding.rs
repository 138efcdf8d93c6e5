//! Matrix-factorization machinery for hybrid precoding.
//!
//! The factorization objective `sum_k ||F_opt[k] - F_RF F_BB[k]||_F^2` is
//! rewritten over real vectors: `x` stacks Re/Im of vec(F_RF), `z[k]` stacks
//! vec(F_opt[k]), and `B[k]` is the real representation of
//! `F_BB[k]^T kron I`. `B[k]` is never materialized: all products reduce to
//! small complex multiplications with the `N_rf x N_s` coefficient matrix,
//! which is what makes the unfolded layers cheap.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::ChannelTensor;
use crate::error::{Error, Result};
use crate::linalg::{
    frob_norm_sq, herm_inv_sqrt, log2_det_i_plus_gram, pinv, svd, waterfill, CMat, RVec,
};
use crate::subnet::MappingMatrix;

/// Relative singular-value cutoff for pseudo-inverse based least squares.
pub const PINV_CUTOFF: f64 = 1e-12;

/// Condition-number limit for inverting `F_RF^H F_RF`.
pub const MAX_GRAM_COND: f64 = 1e12;

/// Analog network architecture of a precoder.
#[derive(Debug, Clone, PartialEq)]
pub enum Architecture {
    FullyConnected,
    SubConnected(MappingMatrix),
}

/// Frequency-flat analog precoder together with its architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogPrecoder {
    pub matrix: CMat,
    pub architecture: Architecture,
}

impl AnalogPrecoder {
    /// Checks feasibility: unit-modulus entries, and for sub-connected
    /// precoders the exact zero pattern and cardinality constraints of the
    /// mapping.
    pub fn validate(&self) -> Result<()> {
        match &self.architecture {
            Architecture::FullyConnected => {
                for z in self.matrix.iter() {
                    if (z.norm() - 1.0).abs() > 1e-9 {
                        return Err(Error::Dim(format!(
                            "fully connected entry has modulus {}",
                            z.norm()
                        )));
                    }
                }
            }
            Architecture::SubConnected(map) => {
                map.validate()?;
                if self.matrix.nrows() != map.n_tx() || self.matrix.ncols() != map.n_rf() {
                    return Err(Error::Dim("mapping shape differs from precoder".into()));
                }
                for m in 0..map.n_tx() {
                    for n in 0..map.n_rf() {
                        let z = self.matrix[(m, n)];
                        if map.connected(m, n) {
                            if (z.norm() - 1.0).abs() > 1e-9 {
                                return Err(Error::Dim(format!(
                                    "connected entry ({m},{n}) has modulus {}",
                                    z.norm()
                                )));
                            }
                        } else if z != Complex64::new(0.0, 0.0) {
                            return Err(Error::Dim(format!(
                                "disconnected entry ({m},{n}) is nonzero"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-subcarrier digital precoders.
pub type DigitalPrecoderSet = Vec<CMat>;

/// Stacks Re over Im of the column-major vectorization.
pub fn realify(f: &CMat) -> RVec {
    let n = f.nrows() * f.ncols();
    let mut out = RVec::zeros(2 * n);
    for (i, z) in f.iter().enumerate() {
        out[i] = z.re;
        out[n + i] = z.im;
    }
    out
}

/// Inverse of [`realify`]; fails when the length is not `2 * rows * cols`.
pub fn derealify(x: &RVec, rows: usize, cols: usize) -> Result<CMat> {
    let n = rows * cols;
    if x.len() != 2 * n {
        return Err(Error::Dim(format!(
            "expected vector of length {}, got {}",
            2 * n,
            x.len()
        )));
    }
    let mut out = CMat::zeros(rows, cols);
    for (i, z) in out.iter_mut().enumerate() {
        *z = Complex64::new(x[i], x[n + i]);
    }
    Ok(out)
}

/// Structured form of one subcarrier's stacked operator `B[k]`.
///
/// Only the `N_rf x N_s` digital coefficients are stored; every product is
/// evaluated through them, so a matrix-vector product costs
/// `O(N_t N_rf N_s)` real multiplies instead of touching a dense
/// `2 N_t N_s x 2 N_t N_rf` matrix.
#[derive(Debug, Clone)]
pub struct BlockSparse {
    coeffs: CMat,
    n_tx: usize,
}

impl BlockSparse {
    /// Builds the operator for one subcarrier from `F_BB[k]`.
    pub fn new(f_bb_k: &CMat, n_tx: usize) -> Self {
        Self {
            coeffs: f_bb_k.clone(),
            n_tx,
        }
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn n_rf(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn n_streams(&self) -> usize {
        self.coeffs.ncols()
    }

    /// `B x`, mapping the analog stack (length `2 N_t N_rf`) to the
    /// objective stack (length `2 N_t N_s`).
    pub fn apply(&self, x: &RVec) -> Result<RVec> {
        let xm = derealify(x, self.n_tx, self.n_rf())?;
        Ok(realify(&(xm * &self.coeffs)))
    }

    /// `B^T z`, the adjoint map back to the analog stack.
    pub fn apply_transpose(&self, z: &RVec) -> Result<RVec> {
        let zm = derealify(z, self.n_tx, self.n_streams())?;
        Ok(realify(&(zm * self.coeffs.adjoint())))
    }

    /// Compressed form of `B^T B`: the Hermitian `N_rf x N_rf` Gram matrix
    /// of the digital coefficients.
    pub fn gram(&self) -> CMat {
        &self.coeffs * self.coeffs.adjoint()
    }

    /// Applies a (possibly summed) compressed Gram matrix to an analog
    /// stack: `realify(X * g)` with `X = derealify(x)`.
    pub fn gram_apply(g: &CMat, x: &RVec, n_tx: usize) -> Result<RVec> {
        let xm = derealify(x, n_tx, g.nrows())?;
        Ok(realify(&(xm * g)))
    }

    pub fn coeffs(&self) -> &CMat {
        &self.coeffs
    }
}

/// Real-valued stacks of one realization under the current precoders.
#[derive(Debug, Clone)]
pub struct RealStack {
    /// `realify(F_RF)`.
    pub x: RVec,
    /// `realify(F_opt[k])` per subcarrier.
    pub z: Vec<RVec>,
    /// Structured `B[k]` per subcarrier.
    pub b: Vec<BlockSparse>,
    /// `sum_k B[k]^T z[k]`.
    pub z_bar: RVec,
    /// Compressed `B^T B` per subcarrier.
    pub grams: Vec<CMat>,
    pub n_tx: usize,
    pub n_rf: usize,
}

impl RealStack {
    pub fn build(f_opt: &[CMat], f_rf: &CMat, f_bb: &[CMat]) -> Result<Self> {
        if f_opt.len() != f_bb.len() {
            return Err(Error::Dim("precoder sets differ in subcarrier count".into()));
        }
        let n_tx = f_rf.nrows();
        let n_rf = f_rf.ncols();
        let x = realify(f_rf);
        let mut z = Vec::with_capacity(f_opt.len());
        let mut b = Vec::with_capacity(f_opt.len());
        let mut grams = Vec::with_capacity(f_opt.len());
        let mut z_bar_c = CMat::zeros(n_tx, n_rf);
        for (fo, fb) in f_opt.iter().zip(f_bb) {
            if fo.nrows() != n_tx || fb.nrows() != n_rf || fo.ncols() != fb.ncols() {
                return Err(Error::Dim("inconsistent precoder shapes".into()));
            }
            z.push(realify(fo));
            let op = BlockSparse::new(fb, n_tx);
            grams.push(op.gram());
            z_bar_c += fo * fb.adjoint();
            b.push(op);
        }
        let z_bar = realify(&z_bar_c);
        Ok(Self {
            x,
            z,
            b,
            z_bar,
            grams,
            n_tx,
            n_rf,
        })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.z.len()
    }

    /// `sum_k ||z[k] - B[k] y||^2` for an arbitrary analog stack `y`.
    pub fn residual_at(&self, y: &RVec) -> Result<f64> {
        let mut acc = 0.0;
        for (zk, bk) in self.z.iter().zip(&self.b) {
            let by = bk.apply(y)?;
            acc += (zk - by).norm_squared();
        }
        Ok(acc)
    }
}

/// `sum_k ||F_opt[k] - F_RF F_BB[k]||_F^2`, the factorization objective.
pub fn residual_objective(f_opt: &[CMat], f_rf: &CMat, f_bb: &[CMat]) -> f64 {
    f_opt
        .iter()
        .zip(f_bb)
        .map(|(fo, fb)| frob_norm_sq(&(fo - f_rf * fb)))
        .sum()
}

/// Least-squares digital precoder `F_BB[k] = pinv(F_RF) F_opt[k]`.
pub fn ls_digital(f_rf: &CMat, f_opt_k: &CMat) -> CMat {
    pinv(f_rf, PINV_CUTOFF) * f_opt_k
}

/// Water-filling digital precoder for a fixed analog stage.
///
/// With `Q = F_RF^H F_RF`, the columns of `U~` are the top right singular
/// vectors of `H[k] F_RF Q^{-1/2}` and the stream powers come from
/// water-filling with budget `n_streams`, so that
/// `trace(Q F_BB F_BB^H) = n_streams`, i.e. the transmit power constraint
/// `||F_RF F_BB[k]||_F^2 = n_streams` holds exactly.
pub fn waterfilling_digital(
    h_k: &CMat,
    f_rf: &CMat,
    rho: f64,
    noise_power: f64,
    n_streams: usize,
) -> Result<CMat> {
    let q = f_rf.adjoint() * f_rf;
    let q_inv_sqrt = herm_inv_sqrt(&q, MAX_GRAM_COND)?;
    let a = h_k * f_rf * &q_inv_sqrt;
    let (_, s, v) = svd(&a);
    if v.ncols() < n_streams {
        return Err(Error::Dim(format!(
            "effective channel supports {} streams, requested {}",
            v.ncols(),
            n_streams
        )));
    }
    let budget = n_streams as f64;
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
    let mut scaled = CMat::zeros(v.nrows(), n_streams);
    for i in 0..n_streams {
        let root = powers[i].sqrt();
        for r in 0..v.nrows() {
            scaled[(r, i)] = v[(r, i)] * Complex64::new(root, 0.0);
        }
    }
    Ok(q_inv_sqrt * scaled)
}

fn phase_only(z: Complex64) -> Complex64 {
    if z == Complex64::new(0.0, 0.0) {
        // Zero entries get phase 0 so the projection stays deterministic.
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::from_polar(1.0, z.arg())
    }
}

/// Projects an analog stack onto the fully connected feasible set: every
/// entry keeps its phase and is normalized to unit modulus.
pub fn unit_modulus_project(x_l: &RVec, n_tx: usize, n_rf: usize) -> Result<AnalogPrecoder> {
    let f = derealify(x_l, n_tx, n_rf)?;
    let matrix = f.map(phase_only);
    Ok(AnalogPrecoder {
        matrix,
        architecture: Architecture::FullyConnected,
    })
}

/// Projects an analog stack onto the sub-connected feasible set of `map`:
/// connected entries are normalized to unit modulus, the rest forced to
/// exactly zero.
pub fn sub_connected_project(
    x_l: &RVec,
    n_tx: usize,
    n_rf: usize,
    map: &MappingMatrix,
) -> Result<AnalogPrecoder> {
    if map.n_tx() != n_tx || map.n_rf() != n_rf {
        return Err(Error::Dim("mapping shape differs from stack".into()));
    }
    let f = derealify(x_l, n_tx, n_rf)?;
    let mut matrix = CMat::zeros(n_tx, n_rf);
    for m in 0..n_tx {
        for n in 0..n_rf {
            if map.connected(m, n) {
                matrix[(m, n)] = phase_only(f[(m, n)]);
            }
        }
    }
    Ok(AnalogPrecoder {
        matrix,
        architecture: Architecture::SubConnected(map.clone()),
    })
}

/// Random unit-modulus analog precoder with phases uniform on `[0, 2pi)`.
pub fn random_unit_modulus(n_tx: usize, n_rf: usize, rng: &mut impl Rng) -> CMat {
    CMat::from_fn(n_tx, n_rf, |_, _| {
        Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * std::f64::consts::PI))
    })
}

fn se_subcarrier(t: &CMat, c: f64) -> f64 {
    if frob_norm_sq(t) == 0.0 {
        return 0.0;
    }
    let n_s = t.ncols();
    let (u, _, _) = svd(t);
    let cols = u.ncols().min(n_s);
    let v = u.columns(0, cols).into_owned();
    se_subcarrier_with_combiner(t, &v, c)
}

fn se_subcarrier_with_combiner(t: &CMat, v: &CMat, c: f64) -> f64 {
    let m = v.adjoint() * t;
    log2_det_i_plus_gram(&m, c)
}

/// Average per-subcarrier spectral efficiency for an effective transmit
/// precoder set (each entry `N_t x N_s`), using the optimal combiner (top
/// left singular vectors of the effective received matrix).
pub fn spectral_efficiency_effective(
    h: &ChannelTensor,
    f_eff: &[CMat],
    rho: f64,
    noise_power: f64,
) -> Result<f64> {
    if f_eff.len() != h.h.len() {
        return Err(Error::Dim("effective precoder count != subcarriers".into()));
    }
    let mut acc = 0.0;
    for (hk, fk) in h.h.iter().zip(f_eff) {
        let n_s = fk.ncols();
        let c = rho / (noise_power * n_s as f64);
        let t = hk * fk;
        acc += se_subcarrier(&t, c);
    }
    Ok(acc / h.h.len() as f64)
}

/// Average per-subcarrier spectral efficiency of a hybrid precoder pair.
pub fn spectral_efficiency(
    h: &ChannelTensor,
    f_rf: &CMat,
    f_bb: &[CMat],
    rho: f64,
    noise_power: f64,
) -> Result<f64> {
    if f_bb.len() != h.h.len() {
        return Err(Error::Dim("digital precoder count != subcarriers".into()));
    }
    let eff: Vec<CMat> = f_bb.iter().map(|fb| f_rf * fb).collect();
    spectral_efficiency_effective(h, &eff, rho, noise_power)
}

/// Achievable spectral efficiency of the analog stage alone under a mapping:
/// `(1/K) sum_k log2 det(I + rho/(noise N_s) H (C o F)(C o F)^H H^H)`.
pub fn analog_se(
    h: &ChannelTensor,
    map: &MappingMatrix,
    f_rf: &CMat,
    rho: f64,
    noise_power: f64,
) -> Result<f64> {
    let masked = map.mask_matrix(f_rf)?;
    let n_s = h.dims.n_streams;
    let c = rho / (noise_power * n_s as f64);
    let mut acc = 0.0;
    for hk in &h.h {
        let a = hk * &masked;
        acc += log2_det_i_plus_gram(&a, c);
    }
    Ok(acc / h.h.len() as f64)
}
