//! Sub-connected hybrid beamforming: RF chain/antenna mappings, masked
//! network evaluation, and the sub-connected design procedures.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{ChannelTensor, DigitalOptimal};
use crate::error::{Error, Result};
use crate::linalg::{frob_norm_sq, CMat, RVec};
use crate::mannet::{
    design_with_optional_mapping, train_with_mode, ForwardTrace, HbfDesign, NetKind, TrainConfig,
    TrainResult, UnfoldedNet,
};
use crate::precoding::{realify, spectral_efficiency, waterfilling_digital, AnalogPrecoder,
    Architecture};

/// Binary RF chain/antenna connection matrix.
///
/// A feasible sub-connected mapping has exactly one connection per antenna
/// (row) and `M = N_t / N_rf` connections per chain (column). Unchecked
/// constructors exist for analysis masks that deliberately violate this.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingMatrix {
    n_tx: usize,
    n_rf: usize,
    connected: Vec<bool>,
}

impl MappingMatrix {
    /// Validated constructor; `connected` is row-major `n_tx x n_rf`.
    pub fn new(n_tx: usize, n_rf: usize, connected: Vec<bool>) -> Result<Self> {
        let map = Self {
            n_tx,
            n_rf,
            connected,
        };
        map.validate()?;
        Ok(map)
    }

    /// All-ones mask; not a feasible mapping, useful as a Hadamard identity.
    pub fn all_ones(n_tx: usize, n_rf: usize) -> Self {
        Self {
            n_tx,
            n_rf,
            connected: vec![true; n_tx * n_rf],
        }
    }

    /// All-zeros mask; not a feasible mapping.
    pub fn all_zeros(n_tx: usize, n_rf: usize) -> Self {
        Self {
            n_tx,
            n_rf,
            connected: vec![false; n_tx * n_rf],
        }
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn n_rf(&self) -> usize {
        self.n_rf
    }

    /// Antennas per chain in a feasible mapping.
    pub fn antennas_per_chain(&self) -> usize {
        self.n_tx / self.n_rf
    }

    pub fn connected(&self, antenna: usize, chain: usize) -> bool {
        self.connected[antenna * self.n_rf + chain]
    }

    pub fn row_sum(&self, antenna: usize) -> usize {
        (0..self.n_rf).filter(|&n| self.connected(antenna, n)).count()
    }

    pub fn col_sum(&self, chain: usize) -> usize {
        (0..self.n_tx).filter(|&m| self.connected(m, chain)).count()
    }

    /// Checks the cardinality constraints of a feasible mapping.
    pub fn validate(&self) -> Result<()> {
        if self.connected.len() != self.n_tx * self.n_rf {
            return Err(Error::Dim("mapping entry count mismatch".into()));
        }
        if self.n_rf == 0 || self.n_tx % self.n_rf != 0 {
            return Err(Error::Dim(
                "antenna count must be a positive multiple of the chain count".into(),
            ));
        }
        let m = self.antennas_per_chain();
        for antenna in 0..self.n_tx {
            if self.row_sum(antenna) != 1 {
                return Err(Error::Dim(format!(
                    "antenna {antenna} connects to {} chains, expected 1",
                    self.row_sum(antenna)
                )));
            }
        }
        for chain in 0..self.n_rf {
            if self.col_sum(chain) != m {
                return Err(Error::Dim(format!(
                    "chain {chain} connects {} antennas, expected {m}",
                    self.col_sum(chain)
                )));
            }
        }
        Ok(())
    }

    /// Hadamard product `C o F`, zeroing disconnected entries.
    pub fn mask_matrix(&self, f: &CMat) -> Result<CMat> {
        if f.nrows() != self.n_tx || f.ncols() != self.n_rf {
            return Err(Error::Dim("matrix shape differs from mapping".into()));
        }
        let mut out = f.clone();
        for m in 0..self.n_tx {
            for n in 0..self.n_rf {
                if !self.connected(m, n) {
                    out[(m, n)] = Complex64::new(0.0, 0.0);
                }
            }
        }
        Ok(out)
    }

    /// Sum of gains over the connected antenna/chain pairs.
    pub fn matched_gain(&self, gains: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for m in 0..self.n_tx {
            for n in 0..self.n_rf {
                if self.connected(m, n) {
                    acc += gains[(m, n)];
                }
            }
        }
        acc
    }
}

/// Real-stacked binary mask: the mapping pattern repeated over the real and
/// imaginary halves of the analog stack.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVector {
    values: RVec,
}

impl MaskVector {
    pub fn from_mapping(map: &MappingMatrix) -> Self {
        let c = CMat::from_fn(map.n_tx(), map.n_rf(), |m, n| {
            if map.connected(m, n) {
                Complex64::new(1.0, 1.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        Self { values: realify(&c) }
    }

    pub fn values(&self) -> &RVec {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }
}

/// Assignment strategy used by [`dynamic_mapping`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MappingMode {
    /// Maximizes the summed matched gain. Exact for two chains (rank the
    /// per-antenna gain differences); greedy with capacity constraints for
    /// more chains.
    #[default]
    GainMatched,
    /// Iterative column-wise elimination of the weakest antenna/chain pair;
    /// only well defined for two chains.
    ColumnElimination,
}

/// Per-antenna gain table: `n_tx x n_rf` magnitudes of the `n_rf`
/// largest-norm rows of `h_k` (rows ranked descending, ties by index).
pub fn gain_table(h_k: &CMat, n_rf: usize) -> Result<DMatrix<f64>> {
    let n_rx = h_k.nrows();
    let n_tx = h_k.ncols();
    if n_rf > n_rx {
        return Err(Error::Dim(format!(
            "need at least {n_rf} receive rows, channel has {n_rx}"
        )));
    }
    let mut order: Vec<usize> = (0..n_rx).collect();
    order.sort_by(|&a, &b| {
        let na: f64 = h_k.row(a).iter().map(|z| z.norm_sqr()).sum();
        let nb: f64 = h_k.row(b).iter().map(|z| z.norm_sqr()).sum();
        nb.partial_cmp(&na).unwrap().then(a.cmp(&b))
    });
    let mut gains = DMatrix::<f64>::zeros(n_tx, n_rf);
    for (chain, &row) in order[..n_rf].iter().enumerate() {
        for antenna in 0..n_tx {
            gains[(antenna, chain)] = h_k[(row, antenna)].norm();
        }
    }
    Ok(gains)
}

/// Builds a feasible mapping from a gain table.
pub fn mapping_from_gains(gains: &DMatrix<f64>, mode: MappingMode) -> Result<MappingMatrix> {
    let n_tx = gains.nrows();
    let n_rf = gains.ncols();
    if n_rf == 0 || n_tx % n_rf != 0 {
        return Err(Error::Dim(
            "antenna count must be a positive multiple of the chain count".into(),
        ));
    }
    let m = n_tx / n_rf;
    let mut connected = vec![false; n_tx * n_rf];
    match mode {
        MappingMode::GainMatched => {
            if n_rf == 1 {
                connected.fill(true);
            } else if n_rf == 2 {
                // Exact: assign the M antennas with the largest gain
                // advantage for chain 0 there, the rest to chain 1.
                let mut order: Vec<usize> = (0..n_tx).collect();
                order.sort_by(|&a, &b| {
                    let da = gains[(a, 0)] - gains[(a, 1)];
                    let db = gains[(b, 0)] - gains[(b, 1)];
                    db.partial_cmp(&da).unwrap().then(a.cmp(&b))
                });
                for (rank, &antenna) in order.iter().enumerate() {
                    let chain = if rank < m { 0 } else { 1 };
                    connected[antenna * n_rf + chain] = true;
                }
            } else {
                // Greedy over pairs in descending gain order, honoring the
                // per-chain capacity.
                let mut pairs: Vec<(usize, usize)> = (0..n_tx)
                    .flat_map(|a| (0..n_rf).map(move |c| (a, c)))
                    .collect();
                pairs.sort_by(|&(a1, c1), &(a2, c2)| {
                    gains[(a2, c2)]
                        .partial_cmp(&gains[(a1, c1)])
                        .unwrap()
                        .then(a1.cmp(&a2))
                        .then(c1.cmp(&c2))
                });
                let mut assigned = vec![false; n_tx];
                let mut load = vec![0usize; n_rf];
                for (antenna, chain) in pairs {
                    if !assigned[antenna] && load[chain] < m {
                        assigned[antenna] = true;
                        load[chain] += 1;
                        connected[antenna * n_rf + chain] = true;
                    }
                }
            }
        }
        MappingMode::ColumnElimination => {
            if n_rf != 2 {
                return Err(Error::Unsupported(
                    "column-elimination mapping is only defined for 2 RF chains".into(),
                ));
            }
            connected.fill(true);
            let mut active = vec![true; n_tx];
            for _ in 0..m {
                for chain in 0..n_rf {
                    let mut weakest: Option<usize> = None;
                    for antenna in 0..n_tx {
                        if !active[antenna] {
                            continue;
                        }
                        weakest = match weakest {
                            None => Some(antenna),
                            Some(w) if gains[(antenna, chain)] < gains[(w, chain)] => Some(antenna),
                            other => other,
                        };
                    }
                    let w = weakest.expect("active antenna available");
                    connected[w * n_rf + chain] = false;
                    active[w] = false;
                }
            }
        }
    }
    MappingMatrix::new(n_tx, n_rf, connected)
}

/// Builds the connection matrix for one subcarrier channel: stronger
/// antenna/chain pairs stay connected.
pub fn dynamic_mapping(h_k: &CMat, n_rf: usize, mode: MappingMode) -> Result<MappingMatrix> {
    let gains = gain_table(h_k, n_rf)?;
    mapping_from_gains(&gains, mode)
}

/// Block-diagonal mapping: chain `n` drives antennas `n*M .. (n+1)*M`.
pub fn fixed_mapping(n_tx: usize, n_rf: usize) -> Result<MappingMatrix> {
    if n_rf == 0 || n_tx % n_rf != 0 {
        return Err(Error::Dim(
            "antenna count must be a positive multiple of the chain count".into(),
        ));
    }
    let m = n_tx / n_rf;
    let mut connected = vec![false; n_tx * n_rf];
    for antenna in 0..n_tx {
        connected[antenna * n_rf + antenna / m] = true;
    }
    MappingMatrix::new(n_tx, n_rf, connected)
}

/// Index of the subcarrier whose channel has the largest Frobenius norm;
/// ties go to the smallest index.
pub fn select_best_subcarrier(h: &ChannelTensor) -> usize {
    let mut best = 0;
    let mut best_norm = f64::MIN;
    for (k, hk) in h.h.iter().enumerate() {
        let norm = frob_norm_sq(hk);
        if norm > best_norm {
            best_norm = norm;
            best = k;
        }
    }
    best
}

/// Default candidate subcarriers for the heuristic search: every other
/// subcarrier starting from the first.
pub fn default_candidate_subcarriers(n_subcarriers: usize) -> Vec<usize> {
    (0..n_subcarriers).step_by(2).collect()
}

/// Evaluates one sub-connected candidate: masks a fully connected analog
/// precoder with `map`, solves the digital stage by water-filling, and
/// scores the pair. The masked entries are already unit modulus, so no
/// renormalization is applied.
pub fn sc_candidate_design(
    f_full: &CMat,
    map: &MappingMatrix,
    h: &ChannelTensor,
    rho: f64,
    noise_power: f64,
) -> Result<HbfDesign> {
    let masked = map.mask_matrix(f_full)?;
    let n_s = h.dims.n_streams;
    let f_bb: Vec<CMat> = h
        .h
        .iter()
        .map(|hk| waterfilling_digital(hk, &masked, rho, noise_power, n_s))
        .collect::<Result<_>>()?;
    let se = spectral_efficiency(h, &masked, &f_bb, rho, noise_power)?;
    Ok(HbfDesign {
        f_rf: AnalogPrecoder {
            matrix: masked,
            architecture: Architecture::SubConnected(map.clone()),
        },
        f_bb,
        se,
    })
}

/// Heuristic sub-connected design: run the fully connected design once, then
/// search candidate subcarriers for the mapping whose masked precoder yields
/// the largest spectral efficiency. Ties keep the earliest candidate.
#[allow(clippy::too_many_arguments)]
pub fn heuristic_sc_hbf(
    net: &UnfoldedNet,
    h: &ChannelTensor,
    f_opt: &DigitalOptimal,
    rho: f64,
    noise_power: f64,
    i_net: usize,
    candidates: &[usize],
    rng: &mut impl Rng,
) -> Result<HbfDesign> {
    if candidates.is_empty() {
        return Err(Error::Config("candidate subcarrier set is empty".into()));
    }
    let full = design_with_optional_mapping(net, h, f_opt, rho, noise_power, i_net, None, rng)?;
    let mut best: Option<HbfDesign> = None;
    for &k in candidates {
        if k >= h.h.len() {
            return Err(Error::Dim(format!(
                "candidate subcarrier {k} out of range (K = {})",
                h.h.len()
            )));
        }
        let map = dynamic_mapping(&h.h[k], h.dims.n_rf, MappingMode::GainMatched)?;
        let candidate = sc_candidate_design(&full.f_rf.matrix, &map, h, rho, noise_power)?;
        let better = match &best {
            None => true,
            Some(b) => candidate.se > b.se,
        };
        if better {
            best = Some(candidate);
        }
    }
    Ok(best.expect("candidate list is nonempty"))
}

/// Masked network forward pass; see the fully connected forward for the
/// unmasked layer recursion.
pub fn submannet_forward(
    net: &UnfoldedNet,
    z_bar: &RVec,
    grams: &[CMat],
    mask: &MaskVector,
) -> Result<ForwardTrace> {
    crate::mannet::forward(net, z_bar, grams, Some(mask))
}

/// Trains the masked network; the mask is rebuilt per batch from the best
/// subcarrier of the batch's first realization.
pub fn submannet_train(dataset: &[ChannelTensor], config: &TrainConfig) -> Result<TrainResult> {
    train_with_mode(dataset, config, NetKind::SubConnected)
}

/// Sub-connected design with the masked network: the mapping comes from the
/// largest-norm subcarrier, the network runs masked, and the digital stage
/// is finalized by water-filling.
pub fn sc_hbf_design(
    net: &UnfoldedNet,
    h: &ChannelTensor,
    f_opt: &DigitalOptimal,
    rho: f64,
    noise_power: f64,
    i_net: usize,
    rng: &mut impl Rng,
) -> Result<HbfDesign> {
    let k_star = select_best_subcarrier(h);
    let map = dynamic_mapping(&h.h[k_star], h.dims.n_rf, MappingMode::GainMatched)?;
    design_with_optional_mapping(net, h, f_opt, rho, noise_power, i_net, Some(&map), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channel, realization_rng, SystemDims};
    use rand::Rng;

    fn random_gains(n_tx: usize, n_rf: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n_tx, n_rf, |_, _| rng.gen_range(0.0..10.0))
    }

    /// Exhaustive search over all feasible mappings (two chains).
    fn brute_force_best_gain(gains: &DMatrix<f64>) -> f64 {
        let n_tx = gains.nrows();
        assert_eq!(gains.ncols(), 2);
        let m = n_tx / 2;
        let mut best = f64::MIN;
        for bits in 0u32..(1 << n_tx) {
            if bits.count_ones() as usize != m {
                continue;
            }
            let mut total = 0.0;
            for antenna in 0..n_tx {
                let chain = usize::from(bits & (1 << antenna) == 0);
                total += gains[(antenna, chain)];
            }
            best = best.max(total);
        }
        best
    }

    #[test]
    fn mapping_invariants_from_constructors() {
        let mut rng = realization_rng(31, 0);
        for n_tx in [4usize, 6, 8] {
            let gains = random_gains(n_tx, 2, &mut rng);
            for mode in [MappingMode::GainMatched, MappingMode::ColumnElimination] {
                let map = mapping_from_gains(&gains, mode).unwrap();
                map.validate().unwrap();
            }
        }
        fixed_mapping(8, 4).unwrap().validate().unwrap();
        let gains3 = random_gains(9, 3, &mut rng);
        mapping_from_gains(&gains3, MappingMode::GainMatched)
            .unwrap()
            .validate()
            .unwrap();
    }

    #[test]
    fn single_chain_connects_everything() {
        let gains = DMatrix::from_element(4, 1, 1.0);
        let map = mapping_from_gains(&gains, MappingMode::GainMatched).unwrap();
        for antenna in 0..4 {
            assert!(map.connected(antenna, 0));
        }
    }

    #[test]
    fn worked_four_antenna_assignment() {
        let gains = DMatrix::from_row_slice(4, 2, &[4.0, 1.0, 3.0, 2.0, 1.0, 5.0, 2.0, 6.0]);
        for mode in [MappingMode::GainMatched, MappingMode::ColumnElimination] {
            let map = mapping_from_gains(&gains, mode).unwrap();
            assert!(map.connected(0, 0), "{mode:?}");
            assert!(map.connected(1, 0), "{mode:?}");
            assert!(map.connected(2, 1), "{mode:?}");
            assert!(map.connected(3, 1), "{mode:?}");
        }
        // And that choice is the brute-force optimum.
        let best = brute_force_best_gain(&gains);
        let map = mapping_from_gains(&gains, MappingMode::GainMatched).unwrap();
        assert!((map.matched_gain(&gains) - best).abs() < 1e-12);
    }

    #[test]
    fn gain_matched_equals_brute_force_two_chains() {
        let mut rng = realization_rng(32, 0);
        for trial in 0..50 {
            let n_tx = [4, 6, 8][trial % 3];
            let gains = random_gains(n_tx, 2, &mut rng);
            let map = mapping_from_gains(&gains, MappingMode::GainMatched).unwrap();
            let best = brute_force_best_gain(&gains);
            assert!(
                (map.matched_gain(&gains) - best).abs() < 1e-9,
                "trial {trial}: greedy {} vs brute {best}",
                map.matched_gain(&gains)
            );
        }
    }

    #[test]
    fn uniform_gains_reduce_to_fixed_mapping() {
        let gains = DMatrix::from_element(8, 2, 1.0);
        let dynamic = mapping_from_gains(&gains, MappingMode::GainMatched).unwrap();
        let fixed = fixed_mapping(8, 2).unwrap();
        assert_eq!(dynamic, fixed);
    }

    #[test]
    fn column_elimination_requires_two_chains() {
        let gains = DMatrix::from_element(9, 3, 1.0);
        let err = mapping_from_gains(&gains, MappingMode::ColumnElimination).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn gain_table_orientation_and_row_ranking() {
        // 3 receive rows with distinct norms; the two largest feed the table.
        let h = CMat::from_fn(3, 2, |i, j| {
            Complex64::new((i as f64 + 1.0) * (j as f64 + 1.0), 0.0)
        });
        let gains = gain_table(&h, 2).unwrap();
        assert_eq!(gains.nrows(), 2); // n_tx = 2 columns of h
        assert_eq!(gains.ncols(), 2);
        // Row 2 of h has the largest norm, then row 1.
        assert!((gains[(0, 0)] - 3.0).abs() < 1e-15);
        assert!((gains[(1, 0)] - 6.0).abs() < 1e-15);
        assert!((gains[(0, 1)] - 2.0).abs() < 1e-15);
        assert!((gains[(1, 1)] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn best_subcarrier_selection() {
        let dims = SystemDims::new(4, 2, 2, 2, 8, 2, 300e9, 30e9).unwrap();
        let ch = generate_channel(&dims, &mut realization_rng(33, 0)).unwrap();
        let k_star = select_best_subcarrier(&ch);
        let norms: Vec<f64> = ch.h.iter().map(frob_norm_sq).collect();
        let max = norms.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(norms[k_star], max);

        // Scaled copy dominates.
        let mut scaled = ch.clone();
        scaled.h[5] = &scaled.h[2] * Complex64::new(10.0, 0.0);
        assert_eq!(select_best_subcarrier(&scaled), 5);

        // Single subcarrier falls back to index zero.
        let mut dims1 = dims.clone();
        dims1.n_subcarriers = 1;
        dims1.cyclic_prefix = 1;
        let ch1 = generate_channel(&dims1, &mut realization_rng(33, 1)).unwrap();
        assert_eq!(select_best_subcarrier(&ch1), 0);
    }

    #[test]
    fn candidate_subcarriers_cover_every_other_index() {
        assert_eq!(default_candidate_subcarriers(8), vec![0, 2, 4, 6]);
        assert_eq!(default_candidate_subcarriers(1), vec![0]);
    }

    #[test]
    fn mask_vector_duplicates_pattern() {
        let map = fixed_mapping(4, 2).unwrap();
        let mask = MaskVector::from_mapping(&map);
        let v = mask.values();
        assert_eq!(v.len(), 2 * 4 * 2);
        let half = v.len() / 2;
        for i in 0..half {
            assert_eq!(v[i], v[half + i]);
            assert!(v[i] == 0.0 || v[i] == 1.0);
        }
        let ones: f64 = v.iter().sum();
        assert_eq!(ones as usize, 2 * 4); // one connection per antenna, both halves
    }

    use crate::channel::optimal_digital_precoder;
    use crate::linalg::RVec;
    use crate::mannet::{forward, train, UnfoldedNet};
    use crate::precoding::{Architecture, RealStack};

    fn design_fixture(
        seed: u64,
    ) -> (ChannelTensor, crate::channel::DigitalOptimal, UnfoldedNet) {
        let dims = SystemDims::new(8, 2, 2, 2, 4, 3, 300e9, 30e9).unwrap();
        let ch = generate_channel(&dims, &mut realization_rng(seed, 0)).unwrap();
        let f_opt = optimal_digital_precoder(&ch, 10.0, 1.0, 2).unwrap();
        let net = UnfoldedNet::new(8, 2, 3, 0.5, &mut realization_rng(seed, 1)).unwrap();
        (ch, f_opt, net)
    }

    fn random_stack(seed: u64) -> RealStack {
        let mut rng = realization_rng(seed, 2);
        let f_rf = CMat::from_fn(4, 2, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let f_opt: Vec<CMat> = (0..3)
            .map(|_| {
                CMat::from_fn(4, 2, |_, _| {
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                })
            })
            .collect();
        let f_bb: Vec<CMat> = (0..3)
            .map(|_| {
                CMat::from_fn(2, 2, |_, _| {
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                })
            })
            .collect();
        RealStack::build(&f_opt, &f_rf, &f_bb).unwrap()
    }

    #[test]
    fn masked_forward_with_all_ones_matches_unmasked() {
        let stack = random_stack(34);
        let net = UnfoldedNet::new(4, 2, 3, 0.5, &mut realization_rng(34, 3)).unwrap();
        let ones = MaskVector::from_mapping(&MappingMatrix::all_ones(4, 2));
        let masked = submannet_forward(&net, &stack.z_bar, &stack.grams, &ones).unwrap();
        let plain = forward(&net, &stack.z_bar, &stack.grams, None).unwrap();
        for (a, b) in masked.x.iter().zip(&plain.x) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn masked_forward_with_all_zeros_is_zero() {
        let stack = random_stack(35);
        let net = UnfoldedNet::new(4, 2, 3, 0.5, &mut realization_rng(35, 3)).unwrap();
        let zeros = MaskVector::from_mapping(&MappingMatrix::all_zeros(4, 2));
        let trace = submannet_forward(&net, &stack.z_bar, &stack.grams, &zeros).unwrap();
        for x in &trace.x {
            assert_eq!(x.norm(), 0.0);
        }
    }

    #[test]
    fn masked_forward_zero_pattern_equals_mask() {
        let stack = random_stack(36);
        let net = UnfoldedNet::new(4, 2, 3, 0.5, &mut realization_rng(36, 3)).unwrap();
        let map = fixed_mapping(4, 2).unwrap();
        let mask = MaskVector::from_mapping(&map);
        let trace = submannet_forward(&net, &stack.z_bar, &stack.grams, &mask).unwrap();
        for x in trace.x.iter().skip(1) {
            for i in 0..mask.len() {
                if mask.values()[i] == 0.0 {
                    assert_eq!(x[i], 0.0);
                } else {
                    // Generic inputs keep connected coordinates alive.
                    assert!(x[i] != 0.0, "connected coordinate {i} unexpectedly zero");
                }
            }
        }
    }

    #[test]
    fn sc_design_output_lies_in_feasible_set() {
        let (ch, f_opt, net) = design_fixture(37);
        let mut rng = realization_rng(37, 9);
        let design = sc_hbf_design(&net, &ch, &f_opt, 10.0, 1.0, 3, &mut rng).unwrap();
        design.f_rf.validate().unwrap();
        match &design.f_rf.architecture {
            Architecture::SubConnected(map) => {
                let nonzeros = design
                    .f_rf
                    .matrix
                    .iter()
                    .filter(|z| **z != Complex64::new(0.0, 0.0))
                    .count();
                assert_eq!(nonzeros, ch.dims.n_tx);
                map.validate().unwrap();
            }
            other => panic!("expected sub-connected, got {other:?}"),
        }
        for fb in &design.f_bb {
            let norm = frob_norm_sq(&(&design.f_rf.matrix * fb));
            assert!((norm - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn heuristic_returns_arg_max_over_candidates() {
        let (ch, f_opt, net) = design_fixture(38);
        let candidates = default_candidate_subcarriers(ch.h.len());
        let mut rng = realization_rng(38, 9);
        let best = heuristic_sc_hbf(&net, &ch, &f_opt, 10.0, 1.0, 3, &candidates, &mut rng).unwrap();
        best.f_rf.validate().unwrap();

        // Re-evaluating every candidate from the same full design must not
        // beat the returned choice. Reproduce the full design with the same
        // generator stream.
        let mut rng2 = realization_rng(38, 9);
        let full = crate::mannet::fc_hbf_design(&net, &ch, &f_opt, 10.0, 1.0, 3, &mut rng2).unwrap();
        for &k in &candidates {
            let map = dynamic_mapping(&ch.h[k], ch.dims.n_rf, MappingMode::GainMatched).unwrap();
            let cand = sc_candidate_design(&full.f_rf.matrix, &map, &ch, 10.0, 1.0).unwrap();
            assert!(best.se >= cand.se - 1e-12);
        }
    }

    #[test]
    fn heuristic_single_candidate_is_single_masked_design() {
        let (ch, f_opt, net) = design_fixture(39);
        let mut rng = realization_rng(39, 9);
        let got = heuristic_sc_hbf(&net, &ch, &f_opt, 10.0, 1.0, 2, &[1], &mut rng).unwrap();
        let mut rng2 = realization_rng(39, 9);
        let full = crate::mannet::fc_hbf_design(&net, &ch, &f_opt, 10.0, 1.0, 2, &mut rng2).unwrap();
        let map = dynamic_mapping(&ch.h[1], ch.dims.n_rf, MappingMode::GainMatched).unwrap();
        let direct = sc_candidate_design(&full.f_rf.matrix, &map, &ch, 10.0, 1.0).unwrap();
        assert_eq!(got.se, direct.se);
        assert_eq!(got.f_rf.matrix, direct.f_rf.matrix);
    }

    #[test]
    fn heuristic_rejects_empty_candidates() {
        let (ch, f_opt, net) = design_fixture(40);
        let mut rng = realization_rng(40, 9);
        let err = heuristic_sc_hbf(&net, &ch, &f_opt, 10.0, 1.0, 2, &[], &mut rng).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn submannet_training_is_deterministic_and_differs_from_full() {
        let dims = SystemDims::new(8, 2, 2, 2, 4, 3, 300e9, 30e9).unwrap();
        let data: Vec<ChannelTensor> = (0..6)
            .map(|i| generate_channel(&dims, &mut realization_rng(41, i)).unwrap())
            .collect();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 3,
            inner_iters: 2,
            n_layers: 3,
            ..TrainConfig::desk_default()
        };
        let a = submannet_train(&data, &cfg).unwrap();
        let b = submannet_train(&data, &cfg).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.loss_log, b.loss_log);
        let full = train(&data, &cfg).unwrap();
        assert_ne!(full.net, a.net);
    }
}
