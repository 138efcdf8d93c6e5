//! Reference designs and analytic operation counts.
//!
//! The fully digital bound scores the unconstrained optimal precoder; OMP is
//! the low-complexity comparator, greedily picking analog columns from a
//! codebook of transmit array responses at the center frequency.

use crate::channel::{array_response, ChannelTensor, DigitalOptimal};
use crate::error::{Error, Result};
use crate::linalg::{frob_norm_sq, CMat};
use crate::mannet::HbfDesign;
use crate::precoding::{
    ls_digital, realify, spectral_efficiency, spectral_efficiency_effective, unit_modulus_project,
    waterfilling_digital, AnalogPrecoder,
};

/// Transmit array-response dictionary, one unit-norm column per path.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub atoms: CMat,
}

impl Codebook {
    /// Builds the dictionary from the true departure angles at the center
    /// frequency.
    pub fn from_paths(h: &ChannelTensor) -> Self {
        let dims = &h.dims;
        let p = h.paths.len();
        let mut atoms = CMat::zeros(dims.n_tx, p);
        for i in 0..p {
            let a = array_response(
                dims.n_tx_h,
                dims.n_tx_v,
                h.paths.aod_az[i],
                h.paths.aod_el[i],
                dims.center_freq_hz,
                dims.center_freq_hz,
            );
            atoms.set_column(i, &a);
        }
        Self { atoms }
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }
}

/// Spectral efficiency of the optimal fully digital precoder; the upper
/// bound every hybrid design is measured against.
pub fn dbf_se(h: &ChannelTensor, f_opt: &DigitalOptimal, rho: f64, noise_power: f64) -> Result<f64> {
    spectral_efficiency_effective(h, &f_opt.f_opt, rho, noise_power)
}

/// OMP hybrid design outcome, with the residual norm after each selection
/// for diagnostics.
#[derive(Debug, Clone)]
pub struct OmpOutcome {
    pub design: HbfDesign,
    pub residual_history: Vec<f64>,
}

/// Greedy hybrid design: N_rf rounds of picking the codebook atom that
/// correlates best with the least-squares residual summed over subcarriers,
/// then a unit-modulus projection of the selected atoms and a final
/// water-filling digital stage.
pub fn omp_hbf(
    h: &ChannelTensor,
    f_opt: &DigitalOptimal,
    codebook: &Codebook,
    rho: f64,
    noise_power: f64,
) -> Result<OmpOutcome> {
    let dims = &h.dims;
    let n_rf = dims.n_rf;
    let p = codebook.n_atoms();
    if p < n_rf {
        return Err(Error::Config(format!(
            "codebook has {p} atoms, need at least {n_rf}"
        )));
    }
    if f_opt.f_opt.len() != h.h.len() {
        return Err(Error::Dim("target precoder count != subcarriers".into()));
    }

    let mut residual: Vec<CMat> = f_opt.f_opt.clone();
    let mut selected: Vec<usize> = Vec::with_capacity(n_rf);
    let mut residual_history = Vec::with_capacity(n_rf);
    for _ in 0..n_rf {
        let mut scores = vec![0.0_f64; p];
        for res in &residual {
            let proj = codebook.atoms.adjoint() * res;
            for atom in 0..p {
                scores[atom] += proj.row(atom).iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
        }
        let mut best: Option<usize> = None;
        for atom in 0..p {
            if selected.contains(&atom) {
                continue;
            }
            best = match best {
                None => Some(atom),
                Some(b) if scores[atom] > scores[b] => Some(atom),
                other => other,
            };
        }
        let pick = best.expect("codebook larger than selection");
        selected.push(pick);

        let mut partial = CMat::zeros(dims.n_tx, selected.len());
        for (i, &atom) in selected.iter().enumerate() {
            partial.set_column(i, &codebook.atoms.column(atom));
        }
        let mut total = 0.0;
        for (k, fo) in f_opt.f_opt.iter().enumerate() {
            let f_bb = ls_digital(&partial, fo);
            residual[k] = fo - &partial * f_bb;
            total += frob_norm_sq(&residual[k]);
        }
        residual_history.push(total);
    }

    // Selected atoms are constant modulus; the projection rescales them onto
    // the unit-modulus feasible set.
    let mut atoms = CMat::zeros(dims.n_tx, n_rf);
    for (i, &atom) in selected.iter().enumerate() {
        atoms.set_column(i, &codebook.atoms.column(atom));
    }
    let analog: AnalogPrecoder = unit_modulus_project(&realify(&atoms), dims.n_tx, n_rf)?;
    let f_bb: Vec<CMat> = h
        .h
        .iter()
        .map(|hk| waterfilling_digital(hk, &analog.matrix, rho, noise_power, dims.n_streams))
        .collect::<Result<_>>()?;
    let se = spectral_efficiency(h, &analog.matrix, &f_bb, rho, noise_power)?;
    Ok(OmpOutcome {
        design: HbfDesign {
            f_rf: analog,
            f_bb,
            se,
        },
        residual_history,
    })
}

/// Schemes with a closed-form operation count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ManNetFc,
    HeuristicManNetSc,
    SubManNetSc,
    Omp,
}

/// Parameters the counts depend on.
#[derive(Debug, Clone)]
pub struct ComplexityInputs {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_rf: usize,
    pub n_streams: usize,
    pub n_subcarriers: usize,
    pub n_paths: usize,
    pub n_layers: usize,
    pub i_net: usize,
    /// Candidate subcarriers searched by the heuristic sub-connected design.
    pub n_candidates: usize,
}

/// Operation-count estimate.
///
/// `total` is the detailed closed-form count; `layer_term` isolates the
/// per-layer network cost; `asymptotic` keeps only the terms that survive
/// when N_t and K dominate every other dimension, which is the form whose
/// growth is essentially linear in N_t.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityEstimate {
    pub total: f64,
    pub layer_term: f64,
    pub asymptotic: f64,
}

/// Evaluates the closed-form operation counts for one scheme.
pub fn complexity_estimate(scheme: Scheme, p: &ComplexityInputs) -> ComplexityEstimate {
    let n_t = p.n_tx as f64;
    let n_r = p.n_rx as f64;
    let n_rf = p.n_rf as f64;
    let n_s = p.n_streams as f64;
    let k = p.n_subcarriers as f64;
    let paths = p.n_paths as f64;
    let l = p.n_layers as f64;
    let i = p.i_net as f64;
    let cands = p.n_candidates as f64;

    let unfolded = |layer_cost: f64| -> (f64, f64) {
        let layer_term = i * l * layer_cost;
        let total = (i - 1.0) * n_t * k * n_rf * n_rf
            + n_t * k * n_rf
            + i * (2.0 * k * n_rf * n_rf * n_s + l * layer_cost);
        (total, layer_term)
    };

    match scheme {
        Scheme::ManNetFc => {
            let (total, layer_term) = unfolded(3.0 * n_t * n_rf + 2.0 * k * n_rf * n_s);
            ComplexityEstimate {
                total,
                layer_term,
                asymptotic: i * (n_t * k + n_t + k),
            }
        }
        Scheme::SubManNetSc => {
            let (total, layer_term) = unfolded(3.0 * n_t + 2.0 * k * n_s);
            ComplexityEstimate {
                total,
                layer_term,
                asymptotic: i * (n_t * k + n_t + k),
            }
        }
        Scheme::HeuristicManNetSc => {
            let (fc_total, layer_term) = unfolded(3.0 * n_t * n_rf + 2.0 * k * n_rf * n_s);
            let search = cands * 2.0 * n_t * n_r * n_rf;
            ComplexityEstimate {
                total: fc_total + search,
                layer_term,
                asymptotic: i * (n_t * k + n_t + k) + 2.0 * cands * n_t,
            }
        }
        Scheme::Omp => ComplexityEstimate {
            total: n_t * k * n_rf * n_rf
                + 2.0 * n_t * paths * n_s
                + 4.0 * n_t * n_rf * n_rf
                + 4.0 * n_t * n_rf * n_s,
            layer_term: 0.0,
            asymptotic: n_t * k + n_t,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channel, optimal_digital_precoder, realization_rng, SystemDims};

    fn dims() -> SystemDims {
        SystemDims::new(8, 2, 2, 2, 4, 4, 300e9, 30e9).unwrap()
    }

    #[test]
    fn codebook_atoms_are_unit_norm_constant_modulus() {
        let dims = dims();
        let ch = generate_channel(&dims, &mut realization_rng(80, 0)).unwrap();
        let cb = Codebook::from_paths(&ch);
        assert_eq!(cb.n_atoms(), dims.n_paths);
        for j in 0..cb.n_atoms() {
            let norm: f64 = cb.atoms.column(j).iter().map(|z| z.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn omp_selects_everything_when_atoms_equal_chains() {
        let d = SystemDims::new(8, 2, 2, 2, 4, 2, 300e9, 30e9).unwrap();
        let ch = generate_channel(&d, &mut realization_rng(81, 0)).unwrap();
        let f_opt = optimal_digital_precoder(&ch, 10.0, 1.0, 2).unwrap();
        let cb = Codebook::from_paths(&ch);
        let out = omp_hbf(&ch, &f_opt, &cb, 10.0, 1.0).unwrap();
        out.design.f_rf.validate().unwrap();
        assert_eq!(out.residual_history.len(), 2);
    }

    #[test]
    fn omp_residuals_non_increasing() {
        let d = SystemDims::new(8, 2, 2, 2, 4, 6, 300e9, 30e9).unwrap();
        for trial in 0..5 {
            let ch = generate_channel(&d, &mut realization_rng(82, trial)).unwrap();
            let f_opt = optimal_digital_precoder(&ch, 10.0, 1.0, 2).unwrap();
            let cb = Codebook::from_paths(&ch);
            let out = omp_hbf(&ch, &f_opt, &cb, 10.0, 1.0).unwrap();
            for w in out.residual_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            let start = frob_norm_sq(&f_opt.f_opt[0]) * d.n_subcarriers as f64;
            assert!(out.residual_history[0] <= start + 1e-9);
        }
    }

    #[test]
    fn omp_rejects_small_codebook() {
        let d = SystemDims::new(8, 2, 2, 2, 4, 1, 300e9, 30e9).unwrap();
        let ch = generate_channel(&d, &mut realization_rng(83, 0)).unwrap();
        let f_opt = optimal_digital_precoder(&ch, 10.0, 1.0, 2).unwrap();
        let cb = Codebook::from_paths(&ch);
        assert!(matches!(
            omp_hbf(&ch, &f_opt, &cb, 10.0, 1.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dbf_dominates_omp_per_instance() {
        let d = dims();
        for trial in 0..10 {
            let ch = generate_channel(&d, &mut realization_rng(84, trial)).unwrap();
            let f_opt = optimal_digital_precoder(&ch, 10.0, 1.0, 2).unwrap();
            let bound = dbf_se(&ch, &f_opt, 10.0, 1.0).unwrap();
            let cb = Codebook::from_paths(&ch);
            let out = omp_hbf(&ch, &f_opt, &cb, 10.0, 1.0).unwrap();
            assert!(
                bound >= out.design.se - 1e-9,
                "bound {bound} below OMP {}",
                out.design.se
            );
        }
    }

    #[test]
    fn dbf_zero_power_gives_zero_rate() {
        let d = dims();
        let ch = generate_channel(&d, &mut realization_rng(85, 0)).unwrap();
        let f_opt = optimal_digital_precoder(&ch, 10.0, 1.0, 2).unwrap();
        // rho -> 0 with the same precoders: the log det argument vanishes.
        let se = spectral_efficiency_effective(&ch, &f_opt.f_opt, 0.0, 1.0).unwrap();
        assert!(se.abs() < 1e-12);
    }

    fn headline_inputs(n_tx: usize, n_layers: usize) -> ComplexityInputs {
        ComplexityInputs {
            n_tx,
            n_rx: 2,
            n_rf: 2,
            n_streams: 2,
            n_subcarriers: 128,
            n_paths: 4,
            n_layers,
            i_net: 10,
            n_candidates: 64,
        }
    }

    #[test]
    fn complexity_hand_values() {
        // Hand arithmetic for N_t = 128, K = 128, N_rf = N_s = 2, L = 7,
        // I_net = 10, |K~| = 64, P = 4.
        let p = headline_inputs(128, 7);
        let fc = complexity_estimate(Scheme::ManNetFc, &p);
        assert_eq!(fc.total, 768512.0);
        assert_eq!(fc.layer_term, 125440.0);
        let sub = complexity_estimate(Scheme::SubManNetSc, &p);
        assert_eq!(sub.total, 705792.0);
        assert_eq!(sub.layer_term, 62720.0);
        let heur = complexity_estimate(Scheme::HeuristicManNetSc, &p);
        assert_eq!(heur.total, 834048.0);
        let omp = complexity_estimate(Scheme::Omp, &p);
        assert_eq!(omp.total, 71680.0);
    }

    #[test]
    fn sub_layer_term_is_one_over_n_rf_of_full() {
        let p = headline_inputs(64, 6);
        let fc = complexity_estimate(Scheme::ManNetFc, &p);
        let sub = complexity_estimate(Scheme::SubManNetSc, &p);
        let ratio = sub.layer_term / fc.layer_term;
        assert!((ratio - 1.0 / p.n_rf as f64).abs() < 1e-12);
        assert!(sub.total < fc.total);
    }

    #[test]
    fn doubling_n_tx_doubles_leading_term() {
        let a = complexity_estimate(Scheme::ManNetFc, &headline_inputs(64, 7));
        let b = complexity_estimate(Scheme::ManNetFc, &headline_inputs(128, 7));
        // The N_t-proportional part doubles exactly.
        let p = headline_inputs(64, 7);
        let constant = p.i_net as f64
            * (2.0 * 128.0 * 4.0 * 2.0 + 7.0 * 2.0 * 128.0 * 2.0 * 2.0);
        assert!(((b.total - constant) / (a.total - constant) - 2.0).abs() < 1e-12);
        // And the asymptotic count is close to linear.
        let ratio = b.asymptotic / a.asymptotic;
        assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn complexity_monotone_in_dimensions() {
        let base = headline_inputs(64, 6);
        for scheme in [
            Scheme::ManNetFc,
            Scheme::HeuristicManNetSc,
            Scheme::SubManNetSc,
            Scheme::Omp,
        ] {
            let v0 = complexity_estimate(scheme, &base);
            for bump in 0..7 {
                let mut p = base.clone();
                match bump {
                    0 => p.n_tx *= 2,
                    1 => p.n_rx += 1,
                    2 => p.n_rf += 1,
                    3 => p.n_streams += 1,
                    4 => p.n_subcarriers *= 2,
                    5 => p.n_layers += 1,
                    _ => p.i_net += 1,
                }
                let v1 = complexity_estimate(scheme, &p);
                assert!(
                    v1.total >= v0.total,
                    "{scheme:?} not monotone under bump {bump}"
                );
            }
        }
    }
}
