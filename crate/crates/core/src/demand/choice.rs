//! Discrete-choice machinery: multinomial logit, nested logit with
//! per-nest scale parameters, and deterministic sampling from the
//! resulting probabilities.

use rand::Rng;

use crate::config::ModeChoiceConfig;
use crate::error::{Error, Result};
use crate::types::Mode;

/// Stable softmax. Entries of `-inf` get probability zero.
pub fn mnl_probs(utilities: &[f64]) -> Vec<f64> {
    let vmax = utilities
        .iter()
        .copied()
        .filter(|u| u.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if vmax == f64::NEG_INFINITY {
        return vec![0.0; utilities.len()];
    }
    let exps: Vec<f64> = utilities
        .iter()
        .map(|&u| if u.is_finite() { (u - vmax).exp() } else { 0.0 })
        .collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Nested-logit probabilities.
///
/// `nest_of[i]` assigns alternative i to a nest; `scales[m]` is nest m's
/// scale in (0, 1]. Within nest m: P(i|m) ∝ exp(V_i/λ_m); across nests:
/// P(m) ∝ exp(IV_m) with IV_m = λ_m·ln Σ exp(V_i/λ_m). With all scales at
/// 1 this collapses to plain multinomial logit.
pub fn nested_logit_probs(utilities: &[f64], nest_of: &[usize], scales: &[f64]) -> Vec<f64> {
    assert_eq!(utilities.len(), nest_of.len());
    let n_nests = scales.len();
    // Per-nest max for numerical stability.
    let mut nest_max = vec![f64::NEG_INFINITY; n_nests];
    for (i, &m) in nest_of.iter().enumerate() {
        if utilities[i].is_finite() {
            nest_max[m] = nest_max[m].max(utilities[i]);
        }
    }
    // Σ exp((V−max)/λ) per nest.
    let mut nest_sum = vec![0.0; n_nests];
    for (i, &m) in nest_of.iter().enumerate() {
        if utilities[i].is_finite() {
            nest_sum[m] += ((utilities[i] - nest_max[m]) / scales[m]).exp();
        }
    }
    // Inclusive values; empty nests drop out.
    let iv: Vec<f64> = (0..n_nests)
        .map(|m| {
            if nest_sum[m] > 0.0 {
                nest_max[m] + scales[m] * nest_sum[m].ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let nest_probs = mnl_probs(&iv);
    nest_of
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            if !utilities[i].is_finite() || nest_sum[m] == 0.0 {
                0.0
            } else {
                let within = ((utilities[i] - nest_max[m]) / scales[m]).exp() / nest_sum[m];
                nest_probs[m] * within
            }
        })
        .collect()
}

/// Draws an index from a probability vector. Probabilities need not be
/// normalized exactly; any residual mass goes to the last nonzero entry.
pub fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let u: f64 = rng.gen_range(0.0..total);
    let mut acc = 0.0;
    let mut last = None;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(i);
        if u < acc {
            return Some(i);
        }
    }
    last
}

/// Level of service for one mode of a prospective trip.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct LevelOfService {
    pub in_vehicle_s: f64,
    pub wait_s: f64,
    pub walk_s: f64,
    pub distance_m: f64,
    pub cost_usd: f64,
    pub available: bool,
}

pub fn mode_nest(mode: Mode) -> usize {
    match mode {
        Mode::Drive => 0,
        Mode::WalkToTransit | Mode::DriveToTransit => 1,
        Mode::Walk | Mode::Bike => 2,
    }
}

pub fn mode_utility(mode: Mode, los: &LevelOfService, p: &ModeChoiceConfig) -> f64 {
    let asc = p.asc.get(&mode).copied().unwrap_or(0.0);
    asc + p.b_ivt_per_min * los.in_vehicle_s / 60.0
        + p.b_wait_per_min * los.wait_s / 60.0
        + p.b_walk_per_min * los.walk_s / 60.0
        + p.b_cost * los.cost_usd
}

/// Nested-logit probabilities over the offered modes. Returns pairs in the
/// input order; empty input means the trip is untravelable.
pub fn mode_probs(offers: &[(Mode, LevelOfService)], p: &ModeChoiceConfig) -> Vec<(Mode, f64)> {
    let utilities: Vec<f64> = offers
        .iter()
        .map(|(m, los)| {
            if los.available {
                mode_utility(*m, los, p)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let nests: Vec<usize> = offers.iter().map(|(m, _)| mode_nest(*m)).collect();
    let scales = [p.nest_scale_auto, p.nest_scale_transit, p.nest_scale_active];
    let probs = nested_logit_probs(&utilities, &nests, &scales);
    offers
        .iter()
        .zip(probs)
        .map(|((m, _), pr)| (*m, pr))
        .collect()
}

pub fn choose_mode<R: Rng>(
    offers: &[(Mode, LevelOfService)],
    p: &ModeChoiceConfig,
    rng: &mut R,
) -> Option<Mode> {
    let pairs = mode_probs(offers, p);
    let probs: Vec<f64> = pairs.iter().map(|(_, pr)| *pr).collect();
    sample_index(&probs, rng).map(|i| pairs[i].0)
}

/// Destination choice: P(z) ∝ exp(β_tt·tt_min(z) + ln A_z). Zones with
/// zero attraction or unreachable (infinite time) get zero probability.
pub fn destination_probs(tt_min: &[f64], attraction: &[f64], beta_tt_per_min: f64) -> Vec<f64> {
    let utilities: Vec<f64> = tt_min
        .iter()
        .zip(attraction)
        .map(|(&tt, &a)| {
            if a > 0.0 && tt.is_finite() {
                beta_tt_per_min * tt + a.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    mnl_probs(&utilities)
}

pub fn choose_destination<R: Rng>(
    zones: &[u32],
    tt_min: &[f64],
    attraction: &[f64],
    beta_tt_per_min: f64,
    rng: &mut R,
) -> Result<u32> {
    let probs = destination_probs(tt_min, attraction, beta_tt_per_min);
    sample_index(&probs, rng)
        .map(|i| zones[i])
        .ok_or(Error::NoDestination)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn chi2_critical(df: f64, alpha: f64) -> f64 {
        ChiSquared::new(df).unwrap().inverse_cdf(1.0 - alpha)
    }

    fn chi2_stat(observed: &[u64], probs: &[f64], n: u64) -> (f64, f64) {
        let mut stat = 0.0;
        let mut df = 0.0;
        for (&o, &p) in observed.iter().zip(probs) {
            if p <= 0.0 {
                assert_eq!(o, 0, "sampled an impossible alternative");
                continue;
            }
            let e = p * n as f64;
            stat += (o as f64 - e).powi(2) / e;
            df += 1.0;
        }
        (stat, df - 1.0)
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(2..8);
            let utils: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let nests: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let scales = [
                rng.gen_range(0.2..1.0),
                rng.gen_range(0.2..1.0),
                rng.gen_range(0.2..1.0),
            ];
            let p = nested_logit_probs(&utils, &nests, &scales);
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum = {sum}");
            let m: f64 = mnl_probs(&utils).iter().sum();
            assert!((m - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_scales_collapse_to_mnl() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(2..9);
            let utils: Vec<f64> = (0..n).map(|_| rng.gen_range(-6.0..6.0)).collect();
            let nests: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let nested = nested_logit_probs(&utils, &nests, &[1.0, 1.0, 1.0]);
            let mnl = mnl_probs(&utils);
            for (a, b) in nested.iter().zip(&mnl) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn single_available_mode_is_certain() {
        let p = ModeChoiceConfig::default();
        let offers = vec![(
            Mode::Walk,
            LevelOfService {
                walk_s: 600.0,
                available: true,
                ..Default::default()
            },
        )];
        let pairs = mode_probs(&offers, &p);
        assert_eq!(pairs[0].1, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(choose_mode(&offers, &p, &mut rng), Some(Mode::Walk));
    }

    #[test]
    fn no_available_mode_is_untravelable() {
        let p = ModeChoiceConfig::default();
        let offers = vec![(
            Mode::Drive,
            LevelOfService {
                available: false,
                ..Default::default()
            },
        )];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(choose_mode(&offers, &p, &mut rng), None);
        assert_eq!(choose_mode(&[], &p, &mut rng), None);
    }

    /// Sampled nested-logit frequencies match the closed-form enumeration
    /// on random configurations (chi-squared, alpha = 0.01).
    #[test]
    fn sampling_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
        let draws: u64 = 40_000;
        for _ in 0..5 {
            let n = 5;
            let utils: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let nests: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let scales = [
                rng.gen_range(0.3..1.0),
                rng.gen_range(0.3..1.0),
                rng.gen_range(0.3..1.0),
            ];
            let probs = nested_logit_probs(&utils, &nests, &scales);
            let mut counts = vec![0u64; n];
            for _ in 0..draws {
                counts[sample_index(&probs, &mut rng).unwrap()] += 1;
            }
            let (stat, df) = chi2_stat(&counts, &probs, draws);
            let crit = chi2_critical(df, 0.01);
            assert!(stat < crit, "chi2 {stat:.2} >= {crit:.2}");
        }
    }

    #[test]
    fn destination_symmetry_and_analytic_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Equal attraction, equal time → 50/50.
        let zones = [1u32, 2u32];
        let mut counts = [0u64; 2];
        for _ in 0..10_000 {
            let z = choose_destination(&zones, &[10.0, 10.0], &[1.0, 1.0], -0.08, &mut rng).unwrap();
            counts[(z - 1) as usize] += 1;
        }
        let share = counts[0] as f64 / 10_000.0;
        assert!((share - 0.5).abs() < 0.02, "share {share}");
        // beta 0, attractions 2:1 → 2/3, 1/3.
        let probs = destination_probs(&[30.0, 5.0], &[2.0, 1.0], 0.0);
        assert!((probs[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((probs[1] - 1.0 / 3.0).abs() < 1e-12);
        let mut counts = [0u64; 2];
        for _ in 0..10_000 {
            let z = choose_destination(&zones, &[30.0, 5.0], &[2.0, 1.0], 0.0, &mut rng).unwrap();
            counts[(z - 1) as usize] += 1;
        }
        let share = counts[0] as f64 / 10_000.0;
        assert!((share - 2.0 / 3.0).abs() < 0.02, "share {share}");
    }

    #[test]
    fn destination_five_zone_chi_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let zones = [0u32, 1, 2, 3, 4];
        let tt: Vec<f64> = (0..5).map(|_| rng.gen_range(3.0..45.0)).collect();
        let attraction: Vec<f64> = (0..5).map(|_| rng.gen_range(0.5..4.0)).collect();
        let probs = destination_probs(&tt, &attraction, -0.08);
        let draws = 50_000u64;
        let mut counts = vec![0u64; 5];
        for _ in 0..draws {
            let z = choose_destination(&zones, &tt, &attraction, -0.08, &mut rng).unwrap();
            counts[z as usize] += 1;
        }
        let (stat, df) = chi2_stat(&counts, &probs, draws);
        let crit = chi2_critical(df, 0.01);
        assert!(stat < crit, "chi2 {stat:.2} >= {crit:.2}");
    }

    #[test]
    fn unreachable_or_zero_attraction_excluded() {
        let probs = destination_probs(&[f64::INFINITY, 10.0, 12.0], &[3.0, 0.0, 2.0], -0.1);
        assert_eq!(probs[0], 0.0);
        assert_eq!(probs[1], 0.0);
        assert!((probs[2] - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = choose_destination(&[7], &[f64::INFINITY], &[1.0], -0.1, &mut rng).unwrap_err();
        assert!(matches!(err, Error::NoDestination));
    }
}
