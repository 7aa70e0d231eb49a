//! Multi-channel chip generator and aggregate statistics.

use rand::seq::SliceRandom;
use rand::Rng;
use readout_core::protocols::{CharacterizationReport, DesignParams, OperatingPoint};
use readout_core::{DeviceParams, NoiseKey, QubitState};
use serde::{Deserialize, Serialize};

use crate::config::{Channel, ChipConfig};

const GENERATOR_TAG: u64 = 0xC41B;

/// κ values log-uniform over `[κ_min, κ_min·spread]`, one per stratum, with
/// the end strata pinned to the range limits and the order shuffled.
pub fn chip_kappas(c: &ChipConfig, seed: u64) -> Vec<f64> {
    let n = c.channels;
    let mut rng = NoiseKey::new(seed).child(GENERATOR_TAG).rng();
    let mut u: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => 0.0,
            _ if i == n - 1 => 1.0,
            _ => (i as f64 + rng.random::<f64>()) / n as f64,
        })
        .collect();
    u.shuffle(&mut rng);
    u.into_iter().map(|x| c.kappa_min * c.spread.powf(x)).collect()
}

pub fn generate(c: &ChipConfig, seed: u64) -> Vec<Channel> {
    chip_kappas(c, seed)
        .into_iter()
        .enumerate()
        .map(|(i, kappa)| {
            let chi = if c.zero_chi_channels.contains(&i) { 0.0 } else { c.chi_over_kappa * kappa };
            let omega_r = c.omega_r + i as f64 * c.omega_r_step;
            let nominal = DesignParams { omega_r, chi, kappa, drive_gain: c.drive_gain };
            // n̄ of the |0⟩ branch at ω_d = ω_r
            let amplitude = (c.nbar * (chi * chi + 0.25 * kappa * kappa)).sqrt() / c.drive_gain;
            Channel {
                index: i,
                name: format!("ch{i:02}"),
                device: DeviceParams { omega_r, chi, kappa, eta: c.eta },
                drive_gain: c.drive_gain,
                nominal,
                operating: OperatingPoint { omega_d: omega_r, amplitude },
                readout_duration: c.readout_kappas / kappa,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Stats { count: n, min: v[0], max: v[n - 1], median })
    }

    pub fn ratio(&self) -> f64 {
        self.max / self.min
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChipSummary {
    pub channels: usize,
    pub configured_spread: Option<f64>,
    /// Channels with a complete characterization and no flags.
    pub succeeded: Vec<usize>,
    pub flagged: Vec<usize>,
    pub chi: Option<Stats>,
    pub kappa: Option<Stats>,
    pub kappa_ringdown: Option<Stats>,
    pub nbar: Option<Stats>,
    pub eta: Option<Stats>,
    pub snr_ratio: Option<Stats>,
    /// max(κ̂)/min(κ̂) over channels with a sweep estimate.
    pub kappa_spread: Option<f64>,
    pub all_within_tolerance: bool,
}

pub fn summarize(reports: &[(usize, &CharacterizationReport)], configured_spread: Option<f64>) -> ChipSummary {
    let collect = |f: &dyn Fn(&CharacterizationReport) -> Option<f64>| -> Vec<f64> {
        reports.iter().filter_map(|(_, r)| f(r)).collect()
    };
    let kappa = Stats::of(&collect(&|r| r.kappa_hat().map(|e| e.value)));
    let snr_ratio = Stats::of(&collect(&|r| r.validation.as_ref().map(|v| v.ratio.value)));
    let (mut flagged, mut succeeded) = (Vec::new(), Vec::new());
    for (i, r) in reports {
        if r.is_flagged() {
            flagged.push(*i);
        } else {
            succeeded.push(*i);
        }
    }
    ChipSummary {
        channels: reports.len(),
        configured_spread,
        succeeded,
        flagged,
        chi: Stats::of(&collect(&|r| r.chi_hat().map(|e| e.value))),
        kappa,
        kappa_ringdown: Stats::of(&collect(&|r| r.ringdown.as_ref().map(|d| d.kappa.value))),
        nbar: Stats::of(&collect(&|r| r.nbar_hat(QubitState::Zero).map(|e| e.value))),
        eta: Stats::of(&collect(&|r| r.eta_hat().map(|e| e.value))),
        snr_ratio,
        kappa_spread: kappa.map(|s| s.ratio()),
        all_within_tolerance: reports.iter().all(|(_, r)| r.validation.as_ref().is_some_and(|v| v.pass)),
    }
}
