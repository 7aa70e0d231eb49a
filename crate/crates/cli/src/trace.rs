//! CSV traces: one file per measured quantity with columns
//! `sweep_value,state,observable,stderr`.

use std::path::Path;

use readout_core::protocols::CharacterizationReport;
use readout_core::signal::IqCloud;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub sweep_value: f64,
    /// Prepared qubit state, or `-` when the point mixes both.
    pub state: String,
    pub observable: f64,
    pub stderr: Option<f64>,
}

impl Row {
    fn new(sweep_value: f64, state: impl ToString, observable: f64, stderr: Option<f64>) -> Self {
        Row { sweep_value, state: state.to_string(), observable, stderr }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub name: String,
    pub rows: Vec<Row>,
}

impl Trace {
    pub fn write(&self, dir: &Path, prefix: &str) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(dir.join(format!("{prefix}{}.csv", self.name)))?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record(["sweep_value", "state", "observable", "stderr"])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn trace(name: &str, rows: Vec<Row>) -> Trace {
    Trace { name: name.into(), rows }
}

pub fn characterization_traces(r: &CharacterizationReport) -> Vec<Trace> {
    let mut out = Vec::new();
    if let Some(ck) = &r.chi_kappa {
        let phase = ck.points.iter().map(|p| Row::new(p.omega_d, p.state, p.phase, Some(p.phase_stderr))).collect();
        let contrast =
            ck.points.iter().map(|p| Row::new(p.omega_d, p.state, p.contrast, Some(p.contrast_stderr))).collect();
        out.push(trace("chi_kappa_phase", phase));
        out.push(trace("chi_kappa_contrast", contrast));
    }
    if let Some(rd) = &r.ringdown {
        let probe = "0";
        let phase = rd.points.iter().map(|p| Row::new(p.delay, probe, p.phase, Some(p.phase_stderr))).collect();
        out.push(trace("ringdown_phase", phase));
        if rd.points.iter().all(|p| p.photons.is_some()) {
            let photons = rd
                .points
                .iter()
                .filter_map(|p| {
                    let n = p.photons?;
                    Some(Row::new(p.delay, probe, n, Some((n * p.phase_stderr / p.phase).abs())))
                })
                .collect();
            out.push(trace("ringdown_photons", photons));
        }
    }
    if let Some(e) = &r.efficiency {
        let re = e.weights.iter().enumerate().map(|(k, w)| Row::new(k as f64, "-", w.re, None)).collect();
        let im = e.weights.iter().enumerate().map(|(k, w)| Row::new(k as f64, "-", w.im, None)).collect();
        out.push(trace("efficiency_weight_re", re));
        out.push(trace("efficiency_weight_im", im));
    }
    out
}

pub fn iq_traces(clouds: &[IqCloud], limit: usize) -> Vec<Trace> {
    let rows = |f: fn(&readout_core::Complex64) -> f64| {
        clouds
            .iter()
            .flat_map(|c| c.points.iter().take(limit).enumerate().map(move |(i, z)| Row::new(i as f64, c.state, f(z), None)))
            .collect()
    };
    vec![trace("iq_i", rows(|z| z.re)), trace("iq_q", rows(|z| z.im))]
}

/// One row per channel: predicted, measured and their ratio.
pub fn validation_traces(reports: &[(usize, &CharacterizationReport)]) -> Vec<Trace> {
    let mut ratio = Vec::new();
    let mut measured = Vec::new();
    let mut predicted = Vec::new();
    for (i, r) in reports {
        if let Some(v) = &r.validation {
            let x = *i as f64;
            ratio.push(Row::new(x, "-", v.ratio.value, Some(v.ratio.stderr)));
            measured.push(Row::new(x, "-", v.snr_measured.value, Some(v.snr_measured.stderr)));
            predicted.push(Row::new(x, "-", v.snr_predicted, None));
        }
    }
    vec![
        trace("validation_ratio", ratio),
        trace("validation_snr_measured", measured),
        trace("validation_snr_predicted", predicted),
    ]
}
