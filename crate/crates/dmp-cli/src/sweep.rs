//! The `sweep` subcommand: re-run the pipeline across the admission
//! parameter grids and emit a deterministic CSV of sequence metrics.
//!
//! The grids are fixed: beta over {0.05, 0.10, 0.15, 0.20, 0.25} with
//! gamma held at the loaded configuration, gamma over {0.75, 0.80, 0.85,
//! 0.90, 0.95} with beta held, and `both` runs the two one-dimensional
//! grids in sequence (10 cells). A failing cell records its error in the
//! `status` column and the sweep continues. Rows carry no timing, so two
//! sweeps of the same inputs produce identical bytes.

use crate::sequence::{load_sequence, LoadedSequence};
use dmp_core::config::RunConfig;
use dmp_core::metrics::{contour_accuracy_f, davis_boundary_tolerance, region_similarity_j};
use dmp_core::pipeline::{
    field_to_mask, propagate_sequence, provider_from_config, Mode, PipelineOptions,
};
use dmp_core::{Error, Result};
use std::path::Path;

/// Parameter axis selecting which grid(s) to sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Beta,
    Gamma,
    Both,
}

/// Short-term admission thresholds swept on the beta axis.
pub const BETA_GRID: [f64; 5] = [0.05, 0.10, 0.15, 0.20, 0.25];
/// Long-term agreement thresholds swept on the gamma axis.
pub const GAMMA_GRID: [f64; 5] = [0.75, 0.80, 0.85, 0.90, 0.95];

/// One sweep cell's outcome.
pub struct SweepCell {
    pub param: &'static str,
    pub value: f64,
    /// `(mean J, mean F, J&F mean)` when the cell ran to completion.
    pub metrics: Option<(f64, f64, f64)>,
    pub status: String,
}

/// Mean J and F of one full run against the sequence's truth masks.
fn run_cell(sequence: &LoadedSequence, config: &RunConfig) -> Result<(f64, f64, f64)> {
    let provider = provider_from_config(config, sequence.features.clone())?;
    let state = propagate_sequence(
        &sequence.source,
        &provider,
        config,
        PipelineOptions::default(),
    )?;
    let patch = state.patch();
    let (height, width) = (state.image_height(), state.image_width());
    let mut js = Vec::new();
    let mut fs = Vec::new();
    for (i, output) in state.outputs().iter().enumerate() {
        let name = &sequence.frame_names[i + 1];
        let Some(truth) = sequence.truth_masks.get(name) else {
            continue;
        };
        let predicted = field_to_mask(output, patch, height, width)?;
        let dim = predicted.max_class().max(truth.max_class()) + 1;
        let pred_field = predicted.to_onehot(dim)?;
        let truth_field = truth.to_onehot(dim)?;
        js.push(region_similarity_j(&pred_field, &truth_field)?);
        let tolerance = davis_boundary_tolerance(truth.height, truth.width);
        fs.push(contour_accuracy_f(&pred_field, &truth_field, tolerance)?);
    }
    if js.is_empty() {
        return Err(Error::validation(
            "sweep sequence has no ground-truth masks beyond the seed".to_string(),
        ));
    }
    let mean_j = js.iter().sum::<f64>() / js.len() as f64;
    let mean_f = fs.iter().sum::<f64>() / fs.len() as f64;
    Ok((mean_j, mean_f, (mean_j + mean_f) / 2.0))
}

/// Runs the selected grid(s), never aborting on a per-cell failure.
pub fn sweep_cells(
    sequence_dir: &Path,
    base: &RunConfig,
    param: SweepParam,
) -> Result<Vec<SweepCell>> {
    let sequence = load_sequence(sequence_dir, base)?;
    if sequence.source.mode != Mode::Mask {
        return Err(Error::validation(
            "sweep scores J&F and needs a mask-mode sequence".to_string(),
        ));
    }
    let mut axes: Vec<(&'static str, f64)> = Vec::new();
    if matches!(param, SweepParam::Beta | SweepParam::Both) {
        axes.extend(BETA_GRID.iter().map(|&v| ("beta", v)));
    }
    if matches!(param, SweepParam::Gamma | SweepParam::Both) {
        axes.extend(GAMMA_GRID.iter().map(|&v| ("gamma", v)));
    }

    let mut cells = Vec::with_capacity(axes.len());
    for (name, value) in axes {
        let mut config = base.clone();
        match name {
            "beta" => config.memory.beta = value,
            _ => config.memory.gamma = value,
        }
        let cell = match config
            .validate()
            .and_then(|()| run_cell(&sequence, &config))
        {
            Ok(metrics) => SweepCell {
                param: name,
                value,
                metrics: Some(metrics),
                status: "ok".to_string(),
            },
            Err(e) => SweepCell {
                param: name,
                value,
                metrics: None,
                // Commas would break the CSV; newlines can't appear in the
                // error display.
                status: e.to_string().replace(',', ";"),
            },
        };
        cells.push(cell);
    }
    Ok(cells)
}

/// Renders cells as CSV with a fixed header and row order.
pub fn render_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("param,value,mean_j,mean_f,jf_mean,status\n");
    for cell in cells {
        match cell.metrics {
            Some((j, f, jf)) => out.push_str(&format!(
                "{},{:.2},{:.6},{:.6},{:.6},{}\n",
                cell.param, cell.value, j, f, jf, cell.status
            )),
            None => out.push_str(&format!(
                "{},{:.2},,,,{}\n",
                cell.param, cell.value, cell.status
            )),
        }
    }
    out
}

/// Full sweep: run the grid and write the CSV.
pub fn sweep_command(
    sequence_dir: &Path,
    base: &RunConfig,
    param: SweepParam,
    out_csv: &Path,
) -> Result<Vec<SweepCell>> {
    let cells = sweep_cells(sequence_dir, base, param)?;
    std::fs::write(out_csv, render_csv(&cells))
        .map_err(|e| Error::io(format!("writing {}", out_csv.display()), e))?;
    Ok(cells)
}
