//! Structure recovery: orientation scan, per-row fringe fits, frequency
//! aggregation, scaling of the uncertainty, and emitter geometry.

mod aggregate;
mod contrast;
mod fit;
mod scaling;
mod scan;
mod structure;

pub use aggregate::{aggregate_frequency, AggregateFrequency, MIN_FITS};
pub use contrast::{contrast_metric, difference_signal, DifferenceSignal, MIN_EXPECTED};
pub use fit::{fit_row, fit_rows, select_rows, RowFit, RowSelection, AUTO_ROW_FRACTION, MAX_VISIBILITY, MIN_POPULATED_BINS};
pub use scaling::{fit_power_law, scaling_exponent, ScalingPoint, ScalingResult, MIN_DECADES, MIN_REPEATS, MIN_SIZES};
pub use scan::{scan_orientation, scan_projected, AngleScan, ScanMaximum, ScanOptions};
pub use structure::{
    infer_emitter_count, merge_components, pairwise_distances, solve_structure, Component, ComponentEstimate,
    StructureEstimate, CLOSURE_TOLERANCE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{bin_projected, BinnedG2, ProjectedPairs};
use crate::model::Scene;
use crate::sim::CoincidencePair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub scan: ScanOptions,
    pub rows: RowSelection,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { scan: ScanOptions::default(), rows: RowSelection::Auto }
    }
}

/// Fits belonging to one scan maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentAnalysis {
    pub maximum: ScanMaximum,
    /// Inclusive start-row range that was fitted.
    pub rows: (usize, usize),
    pub fits: Vec<RowFit>,
    pub aggregate: AggregateFrequency,
    pub binned: BinnedG2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub scan: AngleScan,
    pub components: Vec<ComponentAnalysis>,
    /// Scan maxima whose row fits could not be aggregated.
    pub rejected: Vec<(ScanMaximum, String)>,
    pub structure: std::result::Result<StructureEstimate, String>,
}

impl AnalysisReport {
    pub fn measured_components(&self) -> Vec<Component> {
        self.components
            .iter()
            .map(|c| Component {
                orientation_deg: c.maximum.phi,
                orientation_err: c.maximum.uncertainty,
                frequency: c.aggregate.frequency,
                frequency_err: c.aggregate.stat_err,
            })
            .collect()
    }
}

/// Bins at `phi` and fits the selected rows.
pub fn analyze_component(
    pairs: &ProjectedPairs,
    scene: &Scene,
    maximum: ScanMaximum,
    opts: &AnalysisOptions,
) -> Result<ComponentAnalysis> {
    let binned = bin_projected(pairs, scene, maximum.phi, opts.scan.n_bins)?;
    let rows = select_rows(&binned, &opts.rows)?;
    let fits = fit_rows(&binned, rows.clone())?;
    let aggregate = aggregate_frequency(&fits)?;
    Ok(ComponentAnalysis { maximum, rows: (rows.start, rows.end - 1), fits, aggregate, binned })
}

pub fn analyze(pairs: &[CoincidencePair], scene: &Scene, opts: &AnalysisOptions) -> Result<AnalysisReport> {
    analyze_projected(&ProjectedPairs::new(pairs, scene)?, scene, opts)
}

/// Full pipeline: scan → per-maximum fits → emitter count → geometry.
///
/// Fails with `NoSignal` when the scan has no maximum or none of the maxima
/// yields enough converged row fits. Geometry failures are reported in
/// [`AnalysisReport::structure`].
pub fn analyze_projected(pairs: &ProjectedPairs, scene: &Scene, opts: &AnalysisOptions) -> Result<AnalysisReport> {
    let scan = scan_projected(pairs, &opts.scan)?;
    let mut components = Vec::new();
    let mut rejected = Vec::new();
    for &m in &scan.maxima {
        match analyze_component(pairs, scene, m, opts) {
            Ok(c) => components.push(c),
            Err(e @ Error::TooFewFits { .. }) => rejected.push((m, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    if components.is_empty() {
        return Err(Error::NoSignal);
    }
    let mut report = AnalysisReport { scan, components, rejected, structure: Err(String::new()) };
    let measured = report.measured_components();
    report.structure = infer_emitter_count(&measured)
        .and_then(|_| solve_structure(&merge_components(&measured), scene))
        .map_err(|e| e.to_string());
    Ok(report)
}

/// Frequency of the strongest scan maximum, without bootstrap.
pub(crate) fn analyze_strongest(pairs: &ProjectedPairs, scene: &Scene, opts: &AnalysisOptions) -> Result<AggregateFrequency> {
    let scan_opts = ScanOptions { bootstrap: 0, ..opts.scan.clone() };
    let scan = scan_projected(pairs, &scan_opts)?;
    let best = scan
        .maxima
        .iter()
        .max_by(|a, b| a.contrast.total_cmp(&b.contrast))
        .copied()
        .ok_or(Error::NoSignal)?;
    Ok(analyze_component(pairs, scene, best, opts)?.aggregate)
}
