use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use ionhbt_core::analysis::{
    difference_signal, scaling_exponent, AnalysisOptions, ComponentAnalysis, RowSelection, ScalingResult, ScanOptions,
    StructureEstimate,
};
use ionhbt_core::calibration::{angular_gauge, predicted_frequency, systematic_budget, two_ion_distance, Measurement, SystematicBudget};
use ionhbt_core::ingest::ProjectedPairs;
use ionhbt_core::io::{load_pairs, load_stream, save_pairs, save_stream, write_binned_csv, FileHeader};
use ionhbt_core::{generate_pairs, generate_stream, match_coincidences, AnalysisReport, CoincidencePair, Error, Scene, SceneConfig};
use serde::Serialize;

use crate::manifest::{sha256_hex, FileRecord, RunManifest, MANIFEST_NAME};
use crate::plot::{Plot, Series, Style, BLUE, GREEN, GREY, ORANGE};
use crate::{AnalysisFlags, AnalyzeArgs, CalibrateArgs, Command, IngestArgs, ReplayArgs, ScalingArgs, SimulateArgs, StructureFailure};

pub const MIN_PAIRS: usize = 100;

/// Data files written by one run, hashed for the manifest.
struct Outputs {
    dir: PathBuf,
    records: Vec<FileRecord>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), records: Vec::new() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Records a file already written under `name`.
    fn add(&mut self, name: &str) -> Result<()> {
        let sha256 = crate::manifest::sha256_file(&self.path(name))?;
        self.records.push(FileRecord { path: name.into(), sha256 });
        Ok(())
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        fs::write(self.path(name), contents.as_ref()).with_context(|| format!("writing {name}"))?;
        self.add(name)
    }
}

struct Run {
    command: Command,
    config: SceneConfig,
    scene: Scene,
    seed: u64,
    inputs: Vec<FileRecord>,
    started: Instant,
}

impl Run {
    fn finish(self, out: Outputs) -> Result<()> {
        let config = self.config.to_toml_string();
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            config_hash: sha256_hex(config.as_bytes()),
            scene_hash: self.scene.config_hash(),
            config,
            seed: self.seed,
            inputs: self.inputs,
            outputs: out.records,
            wall_seconds: self.started.elapsed().as_secs_f64(),
        };
        manifest.save(&out.dir)
    }
}

fn absolute(path: &Path) -> Result<PathBuf> {
    path.canonicalize().with_context(|| format!("input {}", path.display()))
}

pub fn execute(command: Command, config: SceneConfig) -> Result<()> {
    let started = Instant::now();
    let scene = config.build()?;
    let run = |command, seed, inputs| Run { command, config: config.clone(), scene: scene.clone(), seed, inputs, started };
    match command {
        Command::Simulate(args) => simulate(args, &config, run),
        Command::Ingest(args) => ingest(args, &scene, run),
        Command::Analyze(args) => analyze(args, &config, &scene, run),
        Command::Scaling(args) => scaling(args, &config, &scene, run),
        Command::Calibrate(args) => calibrate(args, &config, &scene, run),
        Command::Replay(_) => unreachable!("replay is dispatched before config resolution"),
    }
}

fn simulate(args: SimulateArgs, config: &SceneConfig, run: impl Fn(Command, u64, Vec<FileRecord>) -> Run) -> Result<()> {
    let mut cfg = config.clone();
    if let Some(seed) = args.seed {
        cfg.sim.seed = seed;
    }
    if let Some(n) = args.pairs {
        cfg.sim.n_pairs = n;
    }
    if let Some(d) = args.duration {
        cfg.sim.duration = d;
    }
    cfg.sim.validate()?;
    for w in cfg.sim.warnings() {
        eprintln!("warning: {w}");
    }
    let scene = cfg.build()?;
    let header = FileHeader::new(scene.config_hash(), cfg.sim.seed);
    let mut out = Outputs::create(&args.out)?;

    if args.stream {
        let stream = generate_stream(&scene, &cfg.sim)?;
        let name = if args.csv { "stream.csv" } else { "stream.bin" };
        save_stream(&out.path(name), &header, &stream.events)?;
        out.add(name)?;
        out.write("truth.json", serde_json::to_string_pretty(&stream.truth)? + "\n")?;
        println!("{} events, {} embedded pairs -> {}", stream.events.len(), stream.truth.embedded_pairs, out.path(name).display());
    } else {
        let pairs = generate_pairs(&scene, &cfg.sim)?;
        save_pairs(&out.path("pairs.csv"), &header, &pairs)?;
        out.add("pairs.csv")?;
        println!("{} pairs -> {}", pairs.len(), out.path("pairs.csv").display());
    }
    let mut r = run(Command::Simulate(args), cfg.sim.seed, Vec::new());
    r.config = cfg;
    r.scene = scene;
    r.finish(out)
}

fn ingest(mut args: IngestArgs, scene: &Scene, run: impl Fn(Command, u64, Vec<FileRecord>) -> Run) -> Result<()> {
    if !(args.window > 0.0 && args.window.is_finite()) {
        return Err(Error::InvalidConfig(format!("coincidence window must be > 0 ns, got {}", args.window)).into());
    }
    args.input = absolute(&args.input)?;
    let inputs = vec![FileRecord::of(&args.input)?];
    let (header, events) = load_stream(&args.input).with_context(|| format!("loading {}", args.input.display()))?;
    check_header(header.as_ref(), scene, &args.input);
    let window_ps = (args.window * 1e3).round() as u64;
    ensure!(window_ps > 0, Error::InvalidConfig(format!("coincidence window {} ns rounds to 0 ps", args.window)));
    let pairs = match_coincidences(&events, window_ps)?;
    let seed = header.as_ref().map_or(0, |h| h.seed);
    let header = header.unwrap_or_else(|| FileHeader::new(scene.config_hash(), seed));

    let mut out = Outputs::create(&args.out)?;
    save_pairs(&out.path("pairs.csv"), &header, &pairs)?;
    out.add("pairs.csv")?;
    println!("{} events -> {} pairs -> {}", events.len(), pairs.len(), out.path("pairs.csv").display());
    run(Command::Ingest(args), seed, inputs).finish(out)
}

fn check_header(header: Option<&FileHeader>, scene: &Scene, path: &Path) {
    if let Some(h) = header {
        let hash = scene.config_hash();
        if h.scene_hash != hash {
            eprintln!("warning: {} was produced for scene {}, configuration is scene {hash}", path.display(), h.scene_hash);
        }
    }
}

fn load_input_pairs(path: &Path, scene: &Scene) -> Result<(Option<FileHeader>, Vec<CoincidencePair>)> {
    let (header, pairs) = load_pairs(path).with_context(|| format!("loading {}", path.display()))?;
    check_header(header.as_ref(), scene, path);
    if pairs.len() < MIN_PAIRS {
        return Err(Error::InsufficientData(format!("{} pairs, need at least {MIN_PAIRS}", pairs.len())).into());
    }
    Ok((header, pairs))
}

fn analysis_options(flags: &AnalysisFlags, seed: u64, bootstrap: usize) -> Result<AnalysisOptions> {
    let rows: RowSelection = flags.rows.parse()?;
    Ok(AnalysisOptions {
        scan: ScanOptions { phi_step: flags.phi_step, n_bins: flags.bins, bootstrap, seed, ..ScanOptions::default() },
        rows,
    })
}

fn resolve_seed(flags: &AnalysisFlags, header: Option<&FileHeader>, config: &SceneConfig) -> u64 {
    flags.seed.or(header.map(|h| h.seed)).unwrap_or(config.sim.seed)
}

#[derive(Serialize)]
struct ComponentSummary {
    phi_deg: f64,
    phi_err_deg: f64,
    contrast: f64,
    rows: (usize, usize),
    frequency: f64,
    stat_err: f64,
    propagated_err: f64,
    scatter_err: f64,
    syst_err: f64,
    n_fits: usize,
    n_clipped: usize,
}

#[derive(Serialize)]
struct Rejected {
    phi_deg: f64,
    reason: String,
}

#[derive(Serialize)]
struct AnalysisSummary<'a> {
    n_pairs: usize,
    scene_hash: String,
    seed: u64,
    options: &'a AnalysisOptions,
    noise_floor: f64,
    components: Vec<ComponentSummary>,
    rejected: Vec<Rejected>,
    #[serde(skip_serializing_if = "Option::is_none")]
    structure: Option<&'a StructureEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    structure_error: Option<&'a str>,
}

fn summarize<'a>(report: &'a AnalysisReport, scene: &Scene, n_pairs: usize, seed: u64, options: &'a AnalysisOptions) -> AnalysisSummary<'a> {
    AnalysisSummary {
        n_pairs,
        scene_hash: scene.config_hash(),
        seed,
        options,
        noise_floor: report.scan.noise_floor,
        components: report
            .components
            .iter()
            .map(|c| ComponentSummary {
                phi_deg: c.maximum.phi,
                phi_err_deg: c.maximum.uncertainty,
                contrast: c.maximum.contrast,
                rows: c.rows,
                frequency: c.aggregate.frequency,
                stat_err: c.aggregate.stat_err,
                propagated_err: c.aggregate.propagated_err,
                scatter_err: c.aggregate.scatter_err,
                syst_err: systematic_budget(c.aggregate.frequency, scene.optics()).total,
                n_fits: c.aggregate.n_fits,
                n_clipped: c.aggregate.n_clipped,
            })
            .collect(),
        rejected: report.rejected.iter().map(|(m, r)| Rejected { phi_deg: m.phi, reason: r.clone() }).collect(),
        structure: report.structure.as_ref().ok(),
        structure_error: report.structure.as_ref().err().map(String::as_str),
    }
}

fn report_text(s: &AnalysisSummary) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "pairs            {}", s.n_pairs);
    let _ = writeln!(t, "scene            {}", s.scene_hash);
    let _ = writeln!(t, "seed             {}", s.seed);
    let _ = writeln!(t, "noise floor      {:.4}", s.noise_floor);
    for (i, c) in s.components.iter().enumerate() {
        let _ = writeln!(t, "\ncomponent {i}");
        let _ = writeln!(t, "  orientation    {:.3} ± {:.3} deg", c.phi_deg, c.phi_err_deg);
        let _ = writeln!(t, "  contrast       {:.4}", c.contrast);
        let _ = writeln!(t, "  rows           {}..{}", c.rows.0, c.rows.1);
        let _ = writeln!(
            t,
            "  frequency      {:.1} ± {:.1} (stat) ± {:.1} (syst) rad^-1",
            c.frequency, c.stat_err, c.syst_err
        );
        let _ = writeln!(t, "  row fits       {} used, {} clipped", c.n_fits, c.n_clipped);
    }
    for r in &s.rejected {
        let _ = writeln!(t, "\nrejected maximum at {:.3} deg: {}", r.phi_deg, r.reason);
    }
    match (s.structure, s.structure_error) {
        (Some(st), _) => {
            let _ = writeln!(t, "\nemitters         {}", st.n_emitters);
            for c in &st.components {
                let _ = writeln!(
                    t,
                    "  {:7.2} deg  f = {:.1} rad^-1 = {:.5} um^-1  d = {:.4} ± {:.4} (stat) ± {:.4} (syst) um",
                    c.orientation_deg,
                    c.frequency,
                    c.frequency_per_um,
                    c.distance * 1e6,
                    c.distance_stat_err * 1e6,
                    c.distance_syst_err * 1e6
                );
            }
            let _ = writeln!(t, "coordinates (um)");
            for p in &st.coordinates {
                let _ = writeln!(t, "  ({:.4}, {:.4})", p[0] * 1e6, p[1] * 1e6);
            }
            let _ = writeln!(t, "closure residual {:.4}", st.closure_residual);
            if st.reflection_ambiguous {
                let _ = writeln!(t, "reflection       ambiguous (right-handed solution shown)");
            }
        }
        (None, Some(e)) => {
            let _ = writeln!(t, "\nstructure        failed: {e}");
        }
        (None, None) => {}
    }
    t
}

/// Weighted least squares of `y = c + a cos(f x) + b sin(f x)`.
fn cosine_overlay(x: &[f64], y: &[f64], w: &[f64], f: f64) -> Option<[f64; 3]> {
    let mut m = [[0.0; 4]; 3];
    for ((&x, &y), &w) in x.iter().zip(y).zip(w) {
        let basis = [1.0, (f * x).cos(), (f * x).sin()];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += w * basis[i] * basis[j];
            }
            m[i][3] += w * basis[i] * y;
        }
    }
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        for row in 0..3 {
            if row != col {
                let k = m[row][col] / m[col][col];
                for j in col..4 {
                    m[row][j] -= k * m[col][j];
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

fn component_files(out: &mut Outputs, i: usize, c: &ComponentAnalysis, header: &FileHeader) -> Result<()> {
    let mut rows = String::from("row,freq,freq_err,phase,visibility,converged\n");
    for f in &c.fits {
        let _ = writeln!(rows, "{},{},{},{},{},{}", f.start_bin, f.frequency, f.frequency_err, f.phase, f.visibility, f.converged);
    }
    out.write(&format!("rows_{i}.csv"), rows)?;

    let mut binned = Vec::new();
    write_binned_csv(&mut binned, header, &c.binned)?;
    out.write(&format!("binned_{i}.csv"), binned)?;

    let d = difference_signal(&c.binned)?;
    let width = c.binned.start_edges[1] - c.binned.start_edges[0];
    let x: Vec<f64> = d.k.iter().map(|&k| k as f64 * width).collect();
    let f = c.aggregate.frequency;
    let coef = cosine_overlay(&x, &d.normalized, &d.expected, f);
    let model = |x: f64| coef.map_or(f64::NAN, |[c0, a, b]| c0 + a * (f * x).cos() + b * (f * x).sin());

    let mut csv = String::from("k,delta_rad,signal,expected,model\n");
    for ((k, x), (s, e)) in d.k.iter().zip(&x).zip(d.normalized.iter().zip(&d.expected)) {
        let _ = writeln!(csv, "{k},{x},{s},{e},{}", model(*x));
    }
    out.write(&format!("fringe_{i}.csv"), csv)?;

    let (lo, hi) = (x.first().copied().unwrap_or(0.0), x.last().copied().unwrap_or(0.0));
    let curve: Vec<(f64, f64)> = (0..=600).map(|j| lo + (hi - lo) * j as f64 / 600.0).map(|x| (x, model(x))).collect();
    let svg = Plot::new(&format!("Difference signal at {:.2} deg", c.maximum.phi), "start - stop angle (rad)", "observed / expected")
        .with(Series::new("data", x.iter().copied().zip(d.normalized.iter().copied()).collect(), BLUE, Style::Markers))
        .with(Series::new(format!("cosine, f = {f:.1} rad^-1"), curve, ORANGE, Style::Line))
        .render();
    out.write(&format!("fringe_{i}.svg"), svg)
}

fn analyze(mut args: AnalyzeArgs, config: &SceneConfig, scene: &Scene, run: impl Fn(Command, u64, Vec<FileRecord>) -> Run) -> Result<()> {
    args.input = absolute(&args.input)?;
    let inputs = vec![FileRecord::of(&args.input)?];
    let (header, pairs) = load_input_pairs(&args.input, scene)?;
    let seed = resolve_seed(&args.analysis, header.as_ref(), config);
    let options = analysis_options(&args.analysis, seed, args.bootstrap)?;
    let report = ionhbt_core::analyze(&pairs, scene, &options)?;
    let header = FileHeader::new(scene.config_hash(), seed);

    let mut out = Outputs::create(&args.out)?;
    let mut scan = String::from("phi_deg,contrast\n");
    for (p, c) in report.scan.phis.iter().zip(&report.scan.contrast) {
        let _ = writeln!(scan, "{p},{c}");
    }
    out.write("scan.csv", scan)?;
    let (lo, hi) = (report.scan.phis.first().copied().unwrap_or(0.0), report.scan.phis.last().copied().unwrap_or(180.0));
    let floor = report.scan.noise_floor;
    let svg = Plot::new("Orientation scan", "projection angle (deg)", "fringe contrast")
        .with(Series::new("contrast", report.scan.phis.iter().copied().zip(report.scan.contrast.iter().copied()).collect(), BLUE, Style::Line))
        .with(Series::new("noise floor", vec![(lo, floor), (hi, floor)], GREY, Style::Dashed))
        .with(Series::new("maxima", report.scan.maxima.iter().map(|m| (m.phi, m.contrast)).collect(), ORANGE, Style::Markers))
        .render();
    out.write("scan.svg", svg)?;

    for (i, c) in report.components.iter().enumerate() {
        component_files(&mut out, i, c, &header)?;
    }
    let summary = summarize(&report, scene, pairs.len(), seed, &options);
    out.write("report.json", serde_json::to_string_pretty(&summary)? + "\n")?;
    let text = report_text(&summary);
    out.write("report.txt", &text)?;
    print!("{text}");

    run(Command::Analyze(args), seed, inputs).finish(out)?;
    if let Err(e) = &report.structure {
        return Err(StructureFailure(e.clone()).into());
    }
    Ok(())
}

fn default_sizes(n: usize) -> Vec<usize> {
    let lo = 2_000f64.min(n as f64);
    let hi = n as f64;
    (0..6).map(|i| (lo * (hi / lo).powf(i as f64 / 5.0)).round() as usize).collect()
}

#[derive(Serialize)]
struct ScalingSummary<'a> {
    n_pairs: usize,
    seed: u64,
    repeats: usize,
    exponent: f64,
    exponent_err: f64,
    intercept: f64,
    medians: Vec<(usize, f64)>,
    failures: &'a [(usize, usize)],
}

fn scaling_plot(result: &ScalingResult) -> String {
    let medians = result.medians();
    let (lo, hi) = (medians.first().map_or(1.0, |m| m.0 as f64), medians.last().map_or(1.0, |m| m.0 as f64));
    let line: Vec<(f64, f64)> = (0..=50)
        .map(|i| lo * (hi / lo).powf(i as f64 / 50.0))
        .map(|n| (n, (result.intercept + result.exponent * n.ln()).exp()))
        .collect();
    Plot::new("Frequency uncertainty vs pair count", "pairs N", "stat. error (rad^-1)")
        .log_log()
        .with(Series::new("subsamples", result.points.iter().map(|p| (p.n as f64, p.stat_err)).collect(), GREY, Style::Markers))
        .with(Series::new("medians", medians.iter().map(|&(n, e)| (n as f64, e)).collect(), BLUE, Style::Markers))
        .with(Series::new(format!("N^({:.3} ± {:.3})", result.exponent, result.exponent_err), line, GREEN, Style::Line))
        .render()
}

fn scaling(mut args: ScalingArgs, config: &SceneConfig, scene: &Scene, run: impl Fn(Command, u64, Vec<FileRecord>) -> Run) -> Result<()> {
    args.input = absolute(&args.input)?;
    let inputs = vec![FileRecord::of(&args.input)?];
    let (header, pairs) = load_input_pairs(&args.input, scene)?;
    let seed = resolve_seed(&args.analysis, header.as_ref(), config);
    let options = analysis_options(&args.analysis, seed, 0)?;
    let sizes = if args.sizes.is_empty() { default_sizes(pairs.len()) } else { args.sizes.clone() };
    if let Some(&n) = sizes.iter().find(|&&n| n > pairs.len()) {
        bail!(Error::InsufficientData(format!("size {n} exceeds the {} available pairs", pairs.len())));
    }
    let projected = ProjectedPairs::new(&pairs, scene)?;
    let result = scaling_exponent(&projected, scene, &sizes, args.repeats, &options)?;

    let mut out = Outputs::create(&args.out)?;
    let mut csv = String::from("n,repeat,frequency,stat_err\n");
    for p in &result.points {
        let _ = writeln!(csv, "{},{},{},{}", p.n, p.repeat, p.frequency, p.stat_err);
    }
    out.write("scaling.csv", csv)?;
    let summary = ScalingSummary {
        n_pairs: pairs.len(),
        seed,
        repeats: args.repeats,
        exponent: result.exponent,
        exponent_err: result.exponent_err,
        intercept: result.intercept,
        medians: result.medians(),
        failures: &result.failures,
    };
    out.write("scaling.json", serde_json::to_string_pretty(&summary)? + "\n")?;
    out.write("scaling.svg", scaling_plot(&result))?;
    println!("exponent {:.3} ± {:.3} ({} subsamples, {} failed)", result.exponent, result.exponent_err, result.points.len(), result.failures.len());
    run(Command::Scaling(args), seed, inputs).finish(out)
}

#[derive(Serialize)]
struct Calibration {
    axial_frequency_hz: Measurement,
    ion_mass_u: f64,
    ion_distance_m: Measurement,
    predicted_frequency: Measurement,
    pixel_pitch_angle: Measurement,
    systematic: SystematicBudget,
}

fn calibration_text(c: &Calibration) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "axial frequency        {:.1} ± {:.1} kHz", c.axial_frequency_hz.value / 1e3, c.axial_frequency_hz.err / 1e3);
    let _ = writeln!(t, "ion mass               {} u", c.ion_mass_u);
    let _ = writeln!(t, "ion distance           {:.4} ± {:.4} um", c.ion_distance_m.value * 1e6, c.ion_distance_m.err * 1e6);
    let _ = writeln!(t, "predicted frequency    {:.1} ± {:.1} rad^-1", c.predicted_frequency.value, c.predicted_frequency.err);
    let _ = writeln!(t, "pixel pitch angle      {:.4e} ± {:.1e} rad", c.pixel_pitch_angle.value, c.pixel_pitch_angle.err);
    let _ = writeln!(t, "systematic, distance L {:.2} rad^-1", c.systematic.image_distance);
    let _ = writeln!(t, "systematic, M          {:.2} rad^-1", c.systematic.magnification);
    let _ = writeln!(t, "systematic, total      {:.2} rad^-1", c.systematic.total);
    t
}

fn calibrate(args: CalibrateArgs, config: &SceneConfig, scene: &Scene, run: impl Fn(Command, u64, Vec<FileRecord>) -> Run) -> Result<()> {
    let trap = &config.trap;
    trap.validate()?;
    let d = two_ion_distance(trap)?;
    let f = predicted_frequency(d, scene.optics(), scene.laser())?;
    let l = Measurement::new(scene.optics().image_distance, scene.optics().image_distance_err);
    let c = Calibration {
        axial_frequency_hz: Measurement::new(trap.axial_frequency, trap.axial_frequency_err),
        ion_mass_u: trap.ion_mass_u,
        ion_distance_m: d,
        predicted_frequency: f,
        pixel_pitch_angle: angular_gauge(scene.detector(0), l)?,
        systematic: systematic_budget(f.value, scene.optics()),
    };
    let json = serde_json::to_string_pretty(&c)? + "\n";
    let text = calibration_text(&c);
    print!("{}", if args.json { &json } else { &text });
    if let Some(dir) = &args.out {
        let mut out = Outputs::create(dir)?;
        out.write("calibration.json", &json)?;
        out.write("calibration.txt", &text)?;
        run(Command::Calibrate(args), config.sim.seed, Vec::new()).finish(out)?;
    }
    Ok(())
}

fn with_out(command: Command, out: PathBuf) -> Result<Command> {
    Ok(match command {
        Command::Simulate(a) => Command::Simulate(SimulateArgs { out, ..a }),
        Command::Ingest(a) => Command::Ingest(IngestArgs { out, ..a }),
        Command::Analyze(a) => Command::Analyze(AnalyzeArgs { out, ..a }),
        Command::Scaling(a) => Command::Scaling(ScalingArgs { out, ..a }),
        Command::Calibrate(a) => Command::Calibrate(CalibrateArgs { out: Some(out), ..a }),
        Command::Replay(_) => bail!("a manifest cannot record a replay"),
    })
}

/// Reruns a manifest's command into a fresh directory and compares every
/// data output against the recorded hashes.
pub fn replay(args: &ReplayArgs) -> Result<()> {
    let manifest = crate::manifest::RunManifest::load(&args.manifest)?;
    let config = SceneConfig::from_toml_str(&manifest.config)?;
    for path in manifest.changed_inputs() {
        eprintln!("warning: input {} changed since the recorded run", path.display());
    }
    let command = with_out(manifest.command.clone(), args.out.clone())?;
    let result = execute(command, config);
    if let Err(e) = &result {
        if e.downcast_ref::<StructureFailure>().is_none() {
            return result;
        }
    }
    let fresh = crate::manifest::RunManifest::load(&args.out.join(MANIFEST_NAME))?;
    let differing: Vec<String> = manifest
        .outputs
        .iter()
        .filter(|r| !fresh.outputs.contains(r))
        .map(|r| r.path.display().to_string())
        .collect();
    if !differing.is_empty() {
        bail!("replay outputs differ from the manifest: {}", differing.join(", "));
    }
    eprintln!("replay: {} outputs identical", manifest.outputs.len());
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_recovers_exact_cosine() {
        let x: Vec<f64> = (0..80).map(|i| -0.02 + 0.0005 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&x| 1.0 + 0.3 * (1500.0 * x).cos() - 0.1 * (1500.0 * x).sin()).collect();
        let w = vec![1.0; x.len()];
        let [c, a, b] = cosine_overlay(&x, &y, &w, 1500.0).unwrap();
        assert!((c - 1.0).abs() < 1e-12 && (a - 0.3).abs() < 1e-12 && (b + 0.1).abs() < 1e-12);
    }

    #[test]
    fn default_sizes_span_two_decades() {
        let s = default_sizes(200_000);
        assert_eq!(s.len(), 6);
        assert_eq!((s[0], s[5]), (2_000, 200_000));
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }
}
