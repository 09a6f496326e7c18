//! End-to-end analyses: resolve the configuration, run the computation, and
//! persist `report.json` plus the auxiliary CSV files.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use solenoid_core::current::{
    build_kronecker_atlas, exactness_check, homology_class, rs_quadrature_batch,
};
use solenoid_core::forms::SmallDivisorWarning;
use solenoid_core::lattice::binomial;
use solenoid_core::smalldiv::{
    apply_symbol, build_witness_sequence, continued_fraction, convergent_cross_check,
    decay_transfer_report, estimate_exponent, minkowski_witnesses, record_divisors,
    solve_cohomological_with_floor, DivisorRecord,
};
use solenoid_core::{
    AmbientForm, CurrentReport, DirectionVector, FourierForm, ModeTable,
};
use thiserror::Error;

use crate::config::{resolve, Analysis, AnalysisConfig, Resolved, Violation};

pub const REPORT_FILE: &str = "report.json";
pub const RECORDS_FILE: &str = "records.csv";
pub const SPECTRUM_FILE: &str = "spectrum.csv";

/// Log-spaced λ bins per decade in spectrum histograms.
const BINS_PER_DECADE: i32 = 4;
const CONTINUED_FRACTION_DEPTH: usize = 24;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", format_violations(.0))]
    InvalidConfig(Vec<Violation>),
    #[error(transparent)]
    Compute(#[from] solenoid_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n")
}

impl CliError {
    /// 2 for configuration problems, 3 for everything raised while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InvalidConfig(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Wall-clock timings; the only part of a report that varies between runs.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Timings {
    pub total_seconds: f64,
    pub stages: Vec<StageTiming>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub artifact_version: &'static str,
    pub subcommand: &'static str,
    pub config: AnalysisConfig,
    /// `"ok"` or `"error"`.
    pub status: &'static str,
    pub results: Value,
    pub warnings: Vec<Value>,
    pub errors: Vec<String>,
    pub timings: Timings,
}

/// A CSV file held in memory until the run finishes.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub name: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn new(name: &'static str, header: &[&str]) -> Self {
        CsvTable {
            name,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(dir.join(self.name))?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Accumulates timings, warnings and CSV output while an analysis runs.
struct Session {
    stages: Vec<StageTiming>,
    warnings: Vec<Value>,
    tables: Vec<CsvTable>,
}

impl Session {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push(StageTiming {
            stage: name.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    fn warn(&mut self, kind: &str, detail: Value) {
        log::warn!("{kind}: {detail}");
        self.warnings.push(json!({ "kind": kind, "detail": detail }));
    }

    fn small_divisors(&mut self, context: &str, w: &Option<SmallDivisorWarning>) {
        if let Some(w) = w {
            self.warn("smallDivisors", json!({ "context": context, "warning": w }));
        }
    }
}

/// Outcome of [`execute`]: the report that was written and the exit code.
#[derive(Debug)]
pub struct Execution {
    pub report: RunReport,
    pub exit_code: i32,
}

/// Validates `config`, runs `analysis`, and writes the report and CSV files
/// into `out_dir`. Configuration errors write nothing; computation errors
/// still write `report.json` with `status = "error"`.
pub fn execute(analysis: Analysis, config: &AnalysisConfig, out_dir: &Path) -> Result<Execution, CliError> {
    let resolved = resolve(config, analysis).map_err(CliError::InvalidConfig)?;
    let start = Instant::now();
    let mut session = Session {
        stages: Vec::new(),
        warnings: Vec::new(),
        tables: Vec::new(),
    };
    let outcome = match analysis {
        Analysis::Harmonic => harmonic(&resolved, &mut session),
        Analysis::Decompose => decompose(&resolved, &mut session),
        Analysis::Cohomology => cohomology(&resolved, &mut session),
        Analysis::Classify => classify(&resolved, &mut session),
        Analysis::Witnesses => witnesses(&resolved, &mut session),
        Analysis::RsCurrent => rs_current(&resolved, &mut session),
    };
    let (status, results, errors, exit_code) = match outcome {
        Ok(results) => ("ok", results, Vec::new(), 0),
        Err(e) => {
            log::error!("{e}");
            session.tables.clear();
            ("error", Value::Null, vec![e.to_string()], 3)
        }
    };
    let report = RunReport {
        artifact_version: env!("CARGO_PKG_VERSION"),
        subcommand: analysis.name(),
        config: config.clone(),
        status,
        results,
        warnings: session.warnings,
        errors,
        timings: Timings {
            total_seconds: start.elapsed().as_secs_f64(),
            stages: session.stages,
        },
    };
    fs::create_dir_all(out_dir)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(out_dir.join(REPORT_FILE), text)?;
    for table in &session.tables {
        table.write(out_dir)?;
    }
    Ok(Execution { report, exit_code })
}

type Outcome = solenoid_core::Result<Value>;

fn frame_summary(r: &Resolved) -> Value {
    json!({
        "ambientDim": r.frame.ambient_dim(),
        "leafDim": r.frame.leaf_dim(),
        "directions": r.frame.directions(),
        "minimalityAsserted": r.frame.minimality_asserted(),
        "id": r.frame.id(),
    })
}

fn direction(r: &Resolved) -> solenoid_core::Result<DirectionVector> {
    Ok(DirectionVector::new(r.alpha().to_vec())?.with_claimed_independence(r.minimality_asserted))
}

/// Log-spaced bin edges covering the positive entries of `lambdas`.
fn spectrum_edges(lambdas: &[f64], harmonic: impl Fn(usize) -> bool) -> Vec<f64> {
    let positive = lambdas
        .iter()
        .enumerate()
        .filter(|&(i, _)| !harmonic(i))
        .map(|(_, &l)| l);
    let (lo, hi) = positive.fold((f64::INFINITY, 0.0f64), |(lo, hi), l| (lo.min(l), hi.max(l)));
    if !lo.is_finite() {
        return Vec::new();
    }
    let b = BINS_PER_DECADE as f64;
    let first = (lo.log10() * b).floor() as i32;
    let last = ((hi.log10() * b).floor() as i32 + 1).max(first + 1);
    (first..=last).map(|e| 10f64.powf(e as f64 / b)).collect()
}

fn bin_of(edges: &[f64], l: f64) -> usize {
    edges.partition_point(|&e| e <= l).saturating_sub(1).min(edges.len() - 2)
}

fn mode_columns(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("m{i}")).collect()
}

fn record_row(r: &DivisorRecord) -> Vec<String> {
    let mut row: Vec<String> = r.mode.entries().iter().map(i64::to_string).collect();
    row.push(r.norm.to_string());
    row.push(r.divisor.to_string());
    row.push(r.is_record.to_string());
    row.push(r.is_minkowski_witness.to_string());
    row
}

fn harmonic(r: &Resolved, s: &mut Session) -> Outcome {
    let frame = Arc::new(r.frame.clone());
    let k = frame.leaf_dim();
    let table = s.stage("modeTable", || ModeTable::new(Arc::clone(&frame), r.radius));
    let dims: Vec<usize> = (0..=k).map(|p| table.harmonic_dimension(p)).collect();
    let expected: Vec<usize> = (0..=k).map(|p| binomial(k, p)).collect();
    if dims != expected {
        s.warn(
            "harmonicDimension",
            json!({ "dimensions": dims, "expected": expected }),
        );
    }
    let kernel = s.stage("meanFreeKernel", || table.closed_dimension(0, true));
    let scan = s.stage("minimalityScan", || frame.minimality_scan(r.radius))?;
    if scan.resonant {
        s.warn("resonance", serde_json::to_value(&scan).expect("serializable"));
    }
    let min_lambda = table
        .min_nonzero_lambda()
        .map(|(mode, lambda)| json!({ "mode": mode, "lambda": lambda }));

    let harmonic_modes = (0..table.len()).filter(|&i| table.is_harmonic(i)).count();
    let edges = spectrum_edges(table.lambdas(), |i| table.is_harmonic(i));
    let mut counts = vec![0usize; edges.len().saturating_sub(1)];
    for (i, &l) in table.lambdas().iter().enumerate() {
        if !table.is_harmonic(i) {
            counts[bin_of(&edges, l)] += 1;
        }
    }
    let mut csv = CsvTable::new(SPECTRUM_FILE, &["bin", "lambdaLow", "lambdaHigh", "modeCount"]);
    for (b, &c) in counts.iter().enumerate() {
        csv.rows.push(vec![
            b.to_string(),
            edges[b].to_string(),
            edges[b + 1].to_string(),
            c.to_string(),
        ]);
    }
    s.tables.push(csv);

    Ok(json!({
        "frame": frame_summary(r),
        "truncationRadius": r.radius,
        "modeCount": table.len(),
        "harmonicModeCount": harmonic_modes,
        "harmonicDimensions": dims,
        "expectedDimensions": expected,
        "meanFreeKernelDimension": kernel,
        "minNonzeroLambda": min_lambda,
        "minimalityScan": scan,
        "spectrumBins": counts.len(),
    }))
}

fn decompose(r: &Resolved, s: &mut Session) -> Outcome {
    let frame = Arc::new(r.frame.clone());
    let k = frame.leaf_dim();
    let table = s.stage("modeTable", || ModeTable::new(Arc::clone(&frame), r.radius));
    let edges = spectrum_edges(table.lambdas(), |i| table.is_harmonic(i));
    let mut csv = CsvTable::new(
        SPECTRUM_FILE,
        &["degree", "bin", "lambdaLow", "lambdaHigh", "modeCount", "energy"],
    );
    let mut per_degree = Vec::new();
    for p in 0..=k {
        let omega = FourierForm::random(Arc::clone(&table), p, r.decay, r.seed.wrapping_add(p as u64), true);
        let dec = s.stage(&format!("decompose[{p}]"), || omega.hodge_decompose());
        s.small_divisors(&format!("decompose degree {p}"), &dec.warning);
        let scale = omega.norm().max(f64::MIN_POSITIVE);
        let scale_sq = scale * scale;
        let rel = |x: f64| x / scale;
        let pair = |a: &FourierForm, b: &FourierForm| -> solenoid_core::Result<f64> {
            Ok(a.inner_product(b)?.norm() / scale_sq)
        };
        let residuals = json!({
            "reconstruction": rel((&dec.reconstruct() - &omega).norm()),
            "harmonicExact": pair(&dec.harmonic, &dec.exact)?,
            "harmonicCoexact": pair(&dec.harmonic, &dec.coexact)?,
            "exactCoexact": pair(&dec.exact, &dec.coexact)?,
            "exactClosed": rel(dec.exact.exterior_derivative().norm()),
            "coexactCoclosed": rel(dec.coexact.codifferential().norm()),
            "harmonicLaplacian": rel(dec.harmonic.laplacian().norm()),
        });
        let worst = residuals
            .as_object()
            .expect("object")
            .values()
            .filter_map(Value::as_f64)
            .fold(0.0f64, f64::max);
        if worst > r.residual_tolerance {
            s.warn(
                "residualTolerance",
                json!({ "degree": p, "worst": worst, "tolerance": r.residual_tolerance }),
            );
        }

        if edges.len() >= 2 {
            let stride = binomial(k, p);
            let mut energy = vec![0.0; edges.len() - 1];
            let mut count = vec![0usize; edges.len() - 1];
            for (i, &l) in table.lambdas().iter().enumerate() {
                if table.is_harmonic(i) {
                    continue;
                }
                let b = bin_of(&edges, l);
                count[b] += 1;
                energy[b] += omega.coeffs()[i * stride..(i + 1) * stride]
                    .iter()
                    .map(|c| c.norm_sqr())
                    .sum::<f64>();
            }
            for b in 0..energy.len() {
                csv.rows.push(vec![
                    p.to_string(),
                    b.to_string(),
                    edges[b].to_string(),
                    edges[b + 1].to_string(),
                    count[b].to_string(),
                    energy[b].to_string(),
                ]);
            }
        }

        per_degree.push(json!({
            "degree": p,
            "seed": r.seed.wrapping_add(p as u64),
            "norm": omega.norm(),
            "harmonicNorm": dec.harmonic.norm(),
            "exactNorm": dec.exact.norm(),
            "coexactNorm": dec.coexact.norm(),
            "residuals": residuals,
            "maxResidual": worst,
            "withinTolerance": worst <= r.residual_tolerance,
        }));
    }
    s.tables.push(csv);
    Ok(json!({
        "frame": frame_summary(r),
        "truncationRadius": r.radius,
        "modeCount": table.len(),
        "decay": r.decay,
        "residualTolerance": r.residual_tolerance,
        "degrees": per_degree,
    }))
}

fn cohomology(r: &Resolved, s: &mut Session) -> Outcome {
    let alpha = direction(r)?;
    let frame = Arc::new(alpha.frame()?);
    let table = s.stage("modeTable", || ModeTable::new(Arc::clone(&frame), r.radius));

    // Round trip on seeded mean-free data.
    let f = FourierForm::random(Arc::clone(&table), 0, r.decay, r.seed, true);
    let mut coeffs = f.coeffs().to_vec();
    coeffs[0] = Default::default();
    let f = FourierForm::from_coeffs(Arc::clone(&table), 0, coeffs)?;
    let g = apply_symbol(&f, &alpha)?;
    let solved = s.stage("solveRoundTrip", || {
        solve_cohomological_with_floor(&g, &alpha, r.divisor_floor)
    })?;
    let round_trip = solved.solution.max_abs_diff(&f) / f.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    if !solved.diagnostics.small_divisors.is_empty() {
        s.warn("smallDivisors", json!({ "context": "round trip", "modes": solved.diagnostics.small_divisors }));
    }

    // Divergence on witness data.
    let seq = s.stage("witnesses", || build_witness_sequence(&alpha, r.radius, r.witness_count))?;
    let data = seq.data_form(Arc::clone(&table))?;
    let divergent = s.stage("solveWitnessData", || {
        solve_cohomological_with_floor(&data, &alpha, r.divisor_floor)
    })?;

    // Decay transfer with the empirical exponent.
    let scan = s.stage("recordScan", || record_divisors(&alpha, r.radius))?;
    if let Some(m) = &scan.resonance {
        s.warn("resonance", json!({ "mode": m, "divisorFloor": scan.divisor_floor }));
    }
    let estimate = estimate_exponent(&scan.records, r.radius)?;
    let decay = s.stage("decayTransfer", || {
        decay_transfer_report(&alpha, &estimate, r.decay, r.radius, r.seed)
    })?;
    if !decay.meets_bound {
        s.warn(
            "decayTransfer",
            json!({
                "observedDecay": decay.observed_decay,
                "requiredDecay": decay.required_decay,
                "liouvilleBehavior": decay.liouville_behavior,
            }),
        );
    }
    let mut csv = CsvTable::new(SPECTRUM_FILE, &["shellNorm", "maxAbsSolution"]);
    for &(norm, a) in &decay.shell_maxima {
        csv.rows.push(vec![norm.to_string(), a.to_string()]);
    }
    s.tables.push(csv);

    Ok(json!({
        "alpha": alpha.alpha(),
        "truncationRadius": r.radius,
        "divisorFloor": r.divisor_floor,
        "roundTrip": {
            "seed": r.seed,
            "decay": r.decay,
            "maxRelativeError": round_trip,
            "diagnostics": solved.diagnostics,
        },
        "witnessData": {
            "count": seq.len(),
            "coefficientPartialSums": seq.coefficient_partial_sums,
            "solutionPartialSums": seq.solution_partial_sums,
            "diagnostics": divergent.diagnostics,
        },
        "estimate": estimate,
        "decayTransfer": decay,
    }))
}

fn classify(r: &Resolved, s: &mut Session) -> Outcome {
    let alpha = direction(r)?;
    let n = alpha.dim();
    let scan = s.stage("recordScan", || record_divisors(&alpha, r.radius))?;
    if let Some(m) = &scan.resonance {
        s.warn("resonance", json!({ "mode": m, "divisorFloor": scan.divisor_floor }));
    }
    let estimate = estimate_exponent(&scan.records, r.radius)?;
    let witnesses = s.stage("minkowskiWitnesses", || minkowski_witnesses(&alpha, r.radius))?;

    let (cross_check, expansion) = if n == 2 {
        let cross = convergent_cross_check(&alpha, r.radius)?;
        if !cross.agrees() {
            s.warn("convergentCrossCheck", serde_json::to_value(&cross).expect("serializable"));
        }
        let a = alpha.alpha();
        let cf = continued_fraction(a[1] / a[0], CONTINUED_FRACTION_DEPTH)?;
        (Some(cross), Some(cf))
    } else {
        (None, None)
    };

    let mut header = mode_columns(n);
    header.extend(["norm", "divisor", "isRecord", "isMinkowskiWitness"].map(String::from));
    let mut csv = CsvTable {
        name: RECORDS_FILE,
        header,
        rows: Vec::new(),
    };
    csv.rows.extend(scan.records.iter().map(record_row));
    s.tables.push(csv);

    Ok(json!({
        "alpha": alpha.alpha(),
        "truncationRadius": r.radius,
        "records": scan.records,
        "recordCount": scan.records.len(),
        "resonance": scan.resonance,
        "divisorFloor": scan.divisor_floor,
        "minkowskiWitnessCount": witnesses.len(),
        "estimate": estimate,
        "convergentCrossCheck": cross_check.as_ref().map(|c| json!({
            "agrees": c.agrees(),
            "detail": c,
        })),
        "continuedFraction": expansion,
    }))
}

fn witnesses(r: &Resolved, s: &mut Session) -> Outcome {
    let alpha = direction(r)?;
    let n = alpha.dim();
    let seq = s.stage("witnesses", || build_witness_sequence(&alpha, r.radius, r.witness_count))?;
    let frame = Arc::new(alpha.frame()?);
    let table = s.stage("modeTable", || ModeTable::new(frame, r.radius));
    let data = seq.data_form(table)?;
    let solved = s.stage("solve", || solve_cohomological_with_floor(&data, &alpha, r.divisor_floor))?;
    let count = seq.len() as f64;
    let identity = seq.solution_partial_sums.last().copied() == Some(count);

    let mut header = vec!["index".to_string()];
    header.extend(mode_columns(n));
    header.extend(
        [
            "norm",
            "divisor",
            "coefficient",
            "coefficientPartialSum",
            "solutionPartialSum",
        ]
        .map(String::from),
    );
    let mut csv = CsvTable {
        name: RECORDS_FILE,
        header,
        rows: Vec::new(),
    };
    for (i, m) in seq.modes.iter().enumerate() {
        let mut row = vec![(i + 1).to_string()];
        row.extend(m.entries().iter().map(i64::to_string));
        row.push(m.norm().to_string());
        row.push(seq.divisors[i].to_string());
        row.push(seq.coefficients[i].to_string());
        row.push(seq.coefficient_partial_sums[i].to_string());
        row.push(seq.solution_partial_sums[i].to_string());
        csv.rows.push(row);
    }
    s.tables.push(csv);

    Ok(json!({
        "alpha": alpha.alpha(),
        "truncationRadius": r.radius,
        "sequence": seq,
        "ratioIdentityHolds": identity,
        "solutionNorm": solved.solution.norm(),
        "diagnostics": solved.diagnostics,
    }))
}

fn rs_current(r: &Resolved, s: &mut Session) -> Outcome {
    let a = r.alpha();
    let frame = &r.frame;
    let mut labels = Vec::new();
    let mut forms = Vec::new();
    for &axis in &r.coordinate_axes {
        labels.push(format!("dx{axis}"));
        forms.push(AmbientForm::coordinate(2, &[axis])?);
    }
    for i in 0..r.random_forms {
        let seed = r.seed.wrapping_add(i as u64);
        labels.push(format!("trig[{seed}]"));
        forms.push(AmbientForm::random_trig(2, 1, r.max_frequency, seed));
    }
    let atlas = s.stage("atlas", || build_kronecker_atlas([a[0], a[1]], r.box_count))?;
    let refs: Vec<&AmbientForm> = forms.iter().collect();
    let quadrature = s.stage("quadrature", || rs_quadrature_batch(&atlas, &refs, r.resolution))?;
    let eta_seed = r.seed.wrapping_add(r.random_forms as u64);
    let eta = AmbientForm::random_trig(2, 0, r.max_frequency, eta_seed);
    let exactness = s.stage("exactness", || exactness_check(&atlas, &eta, r.resolution))?;
    if exactness > r.agreement_tolerance {
        s.warn(
            "exactness",
            json!({ "residual": exactness, "tolerance": r.agreement_tolerance }),
        );
    }

    let mut csv = CsvTable::new(
        RECORDS_FILE,
        &["form", "spectral", "quadrature", "estimatedError", "difference"],
    );
    let mut rows = Vec::new();
    for ((label, form), quad) in labels.iter().zip(&forms).zip(&quadrature) {
        let spectral = CurrentReport::spectral(form, frame)?;
        let diff = (spectral.value - quad.value).abs();
        if diff > r.agreement_tolerance {
            s.warn(
                "agreement",
                json!({ "form": label, "difference": diff, "tolerance": r.agreement_tolerance }),
            );
        }
        csv.rows.push(vec![
            label.clone(),
            spectral.value.to_string(),
            quad.value.to_string(),
            quad.estimated_error.to_string(),
            diff.to_string(),
        ]);
        rows.push(json!({
            "form": label,
            "spectral": spectral,
            "quadrature": quad,
            "difference": diff,
            "agrees": diff <= r.agreement_tolerance,
        }));
    }
    s.tables.push(csv);

    let class: Vec<Value> = homology_class(frame)
        .into_iter()
        .map(|(set, p)| json!({ "index": set, "value": p }))
        .collect();
    Ok(json!({
        "alpha": a,
        "homologyClass": class,
        "atlas": atlas.spec(),
        "goodBoxesEmbed": atlas.good_boxes_embed(),
        "resolution": r.resolution,
        "agreementTolerance": r.agreement_tolerance,
        "forms": rows,
        "exactness": { "seed": eta_seed, "residual": exactness },
    }))
}
