//! The five subcommands. Each one resolves its config (subcommand defaults,
//! then the JSON config file, then explicit flags), runs the corresponding
//! library protocol, and writes CSV/JSON outputs plus a manifest.

use std::fmt::Display;
use std::fs;

use covflow_core::bounds::{bound_report, deep_bound, expected_corner_inverse_trace,
    vandermonde_gap_det};
use covflow_core::divergence::non_standardness_spectrum;
use covflow_core::experiments::{compare_bounds_per_layer, run_deep, run_single_block,
    scaled_items, summarize, BoundKind, ExperimentConfig, GroupChoice, ScaledSpectrumItem};
use covflow_core::linalg::{rotate_covariance, sample_haar, Rotation, Spectrum};
use covflow_core::rng::{domain, stream_rng};
use covflow_core::spectra::{distinctness_perturb, generate_dataset_family, generate_parametric,
    scale_schedule, DatasetFamily, ParametricFamily, ALL_DATASET_FAMILIES};
use nalgebra::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::{BoundsArgs, CommonArgs, DeepArgs, SingleBlockArgs, SpectrumArgs, ValidateArgs};
use crate::out::{cell_f64, cell_opt, Csv, OutDir};
use crate::Failure;

fn usage<E: Display>(e: E) -> Failure {
    Failure::usage(e.to_string())
}

fn runtime<E: Display>(e: E) -> Failure {
    Failure::runtime(e.to_string())
}

/// Overlays the JSON config file (flat keys mirroring the experiment config)
/// onto the subcommand's base defaults, then applies `--seed`. Unknown or
/// ill-typed keys are usage errors.
fn merged_config(base: ExperimentConfig, common: &CommonArgs) -> Result<ExperimentConfig, Failure> {
    let mut value = serde_json::to_value(&base).map_err(runtime)?;
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::runtime(format!("cannot read {}: {e}", path.display())))?;
        let overlay: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Failure::usage(format!("{} is not valid JSON: {e}", path.display())))?;
        let overlay = overlay.as_object().ok_or_else(|| {
            Failure::usage(format!("{} must hold a JSON object", path.display()))
        })?;
        let target = value.as_object_mut().expect("config serializes to an object");
        for (key, v) in overlay {
            if !target.contains_key(key) {
                return Err(Failure::usage(format!(
                    "unknown config key '{key}' in {}",
                    path.display()
                )));
            }
            target.insert(key.clone(), v.clone());
        }
    }
    let mut config: ExperimentConfig = serde_json::from_value(value)
        .map_err(|e| Failure::usage(format!("bad config value: {e}")))?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

/// Resolved invocation written next to the outputs and hashed into the
/// manifest: the experiment config plus the command-specific arguments.
fn write_config(
    out: &mut OutDir,
    command: &str,
    config: &ExperimentConfig,
    extras: serde_json::Value,
) -> Result<serde_json::Value, Failure> {
    let full = json!({
        "command": command,
        "experiment": config,
        "args": extras,
    });
    let body = serde_json::to_string_pretty(&full).map_err(runtime)?;
    out.write("config.json", &(body + "\n"))?;
    Ok(full)
}

#[derive(Serialize, Deserialize)]
struct SpectraFile {
    schema: String,
    spectra: Vec<SpectrumEntry>,
}

#[derive(Serialize, Deserialize)]
struct SpectrumEntry {
    id: String,
    values: Vec<f64>,
}

const SPECTRA_SCHEMA: &str = "covflow-spectra-v1";

/// A single structured-family spectrum at an explicit varied value.
fn structured_spectrum(kind: DatasetFamily, dim: usize, v: f64) -> Result<Spectrum, Failure> {
    if dim < 2 || dim % 2 != 0 {
        return Err(Failure::usage(format!(
            "dataset families need an even dimension >= 2, got {dim}"
        )));
    }
    if !v.is_finite() || v <= 0.0 {
        return Err(Failure::usage(format!("--value must be positive, got {v}")));
    }
    if v == 1.0 {
        return Err(Failure::usage(
            "--value 1 makes all eigenvalues equal; the identity spectrum is excluded".into(),
        ));
    }
    let values = match kind {
        DatasetFamily::SingleVaried => {
            let mut vals = vec![1.0; dim];
            vals[0] = v;
            vals
        }
        DatasetFamily::AllButOneVaried => {
            let mut vals = vec![v; dim];
            vals[dim - 1] = 1.0;
            vals
        }
        DatasetFamily::TwoHalves => {
            let mut vals = vec![v; dim];
            for x in vals.iter_mut().skip(dim / 2) {
                *x = 1.0 / v;
            }
            vals
        }
        DatasetFamily::UniformRandom | DatasetFamily::LogUniformRandom => {
            return Err(Failure::usage(
                "--value applies to the structured families only".into(),
            ));
        }
    };
    Ok(Spectrum::new(values).map_err(usage)?.normalized())
}

fn dataset_family_by_name(name: &str) -> Option<DatasetFamily> {
    ALL_DATASET_FAMILIES.iter().copied().find(|k| k.name() == name)
}

pub fn spectrum(args: &SpectrumArgs) -> Result<(), Failure> {
    let mut config = merged_config(ExperimentConfig::default(), &args.common)?;
    if let Some(dim) = args.dim {
        config.dim = dim;
    }
    if let Some(n) = args.n_vary {
        config.n_vary = n;
    }
    if let Some(v) = args.v_max {
        config.v_max = v;
    }

    let mut entries: Vec<SpectrumEntry> = Vec::new();
    let mut push = |id: String, sp: &Spectrum| {
        entries.push(SpectrumEntry {
            id,
            values: sp.values().to_vec(),
        });
    };
    match args.family.as_str() {
        "identity" => {
            return Err(Failure::usage(
                "family 'identity' is excluded: a spectrum with all eigenvalues \
                 equal to 1 has nothing to whiten"
                    .into(),
            ));
        }
        "power" => {
            let p = args
                .p
                .ok_or_else(|| Failure::usage("--p is required for the power family".into()))?;
            let family = ParametricFamily::Power { p };
            push(family.name(), &generate_parametric(family, config.dim).map_err(usage)?);
        }
        "reciprocal" => {
            let family = ParametricFamily::Reciprocal;
            push(family.name(), &generate_parametric(family, config.dim).map_err(usage)?);
        }
        "exponential" => {
            let family = ParametricFamily::Exponential;
            push(family.name(), &generate_parametric(family, config.dim).map_err(usage)?);
        }
        other => match dataset_family_by_name(other) {
            Some(kind) => match args.value {
                Some(v) => {
                    let sp = structured_spectrum(kind, config.dim, v)?;
                    push(format!("{}-v{v}", kind.name()), &sp);
                }
                None => {
                    let sweep = generate_dataset_family(
                        kind,
                        config.dim,
                        config.n_vary,
                        config.v_max,
                        config.seed,
                    )
                    .map_err(usage)?;
                    for (i, sp) in sweep.iter().enumerate() {
                        push(format!("{}-{i:03}", kind.name()), sp);
                    }
                }
            },
            None => {
                return Err(Failure::usage(format!(
                    "unknown family '{other}' (expected power, reciprocal, exponential, \
                     single-varied, all-but-one-varied, two-halves, uniform-random or \
                     log-uniform-random)"
                )));
            }
        },
    }

    for e in &entries {
        let sp = Spectrum::new(e.values.clone()).map_err(runtime)?;
        println!(
            "{}: S={} g={} var={} min={} max={}",
            e.id,
            non_standardness_spectrum(&sp),
            sp.geometric_mean(),
            sp.variance(),
            sp.min(),
            sp.max()
        );
    }

    let mut out = OutDir::create(&args.common.out_dir)?;
    let extras = json!({
        "family": args.family,
        "p": args.p,
        "value": args.value,
    });
    let full = write_config(&mut out, "spectrum", &config, extras)?;
    let file = SpectraFile {
        schema: SPECTRA_SCHEMA.to_string(),
        spectra: entries,
    };
    let body = serde_json::to_string_pretty(&file).map_err(runtime)?;
    let path = out.write("spectra.json", &(body + "\n"))?;
    println!("wrote {}", path.display());
    out.finish("spectrum", &full, config.seed)?;
    Ok(())
}

/// Reads a spectra file or an inline value list; values are normalized to
/// mean 1 before use.
fn load_spectra(args: &BoundsArgs) -> Result<Vec<(String, Spectrum)>, Failure> {
    let inline = args.values.as_ref();
    let file = args.spectra.as_ref();
    if inline.is_some() == file.is_some() {
        return Err(Failure::usage(
            "give exactly one of --spectra <file> or --values <list>".into(),
        ));
    }
    let mut out = Vec::new();
    if let Some(list) = inline {
        let values: Vec<f64> = list
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Failure::usage(format!("bad eigenvalue '{t}': {e}")))
            })
            .collect::<Result<_, _>>()?;
        out.push(("inline".to_string(), Spectrum::new(values).map_err(usage)?.normalized()));
    } else if let Some(path) = file {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::runtime(format!("cannot read {}: {e}", path.display())))?;
        let parsed: SpectraFile = serde_json::from_str(&text)
            .map_err(|e| Failure::usage(format!("{} is not a spectra file: {e}", path.display())))?;
        if parsed.schema != SPECTRA_SCHEMA {
            return Err(Failure::usage(format!(
                "{}: unsupported schema '{}'",
                path.display(),
                parsed.schema
            )));
        }
        for e in parsed.spectra {
            out.push((e.id, Spectrum::new(e.values).map_err(usage)?.normalized()));
        }
    }
    for (id, sp) in &out {
        if sp.values().iter().all(|&v| v == sp.values()[0]) {
            return Err(Failure::usage(format!(
                "spectrum '{id}' has all eigenvalues equal; the identity spectrum is excluded"
            )));
        }
    }
    Ok(out)
}

pub fn bounds(args: &BoundsArgs) -> Result<(), Failure> {
    let mut config = merged_config(ExperimentConfig::default(), &args.common)?;
    if let Some(layers) = args.layers {
        config.layers = layers;
    }
    config.validate().map_err(usage)?;
    let spectra = load_spectra(args)?;

    let mut csv = Csv::new(
        "covflow-bounds-v1",
        &[
            "spectrum_id",
            "dim",
            "s_before",
            "thm1",
            "thm1_bits",
            "thm2_varmax",
            "thm2_lossonly",
            "gamma",
            "layers",
            "deep_bound",
        ],
    );
    for (id, sp) in &spectra {
        let report = bound_report(sp, config.precise_policy()).map_err(runtime)?;
        let deep = deep_bound(report.s_before, sp.dim(), config.layers);
        let (thm1, bits) = precise_cells(&report, &config);
        csv.row(&[
            id.clone(),
            sp.dim().to_string(),
            cell_f64(report.s_before),
            thm1,
            bits,
            cell_f64(report.varmax_bound),
            cell_f64(report.lossonly_bound),
            cell_f64(report.gamma),
            config.layers.to_string(),
            match deep {
                Ok(b) => cell_f64(b),
                Err(e) => format!("n/a: {}", e.slug()),
            },
        ]);
    }

    let mut out = OutDir::create(&args.common.out_dir)?;
    let extras = json!({
        "spectra": args.spectra.as_ref().map(|p| p.display().to_string()),
        "values": args.values,
        "n_spectra": spectra.len(),
    });
    let full = write_config(&mut out, "bounds", &config, extras)?;
    let path = out.write("bounds.csv", &csv.to_string())?;
    println!("wrote {} ({} rows)", path.display(), spectra.len());
    out.finish("bounds", &full, config.seed)?;
    Ok(())
}

/// The `thm1` and `thm1_bits` CSV cells for one report: values when the
/// tight bound was computed, an explanatory note when it failed, and
/// "n/a: skipped" when the config excludes it.
fn precise_cells(report: &covflow_core::bounds::BoundReport, config: &ExperimentConfig) -> (String, String) {
    if !config.wants(BoundKind::Precise) {
        return ("n/a: skipped".to_string(), "n/a: skipped".to_string());
    }
    match (report.precise_bound, report.precise_bound_bits, &report.precise_bound_note) {
        (Some(b), Some(bits), _) => (cell_f64(b), bits.to_string()),
        (_, _, note) => {
            let cell = cell_opt(None, note.as_deref());
            (cell.clone(), cell)
        }
    }
}

pub fn single_block(args: &SingleBlockArgs) -> Result<(), Failure> {
    let base = ExperimentConfig {
        n_rot: 100,
        group: GroupChoice::Both,
        ..ExperimentConfig::default()
    };
    let mut config = merged_config(base, &args.common)?;
    if let Some(dim) = args.dim {
        config.dim = dim;
    }
    if let Some(n) = args.n_scale {
        config.n_scale = n;
    }
    if let Some(n) = args.n_rot {
        config.n_rot = n;
    }
    if let Some(g) = args.group {
        config.group = g;
    }
    if let Some(eps) = args.epsilon {
        config.epsilon = eps;
    }
    config.validate().map_err(usage)?;

    let families: Vec<ParametricFamily> = match args.family.as_str() {
        "all" => {
            if args.p.is_some() {
                return Err(Failure::usage("--p only applies to --family power".into()));
            }
            ParametricFamily::STANDARD.to_vec()
        }
        "power" => {
            let p = args
                .p
                .ok_or_else(|| Failure::usage("--p is required for the power family".into()))?;
            vec![ParametricFamily::Power { p }]
        }
        "reciprocal" => vec![ParametricFamily::Reciprocal],
        "exponential" => vec![ParametricFamily::Exponential],
        other => {
            return Err(Failure::usage(format!(
                "unknown family '{other}' (expected all, power, reciprocal or exponential)"
            )));
        }
    };

    let mut items: Vec<ScaledSpectrumItem> = Vec::new();
    for family in &families {
        let mut base = generate_parametric(*family, config.dim).map_err(usage)?;
        if args.perturb {
            base = distinctness_perturb(&base, config.epsilon).map_err(usage)?;
        }
        let schedule = scale_schedule(&base, config.n_scale).map_err(usage)?;
        items.extend(scaled_items(&base, &family.name(), &schedule).map_err(runtime)?);
    }

    let records = run_single_block(&config, &items).map_err(runtime)?;

    let mut csv = Csv::new(
        "covflow-single-block-v1",
        &[
            "spectrum_id",
            "scale_s",
            "s_before",
            "group",
            "mc_mean",
            "mc_median",
            "mc_iqr",
            "thm1",
            "thm1_bits",
            "thm2_varmax",
            "thm2_lossonly",
            "gamma",
        ],
    );
    let mut n_rows = 0usize;
    for rec in &records {
        let (thm1, bits) = precise_cells(&rec.report, &config);
        for gs in &rec.groups {
            csv.row(&[
                rec.spectrum_id.clone(),
                cell_f64(rec.scale_s),
                cell_f64(rec.s_before),
                gs.group.name().to_string(),
                cell_f64(gs.stats.mean),
                cell_f64(gs.stats.median),
                cell_f64(gs.stats.iqr),
                thm1.clone(),
                bits.clone(),
                cell_f64(rec.report.varmax_bound),
                cell_f64(rec.report.lossonly_bound),
                cell_f64(rec.report.gamma),
            ]);
            n_rows += 1;
        }
    }

    let mut out = OutDir::create(&args.common.out_dir)?;
    let extras = json!({
        "family": args.family,
        "p": args.p,
        "perturb": args.perturb,
        "n_sweep_points": items.len(),
    });
    let full = write_config(&mut out, "single-block", &config, extras)?;
    let path = out.write("single_block.csv", &csv.to_string())?;
    println!(
        "wrote {} ({} rows: {} families x {} scales x {} group(s), {} rotations each)",
        path.display(),
        n_rows,
        families.len(),
        config.n_scale,
        config.group.groups().len(),
        config.n_rot
    );
    out.finish("single-block", &full, config.seed)?;
    Ok(())
}

pub fn deep(args: &DeepArgs) -> Result<(), Failure> {
    let base = ExperimentConfig {
        group: GroupChoice::Orthogonal,
        ..ExperimentConfig::default()
    };
    let mut config = merged_config(base, &args.common)?;
    if let Some(dim) = args.dim {
        config.dim = dim;
    }
    if let Some(l) = args.layers {
        config.layers = l;
    }
    if let Some(n) = args.n_rot {
        config.n_rot = n;
    }
    if let Some(n) = args.n_vary {
        config.n_vary = n;
    }
    if let Some(v) = args.v_max {
        config.v_max = v;
    }
    if let Some(eps) = args.epsilon {
        config.epsilon = eps;
    }
    if let Some(g) = args.group {
        config.group = g;
    }
    if args.independent_rotations {
        config.independent_rotations = true;
    }
    if args.compare_bounds {
        config.retain_spectra = true;
    }
    config.validate().map_err(usage)?;
    if config.group == GroupChoice::Both {
        return Err(Failure::usage(
            "deep runs use a single rotation ensemble; pick --group orthogonal or unitary".into(),
        ));
    }

    let mut spectra = Vec::new();
    for kind in ALL_DATASET_FAMILIES {
        for sp in generate_dataset_family(kind, config.dim, config.n_vary, config.v_max, config.seed)
            .map_err(usage)?
        {
            spectra.push(distinctness_perturb(&sp, config.epsilon).map_err(usage)?);
        }
    }

    let records = run_deep(&config, &spectra).map_err(runtime)?;

    let mut csv = Csv::new(
        "covflow-deep-v1",
        &["instance", "rotation_seed", "layer", "s_value", "ratio", "terminated_early"],
    );
    let mut aborted = 0usize;
    for rec in &records {
        if rec.terminated_early {
            aborted += 1;
        }
        for (layer, &s) in rec.s_values.iter().enumerate() {
            csv.row(&[
                rec.instance_id.to_string(),
                rec.rotation_seed.to_string(),
                layer.to_string(),
                cell_f64(s),
                if layer == 0 {
                    "n/a".to_string()
                } else {
                    cell_f64(rec.ratios[layer - 1])
                },
                rec.terminated_early.to_string(),
            ]);
        }
    }

    let mut out = OutDir::create(&args.common.out_dir)?;
    let extras = json!({
        "n_spectra": spectra.len(),
        "compare_bounds": args.compare_bounds,
    });
    let full = write_config(&mut out, "deep", &config, extras)?;
    let path = out.write("deep.csv", &csv.to_string())?;
    let finals: Vec<f64> = records
        .iter()
        .map(|r| *r.s_values.last().expect("nonempty"))
        .collect();
    println!(
        "wrote {} ({} trajectories, {} aborted, mean final S {})",
        path.display(),
        records.len(),
        aborted,
        finals.iter().sum::<f64>() / finals.len() as f64
    );

    if args.compare_bounds {
        let rows = compare_bounds_per_layer(&config, &records).map_err(runtime)?;
        let mut layers_csv = Csv::new(
            "covflow-deep-layers-v1",
            &[
                "layer",
                "n_points",
                "mean_ratio",
                "ratio_iqr",
                "mean_varmax_ratio",
                "mean_lossonly_ratio",
                "mean_gamma",
                "mean_precise_ratio",
                "n_precise",
                "conjecture_margin",
            ],
        );
        for row in &rows {
            layers_csv.row(&[
                row.layer.to_string(),
                row.n_points.to_string(),
                cell_f64(row.mean_ratio),
                cell_f64(row.ratio_iqr),
                cell_f64(row.mean_varmax_ratio),
                cell_f64(row.mean_lossonly_ratio),
                cell_f64(row.mean_gamma),
                cell_opt(row.mean_precise_ratio, None),
                row.n_precise.to_string(),
                cell_f64(row.conjecture_margin),
            ]);
        }
        let path = out.write("deep_layers.csv", &layers_csv.to_string())?;
        println!("wrote {} ({} layers)", path.display(), rows.len());
    }

    out.finish("deep", &full, config.seed)?;
    Ok(())
}

#[derive(Serialize)]
struct CheckResult {
    name: String,
    target: f64,
    estimate: f64,
    se: Option<f64>,
    pull: Option<f64>,
    tolerance: f64,
    pass: bool,
}

fn mc_check(name: &str, target: f64, samples: &[f64], tolerance_se: f64) -> CheckResult {
    let stats = summarize(samples).expect("nonempty samples");
    let pull = if stats.se > 0.0 {
        (stats.mean - target).abs() / stats.se
    } else if stats.mean == target {
        0.0
    } else {
        f64::INFINITY
    };
    CheckResult {
        name: name.to_string(),
        target,
        estimate: stats.mean,
        se: Some(stats.se),
        pull: Some(pull),
        tolerance: tolerance_se,
        pass: pull <= tolerance_se,
    }
}

/// Monte Carlo validation of the closed-form identities: the rotated
/// diagonal mean on both groups, the two degree-four orthogonal moments,
/// the expected inverse trace of a rotated corner block, and the exact
/// gapped Vandermonde determinant identity.
pub fn validate(args: &ValidateArgs) -> Result<(), Failure> {
    let config = merged_config(ExperimentConfig::default(), &args.common)?;
    let n: usize = if args.quick { 10_000 } else { 100_000 };
    let tol_se = 4.0;
    let seed = config.seed;
    let mut checks: Vec<CheckResult> = Vec::new();

    // Rotated diagonal mean: E[(Q diag(lambda) Q*)_{00}] = tr/D on both groups.
    let dim = 8usize;
    let base = generate_parametric(ParametricFamily::Power { p: 2 }, dim).map_err(runtime)?;
    let diag = base.to_diagonal_covariance();
    let mut rng = stream_rng(seed, domain::VALIDATE, 10, 0);
    let samples: Vec<f64> = (0..n)
        .map(|_| {
            let q: Rotation<f64> = sample_haar(dim, &mut rng)?;
            Ok(rotate_covariance(&diag, &q)?.diagonal_real()[0])
        })
        .collect::<covflow_core::Result<_>>()
        .map_err(runtime)?;
    checks.push(mc_check("diagonal mean, orthogonal, D=8", 1.0, &samples, tol_se));

    let diag_c = diag.complexify();
    let mut rng = stream_rng(seed, domain::VALIDATE, 11, 0);
    let samples: Vec<f64> = (0..n)
        .map(|_| {
            let q: Rotation<Complex<f64>> = sample_haar(dim, &mut rng)?;
            Ok(rotate_covariance(&diag_c, &q)?.diagonal_real()[0])
        })
        .collect::<covflow_core::Result<_>>()
        .map_err(runtime)?;
    checks.push(mc_check("diagonal mean, unitary, D=8", 1.0, &samples, tol_se));

    // Degree-four orthogonal moments at D=4: E[q00^2 q10^2] = 1/(D(D+2))
    // and E[q00 q10 q01 q11] = -1/(D(D-1)(D+2)).
    let d4 = 4.0f64;
    let mut rng = stream_rng(seed, domain::VALIDATE, 12, 0);
    let mut sq = Vec::with_capacity(n);
    let mut minor = Vec::with_capacity(n);
    for _ in 0..n {
        let q: Rotation<f64> = sample_haar(4, &mut rng).map_err(runtime)?;
        let m = q.matrix();
        sq.push(m[(0, 0)].powi(2) * m[(1, 0)].powi(2));
        minor.push(m[(0, 0)] * m[(1, 0)] * m[(0, 1)] * m[(1, 1)]);
    }
    checks.push(mc_check(
        "squared-pair moment, orthogonal, D=4",
        1.0 / (d4 * (d4 + 2.0)),
        &sq,
        tol_se,
    ));
    checks.push(mc_check(
        "cross-minor moment, orthogonal, D=4",
        -1.0 / (d4 * (d4 - 1.0) * (d4 + 2.0)),
        &minor,
        tol_se,
    ));

    // Expected inverse trace of the K x K corner of a Haar-unitary
    // conjugation against its closed form.
    for (i, (big_n, k)) in [(4usize, 2usize), (6, 3)].iter().enumerate() {
        let raw: Vec<f64> = (1..=*big_n).map(|v| v as f64).collect();
        let mean = raw.iter().sum::<f64>() / *big_n as f64;
        let a: Vec<f64> = raw.iter().map(|v| v / mean).collect();
        let closed = expected_corner_inverse_trace(&a, *k).map_err(runtime)?;
        let diag = Spectrum::new(a)
            .map_err(runtime)?
            .to_diagonal_covariance()
            .complexify();
        let mut rng = stream_rng(seed, domain::VALIDATE, 13, i as u64);
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let q: Rotation<Complex<f64>> = sample_haar(*big_n, &mut rng)?;
                let corner = rotate_covariance(&diag, &q)?.block(0, 0, *k, *k);
                Ok(corner.symmetric_eigen().eigenvalues.iter().map(|v| 1.0 / v).sum())
            })
            .collect::<covflow_core::Result<_>>()
            .map_err(runtime)?;
        checks.push(mc_check(
            &format!("corner inverse trace, unitary, N={big_n} K={k}"),
            closed,
            &samples,
            tol_se,
        ));
    }

    // Exact identity: the gapped Vandermonde determinant equals the
    // Vandermonde product times an elementary symmetric polynomial.
    let mut max_rel: f64 = 0.0;
    let mut rng = stream_rng(seed, domain::VALIDATE, 14, 0);
    for dim in 2..=6usize {
        let values: Vec<f64> = (0..dim).map(|_| 0.2 + 2.0 * rng.random::<f64>()).collect();
        for k in 1..dim {
            let (lhs, rhs) = vandermonde_gap_det(&values, k).map_err(runtime)?;
            max_rel = max_rel.max((lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE));
        }
    }
    checks.push(CheckResult {
        name: "gapped Vandermonde determinant, n=2..6".to_string(),
        target: 0.0,
        estimate: max_rel,
        se: None,
        pull: None,
        tolerance: 1e-8,
        pass: max_rel <= 1e-8,
    });

    let mut failed = 0usize;
    for c in &checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        match (c.se, c.pull) {
            (Some(se), Some(pull)) => println!(
                "{status}  {}: estimate {:.6} vs {:.6} (se {:.2e}, {:.2} se, tol {} se)",
                c.name, c.estimate, c.target, se, pull, c.tolerance
            ),
            _ => println!(
                "{status}  {}: max rel err {:.2e} (tol {:.0e})",
                c.name, c.estimate, c.tolerance
            ),
        }
        if !c.pass {
            failed += 1;
        }
    }

    let mut out = OutDir::create(&args.common.out_dir)?;
    let extras = json!({"quick": args.quick, "n_samples": n});
    let full = write_config(&mut out, "validate", &config, extras)?;
    let report = json!({
        "schema": "covflow-validate-v1",
        "n_samples": n,
        "checks": checks,
    });
    let body = serde_json::to_string_pretty(&report).map_err(runtime)?;
    out.write("validate.json", &(body + "\n"))?;
    out.finish("validate", &full, seed)?;

    if failed > 0 {
        return Err(Failure::validation(format!(
            "{failed} of {} oracle checks failed",
            checks.len()
        )));
    }
    println!("all {} oracle checks passed", checks.len());
    Ok(())
}
