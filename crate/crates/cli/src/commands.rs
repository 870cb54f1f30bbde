use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use mapuq::dictionaries::default_levels;
use mapuq::io::{
    load_coeffs, load_image, save_coeffs, save_image, save_measurements, MaskFile, ModelConfig,
    MuSpec,
};
use mapuq::phantom::{phantom, PhantomKind};
use mapuq::sampler::{intervals_from_chain, run_pxmala_from, tune_step_delta, ChainConfig};
use mapuq::solver::{select_mu, solve_map, MapResult, SolverConfig};
use mapuq::uq::{
    credible_map, default_tolerance, hpd_threshold, partition_grid, relative_length_error,
    CredibleIntervalMap,
};
use mapuq::{make_masked_fourier, simulate_observation, ImageGrid, Point, PosteriorModel, PriorForm};
use serde_json::json;

use crate::error::CliError;
use crate::files::{read_image_any, write_series, write_text};
use crate::manifest::{load_manifest, sha256_file, Recorder, RunManifest, MANIFEST_NAME};
use crate::{
    usage, Cli, Command, CompareArgs, PhantomArgs, ReconstructArgs, ReplayArgs, SampleArgs,
    SimulateArgs, UqArgs,
};

pub fn run(command: Command, argv: &[String]) -> Result<(), CliError> {
    execute(command, argv).map(|_| ())
}

fn execute(command: Command, argv: &[String]) -> Result<Option<RunManifest>, CliError> {
    let manifest = match command {
        Command::Phantom(a) => cmd_phantom(a, argv)?,
        Command::Simulate(a) => cmd_simulate(a, argv)?,
        Command::Reconstruct(a) => cmd_reconstruct(a, argv)?,
        Command::Uq(a) => cmd_uq(a, argv)?,
        Command::Sample(a) => cmd_sample(a, argv)?,
        Command::Compare(a) => cmd_compare(a, argv)?,
        Command::Replay(a) => {
            cmd_replay(a)?;
            return Ok(None);
        }
    };
    Ok(Some(manifest))
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    Ok(fs::canonicalize(path)?)
}

fn cmd_phantom(a: PhantomArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let kind: PhantomKind = a.kind.parse()?;
    let mut rec = Recorder::new("phantom", argv);
    rec.param("rows", a.rows);
    rec.param("cols", a.cols);
    rec.param("kind", kind.to_string());
    rec.seed("phantom", a.seed);

    prepare_dir(&a.out_dir)?;
    let img = phantom(a.rows, a.cols, kind, a.seed)?;
    let out = a.out_dir.join("phantom.uqgrid");
    save_image(&out, &img)?;
    rec.output(&out);
    println!("wrote {}", out.display());
    rec.finish(&a.out_dir)
}

fn cmd_simulate(a: SimulateArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let mut rec = Recorder::new("simulate", argv);
    rec.input(&a.image)?;
    let x = read_image_any(&a.image)?;
    let levels = a.levels.unwrap_or_else(|| default_levels(x.rows(), x.cols()));
    let prior: PriorForm = a.prior.parse()?;
    mapuq::dictionaries::dictionary_by_name(&a.dict, x.rows(), x.cols(), levels)?;
    rec.param("m_fraction", a.m_fraction);
    rec.param("snr_db", a.snr);
    rec.param("dict", a.dict.clone());
    rec.param("levels", levels);
    rec.param("prior", prior.to_string());
    rec.seed("mask", a.seed);
    rec.seed("noise", a.seed.wrapping_add(1));

    let op = make_masked_fourier(x.rows(), x.cols(), a.m_fraction, a.seed)?;
    let y = simulate_observation(&op, &x, a.snr, a.seed.wrapping_add(1))?;
    rec.result("sigma", y.sigma());
    rec.result("measurements", y.len());

    prepare_dir(&a.out_dir)?;
    let y_path = a.out_dir.join("y.uqgrid");
    let mask_path = a.out_dir.join("mask.txt");
    let cfg_path = a.out_dir.join("model.cfg");
    save_measurements(&y_path, y.values())?;
    MaskFile::from_op(&op)
        .expect("masked operator has a mask")
        .save(&mask_path)?;
    ModelConfig {
        operator: "masked_fourier".into(),
        rows: x.rows(),
        cols: x.cols(),
        mask: Some("mask.txt".into()),
        dict: a.dict.clone(),
        levels,
        prior,
        mu: MuSpec::Auto,
        sigma: y.sigma(),
        measurement: "y.uqgrid".into(),
    }
    .save(&cfg_path)?;
    for p in [&y_path, &mask_path, &cfg_path] {
        rec.output(p);
    }
    println!("M = {}, sigma = {}", y.len(), y.sigma());
    rec.finish(&a.out_dir)
}

/// Loads a model configuration and records the files it refers to.
fn load_model_config(path: &Path, rec: &mut Recorder) -> Result<(ModelConfig, PathBuf), CliError> {
    rec.input(path)?;
    let cfg = ModelConfig::load(path)?;
    let base = parent_dir(path);
    rec.input(&base.join(&cfg.measurement))?;
    if let Some(mask) = &cfg.mask {
        rec.input(&base.join(mask))?;
    }
    Ok((cfg, base))
}

fn save_point(path: &Path, p: &Point) -> Result<(), CliError> {
    match p {
        Point::Image(img) => save_image(path, img)?,
        Point::Coeffs(a) => save_coeffs(path, a)?,
    }
    Ok(())
}

fn load_point(path: &Path, m: &PosteriorModel) -> Result<Point, CliError> {
    Ok(match m.prior_form() {
        PriorForm::Analysis => {
            let img = load_image(path)?;
            m.point_from_values(img.into_values())?
        }
        PriorForm::Synthesis => m.point_from_values(load_coeffs(path, m.dict())?.values)?,
    })
}

fn reconstruction_snr(truth: &ImageGrid, x: &ImageGrid) -> Result<f64, CliError> {
    if !truth.same_shape(x) {
        return Err(usage("truth image does not match the reconstruction grid"));
    }
    let err: f64 = truth
        .values()
        .iter()
        .zip(x.values())
        .map(|(t, v)| (t - v) * (t - v))
        .sum::<f64>()
        .sqrt();
    Ok(20.0 * (truth.norm2() / err).log10())
}

fn cmd_reconstruct(a: ReconstructArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let mut rec = Recorder::new("reconstruct", argv);
    let (mut mc, base) = load_model_config(&a.model, &mut rec)?;
    if let Some(d) = &a.dict {
        mc.dict = d.clone();
    }
    if let Some(l) = a.levels {
        mc.levels = l;
    }
    if let Some(p) = &a.prior {
        mc.prior = p.parse()?;
    }
    if let Some(mu) = &a.mu {
        mc.mu = match mu.as_str() {
            "auto" => MuSpec::Auto,
            v => MuSpec::Value(
                v.parse()
                    .map_err(|_| usage(format!("--mu expects 'auto' or a number, got '{v}'")))?,
            ),
        };
    }
    let mut cfg = SolverConfig {
        mu_select_iters: a.mu_iters,
        ..SolverConfig::default()
    };
    if let Some(n) = a.max_iters {
        cfg.max_iters = n;
    }
    if let Some(t) = a.rel_tol {
        cfg.rel_tol = t;
    }
    cfg.validate()?;
    rec.param("dict", mc.dict.clone());
    rec.param("levels", mc.levels);
    rec.param("prior", mc.prior.to_string());
    rec.param(
        "mu",
        match mc.mu {
            MuSpec::Auto => json!("auto"),
            MuSpec::Value(v) => json!(v),
        },
    );
    rec.param("max_iters", cfg.max_iters);
    rec.param("rel_tol", cfg.rel_tol);
    rec.param("mu_select_iters", cfg.mu_select_iters);

    let template = mc.build(&base)?;
    let t = Instant::now();
    let (model, result, mu_trace) = match mc.mu {
        MuSpec::Auto => {
            let sel = select_mu(&template, &cfg)?;
            (template.with_mu(sel.mu)?, sel.result, sel.mu_trace)
        }
        MuSpec::Value(mu) => {
            let res = solve_map(&template, &cfg)?;
            (template, res, vec![mu])
        }
    };
    rec.timing("solve", t.elapsed().as_secs_f64());
    let image = model.point_to_image(&result.point)?;
    rec.result("mu", model.mu());
    rec.result("objective", result.objective_value);
    rec.result("iterations", result.iterations);
    rec.result("converged", result.converged);
    if !result.converged {
        eprintln!("warning: final MAP solve stopped before convergence");
    }

    prepare_dir(&a.out_dir)?;
    let map_path = a.out_dir.join("map.uqgrid");
    let point_path = a.out_dir.join("point.uqgrid");
    let mu_path = a.out_dir.join("mu.txt");
    let obj_path = a.out_dir.join("objective_trace.csv");
    let mu_trace_path = a.out_dir.join("mu_trace.csv");
    let cfg_path = a.out_dir.join("model.cfg");
    save_image(&map_path, &image)?;
    save_point(&point_path, &result.point)?;
    write_text(&mu_path, &format!("{:?}\n", model.mu()))?;
    write_series(&obj_path, "iteration,objective", &result.objective_trace)?;
    write_series(&mu_trace_path, "iteration,mu", &mu_trace)?;
    let resolved = ModelConfig {
        mu: MuSpec::Value(model.mu()),
        mask: match &mc.mask {
            Some(p) => Some(absolute(&base.join(p))?),
            None => None,
        },
        measurement: absolute(&base.join(&mc.measurement))?,
        ..mc
    };
    resolved.save(&cfg_path)?;
    for p in [&map_path, &point_path, &mu_path, &obj_path, &mu_trace_path, &cfg_path] {
        rec.output(p);
    }

    println!("mu = {}", model.mu());
    println!("objective = {}", result.objective_value);
    if let Some(truth_path) = &a.truth {
        rec.input(truth_path)?;
        let truth = read_image_any(truth_path)?;
        let snr = reconstruction_snr(&truth, &image)?;
        rec.result("reconstruction_snr_db", snr);
        println!("reconstruction SNR = {snr:.2} dB");
    }
    rec.finish(&a.out_dir)
}

fn fixed_mu_model(path: &Path, rec: &mut Recorder) -> Result<PosteriorModel, CliError> {
    let (mc, base) = load_model_config(path, rec)?;
    if mc.mu == MuSpec::Auto {
        return Err(usage(
            "model configuration has mu = auto; use the one written by reconstruct",
        ));
    }
    rec.param("dict", mc.dict.clone());
    rec.param("prior", mc.prior.to_string());
    Ok(mc.build(&base)?)
}

fn write_interval_map(dir: &Path, cm: &CredibleIntervalMap, rec: &mut Recorder) -> Result<(), CliError> {
    prepare_dir(dir)?;
    let files = [
        ("xi_minus.uqgrid", cm.xi_minus.clone()),
        ("xi_plus.uqgrid", cm.xi_plus.clone()),
        ("length.uqgrid", cm.lengths()),
    ];
    for (name, grid) in files {
        let p = dir.join(name);
        save_image(&p, &grid)?;
        rec.output(&p);
    }
    let mut csv = String::from("region,row,col,xi_minus,xi_plus,length\n");
    for (i, iv) in cm.intervals.iter().enumerate() {
        let (r, c) = cm.partition.origin(i);
        writeln!(
            csv,
            "{i},{r},{c},{:?},{:?},{:?}",
            iv.lower,
            iv.upper,
            iv.length()
        )
        .expect("write to string");
    }
    let p = dir.join("summary.csv");
    write_text(&p, &csv)?;
    rec.output(&p);
    Ok(())
}

fn scale_dir(out: &Path, scale: usize) -> PathBuf {
    out.join(format!("scale_{scale}"))
}

fn check_scales(scales: &[usize]) -> Result<(), CliError> {
    if scales.is_empty() || scales.contains(&0) {
        return Err(usage("--scale needs positive sizes"));
    }
    Ok(())
}

fn cmd_uq(a: UqArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    check_scales(&a.scale)?;
    let mut rec = Recorder::new("uq", argv);
    let m = fixed_mu_model(&a.model, &mut rec)?;
    rec.input(&a.point)?;
    let map_res = MapResult::at_point(&m, load_point(&a.point, &m)?)?;
    let th = hpd_threshold(&m, &map_res, a.alpha)?;
    let map_image = m.point_to_image(&map_res.point)?;
    let tol = a.tol.unwrap_or_else(|| default_tolerance(&map_image));
    let threads = a.threads.unwrap_or_else(rayon::current_num_threads);
    rec.param("alpha", a.alpha);
    rec.param("scales", a.scale.clone());
    rec.param("tol", tol);
    rec.param("threads", threads);
    rec.result("gamma_prime", th.gamma_prime);
    rec.result("objective_at_map", th.objective_at_map);
    rec.result("n_dim", th.n_dim);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| usage(format!("cannot start {threads} threads: {e}")))?;

    prepare_dir(&a.out_dir)?;
    let mut scales_csv = String::from("scale,regions,mean_length\n");
    let mut total = 0.0;
    for &s in &a.scale {
        let part = partition_grid(m.rows(), m.cols(), s)?;
        let t = Instant::now();
        let cm = pool.install(|| credible_map(&m, &map_res, &th, &part, tol))?;
        let secs = t.elapsed().as_secs_f64();
        total += secs;
        rec.timing(&format!("credible_map_scale_{s}"), secs);
        writeln!(scales_csv, "{s},{},{:?}", part.len(), cm.mean_length()).expect("write to string");
        write_interval_map(&scale_dir(&a.out_dir, s), &cm, &mut rec)?;
        println!("scale {s}: mean interval length {}", cm.mean_length());
    }
    rec.timing("credible_map", total);

    let gamma_path = a.out_dir.join("gamma.csv");
    write_text(
        &gamma_path,
        &format!(
            "alpha,gamma_prime,objective_at_map,n_dim\n{:?},{:?},{:?},{}\n",
            th.alpha, th.gamma_prime, th.objective_at_map, th.n_dim
        ),
    )?;
    let scales_path = a.out_dir.join("scales.csv");
    write_text(&scales_path, &scales_csv)?;
    rec.output(&gamma_path);
    rec.output(&scales_path);
    println!("gamma' = {}", th.gamma_prime);
    rec.finish(&a.out_dir)
}

fn cmd_sample(a: SampleArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    check_scales(&a.scale)?;
    let mut rec = Recorder::new("sample", argv);
    let m = fixed_mu_model(&a.model, &mut rec)?;
    let mut start = match &a.start {
        Some(p) => {
            rec.input(p)?;
            load_point(p, &m)?.values().to_vec()
        }
        None => vec![0.0; m.dim()],
    };
    let t = Instant::now();
    let step = match a.step.as_str() {
        "auto" => {
            let tuning_seed = a.seed.wrapping_add(1);
            rec.seed("tuning", tuning_seed);
            let tuned = tune_step_delta(&m, &start, tuning_seed)?;
            start = tuned.state;
            tuned.step_delta
        }
        v => v
            .parse()
            .map_err(|_| usage(format!("--step expects 'auto' or a number, got '{v}'")))?,
    };
    rec.timing("tuning", t.elapsed().as_secs_f64());
    let cfg = ChainConfig {
        n_samples: a.samples,
        burn_in: a.burn_in.unwrap_or(a.samples / 5),
        step_delta: step,
        my_lambda: a.my_lambda.unwrap_or(step / 2.0),
        thin: a.thin,
        seed: a.seed,
        prox_iters: a.prox_iters,
    };
    cfg.validate()?;
    rec.param("n_samples", cfg.n_samples);
    rec.param("burn_in", cfg.burn_in);
    rec.param("step_delta", cfg.step_delta);
    rec.param("my_lambda", cfg.my_lambda);
    rec.param("thin", cfg.thin);
    rec.param("prox_iters", cfg.prox_iters);
    rec.param("alpha", a.alpha);
    rec.param("scales", a.scale.clone());
    rec.seed("chain", cfg.seed);

    let t = Instant::now();
    let chain = run_pxmala_from(&m, &cfg, &start)?;
    rec.timing("chain", t.elapsed().as_secs_f64());
    rec.result("acceptance_rate", chain.acceptance_rate);
    rec.result("stored_samples", chain.samples.len());
    if let Some(w) = &chain.warning {
        eprintln!("warning: {w}");
        rec.result("warning", w.clone());
    }

    prepare_dir(&a.out_dir)?;
    let chain_path = a.out_dir.join("chain.csv");
    write_series(&chain_path, "sample,objective", &chain.objective_trace)?;
    rec.output(&chain_path);
    let mut scales_csv = String::from("scale,regions,mean_length\n");
    for &s in &a.scale {
        let part = partition_grid(m.rows(), m.cols(), s)?;
        let cm = intervals_from_chain(&chain, &part, a.alpha)?;
        writeln!(scales_csv, "{s},{},{:?}", part.len(), cm.mean_length()).expect("write to string");
        write_interval_map(&scale_dir(&a.out_dir, s), &cm, &mut rec)?;
        println!("scale {s}: mean interval length {}", cm.mean_length());
    }
    let scales_path = a.out_dir.join("scales.csv");
    write_text(&scales_path, &scales_csv)?;
    rec.output(&scales_path);
    println!(
        "acceptance rate {:.3}, step {step:e}, {} samples",
        chain.acceptance_rate,
        chain.samples.len()
    );
    rec.finish(&a.out_dir)
}

fn scales_in(dir: &Path) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        if let Some(s) = name.to_str().and_then(|n| n.strip_prefix("scale_")) {
            if let Ok(v) = s.parse() {
                out.push(v);
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

fn cmd_compare(a: CompareArgs, argv: &[String]) -> Result<RunManifest, CliError> {
    let mut rec = Recorder::new("compare", argv);
    rec.input(&a.truth)?;
    let truth = read_image_any(&a.truth)?;
    let chain_scales = scales_in(&a.chain_dir)?;
    let scales: Vec<usize> = scales_in(&a.map_dir)?
        .into_iter()
        .filter(|s| chain_scales.contains(s))
        .collect();
    if scales.is_empty() {
        return Err(usage("the two directories share no scale_* results"));
    }
    rec.param("scales", scales.clone());

    let mut csv = String::from("scale,error\n");
    for &s in &scales {
        let map_len = scale_dir(&a.map_dir, s).join("length.uqgrid");
        let chain_len = scale_dir(&a.chain_dir, s).join("length.uqgrid");
        rec.input(&map_len)?;
        rec.input(&chain_len)?;
        let err = relative_length_error(&load_image(&map_len)?, &load_image(&chain_len)?, &truth)?;
        writeln!(csv, "{s},{err:?}").expect("write to string");
        rec.result(&format!("error_scale_{s}"), err);
        println!("scale {s}: mean relative length error {err}");
    }
    prepare_dir(&a.out_dir)?;
    let cmp_path = a.out_dir.join("comparison.csv");
    write_text(&cmp_path, &csv)?;
    rec.output(&cmp_path);

    let map_manifest = a.map_dir.join(MANIFEST_NAME);
    let chain_manifest = a.chain_dir.join(MANIFEST_NAME);
    if map_manifest.exists() && chain_manifest.exists() {
        rec.volatile_input(&map_manifest)?;
        rec.volatile_input(&chain_manifest)?;
        let map_secs = load_manifest(&map_manifest)?.timings.get("credible_map").copied();
        let chain_secs = load_manifest(&chain_manifest)?.timings.get("chain").copied();
        if let (Some(ms), Some(cs)) = (map_secs, chain_secs) {
            let ratio = cs / ms;
            let speed_path = a.out_dir.join("speed.csv");
            write_text(
                &speed_path,
                &format!("credible_map_seconds,chain_seconds,ratio\n{ms:?},{cs:?},{ratio:?}\n"),
            )?;
            rec.volatile_output(&speed_path);
            rec.result("speed_ratio", ratio);
            println!("chain / credible_map wall-clock ratio {ratio:.1}");
        }
    }
    rec.finish(&a.out_dir)
}

fn cmd_replay(a: ReplayArgs) -> Result<(), CliError> {
    let path = absolute(&a.manifest)?;
    let old = load_manifest(&path)?;
    std::env::set_current_dir(&old.cwd)?;
    let mut full = vec!["mapuq".to_string()];
    full.extend(old.argv.iter().cloned());
    let cli = Cli::try_parse_from(&full).map_err(|e| usage(format!("recorded arguments: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(usage("cannot replay a replay"));
    }
    for i in old.inputs.iter().filter(|i| !i.volatile) {
        if sha256_file(Path::new(&i.path))? != i.sha256 {
            return Err(CliError::Mismatch(format!("input {} changed since the recorded run", i.path)));
        }
    }
    let new = execute(cli.command, &old.argv)?.expect("non-replay commands return a manifest");
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for o in &old.outputs {
        if o.volatile {
            println!("skipped timing-dependent output {}", o.path);
            continue;
        }
        checked += 1;
        match new.outputs.iter().find(|n| n.path == o.path) {
            Some(n) if n.sha256 == o.sha256 => {}
            Some(_) => mismatches.push(format!("{} differs", o.path)),
            None => mismatches.push(format!("{} was not produced", o.path)),
        }
    }
    if !mismatches.is_empty() {
        return Err(CliError::Mismatch(mismatches.join("; ")));
    }
    println!("replayed {checked} outputs identically");
    Ok(())
}
