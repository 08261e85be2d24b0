//! Command-line front end. Argument parsing, subcommand orchestration, and
//! result-record/artifact writing live here; all numeric work is in
//! `cia-core`. The entry point is [`cli_main`], which the `cia` binary wraps.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use cia_core::attack::{run_attack, Variant};
use cia_core::error::CiaError;
use cia_core::eval::{
    ce_by_position, compare_methods, evaluate_asr, sweep_alpha_beta, sweep_epsilon,
    textual_injection_eval, topk_decode_by_position, AsrReport, Category, CeProfile, PromptSet,
    Split,
};
use cia_core::fraction::parse_float_token;
use cia_core::image::ImageTensor;
use cia_core::io::{
    load_image_f32, load_image_ppm, load_prompts, load_run_config, save_image_f32, save_image_ppm,
    split_bundled_corpus, write_report, LabeledAsr, LabeledCeProfile, PromptFileEntry,
    ResultRecord, RunConfig,
};
use cia_core::model::{init_model, ModelWeights};
use cia_core::objective::PaddingStrategy;
use cia_core::rng::SplitMix64;

/// Environment variable that overrides every `--out` directory.
pub const OUT_DIR_ENV: &str = "CIA_OUT_DIR";

/// Parse `argv` and run the selected subcommand. Returns the process exit
/// code: 0 on success, 1 on a runtime failure (one-line diagnostic on
/// stderr), 2 on a usage error (clap prints the usage text).
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = err.exit_code();
            let _ = err.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    }
}

#[derive(Parser)]
#[command(
    name = "cia",
    version,
    about = "Contextual-injection attacks on a deterministic micro vision-language model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one attack; save the adversarial image and a result record.
    Attack(AttackArgs),
    /// Attack success rate of a saved image over bundled or custom prompts.
    Evaluate(EvaluateArgs),
    /// Cross-entropy profile and top-k decoding tables for one prompt.
    Analyze(AnalyzeArgs),
    /// Compare attack variants on a shared seed and prompt set.
    Compare(CompareArgs),
    /// Sweep the alpha/beta loss weights over a grid.
    SweepAb(SweepAbArgs),
    /// Sweep the perturbation budget over a list of epsilon values.
    SweepEps(SweepEpsArgs),
    /// Measure how prepending the filled template to prompts shifts ASR.
    InjectText(InjectTextArgs),
    /// Write a deterministic base image (PPM or CIAF1 by extension).
    MakeImage(MakeImageArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Master seed routed to the model, the attack schedule, and the prompt
    /// split. Leave unset to keep the seeds from --config (or the defaults).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory root; each run writes into a run-<id> subdirectory.
    #[arg(long, default_value = "cia-out")]
    out: PathBuf,
    /// Worker threads for sweep/compare cells (1 = sequential).
    #[arg(long)]
    jobs: Option<usize>,
    /// Run-config JSON file applied before any flag overrides.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct AttackFlags {
    /// Target word to inject.
    #[arg(long)]
    target: Option<String>,
    /// L-infinity budget; accepts fractions such as 16/255.
    #[arg(long, value_parser = parse_float_flag)]
    eps: Option<f64>,
    /// Step size per iteration; accepts fractions.
    #[arg(long, value_parser = parse_float_flag)]
    eta: Option<f64>,
    /// Number of attack iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Output-vs-context weight in [0,1]; accepts fractions.
    #[arg(long, value_parser = parse_float_flag)]
    alpha: Option<f64>,
    /// Visual-vs-textual weight in [0,1]; accepts fractions.
    #[arg(long, value_parser = parse_float_flag)]
    beta: Option<f64>,
    /// Attack variant: cia, cia_image, cia_text, single_p, multi_p.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Misleading template; "{target}" marks the insertion point.
    #[arg(long)]
    template: Option<String>,
    /// Prompt padding strategy: none, prefix, suffix, mixed.
    #[arg(long, value_parser = parse_padding)]
    padding_strategy: Option<PaddingStrategy>,
    /// Number of padding tokens inserted by the padding strategy.
    #[arg(long)]
    padding_count: Option<usize>,
    /// Single-character padding token (must be in the vocabulary).
    #[arg(long)]
    padding_token: Option<String>,
    /// Stop early once the total loss falls below this value.
    #[arg(long, value_parser = parse_float_flag)]
    early_stop: Option<f64>,
    /// Train-prompt file ('#' comments, one prompt per line).
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Bundled category supplying train prompts (default cls).
    #[arg(long, value_parser = parse_category)]
    category: Option<Category>,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    attack: AttackFlags,
    /// Base image file (.ppm or .ciaf1); defaults to the built-in ramp.
    #[arg(long)]
    image: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Image to evaluate (.ppm or .ciaf1); defaults to the built-in ramp.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Target word to count as a hit.
    #[arg(long)]
    target: Option<String>,
    /// Bundled split to evaluate on: train or eval.
    #[arg(long, default_value = "eval", value_parser = parse_split)]
    split: Split,
    /// Prompt file replacing the bundled corpus.
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Category label for --prompts (default cls).
    #[arg(long, value_parser = parse_category)]
    category: Option<Category>,
    /// Greedy-generation horizon.
    #[arg(long)]
    max_new: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Image to analyze (.ppm or .ciaf1); defaults to the built-in ramp.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Target word profiled across positions.
    #[arg(long)]
    target: Option<String>,
    /// Prompt to analyze; defaults to the first bundled cls eval prompt.
    #[arg(long)]
    prompt: Option<String>,
    /// Top-k size for the per-position decoding table.
    #[arg(long, default_value_t = 5)]
    topk: usize,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    attack: AttackFlags,
    /// Base image file; defaults to the built-in ramp.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Greedy-generation horizon for evaluation.
    #[arg(long)]
    max_new: Option<usize>,
}

#[derive(Args)]
struct SweepAbArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    attack: AttackFlags,
    /// Base image file; defaults to the built-in ramp.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Comma-separated alpha values; fractions accepted.
    #[arg(long, value_delimiter = ',', value_parser = parse_float_flag, default_value = "0,0.5,1")]
    alphas: Vec<f64>,
    /// Comma-separated beta values; fractions accepted.
    #[arg(long, value_delimiter = ',', value_parser = parse_float_flag, default_value = "0,0.5,1")]
    betas: Vec<f64>,
    /// Greedy-generation horizon for evaluation.
    #[arg(long)]
    max_new: Option<usize>,
}

#[derive(Args)]
struct SweepEpsArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    attack: AttackFlags,
    /// Base image file; defaults to the built-in ramp.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Comma-separated epsilon values; fractions such as 16/255 accepted.
    #[arg(long, value_delimiter = ',', value_parser = parse_float_flag, default_value = "8/255,16/255,32/255")]
    eps: Vec<f64>,
    /// Greedy-generation horizon for evaluation.
    #[arg(long)]
    max_new: Option<usize>,
}

#[derive(Args)]
struct InjectTextArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Image the prompts are evaluated against; defaults to the ramp.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Target word filled into the template.
    #[arg(long)]
    target: Option<String>,
    /// Misleading template; "{target}" marks the insertion point.
    #[arg(long)]
    template: Option<String>,
    /// Bundled split to evaluate on: train or eval.
    #[arg(long, default_value = "eval", value_parser = parse_split)]
    split: Split,
    /// Greedy-generation horizon.
    #[arg(long)]
    max_new: Option<usize>,
}

#[derive(Args)]
struct MakeImageArgs {
    /// Image kind: gray, ramp, or noise.
    #[arg(long)]
    kind: String,
    /// Gray level for --kind gray.
    #[arg(long, default_value_t = 0.5, value_parser = parse_float_flag)]
    value: f64,
    /// Seed for --kind noise.
    #[arg(long, default_value_t = 0)]
    image_seed: u64,
    /// Edge length in pixels (must be divisible by the model patch size).
    #[arg(long, default_value_t = 16)]
    size: usize,
    /// Destination file; .ppm writes 8-bit PPM, anything else CIAF1.
    #[arg(long)]
    file: PathBuf,
}

fn parse_float_flag(s: &str) -> Result<f64, CiaError> {
    parse_float_token(s)
}

fn parse_variant(s: &str) -> Result<Variant, CiaError> {
    s.parse()
}

fn parse_category(s: &str) -> Result<Category, CiaError> {
    s.parse()
}

fn parse_split(s: &str) -> Result<Split, CiaError> {
    s.parse()
}

fn parse_padding(s: &str) -> Result<PaddingStrategy, CiaError> {
    s.parse()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Attack(args) => cmd_attack(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Compare(args) => cmd_compare(args),
        Command::SweepAb(args) => cmd_sweep_ab(args),
        Command::SweepEps(args) => cmd_sweep_eps(args),
        Command::InjectText(args) => cmd_inject_text(args),
        Command::MakeImage(args) => cmd_make_image(args),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing

fn base_config(common: &CommonArgs) -> anyhow::Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => load_run_config(path)
            .with_context(|| format!("loading run config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.set_seed(seed);
    }
    if let Some(jobs) = common.jobs {
        config.jobs = jobs;
    }
    Ok(config)
}

fn apply_attack_flags(config: &mut RunConfig, flags: &AttackFlags) {
    let attack = &mut config.attack;
    if let Some(v) = flags.eps {
        attack.epsilon_v = v;
    }
    if let Some(v) = flags.eta {
        attack.eta = v;
    }
    if let Some(v) = flags.iters {
        attack.max_iters = v;
    }
    if let Some(v) = flags.alpha {
        attack.weights.alpha = v;
    }
    if let Some(v) = flags.beta {
        attack.weights.beta = v;
    }
    if let Some(v) = flags.variant {
        attack.variant = v;
    }
    if let Some(v) = &flags.target {
        attack.injection.target_text = v.clone();
    }
    if let Some(v) = &flags.template {
        attack.injection.misleading_template = v.clone();
    }
    if let Some(v) = flags.padding_strategy {
        attack.injection.padding_strategy = v;
    }
    if let Some(v) = flags.padding_count {
        attack.injection.padding_count = v;
    }
    if let Some(v) = &flags.padding_token {
        attack.injection.padding_token = v.clone();
    }
    if let Some(v) = flags.early_stop {
        attack.early_stop_loss = Some(v);
    }
}

/// Fill `config.attack.train_prompts`: an explicit file wins, then an
/// explicit category, then whatever the config already carries, then the
/// bundled cls train split.
fn resolve_train_prompts(config: &mut RunConfig, flags: &AttackFlags) -> anyhow::Result<()> {
    if let Some(path) = &flags.prompts {
        let category = flags.category.unwrap_or(Category::Cls);
        let set = load_prompts(path, category, Split::Train)
            .with_context(|| format!("loading prompts {}", path.display()))?;
        config.attack.train_prompts = set.prompts;
        config.prompt_files = vec![PromptFileEntry {
            category,
            split: Split::Train,
            path: path.display().to_string(),
        }];
        return Ok(());
    }
    if flags.category.is_some() || config.attack.train_prompts.is_empty() {
        let category = flags.category.unwrap_or(Category::Cls);
        let corpus = split_bundled_corpus(config.prompt_split_seed);
        config.attack.train_prompts = corpus.set(category, Split::Train).prompts.clone();
    }
    Ok(())
}

fn resolve_out(common: &CommonArgs) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => common.out.clone(),
    }
}

fn load_image_file(path: &Path) -> anyhow::Result<ImageTensor<f32>> {
    let by_ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.eq_ignore_ascii_case("ppm"))
        .unwrap_or(false);
    let image = if by_ext {
        load_image_ppm(path)?
    } else {
        load_image_f32(path)?
    };
    Ok(image)
}

/// The image a run operates on: the --image flag, then the config's
/// image_path, then the built-in deterministic ramp.
fn resolve_image(
    flag: &Option<PathBuf>,
    config: &mut RunConfig,
) -> anyhow::Result<ImageTensor<f32>> {
    if let Some(path) = flag {
        config.image_path = Some(path.display().to_string());
        return load_image_file(path);
    }
    if let Some(path) = config.image_path.clone() {
        return load_image_file(Path::new(&path));
    }
    let side = config.dims.image_size;
    Ok(ImageTensor::ramp(side, side))
}

fn build_model(config: &RunConfig) -> anyhow::Result<ModelWeights<f32>> {
    Ok(init_model(config.model_seed, config.dims)?)
}

fn bundled_sets(config: &RunConfig, split: Split) -> Vec<PromptSet> {
    let corpus = split_bundled_corpus(config.prompt_split_seed);
    match split {
        Split::Train => corpus.train,
        Split::Eval => corpus.eval,
    }
}

/// Create the per-run directory and write the record plus its flat tables.
fn write_record(record: &ResultRecord, out_root: &Path) -> anyhow::Result<PathBuf> {
    let run_dir = out_root.join(format!("run-{}", &record.run_id[..12]));
    fs::create_dir_all(&run_dir)
        .with_context(|| format!("creating output directory {}", run_dir.display()))?;
    write_report(record, &run_dir)?;
    Ok(run_dir)
}

fn print_asr(label: &str, report: &AsrReport) {
    for c in &report.per_category {
        println!("{label} {} {}/{} ({:.4})", c.category, c.hits, c.total, c.asr);
    }
    println!(
        "{label} overall {}/{} ({:.4})",
        report.hits, report.total, report.overall_asr
    );
}

fn print_profile(label: &str, profile: &CeProfile) {
    println!(
        "{label} mean CE: visual {:.6} text {:.6} generated {:.6}",
        profile.visual_mean, profile.text_mean, profile.generated_mean
    );
}

// ---------------------------------------------------------------------------
// Subcommands

fn cmd_attack(args: AttackArgs) -> anyhow::Result<()> {
    let out_root = resolve_out(&args.common);
    let mut config = base_config(&args.common)?;
    apply_attack_flags(&mut config, &args.attack);
    resolve_train_prompts(&mut config, &args.attack)?;
    let image = resolve_image(&args.image, &mut config)?;
    config.validate()?;
    config.attack.validate()?;

    let model = build_model(&config)?;
    let (adversarial, state) = run_attack(&model, &image, &config.attack)?;

    let mut record = ResultRecord::new(config)?;
    record.loss_history = state.loss_history.clone();
    record.artifacts = vec!["adversarial.ciaf1".to_string(), "adversarial.ppm".to_string()];
    let run_dir = write_record(&record, &out_root)?;
    save_image_f32(&adversarial, run_dir.join("adversarial.ciaf1"))?;
    save_image_ppm(&adversarial, run_dir.join("adversarial.ppm"))?;

    let first = state.loss_history.first();
    let last = state.loss_history.last();
    println!(
        "run {} variant {} target {:?} iterations {}",
        &record.run_id[..12],
        record.config.attack.variant,
        record.config.attack.injection.target_text,
        state.iteration
    );
    if let (Some(first), Some(last)) = (first, last) {
        println!(
            "loss {:.6} -> {:.6} (l_v {:.6}, l_t {:.6}, l_o {:.6})",
            first.l_total, last.l_total, last.l_v, last.l_t, last.l_o
        );
    }
    println!("wrote {}", run_dir.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let out_root = resolve_out(&args.common);
    let mut config = base_config(&args.common)?;
    if let Some(target) = &args.target {
        config.attack.injection.target_text = target.clone();
    }
    if let Some(max_new) = args.max_new {
        config.max_new = max_new;
    }
    let image = resolve_image(&args.image, &mut config)?;
    config.validate()?;

    let sets = match &args.prompts {
        Some(path) => {
            let category = args.category.unwrap_or(Category::Cls);
            config.prompt_files = vec![PromptFileEntry {
                category,
                split: args.split,
                path: path.display().to_string(),
            }];
            vec![load_prompts(path, category, args.split)
                .with_context(|| format!("loading prompts {}", path.display()))?]
        }
        None => bundled_sets(&config, args.split),
    };

    let model = build_model(&config)?;
    let target = config.attack.injection.target_text.clone();
    let report = evaluate_asr(&model, &image, &sets, &target, config.max_new)?;

    let mut record = ResultRecord::new(config)?;
    record.asr_reports = vec![LabeledAsr {
        label: format!("{}", args.split),
        report: report.clone(),
    }];
    let run_dir = write_record(&record, &out_root)?;

    println!("run {} target {:?} split {}", &record.run_id[..12], target, args.split);
    print_asr("asr", &report);
    println!("wrote {}", run_dir.display());
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> anyhow::Result<()> {
    let out_root = resolve_out(&args.common);
    let mut config = base_config(&args.common)?;
    if let Some(target) = &args.target {
        config.attack.injection.target_text = target.clone();
    }
    let image = resolve_image(&args.image, &mut config)?;
    config.validate()?;

    let prompt = match &args.prompt {
        Some(p) => p.clone(),
        None => bundled_sets(&config, Split::Eval)[0].prompts[0].clone(),
    };
    let model = build_model(&config)?;
    let target = config.attack.injection.target_text.clone();
    let profile = ce_by_position(&model, &image, &prompt, &target, &config.attack.injection)?;
    let topk = topk_decode_by_position(&model, &image, &prompt, args.topk)?;

    let mut record = ResultRecord::new(config)?;
    record.ce_profiles = vec![LabeledCeProfile {
        label: prompt.clone(),
        profile: profile.clone(),
    }];
    record.artifacts = vec!["topk.csv".to_string()];
    let run_dir = write_record(&record, &out_root)?;

    let mut table = String::from("position,rank,token_id,token,probability\n");
    for (position, row) in topk.iter().enumerate() {
        for (rank, entry) in row.iter().enumerate() {
            table.push_str(&format!(
                "{position},{},{},{},{}\n",
                rank + 1,
                entry.token,
                entry.text,
                entry.probability
            ));
        }
    }
    let topk_path = run_dir.join("topk.csv");
    fs::write(&topk_path, table)
        .with_context(|| format!("writing {}", topk_path.display()))?;

    println!("run {} target {:?} prompt {:?}", &record.run_id[..12], target, prompt);
    print_profile("profile", &profile);
    if let Some(last) = topk.last() {
        let rendered: Vec<String> = last
            .iter()
            .map(|t| format!("{}:{:.4}", t.text, t.probability))
            .collect();
        println!("top-{} at final position: {}", args.topk, rendered.join(" "));
    }
    println!("wrote {}", run_dir.display());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<()> {
    let out_root = resolve_out(&args.common);
    let mut config = base_config(&args.common)?;
    apply_attack_flags(&mut config, &args.attack);
    resolve_train_prompts(&mut config, &args.attack)?;
    if let Some(max_new) = args.max_new {
        config.max_new = max_new;
    }
    let image = resolve_image(&args.image, &mut config)?;
    config.validate()?;
    config.attack.validate()?;

    let model = build_model(&config)?;
    let eval_sets = bundled_sets(&config, Split::Eval);
    let table = compare_methods(
        &model,
        &image,
        &config.attack,
        &eval_sets,
        config.max_new,
        config.jobs,
    )?;

    let mut record = ResultRecord::new(config)?;
    record.method_table = table.clone();
    let run_dir = write_record(&record, &out_root)?;

    println!("run {}", &record.run_id[..12]);
    for row in &table {
        let per: Vec<String> = row
            .report
            .per_category
            .iter()
            .map(|c| format!("{} {:.4}", c.category, c.asr))
            .collect();
        println!(
            "{:<10} {} overall {:.4}",
            row.variant.to_string(),
            per.join(" "),
            row.report.overall_asr
        );
    }
    println!("wrote {}", run_dir.display());
    Ok(())
}

fn cmd_sweep_ab(args: SweepAbArgs) -> anyhow::Result<()> {
    let out_root = resolve_out(&args.common);
    let mut config = base_config(&args.common)?;
    apply_attack_flags(&mut config, &args.attack);
    resolve_train_prompts(&mut config, &args.attack)?;
    if let Some(max_new) = args.max_new {
        config.max_new = max_new;
    }
    let image = resolve_image(&args.image, &mut config)?;
    config.validate()?;
    config.attack.validate()?;

    let mut grid = Vec::new();
    for &alpha in &args.alphas {
        for &beta in &args.betas {
            grid.push((alpha, beta));
        }
    }
    let model = build_model(&config)?;
    let eval_sets = bundled_sets(&config, Split::Eval);
    let cells = sweep_alpha_beta(
        &model,
        &image,
        &config.attack,
        &grid,
        &eval_sets,
        config.max_new,
        config.jobs,
    )?;

    let mut record = ResultRecord::new(config)?;
    record.sweep_ab = cells.clone();
    let run_dir = write_record(&record, &out_root)?;

    println!("run {}", &record.run_id[..12]);
    for cell in &cells {
        println!("alpha {:.4} beta {:.4} asr {:.4}", cell.alpha, cell.beta, cell.overall_asr);
    }
    println!("wrote {}", run_dir.display());
    Ok(())
}

fn cmd_sweep_eps(args: SweepEpsArgs) -> anyhow::Result<()> {
    let out_root = resolve_out(&args.common);
    let mut config = base_config(&args.common)?;
    apply_attack_flags(&mut config, &args.attack);
    resolve_train_prompts(&mut config, &args.attack)?;
    if let Some(max_new) = args.max_new {
        config.max_new = max_new;
    }
    let image = resolve_image(&args.image, &mut config)?;
    config.validate()?;
    config.attack.validate()?;

    let model = build_model(&config)?;
    let eval_sets = bundled_sets(&config, Split::Eval);
    let rows = sweep_epsilon(
        &model,
        &image,
        &config.attack,
        &args.eps,
        &eval_sets,
        config.max_new,
        config.jobs,
    )?;

    let mut record = ResultRecord::new(config)?;
    record.sweep_eps = rows.clone();
    let run_dir = write_record(&record, &out_root)?;

    println!("run {}", &record.run_id[..12]);
    for row in &rows {
        println!(
            "eps {:.6} asr {}/{} ({:.4})",
            row.epsilon, row.report.hits, row.report.total, row.report.overall_asr
        );
    }
    println!("wrote {}", run_dir.display());
    Ok(())
}

fn cmd_inject_text(args: InjectTextArgs) -> anyhow::Result<()> {
    let out_root = resolve_out(&args.common);
    let mut config = base_config(&args.common)?;
    if let Some(target) = &args.target {
        config.attack.injection.target_text = target.clone();
    }
    if let Some(template) = &args.template {
        config.attack.injection.misleading_template = template.clone();
    }
    if let Some(max_new) = args.max_new {
        config.max_new = max_new;
    }
    let image = resolve_image(&args.image, &mut config)?;
    config.validate()?;

    let model = build_model(&config)?;
    let sets = bundled_sets(&config, args.split);
    let target = config.attack.injection.target_text.clone();
    let clean = evaluate_asr(&model, &image, &sets, &target, config.max_new)?;
    let injected =
        textual_injection_eval(&model, &image, &sets, &config.attack.injection, config.max_new)?;

    let mut record = ResultRecord::new(config)?;
    record.asr_reports = vec![
        LabeledAsr { label: "clean".to_string(), report: clean.clone() },
        LabeledAsr { label: "injected".to_string(), report: injected.clone() },
    ];
    let run_dir = write_record(&record, &out_root)?;

    println!("run {} target {:?}", &record.run_id[..12], target);
    print_asr("clean", &clean);
    print_asr("injected", &injected);
    println!(
        "overall shift {:+.4}",
        injected.overall_asr - clean.overall_asr
    );
    println!("wrote {}", run_dir.display());
    Ok(())
}

fn cmd_make_image(args: MakeImageArgs) -> anyhow::Result<()> {
    let side = args.size;
    let image: ImageTensor<f32> = match args.kind.as_str() {
        "gray" => ImageTensor::filled(side, side, args.value)?,
        "ramp" => ImageTensor::ramp(side, side),
        "noise" => {
            let mut rng = SplitMix64::new(args.image_seed);
            let values: Vec<f64> = (0..side * side * 3)
                .map(|_| rng.next_range(0.0, 1.0))
                .collect();
            ImageTensor::from_f64(side, side, &values)?
        }
        other => anyhow::bail!("unknown image kind {other:?} (expected gray, ramp, or noise)"),
    };
    if let Some(parent) = args.file.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating directory {}", parent.display()))?;
        }
    }
    let is_ppm = args
        .file
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.eq_ignore_ascii_case("ppm"))
        .unwrap_or(false);
    if is_ppm {
        save_image_ppm(&image, &args.file)?;
    } else {
        save_image_f32(&image, &args.file)?;
    }
    println!("wrote {}", args.file.display());
    Ok(())
}
