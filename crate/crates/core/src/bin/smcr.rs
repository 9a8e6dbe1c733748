//! Command-line entry point for the full experiment lifecycle:
//! gen-data -> pretrain -> adapt -> eval, each stage consuming the previous
//! stage's serialized outputs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use smcr_core::clustering::report_to_csv;
use smcr_core::config::{ExperimentConfig, parse_domain_specs};
use smcr_core::data::{generate_domain, load_dataset, save_dataset, DomainDataset};
use smcr_core::error::Error;
use smcr_core::eval::per_query_csv;
use smcr_core::pipeline::{
    adapt, final_report, init_encoder, load_encoder, save_encoder, synthetic_pretrain,
};
use smcr_core::Result;

#[derive(Parser)]
#[command(name = "smcr", about = "Domain-adaptive embedding learning experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic/source/target dataset triple from a spec file.
    GenData {
        /// Line-oriented key=value spec with `<domain>.<field>` keys.
        #[arg(long)]
        spec: PathBuf,
        /// Output directory; receives synthetic/, source/, target/.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain one encoder on translated-synthetic + source data.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the two-branch adaptation and write branch states + run report.
    Adapt {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Re-evaluate saved branch encoders on the target dataset.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

/// Command-line overrides applied on top of the config file.
#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    /// ind (independent branches) or col (collaborative refinement).
    #[arg(long)]
    mode: Option<String>,
    /// Disable the cluster reliability criteria (ablation).
    #[arg(long)]
    no_criteria: bool,
    /// Start adaptation from a fresh seeded encoder (ablation).
    #[arg(long)]
    no_pretrain: bool,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        let t = &mut cfg.train;
        if let Some(seed) = self.seed {
            t.seed = seed;
        }
        if let Some(mode) = &self.mode {
            t.mode = mode.parse()?;
        }
        if self.no_criteria {
            t.criteria_enabled = false;
        }
        if self.no_pretrain {
            t.use_pretraining = false;
        }
        if let Some(v) = self.alpha {
            t.alpha = v;
        }
        if let Some(v) = self.beta {
            t.beta = v;
        }
        if let Some(v) = self.lambda {
            t.lambda = v;
        }
        if let Some(v) = self.tau {
            t.tau = v;
        }
        if let Some(v) = self.threads {
            t.threads = v;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        t.validate()
    }
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    overrides.apply(&mut cfg)?;
    for p in [&cfg.synthetic_path, &cfg.source_path, &cfg.target_path] {
        if !p.exists() {
            return Err(Error::Config(format!(
                "dataset path does not exist: {}",
                p.display()
            )));
        }
    }
    Ok(cfg)
}

fn load_artifact_dataset(path: &Path) -> Result<DomainDataset> {
    load_dataset(path)
}

fn require_artifact(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::Lookup(format!(
            "missing upstream artifact: {} (run the previous stage first)",
            path.display()
        )));
    }
    Ok(())
}

fn cmd_gen_data(spec: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec).map_err(Error::Io)?;
    let specs = parse_domain_specs(&text)?;
    for (name, spec) in ["synthetic", "source", "target"].iter().zip(&specs) {
        let ds = generate_domain(spec)?;
        save_dataset(&ds, &out.join(name))?;
        println!("wrote {} ({} samples)", out.join(name).display(), ds.len());
    }
    Ok(())
}

fn cmd_pretrain(cfg: &ExperimentConfig) -> Result<()> {
    let synthetic = load_artifact_dataset(&cfg.synthetic_path)?;
    let source = load_artifact_dataset(&cfg.source_path)?;
    let encoder = synthetic_pretrain(&synthetic, &source, &cfg.train)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(Error::Io)?;
    let path = cfg.out_dir.join("pretrained_encoder.txt");
    save_encoder(&encoder, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_adapt(cfg: &ExperimentConfig) -> Result<()> {
    let source = load_artifact_dataset(&cfg.source_path)?;
    let target = load_artifact_dataset(&cfg.target_path)?;
    let pretrained = if cfg.train.use_pretraining {
        let path = cfg.out_dir.join("pretrained_encoder.txt");
        require_artifact(&path)?;
        load_encoder(&path)?
    } else {
        init_encoder(source.dim, &cfg.train)?
    };
    let (b1, b2, report) = adapt(&pretrained, &source, &target, &cfg.train)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(Error::Io)?;
    save_encoder(&b1.encoder, &cfg.out_dir.join("branch1_encoder.txt"))?;
    save_encoder(&b2.encoder, &cfg.out_dir.join("branch2_encoder.txt"))?;
    std::fs::write(cfg.out_dir.join("report.csv"), report.to_csv()).map_err(Error::Io)?;
    std::fs::write(cfg.out_dir.join("metrics.txt"), report.metrics_text()).map_err(Error::Io)?;
    for (name, branch) in [("branch1", &b1), ("branch2", &b2)] {
        if let Some(rel) = &branch.last_report {
            std::fs::write(
                cfg.out_dir.join(format!("reliability_{name}.csv")),
                report_to_csv(rel),
            )
            .map_err(Error::Io)?;
        }
    }
    println!(
        "adapt done: fused mAP {:.4} (branch1 {:.4}, branch2 {:.4})",
        report.fused.map, report.branch1.map, report.branch2.map
    );
    Ok(())
}

fn cmd_eval(cfg: &ExperimentConfig) -> Result<()> {
    let target = load_artifact_dataset(&cfg.target_path)?;
    let p1 = cfg.out_dir.join("branch1_encoder.txt");
    let p2 = cfg.out_dir.join("branch2_encoder.txt");
    require_artifact(&p1)?;
    require_artifact(&p2)?;
    let enc1 = load_encoder(&p1)?;
    let enc2 = load_encoder(&p2)?;
    let report = final_report(&enc1, &enc2, &target, cfg.train.alpha, Vec::new())?;
    std::fs::write(cfg.out_dir.join("metrics.txt"), report.metrics_text()).map_err(Error::Io)?;

    // Per-query diagnostics on the fused embedding.
    let feats = smcr_core::pipeline::fused_embeddings(&enc1, &enc2, &target, cfg.train.alpha)?;
    let items: Vec<smcr_core::eval::RetrievalItem> = feats
        .into_iter()
        .zip(&target.samples)
        .map(|(feature, s)| smcr_core::eval::RetrievalItem {
            feature,
            identity: s.identity.unwrap_or(u32::MAX),
            camera: s.camera,
        })
        .collect();
    std::fs::write(
        cfg.out_dir.join("per_query.csv"),
        per_query_csv(&items, &items),
    )
    .map_err(Error::Io)?;
    print!("{}", report.metrics_text());
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match &cli.cmd {
        Cmd::GenData { spec, out } => cmd_gen_data(spec, out),
        Cmd::Pretrain { config, overrides } => cmd_pretrain(&load_config(config, overrides)?),
        Cmd::Adapt { config, overrides } => cmd_adapt(&load_config(config, overrides)?),
        Cmd::Eval { config, overrides } => cmd_eval(&load_config(config, overrides)?),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
