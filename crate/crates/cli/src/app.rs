//! Argument parsing and command dispatch behind the `preshape` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::synth::ShapeKind;
use crate::commands::{bench, perturb, register, synth, PerturbFlags};
use crate::io::{Format, SaveFormat};
use crate::{exit, CliError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "preshape", version, about = "Similarity-invariant point cloud registration")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Register SOURCE onto TEMPLATE.
    Register {
        source: PathBuf,
        template: PathBuf,
        /// Write the source mapped into the template frame.
        #[arg(long)]
        aligned: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "ply")]
        aligned_format: SaveFormat,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "auto")]
        format: Format,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a perturbed copy of INPUT with its ground-truth sidecar.
    Perturb {
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Item id used in the output file names; defaults to the input stem.
        #[arg(long)]
        name: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "auto")]
        format: Format,
        #[arg(long, value_enum, default_value = "ply")]
        save_format: SaveFormat,
        #[command(flatten)]
        flags: PerturbFlags,
    },
    /// Register every item of a corpus directory and report the metrics.
    Bench {
        corpus: PathBuf,
        /// Aggregate JSON report; printed to stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Per-item CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate a procedural corpus.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, value_enum, default_value = "asymmetric")]
        shape: ShapeKind,
        #[arg(long, default_value_t = 3000)]
        points: usize,
        /// Sample the perturbed copy independently of the template.
        #[arg(long)]
        independent: bool,
        /// Draw each item's defect fraction uniformly from [--defect, --defect-max].
        #[arg(long)]
        defect_max: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "ply")]
        save_format: SaveFormat,
        #[command(flatten)]
        flags: PerturbFlags,
    },
}

/// Overrides applied on top of the config file and the environment.
#[derive(Args, Debug)]
struct ConfigArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any key, e.g. --set target_count=2000. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Score poses on contour samples only.
    #[arg(long)]
    no_features: bool,
    /// Also require closest-point MSE below 1e-3 for a registration to count as a success.
    #[arg(long)]
    mse_condition: bool,
}

impl ConfigArgs {
    fn resolve(&self, env: &[(String, String)]) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(self.config.as_deref(), env.iter().cloned())?;
        for pair in &self.set {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {pair:?}")))?;
            cfg.set(key.trim(), value, "--set")?;
        }
        if let Some(n) = self.workers {
            cfg.worker_count = n;
        }
        if self.no_features {
            cfg.use_features = false;
        }
        if self.mse_condition {
            cfg.enable_mse_condition = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    match serde_json::to_string_pretty(value) {
        Ok(s) => println!("{s}"),
        Err(e) => eprintln!("cannot format report: {e}"),
    }
}

/// Executes a parsed command line with `env` as the environment.
pub fn execute(cli: Cli, env: &[(String, String)]) -> Result<(), CliError> {
    match cli.command {
        Command::Register {
            source,
            template,
            aligned,
            aligned_format,
            report,
            format,
            config,
        } => {
            let opts = register::RegisterOptions {
                source,
                template,
                format,
                config: config.resolve(env)?,
                aligned,
                aligned_format,
                report: report.clone(),
            };
            let out = register::run(&opts)?;
            if report.is_none() {
                print_json(&out);
            }
        }
        Command::Perturb {
            input,
            out_dir,
            name,
            seed,
            format,
            save_format,
            flags,
        } => {
            let opts = perturb::PerturbOptions {
                input,
                format,
                spec: flags.to_spec()?,
                seed,
                out_dir,
                name,
                save_format,
            };
            let paths = perturb::run(&opts)?;
            println!("{}", paths.perturbed.display());
        }
        Command::Bench { corpus, report, csv, config } => {
            let opts = bench::BenchOptions {
                corpus,
                config: config.resolve(env)?,
                report: report.clone(),
                csv,
            };
            let (_, summary) = bench::run(&opts)?;
            if report.is_none() {
                print_json(&summary);
            }
        }
        Command::Synth {
            out_dir,
            count,
            shape,
            points,
            independent,
            defect_max,
            seed,
            save_format,
            flags,
        } => {
            let opts = synth::SynthOptions {
                out_dir,
                count,
                shape,
                points,
                independent_sampling: independent,
                spec: flags.to_spec()?,
                defect_max,
                seed,
                save_format,
            };
            let items = synth::run(&opts)?;
            println!("wrote {} items", items.len());
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors and usage text go to stderr.
pub fn run<I, T>(args: I, env: &[(String, String)]) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::SUCCESS };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, env) {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use std::path::{Path, PathBuf};

    use preshape_align::eval::shapes::asymmetric_shape;
    use preshape_align::{apply_transform, RotationMatrix, SimilarityTransform, Vector3};

    use super::*;
    use crate::commands::bench::BenchSummary;
    use crate::commands::perturb::RecordFile;
    use crate::commands::register::RegisterReport;
    use crate::io::{load_cloud, save_cloud};

    fn preshape(args: &[&str]) -> u8 {
        preshape_env(args, &[])
    }

    fn preshape_env(args: &[&str], env: &[(&str, &str)]) -> u8 {
        let env: Vec<(String, String)> = env.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        run(std::iter::once("preshape").chain(args.iter().copied()), &env)
    }

    /// The error a command line fails with.
    fn failure(args: &[&str]) -> CliError {
        let cli = Cli::try_parse_from(std::iter::once("preshape").chain(args.iter().copied())).unwrap();
        execute(cli, &[]).unwrap_err()
    }

    fn fast() -> Vec<&'static str> {
        vec!["--set", "target_count=800", "--set", "rotation_steps=6", "--set", "translation_steps=3", "--workers", "2"]
    }

    fn write_shape(dir: &Path, name: &str, seed: u64, n: usize) -> PathBuf {
        let path = dir.join(name);
        save_cloud(&path, &asymmetric_shape(seed, n), SaveFormat::Ply).unwrap();
        path
    }

    fn s(p: &Path) -> &str {
        p.to_str().unwrap()
    }

    fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> T {
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn register_against_itself_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = write_shape(dir.path(), "a.ply", 1, 1000);
        let report = dir.path().join("r.json");
        let aligned = dir.path().join("aligned.ply");
        let mut args = vec!["register", s(&cloud), s(&cloud), "--report", s(&report), "--aligned", s(&aligned)];
        args.extend(fast());
        assert_eq!(preshape(&args), exit::SUCCESS);
        let r: RegisterReport = read_json(&report);
        assert_eq!(r.schema_version, 1);
        for (i, row) in r.result.transform.matrix.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-6, "{:?}", r.result.transform.matrix);
            }
        }
        assert_eq!(r.config.target_count, 800);
        assert_eq!(load_cloud(&aligned, Format::Auto).unwrap().len(), 1000);
    }

    #[test]
    fn register_recovers_a_seeded_transform() {
        let dir = tempfile::tempdir().unwrap();
        let template = write_shape(dir.path(), "t.ply", 2, 1500);
        let truth = SimilarityTransform::new(0.8, RotationMatrix::from_euler_zyx(0.7, -0.4, 2.5), Vector3::new(3.0, -1.0, 0.5)).unwrap();
        let source = dir.path().join("s.xyz");
        save_cloud(&source, &apply_transform(&truth, &asymmetric_shape(2, 1500)), SaveFormat::Xyz).unwrap();
        let report = dir.path().join("r.json");
        let code = preshape(&["register", s(&source), s(&template), "--report", s(&report), "--set", "target_count=1500"]);
        assert_eq!(code, exit::SUCCESS);
        let r: RegisterReport = read_json(&report);
        let m = preshape_align::Matrix3::from_fn(|i, j| r.result.transform.rotation[i][j]);
        let err = RotationMatrix::new(m).unwrap().angle_to(&truth.rotation().inverse()).to_degrees();
        assert!(err < 5.0, "rotation error {err}");
        assert!((r.result.transform.scale * 0.8 - 1.0).abs() < 0.02);
    }

    #[test]
    fn missing_input_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = write_shape(dir.path(), "a.ply", 1, 200);
        let missing = dir.path().join("missing.ply");
        let err = failure(&["register", s(&missing), s(&cloud)]);
        assert_eq!(err.exit_code(), exit::IO);
        assert!(err.to_string().contains("missing.ply"));
        assert_eq!(preshape(&["register", s(&missing), s(&cloud)]), exit::IO);
    }

    #[test]
    fn malformed_input_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.xyz");
        std::fs::write(&bad, "0 0 0\n1 1 1\n2 two 2\n").unwrap();
        let err = failure(&["register", s(&bad), s(&bad)]);
        assert_eq!(err.exit_code(), exit::IO);
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn too_few_points_is_a_registration_failure() {
        let dir = tempfile::tempdir().unwrap();
        let tiny = dir.path().join("tiny.xyz");
        std::fs::write(&tiny, "0 0 0\n1 0 0\n0 1 0\n0 0 1\n").unwrap();
        assert_eq!(preshape(&["register", s(&tiny), s(&tiny)]), exit::REGISTRATION);
    }

    #[test]
    fn bad_flags_and_config_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = write_shape(dir.path(), "a.ply", 1, 200);
        assert_eq!(preshape(&["frobnicate"]), exit::USAGE);
        assert_eq!(preshape(&["register", s(&cloud)]), exit::USAGE);
        assert_eq!(preshape(&["register", s(&cloud), s(&cloud), "--set", "colour=red"]), exit::USAGE);
        assert_eq!(preshape(&["register", s(&cloud), s(&cloud), "--set", "translation_steps=4"]), exit::USAGE);
        assert_eq!(preshape_env(&["register", s(&cloud), s(&cloud)], &[("PRESHAPE_KNN_K", "x")]), exit::USAGE);
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "knn_k = lots\n").unwrap();
        assert_eq!(preshape(&["register", s(&cloud), s(&cloud), "--config", s(&cfg)]), exit::USAGE);
        let out = dir.path().join("p");
        assert_eq!(preshape(&["perturb", s(&cloud), "--out-dir", s(&out), "--noise", "gaussian"]), exit::USAGE);
        assert_eq!(preshape(&["perturb", s(&cloud), "--out-dir", s(&out), "--defect", "1.5"]), exit::USAGE);
        assert_eq!(preshape(&["--help"]), exit::SUCCESS);
    }

    #[test]
    fn env_overrides_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = write_shape(dir.path(), "a.ply", 3, 900);
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "target_count = 700\nrotation_steps = 6\ntranslation_steps = 3\nseed = 5\n").unwrap();
        let report = dir.path().join("r.json");
        let args = ["register", s(&cloud), s(&cloud), "--config", s(&cfg), "--report", s(&report)];
        assert_eq!(preshape(&args), exit::SUCCESS);
        assert_eq!(read_json::<RegisterReport>(&report).config.target_count, 700);
        assert_eq!(preshape_env(&args, &[("PRESHAPE_TARGET_COUNT", "600")]), exit::SUCCESS);
        let overridden = read_json::<RegisterReport>(&report).config;
        assert_eq!((overridden.target_count, overridden.seed), (600, 5));
        // explicit flags win over the environment
        let mut with_flag = args.to_vec();
        with_flag.extend(["--set", "target_count=650"]);
        assert_eq!(preshape_env(&with_flag, &[("PRESHAPE_TARGET_COUNT", "600")]), exit::SUCCESS);
        assert_eq!(read_json::<RegisterReport>(&report).config.target_count, 650);
    }

    #[test]
    fn perturb_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = write_shape(dir.path(), "shape.ply", 4, 500);
        let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
        for (out, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
            assert_eq!(preshape(&["perturb", s(&cloud), "--out-dir", s(out), "--rotate", "--scale", "--seed", seed]), exit::SUCCESS);
        }
        for file in ["shape.perturbed.ply", "shape.record.json", "shape.template.ply"] {
            assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
        }
        assert_ne!(std::fs::read(a.join("shape.perturbed.ply")).unwrap(), std::fs::read(c.join("shape.perturbed.ply")).unwrap());
    }

    #[test]
    fn perturb_sidecar_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = write_shape(dir.path(), "shape.ply", 5, 1000);
        let out = dir.path().join("out");
        let args = ["perturb", s(&cloud), "--out-dir", s(&out), "--noise", "gaussian", "--r", "0.6", "--defect", "0.4", "--name", "x"];
        assert_eq!(preshape(&args), exit::SUCCESS);
        let rec: RecordFile = read_json(&out.join("x.record.json"));
        let noise = rec.record.noise.unwrap();
        assert_eq!(noise.r, 0.6);
        assert_eq!(noise.kind, preshape_align::eval::NoiseKind::Gaussian);
        assert_eq!(rec.record.defect_fraction, Some(0.4));
        assert_eq!(load_cloud(&out.join("x.perturbed.ply"), Format::Auto).unwrap().len(), 600);
    }

    #[test]
    fn bench_identity_corpus_and_skips() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        assert_eq!(preshape(&["synth", "--out-dir", s(&corpus), "--count", "2", "--points", "900", "--seed", "1"]), exit::SUCCESS);
        std::fs::copy(corpus.join("item_0000.perturbed.ply"), corpus.join("orphan.perturbed.ply")).unwrap();
        let report = dir.path().join("bench.json");
        let csv = dir.path().join("items.csv");
        let mut args = vec!["bench", s(&corpus), "--report", s(&report), "--csv", s(&csv)];
        args.extend(fast());
        assert_eq!(preshape(&args), exit::SUCCESS);
        let summary: BenchSummary = read_json(&report);
        assert_eq!(summary.rr, 1.0);
        assert_eq!((summary.items, summary.skipped), (2, 1));
        assert_eq!(summary.skipped_ids, vec!["orphan".to_string()]);
        assert!(summary.mean_gt_cos > 0.999 && summary.mean_mse < 1e-9);
        let text = std::fs::read_to_string(&csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("item_id,time_s,mse,mse_n,gt_cos,success"));
        assert_eq!(lines.filter(|l| l.ends_with(",true")).count(), 2);
    }

    #[test]
    fn empty_corpus_exits_three() {
        let dir = tempfile::tempdir().unwrap();
        let err = failure(&["bench", s(dir.path())]);
        assert_eq!(err.exit_code(), exit::CORPUS);
        assert!(err.to_string().contains("no items"));
    }
}
