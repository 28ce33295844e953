use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spkb_core::backend::{
    apply_mean_norm, compute_mean, length_norm, plda_adapt, plda_train_with, read_mean,
    score_trials_with, write_mean, PldaModel, Scorer,
};
use spkb_core::diarize::{
    diarize_all_with, merge_vad, subsegment, subsegment_key, ClusterConfig, SubsegmentPlan,
};
use spkb_core::error::ErrorKind;
use spkb_core::kaldi_io::{
    format_rttm, format_scores, load_embeddings, read_lab, read_rttm, read_scores, read_trials,
    read_utt2spk,
};
use spkb_core::margin::{
    accuracy, toy_train, InterTopKConfig, MarginConfig, SubCenterConfig, TrainConfig, Variant,
};
use spkb_core::metrics::{compute_der_with, eer_from_scores, labeled_scores, min_dcf_from_scores};
use spkb_core::metrics::{DcfParams, DerConfig};
use spkb_core::par::Execution;
use spkb_core::synthetic::gaussian_clusters;
use spkb_core::{Diarization, EmbeddingSet, Error, Result};

#[derive(Parser)]
#[command(
    name = "spkb",
    version,
    about = "Speaker verification and diarization back-end toolkit"
)]
struct Cli {
    /// Run batch work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a mean vector for mean normalization.
    Mean {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score trials.
    #[command(subcommand)]
    Score(ScoreCommand),
    /// Train, adapt and score with two-covariance PLDA.
    #[command(subcommand)]
    Plda(PldaCommand),
    /// Verification and diarization metrics.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Spectral-clustering diarization of subsegment embeddings.
    Diarize(DiarizeCommand),
    /// Train a margin-softmax head on synthetic clusters and print the loss trace.
    TrainToy(TrainToyArgs),
}

#[derive(Subcommand)]
enum ScoreCommand {
    /// Cosine similarity, optionally after mean subtraction.
    Cosine {
        #[arg(long)]
        enroll: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        mean: Option<PathBuf>,
        /// Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Preprocess {
    /// Subtract this mean before anything else.
    #[arg(long)]
    mean: Option<PathBuf>,
    /// Skip length normalization.
    #[arg(long)]
    no_length_norm: bool,
}

#[derive(Subcommand)]
enum PldaCommand {
    /// EM training; prints `iter,loglik` per iteration.
    Train {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        utt2spk: PathBuf,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        pre: Preprocess,
    },
    /// Unsupervised adaptation to unlabeled in-domain embeddings.
    Adapt {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        split: f64,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        pre: Preprocess,
    },
    /// Log-likelihood-ratio scoring.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        enroll: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        pre: Preprocess,
    },
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// Prints `EER=<percent> minDCF=<value> thresholds=<eer>,<dcf>`.
    EerDcf {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        p_target: f64,
        #[arg(long, default_value_t = 1.0)]
        c_miss: f64,
        #[arg(long, default_value_t = 1.0)]
        c_fa: f64,
    },
    /// Prints `MISS=<pct> FA=<pct> SC=<pct> DER=<pct>`.
    Der {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        collar: f64,
        #[arg(long)]
        no_score_overlap: bool,
    },
}

#[derive(Args)]
struct PlanArgs {
    /// VAD as a lab file (one recording) or an RTTM file (any number).
    #[arg(long, required = true)]
    vad: Option<PathBuf>,
    /// Recording id for a lab file; defaults to the file stem.
    #[arg(long)]
    recording_id: Option<String>,
    #[arg(long, default_value_t = 1.5)]
    window: f64,
    #[arg(long, default_value_t = 0.75)]
    shift: f64,
    #[arg(long, default_value_t = 0.25)]
    min_dur: f64,
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
struct DiarizeCommand {
    #[command(subcommand)]
    plan: Option<DiarizeSub>,
    #[command(flatten)]
    args: DiarizeArgs,
}

#[derive(Subcommand)]
enum DiarizeSub {
    /// Print `<key> <rec> <start> <end>` for every planned subsegment.
    Plan {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DiarizeArgs {
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long, required = true)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    p_percentile: f64,
    #[arg(long, default_value_t = 20)]
    max_speakers: usize,
    #[arg(long)]
    num_speakers: Option<usize>,
    #[arg(long, default_value_t = 10)]
    kmeans_restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// RTTM destination; defaults to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TrainToyArgs {
    /// softmax, a_softmax, am_softmax or aam_softmax.
    #[arg(long, default_value = "aam")]
    variant: String,
    #[arg(long, default_value_t = 0.2)]
    margin: f64,
    #[arg(long, default_value_t = 30.0)]
    scale: f64,
    #[arg(long, default_value_t = 1)]
    sub_centers: usize,
    #[arg(long, default_value_t = 0)]
    topk: usize,
    #[arg(long, default_value_t = 0.06)]
    topk_margin: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 25)]
    per_class: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 8.0)]
    separation: f64,
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::Io {
                    path: "<stdout>".into(),
                    source: e,
                })
        }
    }
}

fn preprocess(set: EmbeddingSet, pre: &Preprocess) -> Result<EmbeddingSet> {
    let set = match &pre.mean {
        Some(m) => apply_mean_norm(&set, &read_mean(m)?)?,
        None => set,
    };
    if pre.no_length_norm {
        Ok(set)
    } else {
        length_norm(&set)
    }
}

fn load_vad(plan: &PlanArgs) -> Result<Diarization> {
    let vad = required(&plan.vad, "--vad")?;
    let is_rttm = vad
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("rttm"));
    if is_rttm {
        return read_rttm(vad);
    }
    let rec = match &plan.recording_id {
        Some(r) => r.clone(),
        None => vad
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| Error::InvalidArgument("cannot derive a recording id".into()))?,
    };
    Ok(Diarization::from_segments(read_lab(vad, &rec)?))
}

fn subsegment_plan(plan: &PlanArgs) -> Result<SubsegmentPlan> {
    SubsegmentPlan::new(plan.window, plan.shift, plan.min_dur)
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match cli.command {
        Command::Mean { embeddings, output } => {
            let mean = compute_mean(&load_embeddings(&embeddings)?)?;
            write_mean(&mean, &output)?;
            eprintln!("mean of {} embeddings written", mean.count);
        }
        Command::Score(ScoreCommand::Cosine {
            enroll,
            test,
            trials,
            mean,
            output,
        }) => {
            let mut e = load_embeddings(&enroll)?;
            let mut t = load_embeddings(&test)?;
            if let Some(m) = mean {
                let m = read_mean(&m)?;
                e = apply_mean_norm(&e, &m)?;
                t = apply_mean_norm(&t, &m)?;
            }
            let scores = score_trials_with(exec, &Scorer::Cosine, &e, &t, &read_trials(&trials)?)?;
            emit(output.as_deref(), &format_scores(&scores))?;
        }
        Command::Plda(cmd) => plda(exec, cmd)?,
        Command::Metrics(cmd) => metrics(exec, cmd)?,
        Command::Diarize(cmd) => diarize(exec, cmd)?,
        Command::TrainToy(args) => train_toy(args)?,
    }
    Ok(())
}

fn plda(exec: Execution, cmd: PldaCommand) -> Result<()> {
    match cmd {
        PldaCommand::Train {
            embeddings,
            utt2spk,
            iters,
            output,
            pre,
        } => {
            let set = preprocess(load_embeddings(&embeddings)?, &pre)?;
            let trained = plda_train_with(exec, &set, &read_utt2spk(&utt2spk)?, iters)?;
            trained.model.save(&output)?;
            let mut csv = String::from("iter,loglik\n");
            for (i, ll) in trained.log_likelihood.iter().enumerate() {
                csv.push_str(&format!("{i},{ll:.6}\n"));
            }
            emit(None, &csv)?;
        }
        PldaCommand::Adapt {
            model,
            embeddings,
            alpha,
            split,
            output,
            pre,
        } => {
            let set = preprocess(load_embeddings(&embeddings)?, &pre)?;
            plda_adapt(&PldaModel::load(&model)?, &set, alpha, split)?.save(&output)?;
        }
        PldaCommand::Score {
            model,
            enroll,
            test,
            trials,
            output,
            pre,
        } => {
            let scorer = Scorer::plda(&PldaModel::load(&model)?)?;
            let e = preprocess(load_embeddings(&enroll)?, &pre)?;
            let t = preprocess(load_embeddings(&test)?, &pre)?;
            let scores = score_trials_with(exec, &scorer, &e, &t, &read_trials(&trials)?)?;
            emit(output.as_deref(), &format_scores(&scores))?;
        }
    }
    Ok(())
}

fn metrics(exec: Execution, cmd: MetricsCommand) -> Result<()> {
    match cmd {
        MetricsCommand::EerDcf {
            scores,
            trials,
            p_target,
            c_miss,
            c_fa,
        } => {
            let params = DcfParams::new(p_target, c_miss, c_fa)?;
            let (tar, non) = labeled_scores(&read_scores(&scores)?, &read_trials(&trials)?)?;
            let eer = eer_from_scores(&tar, &non)?;
            let dcf = min_dcf_from_scores(&tar, &non, &params)?;
            emit(
                None,
                &format!(
                    "EER={:.3} minDCF={:.4} thresholds={:.6},{:.6}\n",
                    100.0 * eer.eer,
                    dcf.min_dcf,
                    eer.threshold,
                    dcf.threshold
                ),
            )?;
        }
        MetricsCommand::Der {
            reference,
            hyp,
            collar,
            no_score_overlap,
        } => {
            let cfg = DerConfig {
                collar,
                score_overlap: !no_score_overlap,
            };
            let d = compute_der_with(exec, &read_rttm(&reference)?, &read_rttm(&hyp)?, &cfg)?;
            emit(
                None,
                &format!(
                    "MISS={:.3} FA={:.3} SC={:.3} DER={:.3}\n",
                    d.miss_pct, d.fa_pct, d.confusion_pct, d.der_pct
                ),
            )?;
        }
    }
    Ok(())
}

fn diarize(exec: Execution, cmd: DiarizeCommand) -> Result<()> {
    match (cmd.plan, cmd.args) {
        (Some(DiarizeSub::Plan { plan, output }), _) => {
            let sub = subsegment_plan(&plan)?;
            let vad = load_vad(&plan)?;
            let mut text = String::new();
            for (_, segs) in vad.recordings() {
                for s in subsegment(&merge_vad(segs), &sub) {
                    text.push_str(&format!(
                        "{} {} {:.3} {:.3}\n",
                        subsegment_key(&s),
                        s.recording_id,
                        s.start,
                        s.end
                    ));
                }
            }
            emit(output.as_deref(), &text)
        }
        (None, args) => {
            let sub = subsegment_plan(&args.plan)?;
            let cfg = ClusterConfig {
                p_percentile: args.p_percentile,
                max_speakers: args.max_speakers,
                fixed_speakers: args.num_speakers,
                kmeans_restarts: args.kmeans_restarts,
                seed: args.seed,
            };
            cfg.validate()?;
            let vad = load_vad(&args.plan)?;
            let embs = load_embeddings(required(&args.embeddings, "--embeddings")?)?;
            let hyp = diarize_all_with(exec, &vad, &embs, &sub, &cfg)?;
            emit(args.output.as_deref(), &format_rttm(&hyp))
        }
    }
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("diarize needs {flag}")))
}

fn train_toy(a: TrainToyArgs) -> Result<()> {
    let variant: Variant = a.variant.parse()?;
    if a.classes > a.dim {
        return Err(Error::InvalidArgument(format!(
            "--classes ({}) must not exceed --dim ({})",
            a.classes, a.dim
        )));
    }
    let data = gaussian_clusters(a.classes, a.per_class, a.dim, a.separation, a.seed);
    let cfg = TrainConfig {
        margin: MarginConfig::new(variant, a.scale, a.margin)?,
        sub: SubCenterConfig {
            centers: a.sub_centers,
        },
        itk: InterTopKConfig {
            k: a.topk,
            margin: a.topk_margin,
        },
        lr: a.lr,
        steps: a.steps,
        seed: a.seed,
    };
    let result = toy_train(&data, &cfg)?;
    let mut csv = String::from("step,loss\n");
    for (i, l) in result.trace.iter().enumerate() {
        csv.push_str(&format!("{i},{l:.8}\n"));
    }
    emit(None, &csv)?;
    eprintln!("training accuracy {:.4}", accuracy(&result.head, &data)?);
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as Clap;
            let code = match e.kind() {
                Clap::DisplayHelp | Clap::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spkb: error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
