//! Subcommand implementations.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rayon::prelude::*;
use ssc_core::ahc::{ahc_cluster, AhcStop, Linkage};
use ssc_core::data::{
    load_embeddings_auto, load_rttm, load_segments, synth_recording, write_embeddings_csv,
    write_rttm, write_segments, Recording, SynthConfig,
};
use ssc_core::pic::{pic_cluster, PicState};
use ssc_core::repnet::{SamplingStrategy, TrainConfig};
use ssc_core::scoring::{der, partition_to_annotation, DerBreakdown, DerOptions};
use ssc_core::similarity::{cosine_matrix, temporal_weight, PcaTarget};
use ssc_core::ssc::{
    estimate_num_clusters, init_network, run_ssc, ClusterMethod, InitMethod, SscConfig, SscTrace,
};
use ssc_core::{Error, Partition, Result};

use crate::cfgfile::{resolve, resolve_opt, ConfigFile};
use crate::{CompareArgs, PipelineOpts, RunArgs, ScoreArgs, SynthArgs, SynthOpts};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum System {
    Ahc,
    Pic,
    SscAhc,
    SscPic,
}

impl System {
    fn parse(name: &str) -> Result<System> {
        match name {
            "ahc" => Ok(System::Ahc),
            "pic" => Ok(System::Pic),
            "ssc-ahc" => Ok(System::SscAhc),
            "ssc-pic" => Ok(System::SscPic),
            other => Err(Error::Config(format!(
                "unknown system {other:?} (expected ahc | pic | ssc-ahc | ssc-pic)"
            ))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            System::Ahc => "ahc",
            System::Pic => "pic",
            System::SscAhc => "ssc-ahc",
            System::SscPic => "ssc-pic",
        }
    }

    fn is_ssc(self) -> bool {
        matches!(self, System::SscAhc | System::SscPic)
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ConfigFile> {
    match path {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

fn resolve_synth(opts: &SynthOpts, seed: Option<u64>, file: &ConfigFile) -> Result<SynthConfig> {
    let d = SynthConfig::default();
    Ok(SynthConfig {
        num_speakers: resolve(opts.num_speakers, file.get("num-speakers")?, d.num_speakers),
        dim: resolve(opts.dim, file.get("dim")?, d.dim),
        mean_separation: resolve(
            opts.mean_separation,
            file.get("mean-separation")?,
            d.mean_separation,
        ),
        within_std: resolve(opts.within_std, file.get("within-std")?, d.within_std),
        expected_turn_windows: resolve(
            opts.expected_turn_windows,
            file.get("expected-turn-windows")?,
            d.expected_turn_windows,
        ),
        total_windows: resolve(opts.total_windows, file.get("total-windows")?, d.total_windows),
        seed: resolve(seed, file.get("seed")?, d.seed),
    })
}

/// Everything a clustering run needs beyond the engine config.
struct ResolvedRun {
    ssc: SscConfig,
    linkage: Linkage,
    threshold: f64,
    collar: f64,
    ignore_overlap: bool,
}

fn resolve_run(
    opts: &PipelineOpts,
    system: System,
    num_speakers: Option<usize>,
    seed: Option<u64>,
    collar: Option<f64>,
    ignore_overlap: Option<bool>,
    file: &ConfigFile,
) -> Result<ResolvedRun> {
    let d = SscConfig::default();
    let dt = TrainConfig::default();
    let threshold = resolve(opts.threshold, file.get("threshold")?, 0.0);
    let linkage = match resolve_opt(opts.linkage.clone(), file.get_str("linkage").map(String::from))
    {
        Some(name) => name.parse::<Linkage>()?,
        None => Linkage::Average,
    };
    let init = match resolve_opt(opts.init.clone(), file.get_str("init").map(String::from)) {
        None => match system {
            System::SscAhc => InitMethod::AhcThreshold(threshold),
            _ => InitMethod::Pic,
        },
        Some(name) => match name.as_str() {
            "pic" => InitMethod::Pic,
            "ahc" => InitMethod::AhcThreshold(threshold),
            other => return Err(Error::Config(format!("unknown init {other:?}"))),
        },
    };
    let sampling = match resolve_opt(opts.sampling.clone(), file.get_str("sampling").map(String::from))
    {
        Some(name) => name.parse::<SamplingStrategy>()?,
        None => dt.sampling,
    };
    let pca = match (
        resolve_opt(opts.pca_dim, file.get("pca-dim")?),
        resolve_opt(opts.pca_energy, file.get("pca-energy")?),
    ) {
        (Some(dim), _) => PcaTarget::Dim(dim),
        (None, Some(f)) => PcaTarget::EnergyFraction(f),
        (None, None) => d.pca,
    };
    let seed = resolve(seed, file.get("seed")?, d.seed);
    let ssc = SscConfig {
        knn: resolve(opts.knn, file.get("knn")?, d.knn),
        sigma: resolve(opts.sigma, file.get("sigma")?, d.sigma),
        train: TrainConfig {
            alpha: resolve(opts.alpha, file.get("alpha")?, dt.alpha),
            learning_rate: resolve(opts.learning_rate, file.get("learning-rate")?, dt.learning_rate),
            eta: resolve(opts.eta, file.get("eta")?, dt.eta),
            max_epochs: resolve(opts.max_epochs, file.get("max-epochs")?, dt.max_epochs),
            batch_mode: dt.batch_mode,
            sampling,
            seed,
        },
        beta: resolve(opts.beta, file.get("beta")?, d.beta),
        n_b: resolve(opts.nb, file.get("nb")?, d.n_b),
        temporal: resolve(opts.temporal, file.get("temporal")?, d.temporal),
        phi: resolve(opts.phi, file.get("phi")?, d.phi),
        num_speakers,
        q_max: resolve(opts.q_max, file.get("q-max")?, d.q_max),
        pca,
        min_output_dim: resolve(opts.min_dim, file.get("min-dim")?, d.min_output_dim),
        whitening_shrinkage: resolve(opts.shrinkage, file.get("shrinkage")?, d.whitening_shrinkage),
        eig_floor: d.eig_floor,
        init,
        clusterer: match system {
            System::SscAhc => ClusterMethod::Ahc(linkage),
            _ => ClusterMethod::Pic,
        },
        seed,
    };
    Ok(ResolvedRun {
        ssc,
        linkage,
        threshold,
        collar: resolve(collar, file.get("collar")?, 0.25),
        ignore_overlap: resolve(ignore_overlap, file.get("ignore-overlap")?, true),
    })
}

fn load_recording(args: &RunArgs) -> Result<Recording> {
    let embeddings = load_embeddings_auto(&args.embeddings)?;
    let windows = load_segments(&args.segments)?;
    let id = match &args.rec_id {
        Some(id) => id.clone(),
        None => args
            .embeddings
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "recording".to_string()),
    };
    Recording::new(id, windows, embeddings)
}

/// Execute one system on a recording.
fn run_system(
    recording: &Recording,
    run: &ResolvedRun,
    system: System,
) -> Result<(Partition, Option<SscTrace>)> {
    if system.is_ssc() {
        let (partition, trace) = run_ssc(recording, &run.ssc)?;
        return Ok((partition, Some(trace)));
    }
    let cfg = &run.ssc;
    let net = init_network(&recording.embeddings, cfg)?;
    let y = net.forward(&recording.embeddings)?;
    let mut similarity = cosine_matrix(&y)?;
    if cfg.temporal {
        similarity = temporal_weight(&similarity, cfg.beta, cfg.n_b)?;
    }
    let partition = match (system, cfg.num_speakers) {
        (System::Ahc, Some(n)) => ahc_cluster(&similarity, run.linkage, AhcStop::Target(n))?,
        (System::Ahc, None) => {
            ahc_cluster(&similarity, run.linkage, AhcStop::Threshold(run.threshold))?
        }
        (System::Pic, Some(n)) => pic_cluster(&similarity, cfg.knn, cfg.sigma, n)?,
        (System::Pic, None) => {
            let mut state = PicState::new(&similarity, cfg.knn, cfg.sigma)?;
            let m = state.num_clusters();
            let affinity = state.affinity_matrix();
            let estimate = estimate_num_clusters(&affinity, cfg.phi, m)?;
            state.merge_to(estimate)?;
            state.partition()
        }
        _ => unreachable!("ssc systems handled above"),
    };
    Ok((partition, None))
}

fn print_breakdown(b: &DerBreakdown) {
    println!("missed-speech {:.4}", b.missed);
    println!("false-alarm {:.4}", b.false_alarm);
    println!("speaker-confusion {:.4}", b.confusion);
    println!("scored-speech {:.4}", b.scored);
    println!("der {:.4}", b.der);
}

pub fn synth(args: SynthArgs) -> Result<ExitCode> {
    let file = load_config(&args.config)?;
    let cfg = resolve_synth(&args.synth, args.seed, &file)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let (recording, annotation) = synth_recording(&cfg)?;
    let embeddings_path = args.out_dir.join("embeddings.csv");
    let segments_path = args.out_dir.join("segments.csv");
    let reference_path = args.out_dir.join("reference.rttm");
    write_embeddings_csv(&recording.embeddings, &embeddings_path)?;
    write_segments(&recording.windows, &segments_path)?;
    write_rttm(&annotation, &recording.id, &reference_path)?;
    println!("recording {}", recording.id);
    println!("windows {}", recording.num_windows());
    println!("dim {}", recording.dim());
    println!("speakers {}", cfg.num_speakers);
    println!("embeddings {}", embeddings_path.display());
    println!("segments {}", segments_path.display());
    println!("reference {}", reference_path.display());
    Ok(ExitCode::SUCCESS)
}

pub fn cluster(args: RunArgs, ssc_command: bool) -> Result<ExitCode> {
    let file = load_config(&args.config)?;
    let system_name = resolve(
        args.system.clone(),
        file.get_str("system").map(String::from),
        if ssc_command { "ssc-pic" } else { "pic" }.to_string(),
    );
    let system = System::parse(&system_name)?;
    if ssc_command && !system.is_ssc() {
        return Err(Error::Config(format!(
            "the ssc command runs ssc-pic or ssc-ahc; use `sscdiar cluster` for {system_name}"
        )));
    }
    let num_speakers = resolve_opt(args.num_speakers, file.get("num-speakers")?);
    let run = resolve_run(
        &args.opts,
        system,
        num_speakers,
        args.seed,
        args.collar,
        args.ignore_overlap,
        &file,
    )?;
    let recording = load_recording(&args)?;
    std::fs::create_dir_all(&args.out)?;

    let started = Instant::now();
    let (partition, trace) = run_system(&recording, &run, system)?;
    log::info!(
        "{} on {} finished in {:.2}s",
        system.name(),
        recording.id,
        started.elapsed().as_secs_f64()
    );

    let hypothesis = partition_to_annotation(&recording, &partition)?;
    let rttm_path = args.out.join(format!("{}.rttm", recording.id));
    write_rttm(&hypothesis, &recording.id, &rttm_path)?;

    println!("system {}", system.name());
    println!("recording {}", recording.id);
    println!("windows {}", recording.num_windows());
    println!("clusters {}", partition.num_clusters());
    println!("rttm {}", rttm_path.display());
    if let Some(trace) = trace {
        let trace_path = args.out.join(format!("{}.trace.jsonl", recording.id));
        std::fs::write(&trace_path, trace.to_jsonl())?;
        println!("trace {}", trace_path.display());
    }
    if let Some(reference) = &args.reference {
        let reference = load_rttm(reference)?;
        let breakdown = der(
            &reference,
            &hypothesis,
            &DerOptions {
                collar: run.collar,
                ignore_overlap: run.ignore_overlap,
            },
        )?;
        print_breakdown(&breakdown);
    }
    Ok(ExitCode::SUCCESS)
}

pub fn score(args: ScoreArgs) -> Result<ExitCode> {
    let file = load_config(&args.config)?;
    let reference = load_rttm(&args.reference)?;
    let hypothesis = load_rttm(&args.hypothesis)?;
    let opts = DerOptions {
        collar: resolve(args.collar, file.get("collar")?, 0.25),
        ignore_overlap: resolve(args.ignore_overlap, file.get("ignore-overlap")?, true),
    };
    let breakdown = der(&reference, &hypothesis, &opts)?;
    print_breakdown(&breakdown);
    Ok(ExitCode::SUCCESS)
}

struct CellOutcome {
    system: System,
    seed: u64,
    result: std::result::Result<(DerBreakdown, usize), String>,
}

pub fn compare(args: CompareArgs) -> Result<ExitCode> {
    let file = load_config(&args.config)?;
    let systems_spec = resolve(
        args.systems.clone(),
        file.get_str("systems").map(String::from),
        "ahc,pic,ssc-pic".to_string(),
    );
    let systems = systems_spec
        .split(',')
        .map(|s| System::parse(s.trim()))
        .collect::<Result<Vec<_>>>()?;
    let seeds_spec = resolve(
        args.seeds.clone(),
        file.get_str("seeds").map(String::from),
        "0,1,2,3,4".to_string(),
    );
    let seeds = seeds_spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad seed {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if systems.is_empty() || seeds.is_empty() {
        return Err(Error::Config("compare needs at least one system and one seed".into()));
    }
    let unknown = resolve(args.unknown, file.get("unknown")?, false);
    let synth_base = resolve_synth(&args.synth, None, &file)?;

    let grid: Vec<(System, u64)> = systems
        .iter()
        .flat_map(|&system| seeds.iter().map(move |&seed| (system, seed)))
        .collect();
    let cells: Vec<CellOutcome> = grid
        .par_iter()
        .map(|&(system, seed)| {
            let result = compare_cell(&args, &file, &synth_base, system, seed, unknown)
                .map_err(|e| e.to_string());
            CellOutcome {
                system,
                seed,
                result,
            }
        })
        .collect();

    std::fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join("compare.csv");
    let mut csv = String::from("system,seed,der,missed,false_alarm,confusion,scored,clusters\n");
    for cell in &cells {
        match &cell.result {
            Ok((b, clusters)) => csv.push_str(&format!(
                "{},{},{:.6},{:.4},{:.4},{:.4},{:.4},{}\n",
                cell.system.name(),
                cell.seed,
                b.der,
                b.missed,
                b.false_alarm,
                b.confusion,
                b.scored,
                clusters
            )),
            Err(_) => csv.push_str(&format!("{},{},ERR,,,,,\n", cell.system.name(), cell.seed)),
        }
    }
    std::fs::write(&csv_path, &csv)?;

    println!("{:<10} {:>9} {:>9} {:>6}", "system", "mean-der", "std-der", "ok");
    let mut any_failure = false;
    for &system in &systems {
        let ders: Vec<f64> = cells
            .iter()
            .filter(|c| c.system == system)
            .filter_map(|c| c.result.as_ref().ok().map(|(b, _)| b.der))
            .collect();
        let failures = seeds.len() - ders.len();
        if failures > 0 {
            any_failure = true;
        }
        if ders.is_empty() {
            println!("{:<10} {:>9} {:>9} {:>6}", system.name(), "ERR", "ERR", format!("0/{}", seeds.len()));
            continue;
        }
        let mean = ders.iter().sum::<f64>() / ders.len() as f64;
        let std = if ders.len() > 1 {
            (ders.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (ders.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        println!(
            "{:<10} {:>9.4} {:>9.4} {:>6}",
            system.name(),
            mean,
            std,
            format!("{}/{}", ders.len(), seeds.len())
        );
    }
    println!("csv {}", csv_path.display());
    for cell in &cells {
        if let Err(message) = &cell.result {
            eprintln!("cell {}/{} failed: {}", cell.system.name(), cell.seed, message);
        }
    }
    Ok(if any_failure {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn compare_cell(
    args: &CompareArgs,
    file: &ConfigFile,
    synth_base: &SynthConfig,
    system: System,
    seed: u64,
    unknown: bool,
) -> Result<(DerBreakdown, usize)> {
    let synth_cfg = SynthConfig {
        seed,
        ..synth_base.clone()
    };
    let (recording, reference) = synth_recording(&synth_cfg)?;
    let num_speakers = if unknown { None } else { Some(synth_cfg.num_speakers) };
    let run = resolve_run(
        &args.opts,
        system,
        num_speakers,
        Some(seed),
        args.collar,
        args.ignore_overlap,
        file,
    )?;
    let (partition, _) = run_system(&recording, &run, system)?;
    let hypothesis = partition_to_annotation(&recording, &partition)?;
    let breakdown = der(
        &reference,
        &hypothesis,
        &DerOptions {
            collar: run.collar,
            ignore_overlap: run.ignore_overlap,
        },
    )?;
    Ok((breakdown, partition.num_clusters()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn system_names_roundtrip() {
        for name in ["ahc", "pic", "ssc-ahc", "ssc-pic"] {
            assert_eq!(System::parse(name).unwrap().name(), name);
        }
        assert!(System::parse("kmeans").is_err());
    }
}
