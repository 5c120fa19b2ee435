use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use rayon::prelude::*;
use zffvad::eval::{aggregate, hypothesis_frames, read_labels, score, FileResult};
use zffvad::pipeline::export_composite as write_composite;
use zffvad::synth::{corpus, random_layouts, synthesize};
use zffvad::{detect as run_detect, read_wav, write_wav, Detection, SegmentList};

use crate::config::RunConfig;
use crate::CliError;

/// How many of the requested files were processed.
#[derive(Debug, Default, Clone, Copy)]
pub struct Outcome {
    pub total: usize,
    pub failed: usize,
}

impl Outcome {
    /// 0 when everything succeeded, 1 when some files failed, 2 when all did.
    pub fn exit_code(self) -> ExitCode {
        match self.failed {
            0 => ExitCode::SUCCESS,
            f if f < self.total => ExitCode::from(1),
            _ => ExitCode::from(2),
        }
    }
}

fn report_failures<T>(results: &[(PathBuf, zffvad::Result<T>)]) -> Outcome {
    let mut failed = 0;
    for (path, r) in results {
        match r {
            // these already name their file
            Err(
                e @ (zffvad::Error::Io { .. }
                | zffvad::Error::Parse { .. }
                | zffvad::Error::UnknownFormat { .. }),
            ) => {
                eprintln!("zffvad: {e}");
                failed += 1;
            }
            Err(e) => {
                eprintln!("zffvad: {}: {e}", path.display());
                failed += 1;
            }
            Ok(_) => {}
        }
    }
    Outcome {
        total: results.len(),
        failed,
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string())
}

fn io_err(path: &Path, e: std::io::Error) -> zffvad::Error {
    zffvad::Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

pub fn detect(
    inputs: &[PathBuf],
    dump_surface: bool,
    cfg: &RunConfig,
) -> Result<Outcome, CliError> {
    let dir = out_dir(cfg)?;
    let results: Vec<(PathBuf, zffvad::Result<()>)> = inputs
        .par_iter()
        .map(|input| {
            let r = (|| {
                let buf = read_wav(input)?;
                let det = run_detect(&buf, &cfg.zff, &cfg.pipeline)?;
                let name = stem(input);
                det.segments.write(dir.join(format!("{name}.seg")))?;
                if dump_surface {
                    write_surface(&det, &dir.join(format!("{name}.surface.csv")))?;
                }
                Ok(())
            })();
            (input.clone(), r)
        })
        .collect();
    Ok(report_failures(&results))
}

/// One row per sample; `decision` is membership in the emitted segments.
fn write_surface(det: &Detection, path: &Path) -> zffvad::Result<()> {
    let ds = &det.surface;
    let rate = ds.sample_rate_hz as f64;
    let theta = ds.theta_per_sample();
    let mut decision = vec![false; ds.len()];
    for s in &det.segments.segments {
        let a = (s.start_s * rate).round() as usize;
        let b = ((s.end_s * rate).round() as usize).min(ds.len());
        decision[a.min(b)..b].iter_mut().for_each(|d| *d = true);
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "sample_index,time_s,r_c,inv_entropy,y_ds,theta,decision")?;
        for i in 0..ds.len() {
            writeln!(
                w,
                "{i},{},{},{},{},{},{}",
                i as f64 / rate,
                ds.r_c[i],
                ds.inv_entropy[i],
                ds.y_ds[i],
                theta[i],
                u8::from(decision[i])
            )?;
        }
        w.flush()
    };
    write().map_err(|e| io_err(path, e))
}

pub fn export_composite(inputs: &[PathBuf], cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dir = out_dir(cfg)?;
    let results: Vec<(PathBuf, zffvad::Result<()>)> = inputs
        .par_iter()
        .map(|input| {
            let r = (|| {
                let buf = read_wav(input)?;
                let name = input
                    .file_name()
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("composite.wav"));
                write_composite(&buf, &cfg.zff, &cfg.pipeline, dir.join(name))
            })();
            (input.clone(), r)
        })
        .collect();
    Ok(report_failures(&results))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub wav: PathBuf,
    pub labels: PathBuf,
    pub condition: String,
}

/// `wav<TAB>labels<TAB>condition` lines; relative paths are taken from the
/// manifest's directory.
pub fn parse_manifest(text: &str, origin: &Path) -> Result<Vec<ManifestEntry>, CliError> {
    let base = origin.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.trim().is_empty()) {
            return Err(CliError::Config(format!(
                "{}:{}: expected `wav<TAB>labels<TAB>condition`",
                origin.display(),
                i + 1
            )));
        }
        entries.push(ManifestEntry {
            wav: base.join(fields[0].trim()),
            labels: base.join(fields[1].trim()),
            condition: fields[2].trim().to_string(),
        });
    }
    Ok(entries)
}

fn evaluate_one(entry: &ManifestEntry, cfg: &RunConfig) -> zffvad::Result<FileResult> {
    let buf = read_wav(&entry.wav)?;
    let duration = buf.duration_s();
    let reference = read_labels(&entry.labels, cfg.hop_ms, Some(duration))?;
    let name = stem(&entry.wav);
    let segments = match &cfg.external_segments {
        Some(dir) => SegmentList::read(dir.join(format!("{name}.seg")), Some(duration))?,
        None => run_detect(&buf, &cfg.zff, &cfg.pipeline)?.segments,
    };
    let hyp = hypothesis_frames(&segments, cfg.hop_ms, duration)?;
    Ok(FileResult {
        file_id: name,
        condition: entry.condition.clone(),
        counts: score(&hyp, &reference)?.counts,
    })
}

pub fn evaluate(manifest: &Path, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let text = fs::read_to_string(manifest)
        .map_err(|e| CliError::Config(format!("{}: {e}", manifest.display())))?;
    let entries = parse_manifest(&text, manifest)?;
    if entries.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: manifest lists no files",
            manifest.display()
        )));
    }
    let results: Vec<(PathBuf, zffvad::Result<FileResult>)> = entries
        .par_iter()
        .map(|e| (e.wav.clone(), evaluate_one(e, cfg)))
        .collect();
    let outcome = report_failures(&results);
    let mut scored = Vec::new();
    let mut skipped = Vec::new();
    for (path, r) in results {
        match r {
            Ok(f) => scored.push(f),
            Err(e) => skipped.push((path.display().to_string(), e.to_string())),
        }
    }
    let mut report = aggregate(scored);
    report.skipped = skipped;

    let out = cfg
        .report
        .clone()
        .unwrap_or_else(|| PathBuf::from("eval.csv"));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(&out, report.to_csv()).map_err(|e| io_err(&out, e))?;
    print!("{}", report.summary());
    Ok(outcome)
}

pub fn synth(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let Some(dir) = cfg.out_dir.clone() else {
        return Err(CliError::Usage("synth needs --out-dir".into()));
    };
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let layouts = random_layouts(cfg.synth_layouts, cfg.synth_seed);
    let items = corpus(
        &layouts,
        &cfg.synth_snr_db,
        &cfg.synth_noise,
        cfg.synth_seed,
        cfg.synth_sample_rate_hz,
    );
    let results: Vec<(PathBuf, zffvad::Result<()>)> = items
        .par_iter()
        .map(|item| {
            let wav = dir.join(format!("{}.wav", item.name));
            let r = (|| {
                let (buf, _) = synthesize(&item.spec)?;
                write_wav(&buf, &wav)?;
                SegmentList::new(item.spec.burst_layout.clone(), item.spec.duration_s)?
                    .write(dir.join(format!("{}.lab", item.name)))
            })();
            (wav, r)
        })
        .collect();
    let outcome = report_failures(&results);

    let mut manifest = String::new();
    for (item, (_, r)) in items.iter().zip(&results) {
        if r.is_ok() {
            let _ = writeln!(manifest, "{0}.wav\t{0}.lab\t{1}", item.name, item.condition);
        }
    }
    let path = dir.join("manifest.tsv");
    fs::write(&path, manifest).map_err(|e| io_err(&path, e))?;
    Ok(outcome)
}
