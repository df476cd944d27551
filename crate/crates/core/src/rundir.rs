//! Run directory layout, writing and reporting.
//!
//! ```text
//! <run>/config.toml                 resolved configuration (re-runnable)
//! <run>/candidates.csv              one row per evaluated candidate
//! <run>/summary.csv                 per-iteration population statistics
//! <run>/prototypes/iter_NNNN.txt    re-estimated prototype of iteration N
//! <run>/archive/iter_NNNN.txt       prototype saved before an inversion
//! <run>/final/architecture.txt      final architecture (shorthand + shortcut JSON)
//! <run>/final/archived_NNNN.txt     architecture of each archived prototype
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::architecture::CandidateArchitecture;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::prototype::Prototype;
use crate::search::{IterationRecord, IterationStats, Population, SearchObserver, SearchOutcome};

pub const CONFIG_FILE: &str = "config.toml";
pub const CANDIDATES_FILE: &str = "candidates.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PROTOTYPE_DIR: &str = "prototypes";
pub const ARCHIVE_DIR: &str = "archive";
pub const FINAL_DIR: &str = "final";

pub const CANDIDATES_HEADER: &str = "iteration,candidate_id,layers,matthews,accuracy,parameter_count,status,wall_time";
pub const SUMMARY_HEADER: &str =
    "iteration,max_matthews,median_matthews,max_accuracy,median_accuracy,mean_l2_norm,depth";

pub fn snapshot_name(iteration: usize) -> String {
    format!("iter_{iteration:04}.txt")
}

pub fn summary_row(stats: &IterationStats) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        stats.iteration,
        stats.max_matthews,
        stats.median_matthews,
        stats.max_accuracy,
        stats.median_accuracy,
        stats.mean_l2_norm,
        stats.depth
    )
}

pub fn summary_csv(history: &[IterationStats]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for stats in history {
        out.push_str(&summary_row(stats));
        out.push('\n');
    }
    out
}

/// Persists a run as it progresses.
pub struct RunWriter {
    dir: PathBuf,
    config: RunConfig,
    candidates: BufWriter<File>,
    summary: BufWriter<File>,
}

impl RunWriter {
    pub fn create(dir: &Path, config: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        for sub in [PROTOTYPE_DIR, ARCHIVE_DIR, FINAL_DIR] {
            fs::create_dir_all(dir.join(sub))?;
        }
        fs::write(dir.join(CONFIG_FILE), config.to_toml())?;
        let mut candidates = BufWriter::new(File::create(dir.join(CANDIDATES_FILE))?);
        writeln!(candidates, "{CANDIDATES_HEADER}")?;
        let mut summary = BufWriter::new(File::create(dir.join(SUMMARY_FILE))?);
        writeln!(summary, "{SUMMARY_HEADER}")?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            config: config.clone(),
            candidates,
            summary,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes the final and archived architectures.
    pub fn finish(&mut self, outcome: &SearchOutcome<f64>) -> Result<()> {
        let library = &self.config.search.library;
        let final_dir = self.dir.join(FINAL_DIR);
        fs::write(
            final_dir.join("architecture.txt"),
            outcome.final_architecture.to_text(library),
        )?;
        for (t, arch) in &outcome.archived_architectures {
            fs::write(final_dir.join(format!("archived_{t:04}.txt")), arch.to_text(library))?;
        }
        self.candidates.flush()?;
        self.summary.flush()?;
        Ok(())
    }
}

impl SearchObserver<f64> for RunWriter {
    fn on_population(&mut self, population: &Population<'_>) -> Result<()> {
        let library = &self.config.search.library;
        for (layers, result) in population.sampled.iter().zip(population.results) {
            writeln!(
                self.candidates,
                "{},{},{},{},{},{},{},{}",
                population.iteration,
                result.candidate_id,
                library.encode(layers),
                result.matthews,
                result.accuracy,
                result.parameter_count,
                result.status.as_str(),
                result.wall_time
            )?;
        }
        self.candidates.flush()?;
        Ok(())
    }

    fn on_iteration(&mut self, record: &IterationRecord<'_, f64>) -> Result<()> {
        let library = &self.config.search.library;
        let name = snapshot_name(record.iteration);
        fs::write(
            self.dir.join(PROTOTYPE_DIR).join(&name),
            record.prototype.to_snapshot(library)?,
        )?;
        if let Some(archived) = record.archived {
            fs::write(self.dir.join(ARCHIVE_DIR).join(&name), archived.to_snapshot(library)?)?;
        }
        writeln!(self.summary, "{}", summary_row(record.stats))?;
        self.summary.flush()?;
        Ok(())
    }
}

/// Summary rebuilt from a run directory's persisted artifacts.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub summary: Vec<IterationStats>,
    /// Iteration and architecture of each archived prototype.
    pub archived: Vec<(usize, CandidateArchitecture)>,
}

impl Report {
    pub fn summary_csv(&self) -> String {
        summary_csv(&self.summary)
    }

    pub fn render(&self, config: &RunConfig) -> String {
        let library = &config.search.library;
        let mut out = self.summary_csv();
        out.push_str(&format!("\narchived solutions: {}\n", self.archived.len()));
        for (t, arch) in &self.archived {
            out.push_str(&format!(
                "iteration {t}: {} {}\n",
                arch.encode_layers(library),
                arch.shortcuts_json()
            ));
        }
        out
    }
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact(path))
    }
}

pub fn load_config(dir: &Path) -> Result<RunConfig> {
    RunConfig::load(&require(dir.join(CONFIG_FILE))?)
}

/// Rebuilds per-iteration statistics from `candidates.csv` and the prototype
/// snapshots, and lists archived solutions. Nothing is re-evaluated.
pub fn report(dir: &Path) -> Result<Report> {
    let config = load_config(dir)?;
    let candidates_path = require(dir.join(CANDIDATES_FILE))?;
    let prototypes = require(dir.join(PROTOTYPE_DIR))?;

    #[derive(Default)]
    struct Population {
        matthews: Vec<f64>,
        accuracy: Vec<f64>,
        depth: usize,
    }
    let mut populations: BTreeMap<usize, Population> = BTreeMap::new();
    let mut reader = csv::Reader::from_path(&candidates_path)?;
    let parse = |field: &str, what: &str| Error::Parse {
        context: candidates_path.display().to_string(),
        message: format!("invalid {what} `{field}`"),
    };
    for record in reader.records() {
        let record = record?;
        let get = |i: usize| record.get(i).unwrap_or("");
        let iteration: usize = get(0).parse().map_err(|_| parse(get(0), "iteration"))?;
        let matthews: f64 = get(3).parse().map_err(|_| parse(get(3), "matthews"))?;
        let accuracy: f64 = get(4).parse().map_err(|_| parse(get(4), "accuracy"))?;
        let pop = populations.entry(iteration).or_default();
        pop.depth = get(2).split('-').filter(|t| !t.is_empty()).count();
        pop.matthews.push(matthews);
        pop.accuracy.push(accuracy);
    }

    let mut summary = Vec::new();
    for (iteration, pop) in populations {
        let snapshot = prototypes.join(snapshot_name(iteration));
        if !snapshot.exists() {
            // Iteration aborted before the prototype was re-estimated.
            continue;
        }
        let (_, prototype) = Prototype::<f64>::parse_snapshot(&fs::read_to_string(&snapshot)?)?;
        let mut stats = IterationStats::from_results(iteration, pop.depth, prototype.mean_l2_norm(false)?, &[]);
        stats.max_matthews = pop.matthews.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        stats.median_matthews = crate::search::median(&pop.matthews);
        stats.max_accuracy = pop.accuracy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        stats.median_accuracy = crate::search::median(&pop.accuracy);
        summary.push(stats);
    }

    let mut archived = Vec::new();
    let archive_dir = dir.join(ARCHIVE_DIR);
    if archive_dir.exists() {
        let mut entries: Vec<PathBuf> = fs::read_dir(&archive_dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for path in entries {
            let Some(iteration) = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.strip_prefix("iter_"))
                .and_then(|s| s.parse::<usize>().ok())
            else {
                continue;
            };
            let (_, prototype) = Prototype::<f64>::parse_snapshot(&fs::read_to_string(&path)?)?;
            let s = &config.search;
            let arch = CandidateArchitecture::with_pattern(
                prototype.argmax_architecture(),
                &s.shortcut_pattern,
                s.channels,
                s.input_shape,
            )?;
            archived.push((iteration, arch));
        }
    }
    Ok(Report { summary, archived })
}
