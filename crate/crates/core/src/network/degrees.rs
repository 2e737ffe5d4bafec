use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DegreeSource {
    EmpiricalFile,
    Synthetic,
}

/// Multisets of note and rater degrees, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeTables {
    pub note_degrees: Vec<u32>,
    pub rater_degrees: Vec<u32>,
    pub source: DegreeSource,
}

/// Counts of each degree value, ascending.
pub fn histogram(degrees: &[u32]) -> BTreeMap<u32, u64> {
    let mut h = BTreeMap::new();
    for &d in degrees {
        *h.entry(d).or_insert(0) += 1;
    }
    h
}

impl DegreeTables {
    pub fn total_note_stubs(&self) -> u64 {
        self.note_degrees.iter().map(|&d| d as u64).sum()
    }

    pub fn total_rater_stubs(&self) -> u64 {
        self.rater_degrees.iter().map(|&d| d as u64).sum()
    }

    /// Writes `note_degrees.csv` and `rater_degrees.csv` (`degree,count`)
    /// into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
        for (name, degrees) in [
            ("note_degrees.csv", &self.note_degrees),
            ("rater_degrees.csv", &self.rater_degrees),
        ] {
            let path = dir.join(name);
            let mut out = File::create(&path).map_err(|e| SimError::io(&path, e))?;
            let mut text = String::from("degree,count\n");
            for (d, c) in histogram(degrees) {
                text.push_str(&format!("{d},{c}\n"));
            }
            out.write_all(text.as_bytes()).map_err(|e| SimError::io(&path, e))?;
        }
        Ok(())
    }

    pub fn read_csv(dir: &Path, source: DegreeSource) -> Result<DegreeTables> {
        let read = |name: &str| -> Result<Vec<u32>> {
            let path = dir.join(name);
            let mut rdr = csv::Reader::from_path(&path).map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => SimError::io(&path, io),
                other => SimError::Data(format!("{}: {other:?}", path.display())),
            })?;
            let mut out = Vec::new();
            for (i, row) in rdr.records().enumerate() {
                let row = row?;
                let parse = |k: usize| -> Result<u64> {
                    row.get(k)
                        .and_then(|s| s.trim().parse().ok())
                        .ok_or_else(|| SimError::Format {
                            path: path.clone(),
                            line: i as u64 + 2,
                            msg: "expected `degree,count` integers".into(),
                        })
                };
                let (d, c) = (parse(0)? as u32, parse(1)?);
                out.extend(std::iter::repeat_n(d, c as usize));
            }
            Ok(out)
        };
        let tables = DegreeTables {
            note_degrees: read("note_degrees.csv")?,
            rater_degrees: read("rater_degrees.csv")?,
            source,
        };
        if tables.note_degrees.is_empty() || tables.rater_degrees.is_empty() {
            return Err(SimError::Data(format!("degree tables in {} are empty", dir.display())));
        }
        Ok(tables)
    }
}

fn column(header: &[&str], name: &str, path: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| SimError::Format {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("missing column `{name}`"),
        })
}

/// Counts seen while ingesting a ratings file, before degree filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestStats {
    pub rows: u64,
    pub distinct_ratings: u64,
    pub notes: usize,
    pub raters: usize,
}

/// Streams a Community Notes ratings TSV and builds degree tables.
///
/// Only `noteId` and `raterParticipantId` are read. Duplicate
/// `(rater, note)` rows count once. Notes and raters are filtered
/// independently, each side's degree counted over the full file.
pub fn ingest_degree_tables(path: &Path, min_note_deg: u32, min_rater_deg: u32) -> Result<DegreeTables> {
    ingest_with_stats(path, min_note_deg, min_rater_deg).map(|(t, _)| t)
}

/// [`ingest_degree_tables`] plus the unfiltered counts.
pub fn ingest_with_stats(path: &Path, min_note_deg: u32, min_rater_deg: u32) -> Result<(DegreeTables, IngestStats)> {
    let file = File::open(path).map_err(|e| SimError::io(path, e))?;
    let mut reader = BufReader::with_capacity(1 << 20, file);
    let mut line = String::new();
    let n = reader.read_line(&mut line).map_err(|e| SimError::io(path, e))?;
    if n == 0 {
        return Err(SimError::Data(format!("{} is empty", path.display())));
    }
    let header: Vec<&str> = line.trim_end_matches(['\n', '\r']).split('\t').collect();
    let note_col = column(&header, "noteId", path)?;
    let rater_col = column(&header, "raterParticipantId", path)?;
    let width = note_col.max(rater_col) + 1;

    let mut note_ids: HashMap<String, u32> = HashMap::new();
    let mut rater_ids: HashMap<String, u32> = HashMap::new();
    let mut pairs: Vec<u64> = Vec::new();
    let mut line_no = 1u64;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| SimError::io(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let row = line.trim_end_matches(['\n', '\r']);
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.splitn(width + 1, '\t').collect();
        if fields.len() < width {
            return Err(SimError::Format {
                path: path.to_path_buf(),
                line: line_no,
                msg: format!("expected at least {width} tab-separated fields"),
            });
        }
        let intern = |map: &mut HashMap<String, u32>, key: &str| -> u32 {
            if let Some(&id) = map.get(key) {
                return id;
            }
            let id = map.len() as u32;
            map.insert(key.to_owned(), id);
            id
        };
        let note = intern(&mut note_ids, fields[note_col]);
        let rater = intern(&mut rater_ids, fields[rater_col]);
        pairs.push(((rater as u64) << 32) | note as u64);
    }
    if pairs.is_empty() {
        return Err(SimError::Data(format!("{} has no rating rows", path.display())));
    }
    let rows = pairs.len() as u64;
    pairs.sort_unstable();
    pairs.dedup();
    let stats = IngestStats {
        rows,
        distinct_ratings: pairs.len() as u64,
        notes: note_ids.len(),
        raters: rater_ids.len(),
    };

    let mut note_deg = vec![0u32; note_ids.len()];
    let mut rater_deg = vec![0u32; rater_ids.len()];
    for p in &pairs {
        rater_deg[(p >> 32) as usize] += 1;
        note_deg[(p & 0xFFFF_FFFF) as usize] += 1;
    }
    let mut note_degrees: Vec<u32> = note_deg.into_iter().filter(|&d| d >= min_note_deg).collect();
    let mut rater_degrees: Vec<u32> = rater_deg.into_iter().filter(|&d| d >= min_rater_deg).collect();
    if note_degrees.is_empty() || rater_degrees.is_empty() {
        return Err(SimError::Data(format!(
            "no notes with >= {min_note_deg} ratings or no raters with >= {min_rater_deg} ratings"
        )));
    }
    note_degrees.sort_unstable();
    rater_degrees.sort_unstable();
    Ok((
        DegreeTables {
            note_degrees,
            rater_degrees,
            source: DegreeSource::EmpiricalFile,
        },
        stats,
    ))
}

/// Discrete power law `P(k) ∝ k^-alpha` on `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLaw {
    pub alpha: f64,
    pub min: u32,
    pub max: u32,
}

impl PowerLaw {
    fn weights(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        (self.min..=self.max).map(move |k| (k, (k as f64).powf(-self.alpha)))
    }

    pub fn mean(&self) -> f64 {
        let (num, den) = self
            .weights()
            .fold((0.0, 0.0), |(n, d), (k, w)| (n + k as f64 * w, d + w));
        num / den
    }

    /// Cumulative table for inverse-transform sampling.
    fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = self
            .weights()
            .map(|(_, w)| {
                acc += w;
                acc
            })
            .collect();
        for c in &mut cdf {
            *c /= acc;
        }
        cdf
    }

    /// Exponent whose mean equals `target`, by bisection on `[0, 6]`.
    pub fn fit_alpha(min: u32, max: u32, target: f64) -> Option<f64> {
        let mean_at = |alpha| PowerLaw { alpha, min, max }.mean();
        let (mut lo, mut hi) = (0.0f64, 6.0f64);
        if !(mean_at(hi) <= target && target <= mean_at(lo)) {
            return None;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mean_at(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }
}

fn sample_many<R: Rng>(law: &PowerLaw, n: usize, rng: &mut R) -> Vec<u32> {
    let cdf = law.cdf();
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let idx = cdf.partition_point(|&c| c < u).min(cdf.len() - 1);
            law.min + idx as u32
        })
        .collect()
}

/// Parameters of the synthetic degree fallback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthDegreeParams {
    pub n_notes: usize,
    pub n_raters: usize,
    pub target_edges: u64,
    pub note_law: PowerLaw,
    pub rater_law: PowerLaw,
    /// Every note gets `target_edges / n_notes` and every rater
    /// `target_edges / n_raters`; requires exact division.
    #[serde(default)]
    pub uniform: bool,
}

impl SynthDegreeParams {
    /// Exponents tuned by [`PowerLaw::fit_alpha`] so that the expected note
    /// degree is `target_edges / n_notes` (1,839,726 / 20,000 for the
    /// standard size) and the rater law mean matches before rescaling.
    pub fn standard() -> Self {
        SynthDegreeParams {
            n_notes: 20_000,
            n_raters: 10_750,
            target_edges: 1_839_726,
            note_law: PowerLaw {
                alpha: STANDARD_NOTE_ALPHA,
                min: 5,
                max: 2_000,
            },
            rater_law: PowerLaw {
                alpha: STANDARD_RATER_ALPHA,
                min: 10,
                max: 20_000,
            },
            uniform: false,
        }
    }
}

/// Bisection result for mean 1,839,726 / 20,000 on [5, 2000].
pub const STANDARD_NOTE_ALPHA: f64 = 1.512_054_085_6;
/// Bisection result for mean 1,839,726 / 10,750 on [10, 20000].
pub const STANDARD_RATER_ALPHA: f64 = 1.740_372_951_7;

/// Draws synthetic degree tables when the empirical dump is unavailable.
///
/// Note degrees follow `note_law`; rater degrees follow `rater_law` and are
/// then rescaled so both sides carry the same number of stubs.
pub fn synth_degree_tables(params: &SynthDegreeParams, seed: u64) -> Result<DegreeTables> {
    let SynthDegreeParams {
        n_notes,
        n_raters,
        target_edges,
        ..
    } = *params;
    if n_notes == 0 || n_raters == 0 {
        return Err(SimError::Config("synthetic degrees need positive counts".into()));
    }
    let min_n = params.note_law.min as u64;
    let min_r = params.rater_law.min as u64;
    if target_edges < min_n * n_notes as u64 || target_edges < min_r * n_raters as u64 {
        return Err(SimError::Config(format!(
            "target_edges {target_edges} is below the degree floors ({} notes x {min_n}, {} raters x {min_r})",
            n_notes, n_raters
        )));
    }
    if params.uniform {
        if target_edges % n_notes as u64 != 0 || target_edges % n_raters as u64 != 0 {
            return Err(SimError::Config(
                "uniform degrees need target_edges divisible by both counts".into(),
            ));
        }
        return Ok(DegreeTables {
            note_degrees: vec![(target_edges / n_notes as u64) as u32; n_notes],
            rater_degrees: vec![(target_edges / n_raters as u64) as u32; n_raters],
            source: DegreeSource::Synthetic,
        });
    }

    let mut rng = stream(seed, Stream::Degrees);
    let mut note_degrees = sample_many(&params.note_law, n_notes, &mut rng);
    let mut rater_degrees = sample_many(&params.rater_law, n_raters, &mut rng);
    let total: u64 = note_degrees.iter().map(|&d| d as u64).sum();

    // Rescale raters to the realized note total, then spread the rounding
    // remainder one stub at a time.
    let raw: u64 = rater_degrees.iter().map(|&d| d as u64).sum();
    let scale = total as f64 / raw as f64;
    for d in &mut rater_degrees {
        *d = ((*d as f64 * scale).round() as u32).clamp(min_r as u32, n_notes as u32);
    }
    let mut diff = total as i64 - rater_degrees.iter().map(|&d| d as i64).sum::<i64>();
    let mut guard = 0usize;
    while diff != 0 && guard < 100 * n_raters {
        let i = rng.random_range(0..n_raters);
        if diff > 0 && (rater_degrees[i] as usize) < n_notes {
            rater_degrees[i] += 1;
            diff -= 1;
        } else if diff < 0 && rater_degrees[i] as u64 > min_r {
            rater_degrees[i] -= 1;
            diff += 1;
        }
        guard += 1;
    }
    if diff != 0 {
        return Err(SimError::Config(
            "could not balance rater degrees against note degrees".into(),
        ));
    }
    note_degrees.sort_unstable();
    rater_degrees.sort_unstable();
    Ok(DegreeTables {
        note_degrees,
        rater_degrees,
        source: DegreeSource::Synthetic,
    })
}
