//! Output files: CSV tables, PGM/PPM rasters and the JSON summary.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::attention::AttentionMap;
use crate::engine::{Aggregate, BatchResult, FrameDump, Heatmap, Incident, LegMetrics, RunLogs, SignEventRow, TrajectoryRow};
use crate::perception::ViewRaster;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_csv<'r, T, I>(path: &Path, rows: I) -> Result<(), OutputError>
where
    T: Serialize + 'r,
    I: IntoIterator<Item = &'r T>,
{
    let csv_err = |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, OutputError> {
    let csv_err = |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err)
}

/// 16-bit binary PGM, top row = largest y. Counts above 65535 saturate.
pub fn heatmap_pgm(h: &Heatmap) -> Vec<u8> {
    let max = h.counts.iter().copied().max().unwrap_or(0).clamp(1, u16::MAX as u64);
    let mut out = format!("P5\n{} {}\n{}\n", h.width, h.height, max).into_bytes();
    for y in (0..h.height).rev() {
        for x in 0..h.width {
            let v = h.counts[y * h.width + x].min(u16::MAX as u64) as u16;
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    out
}

/// Parses a 16-bit PGM written by [`heatmap_pgm`] back into counts.
pub fn parse_heatmap_pgm(bytes: &[u8]) -> Option<Heatmap> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes.get(pos)?.is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?.to_string());
    }
    pos += 1;
    if fields[0] != "P5" {
        return None;
    }
    let (w, h): (usize, usize) = (fields[1].parse().ok()?, fields[2].parse().ok()?);
    let data = bytes.get(pos..pos + 2 * w * h)?;
    let mut counts = vec![0; w * h];
    for (i, px) in data.chunks(2).enumerate() {
        let (row, x) = (i / w, i % w);
        counts[(h - 1 - row) * w + x] = u16::from_be_bytes([px[0], px[1]]) as u64;
    }
    Some(Heatmap { width: w, height: h, counts })
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn raster_ppm(r: &ViewRaster) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", r.width, r.height).into_bytes();
    for px in &r.pixels {
        out.extend(px.iter().map(|&c| to_byte(c)));
    }
    out
}

/// 8-bit PGM scaled so that 1.0 maps to 255.
pub fn attention_pgm(m: &AttentionMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", m.width, m.height).into_bytes();
    out.extend(m.values.iter().map(|&v| to_byte(v)));
    out
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), OutputError> {
    fs::write(path, bytes).map_err(io_err(path))
}

#[derive(Serialize)]
struct Summary<'a> {
    master_seed: u64,
    agents_per_replication: u32,
    aggregate: &'a Aggregate,
    incidents: Vec<&'a Incident>,
}

/// Writes every batch output into `dir`, creating it if needed.
pub fn write_outputs(batch: &BatchResult, master_seed: u64, agents: u32, dir: &Path, with_audit: bool) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let runs = &batch.runs;
    write_csv::<TrajectoryRow, _>(&dir.join("trajectories.csv"), runs.iter().flat_map(|r| &r.trajectories))?;
    write_csv::<SignEventRow, _>(&dir.join("sign_events.csv"), runs.iter().flat_map(|r| &r.sign_events))?;
    write_csv::<LegMetrics, _>(&dir.join("metrics.csv"), runs.iter().flat_map(|r| &r.legs))?;
    if with_audit {
        write_csv(&dir.join("audit.csv"), &batch.aggregate.audit)?;
    }
    for (floor, h) in merged_heatmaps(runs) {
        write_bytes(&dir.join(format!("heatmap_{floor}.pgm")), &heatmap_pgm(&h))?;
    }
    let summary = Summary {
        master_seed,
        agents_per_replication: agents,
        aggregate: &batch.aggregate,
        incidents: runs.iter().flat_map(|r| &r.incidents).collect(),
    };
    let path = dir.join("summary.json");
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &summary).map_err(|e| io_err(&path)(e.into()))?;
    w.write_all(b"\n").map_err(io_err(&path))?;
    w.flush().map_err(io_err(&path))
}

/// Heatmaps summed over replications, per floor.
pub fn merged_heatmaps(runs: &[RunLogs]) -> std::collections::BTreeMap<String, Heatmap> {
    let mut out: std::collections::BTreeMap<String, Heatmap> = std::collections::BTreeMap::new();
    for r in runs {
        for (floor, h) in &r.heatmaps {
            let acc = out.entry(floor.clone()).or_insert_with(|| Heatmap {
                width: h.width,
                height: h.height,
                counts: vec![0; h.counts.len()],
            });
            for (a, c) in acc.counts.iter_mut().zip(&h.counts) {
                *a += c;
            }
        }
    }
    out
}

/// Writes the raster and/or the attention channel maps of one frame.
pub fn write_frame_dump(dir: &Path, f: &FrameDump<'_>, views: bool, attention: bool) -> Result<(), OutputError> {
    let stem = format!("rep{}_agent{}_tick{:06}", f.replication, f.agent, f.tick);
    if views {
        let d = dir.join("views");
        fs::create_dir_all(&d).map_err(io_err(&d))?;
        write_bytes(&d.join(format!("{stem}.ppm")), &raster_ppm(f.raster))?;
    }
    if attention {
        let d = dir.join("attention");
        fs::create_dir_all(&d).map_err(io_err(&d))?;
        let maps = [
            ("saliency", &f.frame.saliency),
            ("semantic", &f.frame.semantic),
            ("frustum", &f.frame.frustum),
            ("fused", &f.frame.fused),
        ];
        for (name, map) in maps {
            write_bytes(&d.join(format!("{stem}_{name}.pgm")), &attention_pgm(map))?;
        }
    }
    Ok(())
}
