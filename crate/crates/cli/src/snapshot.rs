//! Snapshot CSV files.
//!
//! Agent snapshots have header `t,agent_id,x,y`, particle snapshots
//! `tau,particle_id,v,w`. Values carry 17 significant digits so that every
//! double survives a write and read unchanged.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use edgeworth_kinetics::fokker_planck::VWParticle;
use edgeworth_kinetics::AgentState;

use crate::error::{CliError, CliResult};

pub const AGENT_HEADER: [&str; 4] = ["t", "agent_id", "x", "y"];
pub const PARTICLE_HEADER: [&str; 4] = ["tau", "particle_id", "v", "w"];

/// Shortest exact form: 17 significant digits in scientific notation.
pub fn exact(x: f64) -> String {
    format!("{x:.16e}")
}

/// `x` to `digits` significant digits.
pub fn rounded(x: f64, digits: usize) -> String {
    format!("{x:.*e}", digits.saturating_sub(1))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotData {
    Agents {
        time: f64,
        agents: Vec<AgentState>,
    },
    Particles {
        tau: f64,
        particles: Vec<VWParticle>,
    },
}

fn write_rows<W: Write>(
    out: W,
    header: [&str; 4],
    time: f64,
    rows: impl Iterator<Item = (f64, f64)>,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    let t = exact(time);
    for (i, (a, b)) in rows.enumerate() {
        w.write_record([t.as_str(), &i.to_string(), &exact(a), &exact(b)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_agents<W: Write>(out: W, time: f64, agents: &[AgentState]) -> csv::Result<()> {
    write_rows(out, AGENT_HEADER, time, agents.iter().map(|a| (a.x, a.y)))
}

pub fn write_particles<W: Write>(out: W, tau: f64, particles: &[VWParticle]) -> csv::Result<()> {
    write_rows(
        out,
        PARTICLE_HEADER,
        tau,
        particles.iter().map(|p| (p.v, p.w)),
    )
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::io(path, source),
        other => CliError::Data {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

pub fn save_agents(path: &Path, time: f64, agents: &[AgentState]) -> CliResult<()> {
    write_agents(create(path)?, time, agents).map_err(|e| csv_error(path, e))
}

pub fn save_particles(path: &Path, tau: f64, particles: &[VWParticle]) -> CliResult<()> {
    write_particles(create(path)?, tau, particles).map_err(|e| csv_error(path, e))
}

/// Reads either kind of snapshot, telling them apart by header. Rows must be
/// numbered `0, 1, ...` in order and share one time stamp.
pub fn load(path: &Path) -> CliResult<SnapshotData> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let bad = |message: String| CliError::Data {
        path: path.to_path_buf(),
        message,
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let particles = if header == AGENT_HEADER {
        false
    } else if header == PARTICLE_HEADER {
        true
    } else {
        return Err(bad(format!(
            "header {header:?} is neither {} nor {}",
            AGENT_HEADER.join(","),
            PARTICLE_HEADER.join(",")
        )));
    };

    let mut time = None;
    let mut pairs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = i + 2;
        let num = |j: usize| -> CliResult<f64> {
            record
                .get(j)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("line {line}, column {}: {e}", header[j])))
        };
        let t = num(0)?;
        match time {
            None => time = Some(t),
            Some(t0) if t0.to_bits() != t.to_bits() => {
                return Err(bad(format!("line {line}: time {t} differs from {t0}")));
            }
            _ => {}
        }
        let id: usize = record
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| bad(format!("line {line}, column {}: {e}", header[1])))?;
        if id != i {
            return Err(bad(format!("line {line}: expected id {i}, found {id}")));
        }
        pairs.push((num(2)?, num(3)?));
    }
    if pairs.is_empty() {
        return Err(bad("no rows".into()));
    }
    let time = time.unwrap_or(0.0);
    if particles {
        let particles = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (v, w))| VWParticle::new(v, w).map_err(|e| bad(format!("particle {i}: {e}"))))
            .collect::<CliResult<Vec<_>>>()?;
        Ok(SnapshotData::Particles {
            tau: time,
            particles,
        })
    } else {
        let agents = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (x, y))| AgentState::new(x, y).map_err(|e| bad(format!("agent {i}: {e}"))))
            .collect::<CliResult<Vec<_>>>()?;
        Ok(SnapshotData::Agents { time, agents })
    }
}

pub fn load_agents(path: &Path) -> CliResult<Vec<AgentState>> {
    match load(path)? {
        SnapshotData::Agents { agents, .. } => Ok(agents),
        SnapshotData::Particles { .. } => Err(CliError::Data {
            path: path.to_path_buf(),
            message: format!("expected an agent snapshot ({})", AGENT_HEADER.join(",")),
        }),
    }
}

pub fn load_particles(path: &Path) -> CliResult<Vec<VWParticle>> {
    match load(path)? {
        SnapshotData::Particles { particles, .. } => Ok(particles),
        SnapshotData::Agents { .. } => Err(CliError::Data {
            path: path.to_path_buf(),
            message: format!(
                "expected a particle snapshot ({})",
                PARTICLE_HEADER.join(",")
            ),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_format_round_trips() {
        for x in [
            0.1,
            1.0 / 3.0,
            1e-300,
            5e-324,
            1.7976931348623157e308,
            0.0,
            2.5,
        ] {
            assert_eq!(exact(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(rounded(1.0 / 3.0, 4), "3.333e-1");
    }

    #[test]
    fn agent_rows() {
        let mut buf = Vec::new();
        let agents = [
            AgentState::new(0.1, 2.0).unwrap(),
            AgentState::new(3.0, 0.0).unwrap(),
        ];
        write_agents(&mut buf, 0.0, &agents).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,agent_id,x,y"));
        assert_eq!(
            lines.next(),
            Some("0.0000000000000000e0,0,1.0000000000000001e-1,2.0000000000000000e0")
        );
    }
}
