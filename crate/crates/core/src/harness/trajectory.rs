//! Line-delimited JSON episode logs.
//!
//! Line 1 is a header object (`format`, `version`, digest, seed, static
//! body attributes and the initial roles). Every following line is one step
//! record: `step`, per-agent `[x, y, vx, vy]`, per-landmark `[x, y, vx, vy]`,
//! `utterances`, every agent's flat action, the bodyguard `rewards` and the
//! step `threat`. Floats use shortest round-trip formatting, so re-reading a
//! file reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::scenario::{EpisodeTrace, RoleAssignment, StepRecord};
use crate::world::{AgentAction, EntityState, WorldState};

pub const FORMAT: &str = "vipguard-trajectory";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Body {
    radius: f64,
    mass: f64,
    movable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    config_digest: String,
    seed: u64,
    world_half_extent: f64,
    c_dim: usize,
    roles: RoleAssignment,
    agents: Vec<Body>,
    landmarks: Vec<Body>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    step: usize,
    agents: Vec<[f64; 4]>,
    landmarks: Vec<[f64; 4]>,
    utterances: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    threat: f64,
}

fn body(e: &EntityState) -> Body {
    Body {
        radius: e.radius,
        mass: e.mass,
        movable: e.movable,
    }
}

fn kinematics(e: &EntityState) -> [f64; 4] {
    [e.position.x, e.position.y, e.velocity.x, e.velocity.y]
}

pub fn write_trajectory(trace: &EpisodeTrace, path: &Path) -> Result<()> {
    let first = trace
        .records
        .first()
        .ok_or_else(|| Error::contract("cannot write an empty trajectory"))?;
    let header = Header {
        format: FORMAT.to_string(),
        version: VERSION,
        config_digest: trace.config_digest.to_string(),
        seed: trace.seed,
        world_half_extent: trace.world_half_extent,
        c_dim: first.state.c_dim(),
        roles: trace.roles.clone(),
        agents: first.state.agents.iter().map(body).collect(),
        landmarks: first.state.landmarks.iter().map(body).collect(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);
    serde_json::to_writer(&mut w, &header).map_err(|e| io(e.into()))?;
    w.write_all(b"\n").map_err(io)?;
    for r in &trace.records {
        let rec = Record {
            step: r.state.step_index,
            agents: r.state.agents.iter().map(kinematics).collect(),
            landmarks: r.state.landmarks.iter().map(kinematics).collect(),
            utterances: r.state.utterances.clone(),
            actions: r.actions.iter().map(AgentAction::to_flat).collect(),
            rewards: r.rewards.clone(),
            threat: r.threat,
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn rebuild(bodies: &[Body], kin: &[[f64; 4]]) -> Vec<EntityState> {
    bodies
        .iter()
        .zip(kin)
        .map(|(b, k)| EntityState {
            position: Vec2::new(k[0], k[1]),
            velocity: Vec2::new(k[2], k[3]),
            radius: b.radius,
            mass: b.mass,
            movable: b.movable,
        })
        .collect()
}

pub fn read_trajectory(path: &Path) -> Result<EpisodeTrace> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = BufReader::new(file).lines();

    let header_line = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?
        .map_err(|e| Error::io(path, e))?;
    let probe: serde_json::Value =
        serde_json::from_str(&header_line).map_err(|e| parse_err(1, e.to_string()))?;
    if probe.get("format").and_then(|v| v.as_str()) != Some(FORMAT) {
        return Err(parse_err(1, format!("not a {FORMAT} file")));
    }
    let version = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != VERSION {
        return Err(Error::Version {
            what: "trajectory",
            found: version,
            expected: VERSION,
        });
    }
    let header: Header = serde_json::from_value(probe).map_err(|e| parse_err(1, e.to_string()))?;
    let config_digest = header
        .config_digest
        .parse()
        .map_err(|e: Error| parse_err(1, e.to_string()))?;

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        if rec.agents.len() != header.agents.len()
            || rec.landmarks.len() != header.landmarks.len()
            || rec.utterances.len() != header.agents.len()
            || rec.actions.len() != header.agents.len()
            || rec.rewards.len() != header.roles.bodyguard_indices.len()
        {
            return Err(parse_err(lineno, "record does not match header entity counts".into()));
        }
        if rec.utterances.iter().any(|u| u.len() != header.c_dim)
            || rec.actions.iter().any(|a| a.len() != 2 + header.c_dim)
        {
            return Err(parse_err(lineno, "utterance width does not match c_dim".into()));
        }
        let actions = rec
            .actions
            .iter()
            .map(|a| AgentAction::from_flat(a))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        records.push(StepRecord {
            state: WorldState {
                agents: rebuild(&header.agents, &rec.agents),
                landmarks: rebuild(&header.landmarks, &rec.landmarks),
                utterances: rec.utterances,
                step_index: rec.step,
            },
            actions,
            rewards: rec.rewards,
            threat: rec.threat,
        });
    }
    Ok(EpisodeTrace {
        seed: header.seed,
        config_digest,
        world_half_extent: header.world_half_extent,
        roles: header.roles,
        records,
    })
}
