//! File formats: trajectory CSV and state literals.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use toda_chain_core::dynamics::Trajectory;
use toda_chain_core::ChainState;

/// Writes a trajectory as CSV with header `t,q1..qn,p1..pn,u,v`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut out = String::new();
    out.push('t');
    for k in 1..=traj.n {
        out.push_str(&format!(",q{k}"));
    }
    for k in 1..=traj.n {
        out.push_str(&format!(",p{k}"));
    }
    out.push_str(",u,v\n");
    for i in 0..traj.len() {
        out.push_str(&format!("{}", traj.times[i]));
        for q in &traj.states[i].q {
            out.push_str(&format!(",{q}"));
        }
        for p in &traj.states[i].p {
            out.push_str(&format!(",{p}"));
        }
        let (u, v) = traj.controls[i];
        out.push_str(&format!(",{u},{v}\n"));
    }
    let mut file =
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Reads a state literal `{"q": [...], "p": [...]}`.
pub fn read_state(path: &Path) -> Result<ChainState> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let state: ChainState =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    ChainState::new(state.q, state.p).map_err(|e| anyhow::anyhow!("{e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_layout() {
        let traj = Trajectory {
            n: 2,
            times: vec![0.0, 0.5],
            states: vec![
                ChainState::new(vec![0.0, 1.0], vec![0.25, -0.5]).unwrap(),
                ChainState::new(vec![0.1, 1.1], vec![0.2, -0.4]).unwrap(),
            ],
            controls: vec![(0.5, 0.0), (0.5, -0.25)],
        };
        let dir = std::env::temp_dir().join("toda-chain-csv-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("traj.csv");
        write_trajectory_csv(&path, &traj).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,q1,q2,p1,p2,u,v");
        assert_eq!(lines.next().unwrap(), "0,0,1,0.25,-0.5,0.5,0");
    }

    #[test]
    fn state_literal_round_trip() {
        let dir = std::env::temp_dir().join("toda-chain-state-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("state.json");
        std::fs::write(&path, r#"{"q":[0.0,3.0],"p":[0.5,-0.5]}"#).unwrap();
        let s = read_state(&path).unwrap();
        assert_eq!(s.q, vec![0.0, 3.0]);
        assert_eq!(s.p, vec![0.5, -0.5]);
    }
}
