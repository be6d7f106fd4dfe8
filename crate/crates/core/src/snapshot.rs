//! Serializable solver states.
//!
//! Floats are written with the shortest representation that round-trips, so
//! a snapshot read back from disk reproduces the in-memory state bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PolarGrid, RadialGrid};

pub const SNAPSHOT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format: u32,
    pub step: usize,
    pub t: f64,
    pub beta: f64,
    pub data: SnapshotData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum SnapshotData {
    Radial { grid: RadialGrid, u: Vec<f64>, phi: Vec<f64> },
    Planar { grid: PolarGrid, phi1: Vec<f64>, phi2: Vec<f64>, u: Vec<f64> },
}

impl Snapshot {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::SnapshotFormat(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let snap: Snapshot =
            serde_json::from_str(text).map_err(|e| Error::SnapshotFormat(e.to_string()))?;
        if snap.format != SNAPSHOT_FORMAT {
            return Err(Error::SnapshotFormat(format!(
                "unsupported format version {}",
                snap.format
            )));
        }
        snap.validate()?;
        Ok(snap)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match &self.data {
            SnapshotData::Radial { grid, u, phi } => u.len() == grid.n && phi.len() == grid.n,
            SnapshotData::Planar { grid, phi1, phi2, u } => {
                let n = grid.len();
                phi1.len() == n && phi2.len() == n && u.len() == n
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::GridMismatch("snapshot field lengths do not match its grid".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(
            vals in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 5..40),
            t in 0.0f64..10.0,
        ) {
            let grid = RadialGrid::lens(vals.len()).unwrap();
            let snap = Snapshot {
                format: SNAPSHOT_FORMAT,
                step: 7,
                t,
                beta: 0.5,
                data: SnapshotData::Radial { grid, u: vals.clone(), phi: vals.iter().map(|x| -x).collect() },
            };
            let back = Snapshot::from_json(&snap.to_json().unwrap()).unwrap();
            let (SnapshotData::Radial { u: a, .. }, SnapshotData::Radial { u: b, .. }) = (&snap.data, &back.data) else {
                unreachable!()
            };
            for (x, y) in a.iter().zip(b) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
            prop_assert_eq!(back.t.to_bits(), t.to_bits());
            prop_assert_eq!(snap, back);
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let grid = RadialGrid::lens(6).unwrap();
        let snap = Snapshot {
            format: 99,
            step: 0,
            t: 0.0,
            beta: 0.5,
            data: SnapshotData::Radial { grid, u: vec![0.0; 6], phi: vec![0.0; 6] },
        };
        let text = serde_json::to_string(&snap).unwrap();
        assert!(matches!(Snapshot::from_json(&text), Err(Error::SnapshotFormat(_))));
    }
}
