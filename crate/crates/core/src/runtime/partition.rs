//! Assignment of cameras and points to devices.

use crate::error::{Error, Result};
use crate::geometry::ProblemInstance;
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionStrategy {
    /// Contiguous camera-id blocks balancing observation counts; each point
    /// goes to the device holding the plurality of its observations.
    #[default]
    BalancedObservations,
    /// Caller-provided camera owners; points follow the plurality rule unless
    /// owners are given for them as well.
    Explicit {
        camera_owner: Vec<usize>,
        point_owner: Option<Vec<usize>>,
    },
}

/// One observation as seen by a device. Slots index the device's owned
/// variables for owned endpoints and its foreign lists otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedPair {
    pub observation: usize,
    pub camera: usize,
    pub point: usize,
    pub pixel: Vector2<f64>,
    pub camera_slot: usize,
    pub point_slot: usize,
}

/// Variables moving between one pair of devices, as `(global id, slot)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transfer {
    pub cameras: Vec<(usize, usize)>,
    pub points: Vec<(usize, usize)>,
}

impl Transfer {
    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty() && self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DevicePlan {
    pub id: usize,
    /// Owned variables, ascending global ids.
    pub cameras: Vec<usize>,
    pub points: Vec<usize>,
    /// Foreign variables this device needs, ascending global ids.
    pub foreign_cameras: Vec<usize>,
    pub foreign_points: Vec<usize>,
    pub intra: Vec<PlannedPair>,
    pub camera_side: Vec<PlannedPair>,
    pub point_side: Vec<PlannedPair>,
    /// Slots are into the owned lists.
    pub sends: BTreeMap<usize, Transfer>,
    /// Slots are into the foreign lists.
    pub receives: BTreeMap<usize, Transfer>,
}

impl DevicePlan {
    pub fn neighbors(&self) -> impl Iterator<Item = usize> + '_ {
        self.receives.keys().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub camera_owner: Vec<usize>,
    pub point_owner: Vec<usize>,
    pub devices: Vec<DevicePlan>,
}

impl Partition {
    pub fn num_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn crossing_pairs(&self) -> usize {
        self.devices.iter().map(|d| d.camera_side.len()).sum()
    }
}

fn balanced_camera_owner(problem: &ProblemInstance, s: usize) -> Vec<usize> {
    let m = problem.num_cameras();
    let mut counts = vec![0u64; m];
    for obs in &problem.observations {
        counts[obs.camera] += 1;
    }
    let total: u64 = counts.iter().sum();
    let mut owner = vec![0; m];
    let mut device = 0;
    let mut cumulative = 0u64;
    for (i, count) in counts.iter().enumerate() {
        owner[i] = device;
        cumulative += count;
        if device + 1 < s {
            let reached = cumulative as u128 * s as u128 >= total as u128 * (device + 1) as u128;
            let forced = m - i - 1 < s - device;
            if reached || forced {
                device += 1;
            }
        }
    }
    owner
}

fn plurality_point_owner(problem: &ProblemInstance, camera_owner: &[usize], s: usize) -> Vec<usize> {
    let mut votes: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); problem.num_points()];
    for obs in &problem.observations {
        *votes[obs.point].entry(camera_owner[obs.camera]).or_default() += 1;
    }
    votes
        .iter()
        .map(|v| {
            // BTreeMap iterates ascending, so strict `>` keeps the lowest id on ties.
            let mut best = (0, 0);
            for (&d, &n) in v {
                if n > best.1 {
                    best = (d, n);
                }
            }
            best.0.min(s - 1)
        })
        .collect()
}

/// Splits the problem across `s` devices.
pub fn partition_problem(
    problem: &ProblemInstance,
    s: usize,
    strategy: &PartitionStrategy,
) -> Result<Partition> {
    let m = problem.num_cameras();
    if s < 1 || s > m {
        return Err(Error::InvalidArgument(format!(
            "device count {s} must be between 1 and the number of cameras ({m})"
        )));
    }
    let (camera_owner, point_owner) = match strategy {
        PartitionStrategy::BalancedObservations => {
            let cams = balanced_camera_owner(problem, s);
            let pts = plurality_point_owner(problem, &cams, s);
            (cams, pts)
        }
        PartitionStrategy::Explicit {
            camera_owner,
            point_owner,
        } => {
            if camera_owner.len() != m || camera_owner.iter().any(|&d| d >= s) {
                return Err(Error::InvalidArgument(
                    "explicit camera owners must cover every camera with ids < S".into(),
                ));
            }
            let pts = match point_owner {
                Some(p) => {
                    if p.len() != problem.num_points() || p.iter().any(|&d| d >= s) {
                        return Err(Error::InvalidArgument(
                            "explicit point owners must cover every point with ids < S".into(),
                        ));
                    }
                    p.clone()
                }
                None => plurality_point_owner(problem, camera_owner, s),
            };
            (camera_owner.clone(), pts)
        }
    };
    build_partition(problem, s, camera_owner, point_owner)
}

fn build_partition(
    problem: &ProblemInstance,
    s: usize,
    camera_owner: Vec<usize>,
    point_owner: Vec<usize>,
) -> Result<Partition> {
    let mut owned_cams = vec![Vec::new(); s];
    let mut owned_pts = vec![Vec::new(); s];
    let mut camera_slot = vec![0; camera_owner.len()];
    let mut point_slot = vec![0; point_owner.len()];
    for (i, &d) in camera_owner.iter().enumerate() {
        camera_slot[i] = owned_cams[d].len();
        owned_cams[d].push(i);
    }
    for (j, &d) in point_owner.iter().enumerate() {
        point_slot[j] = owned_pts[d].len();
        owned_pts[d].push(j);
    }
    if let Some(d) = owned_cams.iter().position(Vec::is_empty) {
        return Err(Error::InvalidArgument(format!("device {d} owns no camera")));
    }

    let mut foreign_cams = vec![BTreeSet::new(); s];
    let mut foreign_pts = vec![BTreeSet::new(); s];
    for obs in &problem.observations {
        let (dc, dp) = (camera_owner[obs.camera], point_owner[obs.point]);
        if dc != dp {
            foreign_pts[dc].insert(obs.point);
            foreign_cams[dp].insert(obs.camera);
        }
    }
    let foreign_cams: Vec<Vec<usize>> = foreign_cams.into_iter().map(|f| f.into_iter().collect()).collect();
    let foreign_pts: Vec<Vec<usize>> = foreign_pts.into_iter().map(|f| f.into_iter().collect()).collect();
    let slot_of = |list: &[usize], id: usize| list.binary_search(&id).expect("foreign id listed");

    let mut devices: Vec<DevicePlan> = (0..s)
        .map(|d| DevicePlan {
            id: d,
            cameras: owned_cams[d].clone(),
            points: owned_pts[d].clone(),
            foreign_cameras: foreign_cams[d].clone(),
            foreign_points: foreign_pts[d].clone(),
            intra: Vec::new(),
            camera_side: Vec::new(),
            point_side: Vec::new(),
            sends: BTreeMap::new(),
            receives: BTreeMap::new(),
        })
        .collect();

    for (k, obs) in problem.observations.iter().enumerate() {
        let (dc, dp) = (camera_owner[obs.camera], point_owner[obs.point]);
        let base = PlannedPair {
            observation: k,
            camera: obs.camera,
            point: obs.point,
            pixel: obs.pixel,
            camera_slot: camera_slot[obs.camera],
            point_slot: point_slot[obs.point],
        };
        if dc == dp {
            devices[dc].intra.push(base);
        } else {
            devices[dc].camera_side.push(PlannedPair {
                point_slot: slot_of(&foreign_pts[dc], obs.point),
                ..base
            });
            devices[dp].point_side.push(PlannedPair {
                camera_slot: slot_of(&foreign_cams[dp], obs.camera),
                ..base
            });
        }
    }

    for d in 0..s {
        for (fslot, &i) in foreign_cams[d].iter().enumerate() {
            let src = camera_owner[i];
            devices[d].receives.entry(src).or_default().cameras.push((i, fslot));
            devices[src].sends.entry(d).or_default().cameras.push((i, camera_slot[i]));
        }
        for (fslot, &j) in foreign_pts[d].iter().enumerate() {
            let src = point_owner[j];
            devices[d].receives.entry(src).or_default().points.push((j, fslot));
            devices[src].sends.entry(d).or_default().points.push((j, point_slot[j]));
        }
    }
    // Outgoing lists were filled in receiver order; restore ascending ids.
    for dev in &mut devices {
        for t in dev.sends.values_mut() {
            t.cameras.sort_unstable();
            t.points.sort_unstable();
        }
    }

    Ok(Partition {
        camera_owner,
        point_owner,
        devices,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::{CameraState, LossFunction, Observation, RotationMatrix};
    use nalgebra::Vector3;
    use proptest::prelude::*;

    pub(crate) fn grid_problem(m: usize, n: usize, keep: impl Fn(usize, usize) -> bool) -> ProblemInstance {
        let cam = |i: usize| CameraState {
            rotation: RotationMatrix::identity(),
            center: Vector3::new(i as f64, 0.0, 0.0),
            intrinsics: Vector3::new(1.0, 0.0, 0.0),
        };
        let mut obs = Vec::new();
        for i in 0..m {
            for j in 0..n {
                if keep(i, j) {
                    obs.push(Observation {
                        camera: i,
                        point: j,
                        pixel: Vector2::new(0.01 * i as f64, 0.02 * j as f64),
                    });
                }
            }
        }
        ProblemInstance::new(
            (0..m).map(cam).collect(),
            (0..n).map(|j| Vector3::new(j as f64, 1.0, 5.0)).collect(),
            obs,
            LossFunction::Trivial,
        )
        .unwrap()
    }

    #[test]
    fn single_device_has_no_crossing_pairs() {
        let p = grid_problem(4, 6, |i, j| (i + j) % 3 != 0);
        let part = partition_problem(&p, 1, &PartitionStrategy::default()).unwrap();
        let d = &part.devices[0];
        assert_eq!(d.cameras.len(), 4);
        assert_eq!(d.points.len(), 6);
        assert_eq!(d.intra.len(), p.observations.len());
        assert!(d.camera_side.is_empty() && d.point_side.is_empty());
        assert!(d.sends.is_empty() && d.receives.is_empty());
    }

    #[test]
    fn tie_goes_to_lowest_device() {
        let p = grid_problem(2, 1, |_, _| true);
        let part = partition_problem(&p, 2, &PartitionStrategy::default()).unwrap();
        assert_eq!(part.camera_owner, vec![0, 1]);
        assert_eq!(part.point_owner, vec![0]);
        assert_eq!(part.crossing_pairs(), 1);
        assert_eq!(part.devices[1].camera_side.len(), 1);
        assert_eq!(part.devices[0].point_side.len(), 1);
        assert_eq!(part.devices[0].receives[&1].cameras, vec![(1, 0)]);
        assert_eq!(part.devices[1].receives[&0].points, vec![(0, 0)]);
        assert_eq!(part.devices[0].sends[&1].points, vec![(0, 0)]);
    }

    #[test]
    fn rejects_bad_device_counts() {
        let p = grid_problem(3, 2, |_, _| true);
        assert!(partition_problem(&p, 0, &PartitionStrategy::default()).is_err());
        assert!(partition_problem(&p, 4, &PartitionStrategy::default()).is_err());
    }

    proptest! {
        #[test]
        fn partition_invariants(m in 2usize..12, n in 1usize..20, s_raw in 1usize..12, seed in 0u64..1000) {
            let s = 1 + s_raw % m;
            let p = grid_problem(m, n, |i, j| !(i * 7 + j * 13 + seed as usize).is_multiple_of(3) || i == j % m);
            let part = partition_problem(&p, s, &PartitionStrategy::default()).unwrap();
            prop_assert_eq!(part.devices.len(), s);
            prop_assert!(part.devices.iter().all(|d| !d.cameras.is_empty()));
            // Each observation is classified once per touching device.
            let mut seen = vec![0usize; p.observations.len()];
            for d in &part.devices {
                for pair in d.intra.iter().chain(&d.camera_side).chain(&d.point_side) {
                    seen[pair.observation] += 1;
                }
                prop_assert!(!d.receives.contains_key(&d.id));
            }
            for (k, obs) in p.observations.iter().enumerate() {
                let crossing = part.camera_owner[obs.camera] != part.point_owner[obs.point];
                prop_assert_eq!(seen[k], if crossing { 2 } else { 1 });
            }
            // Symmetric neighbour relation with matching transfers.
            for d in &part.devices {
                for (&nb, recv) in &d.receives {
                    let sent = &part.devices[nb].sends[&d.id];
                    let ids = |v: &Vec<(usize, usize)>| v.iter().map(|x| x.0).collect::<Vec<_>>();
                    prop_assert_eq!(ids(&recv.cameras), ids(&sent.cameras));
                    prop_assert_eq!(ids(&recv.points), ids(&sent.points));
                    prop_assert!(part.devices[nb].receives.contains_key(&d.id));
                }
            }
            let total: usize = part.devices.iter().map(|d| d.intra.len() + d.camera_side.len()).sum();
            let ps: usize = part.devices.iter().map(|d| d.point_side.len()).sum();
            prop_assert_eq!(total, p.observations.len());
            prop_assert_eq!(part.crossing_pairs(), ps);
        }
    }
}
