#![allow(dead_code)]

use bplan_core::Observation;
use rand::Rng;

/// Random connected-ish observation with `n` nodes; node 0 is current.
pub fn random_observation<R: Rng>(rng: &mut R, n: usize, feature_dim: usize, beacons: usize) -> Observation {
    let mut adjacency = vec![Vec::new(); n];
    for i in 1..n {
        let j = rng.gen_range(0..i);
        adjacency[i].push(j);
        adjacency[j].push(i);
    }
    for _ in 0..n {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b && !adjacency[a].contains(&b) {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
    }
    for row in adjacency.iter_mut() {
        row.sort();
    }
    let features = (0..n * feature_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut beacon_ids: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).take(beacons).collect();
    if beacon_ids.is_empty() {
        beacon_ids.push(n - 1);
    }
    Observation {
        feature_dim,
        features,
        neighbors: adjacency[0].clone(),
        adjacency,
        current: 0,
        beacons: beacon_ids,
    }
}
