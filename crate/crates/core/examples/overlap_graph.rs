//! Overlap graph over noisy reports, its spectrum and centralities.

use cridaa::geometry::EnvConfig;
use cridaa::graph::{algebraic_connectivity, build_graph, centralities, GraphMode, GraphParams};
use cridaa::sensing::{isotropic, DetectionReport};

fn report(id: usize, x: f64, y: f64, std: f64) -> DetectionReport {
    DetectionReport { id, mu: [x, y, 10.0], sigma: isotropic(std * std), p_d: 0.8, detected: true, s_conf: 0.8 }
}

fn main() {
    let env = EnvConfig::default();
    // A tight cluster of three plus a loosely attached fourth.
    let reps = vec![
        report(0, 20.0, 0.0, 1.5),
        report(1, 21.5, 1.0, 1.5),
        report(2, 20.5, -1.5, 1.5),
        report(3, 24.0, 0.0, 2.0),
    ];
    for mode in [GraphMode::Overlap, GraphMode::Proximity] {
        let gp = GraphParams { mode, ..GraphParams::default() };
        let g = build_graph(&reps, &gp, &env);
        let c = centralities(&g, &gp);
        println!("{mode:?}: {} edges, lambda2 = {:.4}", g.edge_count(), algebraic_connectivity(&g));
        for (i, j, w) in g.edges() {
            println!("  {i} -- {j}  w = {w:.4}");
        }
        println!("  composite centrality {:?}", c.composite.iter().map(|x| (x * 1000.0).round() / 1000.0).collect::<Vec<_>>());
        println!("  snapshot {}", serde_json::to_string(&g.snapshot(0.0)).unwrap());
    }
}
