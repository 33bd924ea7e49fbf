use perihom_web::{cell_tensors, coagulation, Simulation};
use serde_json::Value;

#[test]
fn empty_cell_gives_identity_scaled_tensors() {
    let r: Value = serde_json::from_str(&cell_tensors(0.0, 16, 2.0, 1.0, 0.5, 1.0).unwrap()).unwrap();
    let k = &r["k"];
    assert!((k[0][0].as_f64().unwrap() - 2.0).abs() < 1e-10);
    assert!(k[0][1].as_f64().unwrap().abs() < 1e-10);
    assert!((r["d"][1][1][1].as_f64().unwrap() - 0.5).abs() < 1e-10);
    assert_eq!(r["mask"].as_array().unwrap().len(), 256);
}

const N: usize = 40;

fn initial(n: usize) -> Vec<f64> {
    let mut u = vec![0.0; n];
    u[0] = 1.0;
    u
}

#[test]
fn constant_kernel_monomers_follow_closed_form() {
    let (dt, steps) = (1e-3, 1000);
    let traj = coagulation("constant", 1.0, initial(N), dt, steps).unwrap();
    let t = dt * steps as f64;
    let exact = 1.0 / (1.0 + 0.5 * t).powi(2);
    assert!((traj[steps * N] - exact).abs() < 1e-3, "{} vs {exact}", traj[steps * N]);
    let mass = |k: usize| (0..N).map(|i| (i + 1) as f64 * traj[k * N + i]).sum::<f64>();
    for k in 0..steps {
        assert!(mass(k + 1) <= mass(k) + 1e-15);
    }
    assert!(traj.iter().all(|&x| x >= 0.0));
}

#[test]
fn simulation_advances_and_masks_solid() {
    let mut sim = Simulation::new(0.25, 0.5, 16, 1.0, 0.2, 0.01).unwrap();
    let d: Value = serde_json::from_str(&sim.advance(3).unwrap()).unwrap();
    assert!((d["t"].as_f64().unwrap() - 0.03).abs() < 1e-12);
    assert!((sim.time() - 0.03).abs() < 1e-12);
    let theta = sim.field(0).unwrap();
    assert_eq!(theta.len(), sim.side() * sim.side());
    assert!(theta.iter().any(|x| x.is_nan()));
    assert!(theta.iter().filter(|x| !x.is_nan()).all(|&x| x >= 0.0));
}
