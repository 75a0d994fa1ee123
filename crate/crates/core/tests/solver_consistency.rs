//! End-to-end checks on solver-produced periodic trajectories.

use std::sync::Arc;

use invlab_core::diagnostics::{self, diagnostics_record};
use invlab_core::forcing::kolmogorov_forcing;
use invlab_core::spectral::{Grid, ScalarField};
use invlab_core::time::{run, Integrator, IntegratorConfig, RunOptions, State, Trajectory};
use invlab_core::weak::{default_battery, weak_pairings};
use invlab_core::CompactRegion;

fn perturbed_kolmogorov(nu: f64, n: usize, t_end: f64, cadence: f64) -> Trajectory {
    let g = Grid::square(n).unwrap();
    let forcing = kolmogorov_forcing(1, 1.0).unwrap();
    let w0 = ScalarField::from_fn(g, |x, y| 0.2 * ((x + y).cos() + 0.5 * (2.0 * x - y).sin()));
    let s0 = State::new(w0, 0.0, nu, Arc::new(forcing)).unwrap();
    let mut integ = Integrator::for_state(&s0, IntegratorConfig::default()).unwrap();
    let options = RunOptions {
        dt: Some(1e-3),
        keep_snapshots: true,
    };
    run(&mut integ, s0, t_end, cadence, &mut [], options).unwrap()
}

#[test]
fn solver_output_satisfies_the_weak_form() {
    let nu = 0.01;
    let traj = perturbed_kolmogorov(nu, 32, 1.0, 0.0025);
    let hist = traj.velocities().unwrap();
    let scale = hist.iter().map(|(_, u)| diagnostics::energy(u)).fold(0.0, f64::max);
    let g = hist[0].1.grid();
    for tf in default_battery(g.lx(), g.ly(), 1.0, 3).unwrap() {
        let p = weak_pairings(&hist, nu, &kolmogorov_forcing(1, 1.0).unwrap(), &tf).unwrap();
        assert!(p.warnings.is_empty());
        assert!((p.residual - p.viscous).abs() <= 1e-4 * scale, "{}: {} vs {}", tf.name, p.residual, p.viscous);
        assert!(p.n_phi.abs() > 0.0);
    }
}

#[test]
fn enstrophy_identity_at_every_cadence_point() {
    let traj = perturbed_kolmogorov(0.02, 32, 0.5, 0.05);
    let g = Grid::square(32).unwrap();
    let rec = diagnostics_record(&traj, &CompactRegion::defaults(g.lx(), g.ly(), true)).unwrap();
    assert_eq!(rec.rows.len(), 11);
    for row in &rec.rows {
        assert!((row.enstrophy - row.grad_norm_sq).abs() <= 1e-10 * row.enstrophy, "t = {}", row.t);
    }
}
