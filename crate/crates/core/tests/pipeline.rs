use std::sync::Arc;

use varexp_core::inequalities::{bump_exponent, CounterexampleSpec};
use varexp_core::io::{read_table, write_energy, ENERGY_HEADER};
use varexp_core::mesh::{build_mesh_hierarchy, Domain};
use varexp_core::models::{default_lower_order, prototype_flux, LowerOrderMode};
use varexp_core::solver::{bochner_coercivity_monitor, run_galerkin, NewtonConfig, ProblemSpec, TOL_ENERGY};

#[test]
fn bump_exponent_run_on_the_disk_round_trips_through_csv() {
    let p = bump_exponent(&CounterexampleSpec::default()).unwrap();
    let spec = ProblemSpec::homogeneous(
        prototype_flux(&p, 0.1).unwrap(),
        default_lower_order(&p, None, 1.0, LowerOrderMode::Saturating).unwrap(),
        Arc::new(|x| {
            let g = (-(x[0] * x[0] + x[1] * x[1])).exp();
            [x[1] * g, -x[0] * g]
        }),
        1.0,
    )
    .unwrap();
    let h = build_mesh_hierarchy(Domain::Disk { radius: 2.5 }, 3).unwrap();
    let run = run_galerkin(&spec, &h[2], 8, &NewtonConfig::default()).unwrap();
    assert!(run.ledger.passes(TOL_ENERGY));
    // unforced: kinetic energy never exceeds its initial value
    assert!(run.ledger.max_kinetic() <= run.ledger.initial_kinetic() * (1.0 + 1e-12));

    let report = bochner_coercivity_monitor(&run, &spec, TOL_ENERGY);
    assert!(report.envelope_ok);

    let dir = std::env::temp_dir().join(format!("varexp-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("energy.csv");
    assert_eq!(write_energy(&path, &run.ledger).unwrap(), 9);
    let (header, rows) = read_table(&path).unwrap();
    assert_eq!(header, ENERGY_HEADER);
    for (row, r) in rows.iter().zip(&run.ledger.rows) {
        assert_eq!(row[0].parse::<usize>().unwrap(), r.k);
        assert_eq!(row[2].parse::<f64>().unwrap(), r.kinetic);
        assert_eq!(row[5].parse::<f64>().unwrap(), r.slack);
    }
    std::fs::remove_dir_all(dir).unwrap();
}
