//! Small survival heatmap written to ./heatmap-out.

use ckp::experiment::{emit_csv, run_grid, write_artifacts, GridSpec};
use ckp::MechanismKind;

fn main() {
    let spec = GridSpec {
        mechanism: MechanismKind::ExhaustiveBfs,
        m_values: vec![ckp::CombinationFactor::constant(1), ckp::CombinationFactor::constant(2)],
        k_grid: vec![2, 4, 6],
        horizon: 500,
        trials: 10,
        ..GridSpec::default()
    };
    let cells = run_grid(&spec).expect("valid grid");
    print!("{}", emit_csv(&cells));
    let dir = std::path::Path::new("heatmap-out");
    for path in write_artifacts(dir, &cells).expect("writable output directory") {
        println!("wrote {}", path.display());
    }
}
