//! Runs the two-joint arm with a 30 degree encoder offset in both filter
//! modes and prints the final-half error per joint.

use jae_core::demo;
use jae_core::estimator::Mode;
use jae_core::harness::{run_experiment, ExperimentConfig};
use jae_core::ExecPolicy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let setup = demo::setup("planar2", 9, 4, ExecPolicy::Parallel)?;
    for mode in [Mode::Absolute, Mode::Relative] {
        let mut config = ExperimentConfig::default();
        config.trajectory.ticks = 2000;
        config.noise.calibration_offset = vec![30f64.to_radians(), -30f64.to_radians()];
        config.ekf.mode = mode;
        let out = run_experiment(&setup, &config, ExecPolicy::Parallel)?;
        println!("{mode:?}");
        for j in &out.summary.joints {
            println!(
                "  {:<10} rmse {:6.2} deg  bias {:6.2} deg",
                j.joint,
                j.rmse_final_half.to_degrees(),
                j.bias_final_half.to_degrees()
            );
        }
    }
    Ok(())
}
