//! Simulates one capture and reconstructs it, printing the loss and the
//! registered PSNR as it goes.
//!
//! usage: scenario [size] [order] [iterations] [seed] [transmittance] [snr_db|none] [alpha_f] [alpha_hi]

use std::time::Instant;

use ca_deconv::aperture::generate_ca;
use ca_deconv::forward::simulate_capture;
use ca_deconv::metrics::psnr;
use ca_deconv::object::{generate_object, PointSources};
use ca_deconv::pie::{init_state, ReconConfig, Solver};
use ca_deconv::zernike::{phase_map, pupil_from_phase, sample_coefficients, ZernikeSpec};
use ca_deconv::Grid;

fn arg<T: std::str::FromStr>(args: &[String], i: usize, default: T) -> T {
    args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> ca_deconv::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let size: usize = arg(&args, 1, 128);
    let order: usize = arg(&args, 2, 8);
    let iterations: usize = arg(&args, 3, 20_000);
    let seed: u64 = arg(&args, 4, 0);
    let transmittance: f64 = arg(&args, 5, 0.5);
    let snr: Option<f64> = args.get(6).and_then(|s| s.parse().ok()).or(if args.len() > 6 { None } else { Some(30.0) });

    let grid = Grid::square(size)?;
    let object = generate_object(grid, &PointSources { seed, ..PointSources::default() })?;
    let spec = ZernikeSpec::new(sample_coefficients(order, 1000 + seed)?, ZernikeSpec::default_radius(grid))?;
    let pupil = pupil_from_phase(&phase_map(&spec, grid)?.phase);
    let aperture = generate_ca(grid, transmittance, 2000 + seed)?;
    let mut record = simulate_capture(&object, &pupil, &aperture)?;
    if let Some(snr) = snr {
        record = record.with_noise(snr, 3000 + seed)?;
    }
    println!("capture psnr {:.2} dB", psnr(&object, &record.capture, true, true)?.psnr_db);

    let defaults = ReconConfig::default();
    let cfg = ReconConfig {
        max_iterations: iterations,
        init_seed: 4000 + seed,
        alpha_f: arg(&args, 7, defaults.alpha_f),
        alpha_hi: arg(&args, 8, defaults.alpha_hi),
        ..defaults
    };
    let state = init_state(&record.capture, &aperture, &cfg)?;
    let mut solver = Solver::new(state, &record.capture, &aperture, &cfg)?;
    let start = Instant::now();
    let report_every = (iterations / 20).max(1);
    while !solver.is_finished() {
        let loss = solver.step()?;
        let k = solver.state().iteration;
        if k % report_every == 0 || k == 1 {
            let mut f = solver.state().object();
            f = f.map(|v| v.max(0.0));
            let q = psnr(&object, &f, true, true)?;
            println!("it {k:>7} loss {loss:.4e} psnr {:.2} dB shift {:?} ({:.1}s)", q.psnr_db, q.shift, start.elapsed().as_secs_f64());
        }
    }
    let result = solver.into_result();
    let q = psnr(&object, &result.object, true, true)?;
    println!("final loss {:.4e} (initial {:.4e}) psnr {:.2} dB", result.final_loss(), result.initial_loss(), q.psnr_db);
    Ok(())
}
