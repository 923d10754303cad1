//! Prints the spot width behind crystals of increasing length.
//!
//! ```text
//! cargo run --release -p biphoton --example thickness
//! ```

use biphoton::figures::{reproduce, FigureId, Setup};
use biphoton::thick::Knobs;

fn main() -> biphoton::Result<()> {
    let setup = Setup::default();
    println!("cut angle {:.3} deg", setup.cut_angle()?.to_degrees());
    for curve in reproduce(FigureId::Thickness, &setup, &Knobs::default())? {
        let c = &curve.convergence;
        println!(
            "{:>8}  FWHM = {:.3} x_c  (doubling changes: grid {:.1e}, qmax {:.1e})",
            curve.case.label, curve.fwhm, c.grid_n, c.qmax
        );
    }
    Ok(())
}
