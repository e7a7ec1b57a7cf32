//! One Monte Carlo drop: covariance spectra, long-term stability and blob round trip.

use ltbf::channel::{generate_drop, noncoherent_interference_covariance, ChannelDrop, NullFrames, ScenarioConfig};
use ltbf::linalg::row_space_angle;
use ltbf::linalg::ComplexMatrix;

fn main() -> ltbf::error::Result<()> {
    let cfg = ScenarioConfig::default();
    let drop = generate_drop(&cfg, 0)?;
    println!("{} antennas, {} UEs, {} subcarriers", drop.n_rx(), drop.n_ue(), drop.n_subcarriers());

    for ue in 0..drop.n_ue() {
        let e = drop.srs_covariance(ue)?.eigen()?.clone();
        let top: Vec<String> = e.values.iter().take(4).map(|v| format!("{v:.2}")).collect();
        println!("UE {ue}: alpha = {:.3}, top eigenvalues {}", drop.ue_alpha[ue], top.join(" "));
    }
    let qv = noncoherent_interference_covariance(&drop, NullFrames::Analytic)?;
    let top: Vec<String> = qv.eigen()?.values.iter().take(5).map(|v| format!("{v:.1}")).collect();
    println!("interferer: top eigenvalues {}", top.join(" "));

    let later = drop.evolve(cfg.t_lt_ms)?;
    for ue in 0..drop.n_ue() {
        let v0 = drop.srs_covariance(ue)?.eigen()?.vectors.column(0);
        let v1 = later.srs_covariance(ue)?.eigen()?.vectors.column(0);
        let angle = row_space_angle(&ComplexMatrix::from_rows(&[v0])?, &ComplexMatrix::from_rows(&[v1])?)?;
        println!("UE {ue}: dominant direction moved {:.3} deg over {} ms", angle.to_degrees(), cfg.t_lt_ms);
    }

    let mut blob = Vec::new();
    drop.write_blobs(&mut blob)?;
    let back = ChannelDrop::read_blobs(&mut blob.as_slice())?;
    println!("blob: {} bytes, channels identical after reload: {}", blob.len(), back.ue_channels == drop.ue_channels);
    Ok(())
}
