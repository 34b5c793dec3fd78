//! Shared setup for the solver benchmarks.

use std::path::PathBuf;

use wdngp::gp_model::WindowData;
use wdngp::io::load_network;
use wdngp::nalgebra::DVector;
use wdngp::{FlowUnit, Network};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

/// The eight-node network with its 24 h demand series.
pub fn net8() -> Network {
    let csv = fixture("net8_demands.csv");
    load_network(&fixture("net8.inp"), Some((&csv, FlowUnit::Gpm)))
        .expect("fixture loads")
        .0
}

pub fn window_data(net: &Network, start: usize, hp: usize) -> WindowData {
    WindowData {
        x0: DVector::from_vec(net.initial_tank_heads()),
        demands: net
            .demand_forecast(start, hp)
            .into_iter()
            .map(DVector::from_vec)
            .collect(),
        u_before: None,
    }
}
