#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::DVector;
use wdngp::gp_model::WindowData;
use wdngp::io::load_network;
use wdngp::units::FlowUnit;
use wdngp::Network;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn net4() -> Network {
    load_network(&fixture("net4.inp"), None).unwrap().0
}

pub fn net8() -> Network {
    let csv = fixture("net8_demands.csv");
    load_network(&fixture("net8.inp"), Some((&csv, FlowUnit::Gpm)))
        .unwrap()
        .0
}

pub fn window_data(net: &Network, start: usize, hp: usize, x0: Vec<f64>) -> WindowData {
    WindowData {
        x0: DVector::from_vec(x0),
        demands: net
            .demand_forecast(start, hp)
            .into_iter()
            .map(DVector::from_vec)
            .collect(),
        u_before: None,
    }
}

pub fn net_from_inp(text: &str) -> Network {
    let p = wdngp::io::parse_network(text).unwrap();
    wdngp::network::build_network(p.nodes, p.links, &p.patterns).unwrap()
}

/// The four-node line with every demand set to zero and the tank at 834 ft.
pub fn net4_zero_demand() -> Network {
    let text = std::fs::read_to_string(fixture("net4.inp")).unwrap();
    net_from_inp(&text.replace("J    700   100", "J    700   0"))
}
