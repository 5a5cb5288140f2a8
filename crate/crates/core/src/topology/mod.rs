//! Location orders, tactile spatial/temporal graphs and graph propagation.

mod graph;
mod order;

pub use graph::{
    build_spatial_graph, build_temporal_graph, default_coords, graph_propagate, load_coords,
    neutouch_coords, parse_coords, Coord, HopOperator, SpatialGraph, TactileGraph, TemporalGraph,
    TemporalMode,
};
pub use order::{make_order, LocationOrder, OrderKind, SENSOR_TAXELS};
