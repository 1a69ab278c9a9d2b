//! Portfolio CSV ingestion, fixed-effect pooling and plot-data emission.

mod csv_input;
mod plot;
mod pool;

pub use csv_input::{
    parse_estimates, parse_portfolio, parse_portfolio_path, parse_rows, write_portfolio,
    PortfolioCsvRow, PORTFOLIO_HEADER,
};
pub use plot::{emit_plot_data, FigureId, PlotParams, PlotTable};
pub use pool::{exact_sum, pool_fixed_effect, pool_fixed_effect_detailed, PooledEstimate};
