//! Validated in-memory tables and their CSV schemas.

mod csv_io;
mod panel;

pub use csv_io::{
    fmt_float, load_agent_panel, load_amenities, load_city_covariates, load_industries,
    load_network_panel, load_survey, load_weather, load_world, write_agent_panel,
    write_amenities, write_city_covariates, write_industries, write_network_panel, write_survey,
    write_table, write_weather, write_world, Column, Table,
};
pub use panel::{
    AgentId, AgentPanel, AgentRecord, CityCovariates, Demographics, IndustryObs, IndustryPanel,
    NetworkPanel, SurveyChoices, SurveyRow, WeatherObs, WeatherPanel,
};
