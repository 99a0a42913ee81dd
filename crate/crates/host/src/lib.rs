//! Host service and command-line tools around the simulation core: the live
//! WebSocket/UDP session service, headless trace replay, pilot trace
//! recording, cohort simulation, and the analysis report.

pub mod analyze;
pub mod config;
pub mod headless;
pub mod serve;
