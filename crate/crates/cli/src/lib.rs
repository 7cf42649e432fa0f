//! Command-line front end: parameter files, trajectory CSVs, the built-in
//! studies, and the self-check suites. All numerics live in the core crate;
//! this one owns formats and exit codes.

pub mod app;
pub mod datafile;
pub mod errors;
pub mod experiment;
pub mod params_file;
pub mod trajectory;
pub mod verify;
