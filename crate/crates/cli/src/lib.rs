//! Library surface of the cogcmd CLI: file formats, backend wiring, and the
//! subcommand implementations, kept callable for integration tests.

pub mod http;
pub mod ioutil;
