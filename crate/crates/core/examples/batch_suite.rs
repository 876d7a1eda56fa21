//! Run the bundled scenarios in both modes in parallel and print the report
//! table. Pass a directory to also write the per-run files there.

use passiguard::cli::{run_suite, suite_table};

fn main() -> passiguard::Result<()> {
    let out = std::env::args_os().nth(1).map(std::path::PathBuf::from);
    let rows = run_suite(&[], out.as_deref())?;
    print!("{}", suite_table(&rows));
    Ok(())
}
