use iclscope::tensorstore::validate_dump;

use super::Context;
use crate::error::{CliError, Result};

pub fn run(ctx: &mut Context) -> Result<()> {
    let dump = ctx.cfg.path("dump")?;
    let report = validate_dump(&dump);
    ctx.write_json("validation.json", &report)?;
    let n_errors = report.errors().count();
    println!(
        "{} error(s), {} warning(s)",
        n_errors,
        report.warnings().count()
    );
    if n_errors > 0 {
        return Err(CliError::InvalidDump(n_errors));
    }
    Ok(())
}
