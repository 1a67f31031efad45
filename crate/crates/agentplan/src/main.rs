use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let env_catalog = std::env::var_os(agentplan::io::CATALOG_ENV).map(Into::into);
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = agentplan::cli::run(
        std::env::args_os(),
        env_catalog,
        &mut stdout.lock(),
        &mut stderr.lock(),
    );
    let _ = std::io::stdout().flush();
    ExitCode::from(code)
}
