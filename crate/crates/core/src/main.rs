use std::io;

fn main() {
    let code = csma_gicn::cli::run_cli(std::env::args_os(), &mut io::stdout(), &mut io::stderr());
    std::process::exit(code);
}
