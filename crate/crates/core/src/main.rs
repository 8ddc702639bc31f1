use std::io::{self, Write};

fn main() {
    let stdin = io::stdin().lock();
    let mut out = io::stdout().lock();
    let mut err = io::stderr().lock();
    let code = dyncount::cli::run(std::env::args_os(), stdin, &mut out, &mut err);
    let _ = out.flush();
    std::process::exit(code);
}
