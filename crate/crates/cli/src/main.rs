use std::io::Write;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    let code = xv_cli::cli::run(args, &mut out, &mut err);
    let _ = out.flush();
    std::process::exit(code);
}
