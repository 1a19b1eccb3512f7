use mcb::error::Error;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut stdout = std::io::stdout();
    match mcb::cli::run(&args, &mut stdout) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Usage(_) => 2,
                _ => 1,
            };
            std::process::exit(code);
        }
    }
}
