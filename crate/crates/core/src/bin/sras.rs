fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(sras::cli::run_command(&argv));
}
