fn main() {
    std::process::exit(dmnls_cli::run(std::env::args_os()));
}
