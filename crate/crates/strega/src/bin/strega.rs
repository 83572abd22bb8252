fn main() {
    std::process::exit(strega::cli::cli_run(std::env::args_os()));
}
