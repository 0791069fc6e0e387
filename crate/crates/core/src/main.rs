fn main() {
    std::process::exit(workforce_forecast::cli::run(std::env::args_os()));
}
