fn main() {
    std::process::exit(qtangent_cli::parse_and_dispatch(std::env::args_os()));
}
