fn main() {
    std::process::exit(trajgrid_cli::run(std::env::args_os()));
}
