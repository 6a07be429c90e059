fn main() {
    std::process::exit(creature_lab::cli::run(std::env::args_os()));
}
