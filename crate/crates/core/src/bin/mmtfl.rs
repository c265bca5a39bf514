fn main() {
    std::process::exit(mmtfl::cli::run(std::env::args_os()));
}
