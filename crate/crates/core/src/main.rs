fn main() {
    std::process::exit(delay_lqgame::cli::main(std::env::args_os()));
}
