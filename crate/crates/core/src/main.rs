fn main() {
    std::process::exit(lownoise::cli::run(std::env::args_os()));
}
