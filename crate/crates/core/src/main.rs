fn main() {
    std::process::exit(freqpanel::cli::run(std::env::args_os()));
}
