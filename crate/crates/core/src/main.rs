fn main() {
    std::process::exit(porehom::io::cli::dispatch(std::env::args_os()));
}
