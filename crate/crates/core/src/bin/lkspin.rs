fn main() {
    std::process::exit(lkspin::cli::dispatch(std::env::args_os()));
}
