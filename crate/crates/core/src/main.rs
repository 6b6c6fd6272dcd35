fn main() {
    std::process::exit(credscan::cli::main_entry());
}
