fn main() {
    std::process::exit(bandlab::cli::main_entry());
}
