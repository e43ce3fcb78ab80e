fn main() {
    std::process::exit(tfqkd::cli::main_exit_code());
}
