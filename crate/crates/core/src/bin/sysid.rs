fn main() {
    std::process::exit(sysid_core::cli::main_with_args(std::env::args_os()));
}
