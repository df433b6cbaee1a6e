fn main() {
    std::process::exit(umstab_cli::run(std::env::args_os()));
}
