fn main() {
    std::process::exit(voxfp_cli::run(std::env::args_os()));
}
