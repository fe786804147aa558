fn main() -> std::process::ExitCode {
    subspace_embed::cli::run(std::env::args_os())
}
