fn main() {
    std::process::exit(agv_sidelink::cli::cli_main(std::env::args_os()));
}
