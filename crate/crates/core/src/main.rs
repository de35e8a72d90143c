use clap::Parser;

fn main() {
    let cli = csi_core::cli::Cli::parse();
    let code = csi_core::cli::run(&cli, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
