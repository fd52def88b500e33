use clap::Parser;

fn main() {
    std::process::exit(morrey_embed::main_with(morrey_embed::Cli::parse()));
}
