use clap::Parser;
use ring_analyzer::cli::{run, Cli};

fn main() {
    // RING_ANALYZER_THREADS caps worker parallelism (simulation trials).
    if let Ok(threads) = std::env::var("RING_ANALYZER_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    std::process::exit(run(cli));
}
