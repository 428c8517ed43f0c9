use clap::Parser;
use paintctl::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            if let Some(text) = out.text {
                print!("{text}");
            }
            println!("{}", out.json);
        }
        Err(e) => {
            let rec = e.record();
            eprintln!("{}", serde_json::to_string(&rec).expect("error record serializes"));
            std::process::exit(rec.exit_code);
        }
    }
}
