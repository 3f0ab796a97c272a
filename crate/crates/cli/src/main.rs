mod args;
mod plot;
mod run;

use clap::Parser;

use crate::args::Cli;
use crate::run::Failure;

fn fail(kind: &str, code: i32, message: &str) -> ! {
    let line = serde_json::json!({ "error": kind, "code": code, "message": message });
    eprintln!("{line}");
    std::process::exit(code);
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let message = e.kind().to_string();
            let _ = e.print();
            fail("usage", 2, &message);
        }
    };
    if let Err(f) = run::run(cli, &mut std::io::stdout().lock()) {
        let (kind, code) = f.class();
        let message = match &f {
            Failure::Core(e) => chain(e),
            other => other.message(),
        };
        fail(kind, code, &message);
    }
}

fn chain(e: &dyn std::error::Error) -> String {
    let mut msg = e.to_string();
    let mut cur = e.source();
    while let Some(s) = cur {
        let part = s.to_string();
        if !msg.contains(&part) {
            msg.push_str(": ");
            msg.push_str(&part);
        }
        cur = s.source();
    }
    msg
}
