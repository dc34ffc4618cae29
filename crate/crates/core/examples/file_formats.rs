//! Writes an environment and a transcript, then loads both back.
use fairmdp::harness::{check_transcript, EnvSource, Environment};
use fairmdp::{fairfict_rl, GameTranscript, SolverConfig};

fn main() -> fairmdp::Result<()> {
    let dir = std::env::temp_dir().join("fairmdp-file-formats");
    let env = Environment::load(&EnvSource::Random { states: 5, actions: 2, horizon: 4, groups: 3, seed: 1 })?;
    for p in env.write(&dir)? {
        println!("wrote {}", p.display());
    }
    let loaded = Environment::load(&EnvSource::Dir { path: dir.clone() })?;
    let cfg = SolverConfig { alpha: 0.8, iterations: 50, ..SolverConfig::default() };
    let tr = fairfict_rl(&loaded.mdp, &loaded.groups, &cfg)?;
    let mut buf = Vec::new();
    tr.write_jsonl(&mut buf)?;
    let back = GameTranscript::read_jsonl(buf.as_slice())?;
    println!("{} transcript lines, round trip equal: {}", buf.split(|&b| b == b'\n').filter(|l| !l.is_empty()).count(), back == tr);
    print!("{}", check_transcript(&loaded, &back)?);
    Ok(())
}
