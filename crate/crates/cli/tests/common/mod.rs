#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_levelcvae"));
    cmd.env_remove("VGLC_ROOT")
        .env_remove("LEVELCVAE_CONFIG")
        .env("RUST_LOG", "warn");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[track_caller]
pub fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "levelcvae {args:?} failed with {:?}\n{}",
        out.status.code(),
        stderr(&out)
    );
    stdout(&out)
}

fn put(dir: PathBuf, name: &str, rows: &[String]) {
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join(name), rows.join("\n") + "\n").unwrap();
}

fn smb_level(rng: &mut ChaCha8Rng, width: usize) -> Vec<String> {
    let mut g = vec![vec![b'-'; width]; 14];
    for c in 0..width {
        if rng.random_bool(0.9) || c < 3 {
            for row in &mut g[12..14] {
                row[c] = b'X';
            }
        }
    }
    for c in 2..width - 2 {
        match rng.random_range(0..12) {
            0 => g[11][c] = b'E',
            1 => g[8][c] = b'?',
            2 => g[8][c] = b'S',
            3 => g[4][c] = b'o',
            4 if g[12][c] == b'X' && g[12][c + 1] == b'X' => {
                g[10][c] = b'<';
                g[10][c + 1] = b'>';
                g[11][c] = b'[';
                g[11][c + 1] = b']';
            }
            _ => {}
        }
    }
    g.into_iter().map(|r| String::from_utf8(r).unwrap()).collect()
}

fn ki_level(rng: &mut ChaCha8Rng, height: usize) -> Vec<String> {
    (0..height)
        .map(|r| {
            let mut row = vec![b'-'; 16];
            row[0] = b'#';
            row[15] = b'#';
            if r % 4 == 3 {
                let start = rng.random_range(1..8);
                for cell in &mut row[start..start + rng.random_range(3..7)] {
                    *cell = if rng.random_bool(0.2) { b'T' } else { b'#' };
                }
            }
            match rng.random_range(0..20) {
                0 => row[rng.random_range(1..15)] = b'H',
                1 => row[rng.random_range(1..15)] = b'M',
                2 => row[rng.random_range(1..15)] = b'D',
                _ => {}
            }
            String::from_utf8(row).unwrap()
        })
        .collect()
}

fn mm_level(rng: &mut ChaCha8Rng, width: usize) -> Vec<String> {
    let mut g = vec![vec![b'#'; width]; 14];
    for row in g.iter_mut().take(12).skip(2) {
        for cell in row.iter_mut() {
            *cell = b'-';
        }
    }
    for c in 0..width {
        match rng.random_range(0..10) {
            0 => g[11][c] = b'H',
            1 => {
                for row in g.iter_mut().take(11).skip(5) {
                    row[c] = b'L';
                }
            }
            2 => g[10][c] = b'M',
            3 => g[rng.random_range(3..10)][c] = b'*',
            4 => g[rng.random_range(3..10)][c] = b'w',
            _ => {}
        }
    }
    g.into_iter().map(|r| String::from_utf8(r).unwrap()).collect()
}

/// Small VGLC-shaped corpus under the default directory layout.
pub fn synthetic_corpus(root: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (i, w) in [40, 33, 28].into_iter().enumerate() {
        put(root.join("Super Mario Bros/Processed"), &format!("mario-{i}.txt"), &smb_level(&mut rng, w));
    }
    put(
        root.join("Super Mario Bros 2 (Japan)/Processed"),
        "smb2j-1.txt",
        &smb_level(&mut rng, 48),
    );
    for (i, h) in [36, 30].into_iter().enumerate() {
        put(root.join("Kid Icarus/Processed"), &format!("kidicarus_{i}.txt"), &ki_level(&mut rng, h));
    }
    for (i, w) in [30, 26].into_iter().enumerate() {
        put(root.join("MegaMan/Processed"), &format!("megaman_{i}.txt"), &mm_level(&mut rng, w));
    }
}
