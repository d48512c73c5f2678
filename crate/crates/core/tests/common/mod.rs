#![allow(dead_code)]

use std::path::{Path, PathBuf};

use spikecodec::{read_wav, AudioSignal};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Bundled WAV fixtures, sorted by file name.
pub fn fixtures() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(fixture_dir())
        .expect("fixtures directory")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "wav"))
        .collect();
    v.sort();
    v
}

pub fn name(p: &Path) -> String {
    p.file_name().unwrap().to_string_lossy().into_owned()
}

/// Filename token before the first underscore.
pub fn label(p: &Path) -> String {
    name(p).split('_').next().unwrap().to_string()
}

pub fn load(p: &Path) -> AudioSignal {
    read_wav(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}
