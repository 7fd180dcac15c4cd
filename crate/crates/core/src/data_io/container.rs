//! Directory container: `manifest.json` plus a flat little-endian f32 payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sftformer_autograd::Tensor;

use super::{EchoSequence, ValueConvention};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FRAMES_FILE: &str = "frames.bin";
const DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerManifest {
    /// `[t, h, w]`, frame-major then row-major.
    pub shape: Vec<usize>,
    pub dtype: String,
    pub interval_min: u32,
    pub convention: ValueConvention,
    pub source_id: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Container {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_sequence(seq: &EchoSequence, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest = ContainerManifest {
        shape: seq.frames().shape().to_vec(),
        dtype: DTYPE.into(),
        interval_min: seq.frame_interval_minutes,
        convention: seq.value_convention,
        source_id: seq.source_id.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, text + "\n").map_err(io_err(&mpath))?;
    let mut bytes = Vec::with_capacity(seq.frames().len() * 4);
    for v in seq.frames().data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let fpath = dir.join(FRAMES_FILE);
    fs::write(&fpath, bytes).map_err(io_err(&fpath))
}

pub fn read_sequence(dir: &Path) -> Result<EchoSequence> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let format = |msg: String| Error::Format {
        path: mpath.clone(),
        msg,
    };
    let manifest: ContainerManifest = serde_json::from_str(&text).map_err(|e| format(e.to_string()))?;
    if manifest.dtype != DTYPE {
        return Err(format(format!("unsupported dtype {:?}, expected {DTYPE:?}", manifest.dtype)));
    }
    if manifest.shape.len() != 3 {
        return Err(format(format!("shape {:?} is not [t, h, w]", manifest.shape)));
    }
    let fpath = dir.join(FRAMES_FILE);
    let bytes = fs::read(&fpath).map_err(io_err(&fpath))?;
    let expected = manifest.shape.iter().product::<usize>() * 4;
    if bytes.len() != expected {
        return Err(Error::Format {
            path: fpath,
            msg: format!(
                "payload has {} bytes but manifest shape {:?} requires {expected}",
                bytes.len(),
                manifest.shape
            ),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let frames = Tensor::new(manifest.shape.clone(), data)?;
    EchoSequence::new(frames, manifest.interval_min, manifest.convention, manifest.source_id)
        .map_err(|e| format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_2x4x4_is_128_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let seq = EchoSequence::normalized(Tensor::zeros(vec![2, 4, 4]), "zeros").unwrap();
        write_sequence(&seq, dir.path()).unwrap();
        let bytes = fs::read(dir.path().join(FRAMES_FILE)).unwrap();
        assert_eq!(bytes.len(), 128);
        let m: ContainerManifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(m.shape, vec![2, 4, 4]);
        assert_eq!(m.dtype, "f32le");
        assert_eq!(read_sequence(dir.path()).unwrap(), seq);
    }

    #[test]
    fn manifest_claiming_more_frames_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let seq = EchoSequence::normalized(Tensor::zeros(vec![2, 4, 4]), "s").unwrap();
        write_sequence(&seq, dir.path()).unwrap();
        let mpath = dir.path().join(MANIFEST_FILE);
        let mut m: ContainerManifest = serde_json::from_str(&fs::read_to_string(&mpath).unwrap()).unwrap();
        m.shape[0] = 3;
        fs::write(&mpath, serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(read_sequence(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_directory_is_container_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_sequence(&dir.path().join("nope")),
            Err(Error::Container { .. })
        ));
    }
}
