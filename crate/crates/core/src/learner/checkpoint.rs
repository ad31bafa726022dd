//! Binary checkpoint: `EDGESLM\0` magic, u32 version, u64 dimension,
//! u64 hash seed, u64 step count, then `dimension + 1` parameters (bias
//! last) and the two moment vectors, all little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ClassifierState, HashedFeaturizer, LearnerError, LinearModel, OptimizerState};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EDGESLM\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(writer: W, state: &ClassifierState) -> Result<(), LearnerError> {
    let mut w = BufWriter::new(writer);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(state.featurizer.dimension() as u64).to_le_bytes())?;
    w.write_all(&state.featurizer.seed().to_le_bytes())?;
    let opt = &state.model.state;
    w.write_all(&opt.step_count.to_le_bytes())?;
    for values in [&opt.params, &opt.m, &opt.v] {
        for x in values {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, LearnerError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, LearnerError> {
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

pub fn read_checkpoint<R: Read>(reader: R) -> Result<ClassifierState, LearnerError> {
    let mut r = BufReader::new(reader);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| LearnerError::Checkpoint("file too short for header".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(LearnerError::Checkpoint("bad magic header".into()));
    }
    let mut version = [0u8; 4];
    r.read_exact(&mut version)?;
    let version = u32::from_le_bytes(version);
    if version != CHECKPOINT_VERSION {
        return Err(LearnerError::Checkpoint(format!("unsupported version {version}")));
    }
    let dimension = usize::try_from(read_u64(&mut r)?)
        .map_err(|_| LearnerError::Checkpoint("dimension does not fit in memory".into()))?;
    let featurizer = HashedFeaturizer::new(dimension, read_u64(&mut r)?)?;
    let step_count = read_u64(&mut r)?;
    let len = dimension + 1;
    let truncated = |e: LearnerError| match e {
        LearnerError::Io(_) => LearnerError::Checkpoint("truncated parameter block".into()),
        other => other,
    };
    let params = read_f64s(&mut r, len).map_err(truncated)?;
    let m = read_f64s(&mut r, len).map_err(truncated)?;
    let v = read_f64s(&mut r, len).map_err(truncated)?;
    if params.iter().chain(&m).chain(&v).any(|x| !x.is_finite()) {
        return Err(LearnerError::Checkpoint("non-finite parameter".into()));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(LearnerError::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok(ClassifierState {
        featurizer,
        model: LinearModel {
            state: OptimizerState {
                params,
                m,
                v,
                step_count,
            },
        },
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, state: &ClassifierState) -> Result<(), LearnerError> {
    write_checkpoint(File::create(path)?, state)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ClassifierState, LearnerError> {
    read_checkpoint(File::open(path)?)
}
