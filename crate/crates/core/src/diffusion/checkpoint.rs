//! Predictor checkpoint format.
//!
//! ```text
//! "PGDM" | u32 version | u32 g | u8 conditional | f64 condition noise
//! | u32 T | f64 beta_start
//! | f64 beta_end | u32 hidden | u32 blocks | u32 time_dim | u64 seed
//! | [u8; 32] config digest | u64 parameter count | f32 parameters...
//! ```
//!
//! All integers and floats are little-endian.

use crate::binio::{Reader, Writer};
use crate::diffusion::{make_schedule, DensePredictor, NoiseModel, PredictorConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PGDM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub predictor: DensePredictor,
    pub seed: u64,
    pub digest: [u8; 32],
}

fn u32_field(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Parameter(format!("{what} {v} does not fit in 32 bits")))
}

pub fn encode_checkpoint(c: &Checkpoint) -> Result<Vec<u8>> {
    let p = &c.predictor;
    let s = p.schedule();
    let cfg = p.config();
    let mut w = Writer::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u32(u32_field(p.side(), "grid side")?);
    w.u8(u8::from(p.is_conditional()));
    w.f64(p.condition_noise().unwrap_or(0.0));
    w.u32(u32_field(s.steps(), "step count")?);
    w.f64(s.beta_start());
    w.f64(s.beta_end());
    w.u32(u32_field(cfg.hidden, "hidden width")?);
    w.u32(u32_field(cfg.blocks, "block count")?);
    w.u32(u32_field(cfg.time_dim, "time embedding size")?);
    w.u64(c.seed);
    w.bytes(&c.digest);
    w.u64(p.param_count() as u64);
    w.f32s(p.params());
    Ok(w.finish())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    let at = r.offset();
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            offset: at,
            message: format!("unsupported checkpoint version {version}"),
        });
    }
    let side = r.u32("grid side")? as usize;
    let at = r.offset();
    let conditional = match r.u8("conditional flag")? {
        0 => false,
        1 => true,
        v => {
            return Err(Error::Format {
                offset: at,
                message: format!("conditional flag must be 0 or 1, got {v}"),
            })
        }
    };
    let cond_noise = r.f64("condition noise")?;
    let cond_m = conditional.then_some(cond_noise);
    let at = r.offset();
    let steps = r.u32("step count")? as usize;
    let beta_start = r.f64("beta_start")?;
    let beta_end = r.f64("beta_end")?;
    let schedule = make_schedule(steps, beta_start, beta_end).map_err(|e| Error::Format {
        offset: at,
        message: e.to_string(),
    })?;
    let config = PredictorConfig {
        hidden: r.u32("hidden width")? as usize,
        blocks: r.u32("block count")? as usize,
        time_dim: r.u32("time embedding size")? as usize,
    };
    let seed = r.u64("seed")?;
    let digest = r.array32("digest")?;
    let at = r.offset();
    let count = r.u64("parameter count")? as usize;
    let params = r.f32s(count, "parameters")?;
    r.finish()?;
    let predictor = DensePredictor::from_params(side, cond_m, config, schedule, params)
        .map_err(|e| Error::Format {
            offset: at,
            message: e.to_string(),
        })?;
    Ok(Checkpoint {
        predictor,
        seed,
        digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::NoiseSchedule;
    use crate::numeric::RngState;

    #[test]
    fn roundtrip_is_exact() {
        let p = DensePredictor::new(
            3,
            Some(0.75),
            PredictorConfig {
                hidden: 5,
                blocks: 2,
                time_dim: 4,
            },
            NoiseSchedule::standard(),
            &mut RngState::new(8),
        )
        .unwrap();
        let c = Checkpoint {
            predictor: p,
            seed: 77,
            digest: [3u8; 32],
        };
        let bytes = encode_checkpoint(&c).unwrap();
        assert_eq!(&bytes[..4], b"PGDM");
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn truncation_reports_offset() {
        let p = DensePredictor::new(
            2,
            None,
            PredictorConfig {
                hidden: 2,
                blocks: 0,
                time_dim: 2,
            },
            NoiseSchedule::standard(),
            &mut RngState::new(8),
        )
        .unwrap();
        let bytes = encode_checkpoint(&Checkpoint {
            predictor: p,
            seed: 1,
            digest: [0; 32],
        })
        .unwrap();
        match decode_checkpoint(&bytes[..bytes.len() - 2]) {
            Err(Error::Format { offset, .. }) => assert!(offset > 60),
            other => panic!("expected format error, got {other:?}"),
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format { offset: 0, .. })));
    }
}
