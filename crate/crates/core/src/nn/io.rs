//! Binary model container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "MTAG" | version u16 | config block | input vocab sha256 (32)
//! | output vocab sha256 (32) | param count u64 | params f64 x count
//! | sha256 of everything before it (32)
//! ```
//!
//! The config block holds, in order: input_vocab_size, output_vocab_size,
//! embedding_dim, recurrent_layers, hidden_per_direction (u64 each),
//! dropout_recurrent (f64), fc_units (u64), dropout_fc, weight_decay (f64),
//! seed (u64).

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use super::params::ModelParams;
use super::{ModelConfig, ModelError};
use crate::tagset::TagVocab;

pub const MAGIC: [u8; 4] = *b"MTAG";
pub const FORMAT_VERSION: u16 = 1;

const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug)]
pub struct LoadedModel {
    pub params: ModelParams,
    pub input_fingerprint: [u8; 32],
    pub output_fingerprint: [u8; 32],
}

impl LoadedModel {
    /// Fails with `VocabMismatch` unless both vocabularies are the training ones.
    pub fn check_vocabs(&self, input: &TagVocab, output: &TagVocab) -> Result<(), ModelError> {
        if input.fingerprint() != self.input_fingerprint {
            return Err(ModelError::VocabMismatch("input"));
        }
        if output.fingerprint() != self.output_fingerprint {
            return Err(ModelError::VocabMismatch("output"));
        }
        Ok(())
    }
}

pub fn save_model<W: Write>(
    params: &ModelParams,
    input_vocab: &TagVocab,
    output_vocab: &TagVocab,
    mut sink: W,
) -> Result<(), ModelError> {
    if !params.is_finite() {
        return Err(ModelError::NonFinite);
    }
    let c = params.config();
    let mut buf = Vec::with_capacity(128 + 8 * params.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for n in [
        c.input_vocab_size,
        c.output_vocab_size,
        c.embedding_dim,
        c.recurrent_layers,
        c.hidden_per_direction,
    ] {
        buf.extend_from_slice(&(n as u64).to_le_bytes());
    }
    buf.extend_from_slice(&c.dropout_recurrent.to_le_bytes());
    buf.extend_from_slice(&(c.fc_units as u64).to_le_bytes());
    buf.extend_from_slice(&c.dropout_fc.to_le_bytes());
    buf.extend_from_slice(&c.weight_decay.to_le_bytes());
    buf.extend_from_slice(&c.seed.to_le_bytes());
    buf.extend_from_slice(&input_vocab.fingerprint());
    buf.extend_from_slice(&output_vocab.fingerprint());
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ModelError> {
        if self.bytes.len() < n {
            return Err(ModelError::ChecksumFailure);
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn usize(&mut self) -> Result<usize, ModelError> {
        usize::try_from(self.u64()?).map_err(|_| ModelError::ChecksumFailure)
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn digest(&mut self) -> Result<[u8; 32], ModelError> {
        Ok(self.take(DIGEST_LEN)?.try_into().expect("32 bytes"))
    }
}

pub fn load_model<R: Read>(mut source: R) -> Result<LoadedModel, ModelError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() >= MAGIC.len() && bytes[..MAGIC.len()] != MAGIC {
        return Err(ModelError::BadMagic);
    }
    if bytes.len() < MAGIC.len() + 2 + DIGEST_LEN {
        return Err(ModelError::ChecksumFailure);
    }
    let (body, stored) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != stored {
        return Err(ModelError::ChecksumFailure);
    }
    let mut cur = Cursor {
        bytes: &body[MAGIC.len()..],
    };
    let version = u16::from_le_bytes(cur.take(2)?.try_into().expect("2 bytes"));
    if version != FORMAT_VERSION {
        return Err(ModelError::VersionMismatch(version));
    }
    let config = ModelConfig {
        input_vocab_size: cur.usize()?,
        output_vocab_size: cur.usize()?,
        embedding_dim: cur.usize()?,
        recurrent_layers: cur.usize()?,
        hidden_per_direction: cur.usize()?,
        dropout_recurrent: cur.f64()?,
        fc_units: cur.usize()?,
        dropout_fc: cur.f64()?,
        weight_decay: cur.f64()?,
        seed: cur.u64()?,
    };
    let input_fingerprint = cur.digest()?;
    let output_fingerprint = cur.digest()?;
    let count = cur.usize()?;
    if cur.bytes.len() != count.saturating_mul(8) {
        return Err(ModelError::ChecksumFailure);
    }
    let values = (0..count)
        .map(|_| cur.f64())
        .collect::<Result<Vec<_>, _>>()?;
    let params = ModelParams::from_values(&config, values)?;
    Ok(LoadedModel {
        params,
        input_fingerprint,
        output_fingerprint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagset::VocabKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> (ModelParams, TagVocab, TagVocab) {
        let input = TagVocab::build(["a", "b", "c", "d"], VocabKind::Input).unwrap();
        let output = TagVocab::build(["x", "y", "z"], VocabKind::Output).unwrap();
        let params = ModelParams::init(&ModelConfig {
            embedding_dim: 4,
            hidden_per_direction: 5,
            fc_units: 8,
            seed: 11,
            ..ModelConfig::new(input.len(), output.len())
        })
        .unwrap();
        (params, input, output)
    }

    fn saved() -> Vec<u8> {
        let (p, i, o) = fixture();
        let mut buf = Vec::new();
        save_model(&p, &i, &o, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_predictions() {
        let (p, i, o) = fixture();
        let loaded = load_model(saved().as_slice()).unwrap();
        assert_eq!(loaded.params.config(), p.config());
        loaded.check_vocabs(&i, &o).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let len = rng.gen_range(1..12);
            let input: Vec<usize> = (0..len).map(|_| rng.gen_range(0..i.len())).collect();
            let (a, pa) = p.predict(&input).unwrap();
            let (b, pb) = loaded.params.predict(&input).unwrap();
            assert_eq!(a, b);
            assert_eq!(
                pa.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                pb.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn truncated_file() {
        let buf = saved();
        for len in [buf.len() - 1, buf.len() / 2, 10, 4] {
            assert!(
                matches!(load_model(&buf[..len]), Err(ModelError::ChecksumFailure)),
                "len {len}"
            );
        }
    }

    #[test]
    fn flipped_magic() {
        let mut buf = saved();
        buf[0] ^= 0xff;
        assert!(matches!(
            load_model(buf.as_slice()),
            Err(ModelError::BadMagic)
        ));
    }

    #[test]
    fn corrupted_payload() {
        let mut buf = saved();
        let mid = buf.len() / 2;
        buf[mid] ^= 1;
        assert!(matches!(
            load_model(buf.as_slice()),
            Err(ModelError::ChecksumFailure)
        ));
    }

    #[test]
    fn future_version() {
        let mut buf = saved();
        buf[4] = 9;
        let body_len = buf.len() - DIGEST_LEN;
        let digest = Sha256::digest(&buf[..body_len]);
        buf[body_len..].copy_from_slice(&digest);
        assert!(matches!(
            load_model(buf.as_slice()),
            Err(ModelError::VersionMismatch(9))
        ));
    }

    #[test]
    fn vocab_mismatch() {
        let (_, i, o) = fixture();
        let loaded = load_model(saved().as_slice()).unwrap();
        let other = TagVocab::build(["x", "y", "w"], VocabKind::Output).unwrap();
        assert!(matches!(
            loaded.check_vocabs(&i, &other),
            Err(ModelError::VocabMismatch("output"))
        ));
        assert!(matches!(
            loaded.check_vocabs(&TagVocab::build(["q"], VocabKind::Input).unwrap(), &o),
            Err(ModelError::VocabMismatch("input"))
        ));
    }
}
