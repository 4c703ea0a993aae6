//! Binary columnar spill file for cycle samples.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   8 bytes  b"TWCYCLE1"
//! count   u64
//! tau     count × u64
//! s_tau   count × f64
//! m_tau   count × f64
//! flags   count × u8   (bit 0: truncated)
//! ```

use std::io::{self, Read, Write};

use super::CycleSample;

pub const MAGIC: &[u8; 8] = b"TWCYCLE1";
const FLAG_TRUNCATED: u8 = 1;

pub fn write_cycles<W: Write>(mut w: W, samples: &[CycleSample]) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    for c in samples {
        w.write_all(&c.tau.to_le_bytes())?;
    }
    for c in samples {
        w.write_all(&c.s_tau.to_le_bytes())?;
    }
    for c in samples {
        w.write_all(&c.m_tau.to_le_bytes())?;
    }
    let flags: Vec<u8> = samples
        .iter()
        .map(|c| if c.truncated { FLAG_TRUNCATED } else { 0 })
        .collect();
    w.write_all(&flags)?;
    w.flush()
}

fn read_u64_column<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<u64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|b| u64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn read_cycles<R: Read>(mut r: R) -> io::Result<Vec<CycleSample>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "not a cycle spill file"));
    }
    let mut count = [0u8; 8];
    r.read_exact(&mut count)?;
    let n = usize::try_from(u64::from_le_bytes(count))
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "count overflows usize"))?;
    let tau = read_u64_column(&mut r, n)?;
    let s_tau = read_u64_column(&mut r, n)?;
    let m_tau = read_u64_column(&mut r, n)?;
    let mut flags = vec![0u8; n];
    r.read_exact(&mut flags)?;
    Ok((0..n)
        .map(|i| CycleSample {
            tau: tau[i],
            s_tau: f64::from_bits(s_tau[i]),
            m_tau: f64::from_bits(m_tau[i]),
            truncated: flags[i] & FLAG_TRUNCATED != 0,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_columnar() {
        let c = CycleSample {
            tau: 3,
            s_tau: -0.5,
            m_tau: 2.0,
            truncated: true,
        };
        let mut buf = Vec::new();
        write_cycles(&mut buf, &[c, c]).unwrap();
        assert_eq!(buf.len(), 8 + 8 + 2 * (8 + 8 + 8 + 1));
        assert_eq!(&buf[16..24], &3u64.to_le_bytes());
        assert_eq!(&buf[32..40], &(-0.5f64).to_le_bytes());
        assert_eq!(buf[buf.len() - 1], 1);
    }

    #[test]
    fn rejects_foreign_data() {
        assert!(read_cycles(&b"NOTCYCLExxxxxxxx"[..]).is_err());
        let mut buf = Vec::new();
        write_cycles(&mut buf, &[CycleSample { tau: 1, s_tau: -1.0, m_tau: 0.0, truncated: false }]).unwrap();
        buf.pop();
        assert!(read_cycles(&buf[..]).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(v in proptest::collection::vec((1u64..1_000_000, -10.0f64..0.0, 0.0f64..100.0, any::<bool>()), 0..64)) {
            let samples: Vec<CycleSample> = v.into_iter()
                .map(|(tau, s_tau, m_tau, truncated)| CycleSample { tau, s_tau, m_tau, truncated })
                .collect();
            let mut buf = Vec::new();
            write_cycles(&mut buf, &samples).unwrap();
            prop_assert_eq!(read_cycles(&buf[..]).unwrap(), samples);
        }
    }
}
