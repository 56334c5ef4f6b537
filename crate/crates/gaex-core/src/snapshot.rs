//! Binary parameter snapshots. A snapshot file carries a magic/version
//! stamp, the SHA-256 of the run configuration it was trained under, and
//! named groups of named tensors (online net, target net, generator, ...).
//! Loading verifies the stamp; restoring verifies that names and lengths
//! line up with the receiving network, and the config hash lets callers
//! refuse parameters trained under different settings.

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::nn::NetworkParams;

const MAGIC: &[u8; 8] = b"GAEXSNP\x01";

/// SHA-256 over the canonical TOML form of a config.
pub fn config_hash(cfg: &RunConfig) -> Result<[u8; 32]> {
    let text = cfg.to_toml_string()?;
    Ok(Sha256::digest(text.as_bytes()).into())
}

/// In-memory form of a snapshot file.
pub struct Snapshot {
    pub config_hash: [u8; 32],
    /// (group name, tensors) in file order; tensors are (name, values).
    pub groups: Vec<(String, Vec<(String, Vec<f64>)>)>,
}

impl Snapshot {
    /// Capture the given networks under their group names.
    pub fn capture(cfg: &RunConfig, nets: &[(&str, &NetworkParams)]) -> Result<Snapshot> {
        let groups = nets
            .iter()
            .map(|(name, net)| {
                let tensors = net
                    .named_tensors()
                    .iter()
                    .map(|(tname, t)| (tname.clone(), t.to_vec()))
                    .collect();
                (name.to_string(), tensors)
            })
            .collect();
        Ok(Snapshot {
            config_hash: config_hash(cfg)?,
            groups,
        })
    }

    pub fn matches(&self, cfg: &RunConfig) -> Result<bool> {
        Ok(self.config_hash == config_hash(cfg)?)
    }

    pub fn group(&self, name: &str) -> Option<&Vec<(String, Vec<f64>)>> {
        self.groups.iter().find(|(g, _)| g == name).map(|(_, t)| t)
    }

    /// Copy a stored group's values into `net`. Tensor names, counts and
    /// lengths must match exactly.
    pub fn restore_into(&self, group: &str, net: &NetworkParams) -> Result<()> {
        let stored = self.group(group).ok_or_else(|| {
            Error::Contract(format!("snapshot has no group named {group:?}"))
        })?;
        let live = net.named_tensors();
        if stored.len() != live.len() {
            return Err(Error::Contract(format!(
                "group {group:?} holds {} tensors, network has {}",
                stored.len(),
                live.len()
            )));
        }
        for ((sname, values), (lname, tensor)) in stored.iter().zip(&live) {
            if sname != lname {
                return Err(Error::Contract(format!(
                    "tensor order mismatch in {group:?}: stored {sname:?}, network {lname:?}"
                )));
            }
            tensor.set_data(values.clone()).map_err(|e| {
                Error::Contract(format!("restoring {group}/{sname}: {e}"))
            })?;
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&self.config_hash)?;
        write_u32(&mut w, self.groups.len() as u32)?;
        for (gname, tensors) in &self.groups {
            write_str(&mut w, gname)?;
            write_u32(&mut w, tensors.len() as u32)?;
            for (tname, values) in tensors {
                write_str(&mut w, tname)?;
                write_u32(&mut w, values.len() as u32)?;
                for v in values {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Snapshot> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Contract(
                "not a parameter snapshot (bad magic)".into(),
            ));
        }
        let mut config_hash = [0u8; 32];
        r.read_exact(&mut config_hash)?;
        let n_groups = read_u32(&mut r)?;
        let mut groups = Vec::with_capacity(n_groups as usize);
        for _ in 0..n_groups {
            let gname = read_str(&mut r)?;
            let n_tensors = read_u32(&mut r)?;
            let mut tensors = Vec::with_capacity(n_tensors as usize);
            for _ in 0..n_tensors {
                let tname = read_str(&mut r)?;
                let len = read_u32(&mut r)? as usize;
                let mut values = Vec::with_capacity(len);
                let mut buf = [0u8; 8];
                for _ in 0..len {
                    r.read_exact(&mut buf)?;
                    values.push(f64::from_le_bytes(buf));
                }
                tensors.push((tname, values));
            }
            groups.push((gname, tensors));
        }
        Ok(Snapshot {
            config_hash,
            groups,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Snapshot> {
        Snapshot::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(Error::Contract(format!(
            "implausible name length {len} in snapshot"
        )));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Contract("snapshot name is not UTF-8".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Output};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn small_net(seed: u64) -> NetworkParams {
        let mut rng = StdRng::seed_from_u64(seed);
        NetworkParams::mlp(&[3, 4, 2], Activation::Relu, Output::Linear, &mut rng).unwrap()
    }

    #[test]
    fn snapshot_round_trips_bit_for_bit() {
        let cfg = RunConfig::chain(10);
        let online = small_net(1);
        let target = small_net(2);
        let snap = Snapshot::capture(&cfg, &[("online", &online), ("target", &target)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.bin");
        snap.save(&path).unwrap();
        let back = Snapshot::load(&path).unwrap();
        assert!(back.matches(&cfg).unwrap());
        assert_eq!(back.groups.len(), 2);

        // Restoring into a differently initialized net reproduces the
        // captured values exactly.
        let fresh = small_net(99);
        back.restore_into("online", &fresh).unwrap();
        for ((_, a), (_, b)) in online.named_tensors().iter().zip(&fresh.named_tensors()) {
            let a = a.to_vec();
            let b = b.to_vec();
            assert_eq!(
                a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn config_changes_flip_the_hash() {
        let a = RunConfig::chain(10);
        let mut b = RunConfig::chain(10);
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.agent.lr = 0.004;
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        let snap = Snapshot::capture(&a, &[]).unwrap();
        assert!(!snap.matches(&b).unwrap());
    }

    #[test]
    fn corrupt_files_and_mismatched_networks_are_rejected() {
        let cfg = RunConfig::chain(10);
        let net = small_net(1);
        let snap = Snapshot::capture(&cfg, &[("online", &net)]).unwrap();
        let mut bytes = Vec::new();
        snap.write_to(&mut bytes).unwrap();

        // Bad magic.
        let mut bad = bytes.clone();
        bad[0] ^= 0xFF;
        assert!(Snapshot::read_from(bad.as_slice()).is_err());
        // Truncation.
        assert!(Snapshot::read_from(&bytes[..bytes.len() - 3]).is_err());

        let back = Snapshot::read_from(bytes.as_slice()).unwrap();
        assert!(back.restore_into("missing", &net).is_err());
        let other_shape = {
            let mut rng = StdRng::seed_from_u64(0);
            NetworkParams::mlp(&[3, 5, 2], Activation::Relu, Output::Linear, &mut rng).unwrap()
        };
        assert!(back.restore_into("online", &other_shape).is_err());
    }
}
