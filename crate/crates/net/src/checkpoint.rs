//! Binary checkpoints: `PNET1` magic, a length-prefixed `key=value` header
//! and the little-endian `f64` parameter vector.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::model::{Architecture, NetConfig, Network};
use crate::{NetError, Result};

const MAGIC: &[u8; 5] = b"PNET1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub normalization: f64,
    /// Grid spacing the network was trained at [m].
    pub delta_nn: f64,
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn header(c: &Checkpoint) -> String {
    let cfg = &c.network.config;
    format!(
        "architecture={}\nn_b={}\ndepths={}\nkernel={}\nwidths={}\nwidth_ratios={}\nbias={}\nbase_width={}\nbudget={}\nnormalization={}\ndelta_nn={}\n",
        cfg.architecture.name(),
        cfg.n_b,
        join(&cfg.depths),
        cfg.kernel,
        join(&c.network.widths),
        join(&cfg.width_ratios),
        cfg.bias,
        cfg.base_width,
        cfg.budget.map_or("none".to_string(), |b| b.to_string()),
        c.normalization,
        c.delta_nn
    )
}

pub fn write_checkpoint(w: &mut impl Write, c: &Checkpoint) -> Result<()> {
    let text = header(c);
    w.write_all(MAGIC)?;
    w.write_all(&(text.len() as u64).to_le_bytes())?;
    w.write_all(text.as_bytes())?;
    w.write_all(&(c.network.params.len() as u64).to_le_bytes())?;
    for p in &c.network.params {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_checkpoint(path: impl AsRef<Path>, c: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, c)?;
    w.flush()?;
    Ok(())
}

fn list<T: std::str::FromStr>(s: &str, key: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| NetError::Format(format!("bad entry '{v}' in {key}")))
        })
        .collect()
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| NetError::Format("truncated checkpoint".into()))?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Checkpoint> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|_| NetError::Format("truncated checkpoint".into()))?;
    if &magic != MAGIC {
        return Err(NetError::Format("not a network checkpoint".into()));
    }
    let len = read_u64(r)? as usize;
    if len > 1 << 20 {
        return Err(NetError::Format("checkpoint header too long".into()));
    }
    let mut text = vec![0u8; len];
    r.read_exact(&mut text)
        .map_err(|_| NetError::Format("truncated checkpoint header".into()))?;
    let text = String::from_utf8(text).map_err(|_| NetError::Format("header is not UTF-8".into()))?;
    let kv: HashMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
    let get = |k: &str| {
        kv.get(k)
            .copied()
            .ok_or_else(|| NetError::Format(format!("checkpoint header lacks '{k}'")))
    };
    let num = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|_| NetError::Format(format!("bad value for '{k}'")))
    };
    let depths: Vec<usize> = list(get("depths")?, "depths")?;
    let mut config = NetConfig::new(Architecture::parse(get("architecture")?)?, depths, num("kernel")? as usize);
    config.n_b = num("n_b")? as usize;
    config.width_ratios = list(get("width_ratios")?, "width_ratios")?;
    config.bias = get("bias")? == "true";
    config.base_width = num("base_width")? as usize;
    config.budget = match get("budget")? {
        "none" => None,
        b => Some(b.parse().map_err(|_| NetError::Format("bad budget".into()))?),
    };
    let widths: Vec<usize> = list(get("widths")?, "widths")?;
    let mut network = Network::with_widths(&config, widths, 0)?;
    let n = read_u64(r)? as usize;
    if n != network.params.len() {
        return Err(NetError::Format(format!(
            "checkpoint holds {n} parameters, architecture needs {}",
            network.params.len()
        )));
    }
    let mut b = [0u8; 8];
    for p in network.params.iter_mut() {
        r.read_exact(&mut b)
            .map_err(|_| NetError::Format("truncated parameter block".into()))?;
        *p = f64::from_le_bytes(b);
        if !p.is_finite() {
            return Err(NetError::Format("non-finite parameter".into()));
        }
    }
    Ok(Checkpoint {
        network,
        normalization: num("normalization")?,
        delta_nn: num("delta_nn")?,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption() {
        let mut cfg = NetConfig::new(Architecture::MSNet, vec![2, 3], 5);
        cfg.base_width = 3;
        cfg.bias = true;
        cfg.width_ratios = vec![1.0, 1.5];
        let c = Checkpoint {
            network: Network::build(&cfg, 3).unwrap(),
            normalization: 8.2e-7,
            delta_nn: 1e-4,
        };
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &c).unwrap();
        assert_eq!(read_checkpoint(&mut buf.as_slice()).unwrap(), c);
        let short = &buf[..buf.len() - 4];
        assert!(read_checkpoint(&mut &short[..]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&mut bad.as_slice()).is_err());
    }
}
