//! Self-describing binary container for trained networks and datasets.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | content                                  |
//! |--------|------|------------------------------------------|
//! | 0      | 8    | magic `ISACBF01`                         |
//! | 8      | 4    | `u32` format version (1)                 |
//! | 12     | 4    | `u32` payload kind (0 HCL, 1 naive, 2 data) |
//! | 16     | 8    | `u64` header length `L` in bytes         |
//! | 24     | L    | UTF-8 header, one `key=value` per line   |
//! | 24+L   | 8    | `u64` value count `V`                    |
//! | 32+L   | 8·V  | `f64` values (IEEE 754 binary64)         |
//!
//! Header keys prefixed `config.` echo the full effective configuration.

use std::path::Path;

use crate::baselines::{InputNorm, NaiveNet};
use crate::channel::{ChannelMatrix, C64};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::nn::hcl::{HclNet, HclShape, NetworkParams};
use crate::nn::window::{HistoryWindow, TrainingExample};

pub const MAGIC: &[u8; 8] = b"ISACBF01";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum PayloadKind {
    Hcl = 0,
    Naive = 1,
    Dataset = 2,
}

impl PayloadKind {
    fn from_u32(v: u32) -> Result<Self> {
        match v {
            0 => Ok(PayloadKind::Hcl),
            1 => Ok(PayloadKind::Naive),
            2 => Ok(PayloadKind::Dataset),
            _ => Err(Error::Format(format!("unknown payload kind {v}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: PayloadKind,
    pub header: Vec<(String, String)>,
    pub values: Vec<f64>,
}

impl Container {
    pub fn new(kind: PayloadKind, config: &SimConfig) -> Self {
        let header = config
            .entries()
            .into_iter()
            .map(|(k, v)| (format!("config.{k}"), v))
            .collect();
        Self {
            kind,
            header,
            values: Vec::new(),
        }
    }

    pub fn push_header(&mut self, key: &str, value: impl ToString) {
        self.header.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key).ok_or_else(|| Error::Format(format!("header key `{key}` missing")))?;
        v.parse()
            .map_err(|_| Error::Format(format!("header key `{key}` has bad value `{v}`")))
    }

    /// The configuration echoed in the header.
    pub fn config(&self) -> Result<SimConfig> {
        let mut cfg = SimConfig::default();
        for (k, v) in &self.header {
            if let Some(key) = k.strip_prefix("config.") {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = String::new();
        for (k, v) in &self.header {
            header.push_str(k);
            header.push('=');
            header.push_str(v);
            header.push('\n');
        }
        let mut out = Vec::with_capacity(40 + header.len() + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.kind as u32).to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let kind = PayloadKind::from_u32(r.u32()?)?;
        let hlen = usize::try_from(r.u64()?).map_err(|_| Error::Format("header too long".into()))?;
        let text = std::str::from_utf8(r.take(hlen)?).map_err(|_| Error::Format("header is not UTF-8".into()))?;
        let header = text
            .lines()
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::Format(format!("bad header line `{l}`")))
            })
            .collect::<Result<_>>()?;
        let n = usize::try_from(r.u64()?).map_err(|_| Error::Format("value count too large".into()))?;
        if r.remaining() != n.checked_mul(8).ok_or_else(|| Error::Format("value count too large".into()))? {
            return Err(Error::Format(format!(
                "expected {n} values, found {} trailing bytes",
                r.remaining()
            )));
        }
        let values = r
            .take(8 * n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(Self { kind, header, values })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    fn expect(&self, kind: PayloadKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Format(format!("expected a {kind:?} payload, found {:?}", self.kind)));
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("unexpected end of file".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.at
    }
}

pub fn encode_hcl(net: &HclNet, config: &SimConfig) -> Container {
    let s = net.shape();
    let mut c = Container::new(PayloadKind::Hcl, config);
    c.push_header("shape.k", s.k);
    c.push_header("shape.m", s.m);
    c.push_header("shape.tau", s.tau);
    c.push_header("shape.hidden", s.hidden);
    c.push_header("kappa", crate::config::fmt_f64(net.kappa));
    c.values = net.params.flat.clone();
    c
}

pub fn decode_hcl(c: &Container) -> Result<HclNet> {
    c.expect(PayloadKind::Hcl)?;
    let shape = HclShape::new(c.get_parsed("shape.k")?, c.get_parsed("shape.m")?, c.get_parsed("shape.tau")?)?;
    if c.get_parsed::<usize>("shape.hidden")? != shape.hidden {
        return Err(Error::Format("unsupported LSTM width".into()));
    }
    let params = NetworkParams::from_flat(shape, c.values.clone())?;
    Ok(HclNet::new(params, c.get_parsed("kappa")?))
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|&x| crate::config::fmt_f64(x)).collect::<Vec<_>>().join(",")
}

fn split(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.parse().map_err(|_| Error::Format(format!("bad number `{x}`"))))
        .collect()
}

pub fn encode_naive(net: &NaiveNet, config: &SimConfig) -> Result<Container> {
    let norm = net
        .norm
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("naive network is untrained".into()))?;
    let mut c = Container::new(PayloadKind::Naive, config);
    c.push_header("shape.k", net.k);
    c.push_header("shape.m", net.m);
    c.push_header("norm.mean", join(&norm.mean));
    c.push_header("norm.std", join(&norm.std));
    c.values = net.flat.clone();
    Ok(c)
}

pub fn decode_naive(c: &Container) -> Result<NaiveNet> {
    c.expect(PayloadKind::Naive)?;
    let (k, m): (usize, usize) = (c.get_parsed("shape.k")?, c.get_parsed("shape.m")?);
    if c.values.len() != NaiveNet::param_count(k, m) {
        return Err(Error::Format("naive parameter count does not match its shape".into()));
    }
    let norm = InputNorm {
        mean: split(c.get("norm.mean").unwrap_or(""))?,
        std: split(c.get("norm.std").unwrap_or(""))?,
    };
    if norm.mean.len() != 2 * k || norm.std.len() != 2 * k {
        return Err(Error::Format("normalization width does not match K".into()));
    }
    Ok(NaiveNet {
        k,
        m,
        flat: c.values.clone(),
        norm: Some(norm),
    })
}

fn push_matrix(out: &mut Vec<f64>, h: &ChannelMatrix) {
    for z in h.as_slice() {
        out.push(z.re);
        out.push(z.im);
    }
}

fn read_matrix(vals: &mut std::slice::Iter<'_, f64>, m: usize, k: usize) -> Result<ChannelMatrix> {
    let mut h = ChannelMatrix::zeros(m, k);
    for z in h.as_mut_slice() {
        let re = *vals.next().ok_or_else(|| Error::Format("dataset truncated".into()))?;
        let im = *vals.next().ok_or_else(|| Error::Format("dataset truncated".into()))?;
        *z = C64::new(re, im);
    }
    Ok(h)
}

/// Per example: `τ` history matrices, `τ × K` angle and distance estimates,
/// the true channel matrix, then `K` true angles and distances.
pub fn encode_dataset(data: &[TrainingExample], config: &SimConfig) -> Container {
    let mut c = Container::new(PayloadKind::Dataset, config);
    c.push_header("examples", data.len());
    c.push_header("shape.k", config.n_vehicles);
    c.push_header("shape.m", config.n_tx);
    c.push_header("shape.tau", config.history_len);
    for ex in data {
        for s in &ex.history.slots {
            push_matrix(&mut c.values, s);
        }
        for row in ex.history.est_thetas.iter().chain(&ex.history.est_dists) {
            c.values.extend_from_slice(row);
        }
        push_matrix(&mut c.values, &ex.true_channels);
        c.values.extend_from_slice(&ex.true_thetas);
        c.values.extend_from_slice(&ex.true_dists);
    }
    c
}

pub fn decode_dataset(c: &Container) -> Result<Vec<TrainingExample>> {
    c.expect(PayloadKind::Dataset)?;
    let n: usize = c.get_parsed("examples")?;
    let (k, m, tau): (usize, usize, usize) = (c.get_parsed("shape.k")?, c.get_parsed("shape.m")?, c.get_parsed("shape.tau")?);
    let per = tau * k * m * 2 + 2 * tau * k + k * m * 2 + 2 * k;
    if c.values.len() != n * per {
        return Err(Error::Format(format!(
            "dataset holds {} values, expected {}",
            c.values.len(),
            n * per
        )));
    }
    let mut it = c.values.iter();
    let mut take = |len: usize| -> Vec<f64> { it.by_ref().take(len).copied().collect() };
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let hist_raw = take(tau * k * m * 2);
        let mut hv = hist_raw.iter();
        let slots = (0..tau).map(|_| read_matrix(&mut hv, m, k)).collect::<Result<_>>()?;
        let est_thetas = (0..tau).map(|_| take(k)).collect();
        let est_dists = (0..tau).map(|_| take(k)).collect();
        let true_raw = take(k * m * 2);
        let true_channels = read_matrix(&mut true_raw.iter(), m, k)?;
        out.push(TrainingExample {
            history: HistoryWindow {
                slots,
                est_thetas,
                est_dists,
            },
            true_channels,
            true_thetas: take(k),
            true_dists: take(k),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian, stream, Purpose};

    #[test]
    fn byte_layout_is_as_documented() {
        let mut c = Container::new(PayloadKind::Naive, &SimConfig::default());
        c.header.clear();
        c.push_header("a", 1);
        c.values = vec![1.5, -2.0];
        let b = c.to_bytes();
        assert_eq!(&b[..8], b"ISACBF01");
        assert_eq!(&b[8..12], &[1, 0, 0, 0]);
        assert_eq!(&b[12..16], &[1, 0, 0, 0]);
        assert_eq!(&b[16..24], &[4, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&b[24..28], b"a=1\n");
        assert_eq!(&b[28..36], &[2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&b[36..44], &1.5f64.to_le_bytes());
        assert_eq!(b.len(), 52);
        assert_eq!(Container::from_bytes(&b).unwrap(), c);
    }

    #[test]
    fn truncated_and_corrupt_files_rejected() {
        let c = Container::new(PayloadKind::Dataset, &SimConfig::default());
        let b = c.to_bytes();
        assert!(Container::from_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Container::from_bytes(&bad).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(Container::from_bytes(&extra).is_err());
    }

    #[test]
    fn hcl_round_trip_with_config_echo() {
        let cfg = SimConfig {
            power_budget: 2.5,
            ..SimConfig::default()
        };
        let shape = HclShape::new(3, 32, 5).unwrap();
        let mut rng = stream(1, Purpose::Init, 0);
        let mut p = NetworkParams::init(shape, &mut rng);
        p.flat[0] = gaussian(&mut rng);
        let net = HclNet::new(p, 12345.678901234567);
        let c = Container::from_bytes(&encode_hcl(&net, &cfg).to_bytes()).unwrap();
        assert_eq!(decode_hcl(&c).unwrap(), net);
        assert_eq!(c.config().unwrap(), cfg);
        assert!(decode_naive(&c).is_err());
    }
}
